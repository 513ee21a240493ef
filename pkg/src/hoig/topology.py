"""Interaction graphs and third-order simplicial aggregates of attribution stacks.

Conventions:

* an undirected edge {i, j} stores a_ij + a_ji; node i is credited with
  a_ij (half the edge), so node_i = a_ii + sum_j edge_ij / 2 before
  thresholding;
* self-loops carry a_ii and are kept whenever a_ii != 0;
* off-diagonal edges with |signal| < tau * max |signal| are dropped and their
  mass is reported, never discarded silently;
* a triangle {i, j, k} stores the sum of the six permutation entries of the
  third-order tensor; the edges of every kept triangle are kept as well.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, OrderMismatch
from .tensor import THIRD_ORDER_SPLIT_RULE, AttributionTensor, aggregate_third_to_edges

DEFAULT_THRESHOLD = 1e-3
PENWIDTH_RANGE = (0.5, 5.0)

CONVENTIONS = {
    "edge_signal": "a_ij + a_ji",
    "node_accounting": "node i receives a_ij, half of the undirected edge signal",
    "self_loop_signal": "a_ii",
    "threshold_reference": "max |signal| over off-diagonal edges",
    "triangle_signal": "sum of the six permutations a_sigma(ijk)",
    "third_order_edge_split": THIRD_ORDER_SPLIT_RULE,
}


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    signal: float
    third_order: float | None = None

    @property
    def self_loop(self) -> bool:
        return self.i == self.j


@dataclass(frozen=True)
class Triangle:
    nodes: tuple[int, int, int]
    signal: float


@dataclass(frozen=True)
class InteractionGraph:
    feature_names: tuple[str, ...]
    node_signals: tuple[float, ...]
    edges: tuple[Edge, ...]
    threshold: float
    truncation_residual: float = 0.0
    node_truncation: tuple[float, ...] = ()
    provenance: Mapping = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.node_signals)

    @property
    def interaction_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if not e.self_loop)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(e.i, e.j) for e in self.interaction_edges}

    def reconstructed_nodes(self) -> np.ndarray:
        """Self-loop plus half of each incident kept edge plus truncated share."""
        out = np.array(self.node_truncation if self.node_truncation else np.zeros(self.dim), dtype=float)
        for e in self.edges:
            if e.self_loop:
                out[e.i] += e.signal
            else:
                out[e.i] += 0.5 * e.signal
                out[e.j] += 0.5 * e.signal
        return out


@dataclass(frozen=True)
class SimplicialExplanation:
    graph: InteractionGraph
    triangles: tuple[Triangle, ...]
    triangle_truncation_residual: float = 0.0

    def triangle_set(self) -> set[tuple[int, int, int]]:
        return {t.nodes for t in self.triangles}

    def is_closed(self) -> bool:
        edges = self.graph.edge_set()
        return all(set(itertools.combinations(t.nodes, 2)) <= edges for t in self.triangles)


def _check_stack(first, second, third=None):
    if first.order != 1 or second.order != 2 or (third is not None and third.order != 3):
        raise OrderMismatch("expected tensors of orders 1, 2 (and 3)")
    tensors = [t for t in (first, second, third) if t is not None]
    if len({t.dim for t in tensors}) != 1:
        raise DimensionMismatch("tensors disagree on the number of features")
    ref = first.meta
    for t in tensors[1:]:
        if t.meta.input != ref.input or t.meta.baseline != ref.baseline:
            raise DimensionMismatch("tensors explain different inputs or baselines")


def _keep_mask(signals: np.ndarray, threshold: float) -> np.ndarray:
    mags = np.abs(signals)
    top = float(mags.max(initial=0.0))
    return (mags > 0) & (mags >= threshold * top)


def build_graph(first: AttributionTensor, second: AttributionTensor, threshold: float = DEFAULT_THRESHOLD,
                _required=frozenset()) -> InteractionGraph:
    """Nodes carry first-order attributions, edges carry second-order ones."""
    _check_stack(first, second)
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    D = first.dim
    A = second.dense()
    pairs = list(itertools.combinations(range(D), 2))
    signals = np.array([A[i, j] + A[j, i] for i, j in pairs])
    keep = _keep_mask(signals, threshold)
    edges = [Edge(i, i, float(A[i, i])) for i in range(D) if A[i, i] != 0.0]
    node_truncation = np.zeros(D)
    residual = 0.0
    for (i, j), s, k in zip(pairs, signals, keep):
        if k or (i, j) in _required:
            edges.append(Edge(i, j, float(s)))
        else:
            residual += s
            node_truncation[i] += 0.5 * s
            node_truncation[j] += 0.5 * s
    edges.sort(key=lambda e: (e.i, e.j))
    provenance = {"meta": first.meta.to_dict(), "conventions": dict(CONVENTIONS)}
    return InteractionGraph(
        feature_names=first.feature_names,
        node_signals=tuple(float(v) for v in first.values),
        edges=tuple(edges),
        threshold=float(threshold),
        truncation_residual=float(residual),
        node_truncation=tuple(float(v) for v in node_truncation),
        provenance=provenance,
    )


def build_simplicial(first: AttributionTensor, second: AttributionTensor, third: AttributionTensor,
                     threshold: float = DEFAULT_THRESHOLD) -> SimplicialExplanation:
    """Graph from orders 1-2 plus triangles and aggregated edge signals from order 3."""
    _check_stack(first, second, third)
    D = first.dim
    T = third.dense()
    triples = list(itertools.combinations(range(D), 3))
    tri_signals = np.array(
        [sum(T[p] for p in set(itertools.permutations(c))) for c in triples]
    ) if triples else np.zeros(0)
    keep = _keep_mask(tri_signals, threshold)
    triangles = tuple(Triangle(c, float(s)) for c, s, k in zip(triples, tri_signals, keep) if k)
    tri_residual = float(sum(s for s, k in zip(tri_signals, keep) if not k))
    required = frozenset(p for t in triangles for p in itertools.combinations(t.nodes, 2))
    graph = build_graph(first, second, threshold, _required=required)

    E = aggregate_third_to_edges(third).dense()
    present = {(e.i, e.j) for e in graph.edges}
    edges = []
    for e in graph.edges:
        third_signal = E[e.i, e.i] if e.self_loop else E[e.i, e.j] + E[e.j, e.i]
        edges.append(Edge(e.i, e.j, e.signal, float(third_signal)))
    for i in range(D):
        if (i, i) not in present and E[i, i] != 0.0:
            edges.append(Edge(i, i, 0.0, float(E[i, i])))
    edges.sort(key=lambda e: (e.i, e.j))
    graph = InteractionGraph(
        graph.feature_names, graph.node_signals, tuple(edges), graph.threshold,
        graph.truncation_residual, graph.node_truncation, graph.provenance,
    )
    return SimplicialExplanation(graph, triangles, tri_residual)


def _fmt(v: float) -> str:
    return f"{v:+.3g}"


def _escape(s: str) -> str:
    return str(s).replace("\\", "\\\\").replace('"', '\\"')


def _quote(s: str) -> str:
    """Quote an already-escaped DOT string."""
    return '"' + s + '"'


def to_dot(obj) -> str:
    """Graphviz text; penwidth scales |signal| linearly onto [0.5, 5.0]."""
    graph, triangles = (obj.graph, obj.triangles) if isinstance(obj, SimplicialExplanation) else (obj, ())
    lo, hi = PENWIDTH_RANGE
    top = max((abs(e.signal) for e in graph.edges), default=0.0)
    in_triangle = {p for t in triangles for p in itertools.combinations(t.nodes, 2)}
    lines = [
        "graph G {",
        '  graph [layout=circo, overlap=false, splines=true];',
        '  node [shape=ellipse, fontname="Helvetica", fontsize=11];',
        '  edge [color="#333333"];',
    ]
    for i, (name, signal) in enumerate(zip(graph.feature_names, graph.node_signals)):
        label = _escape(name) + "\\n" + _fmt(signal)
        lines.append(f"  n{i} [label={_quote(label)}];")
    for e in graph.edges:
        width = lo + (hi - lo) * abs(e.signal) / top if top > 0 else lo
        style = "dashed" if e.signal < 0 else "solid"
        attrs = [f"penwidth={width:.3f}", f"style={style}", f"label={_quote(_fmt(e.signal))}"]
        if (e.i, e.j) in in_triangle:
            attrs.append('color="#1f77b4"')
        lines.append(f"  n{e.i} -- n{e.j} [{', '.join(attrs)}];")
    for t in triangles:
        names = " ".join(graph.feature_names[k] for k in t.nodes)
        lines.append(f"  // triangle {names} {_fmt(t.signal)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _graph_dict(graph: InteractionGraph) -> dict:
    node_trunc = graph.node_truncation or (0.0,) * graph.dim
    return {
        "nodes": [
            {"index": i, "name": n, "signal": s, "truncation": t}
            for i, (n, s, t) in enumerate(zip(graph.feature_names, graph.node_signals, node_trunc))
        ],
        "edges": [
            {"source": e.i, "target": e.j, "signal": e.signal, "self_loop": e.self_loop,
             **({"third_order": e.third_order} if e.third_order is not None else {})}
            for e in graph.edges
        ],
        "threshold": graph.threshold,
        "truncation_residual": graph.truncation_residual,
        "provenance": graph.provenance,
    }


def to_dict(obj) -> dict:
    if isinstance(obj, SimplicialExplanation):
        d = {"kind": "simplicial_explanation", **_graph_dict(obj.graph)}
        d["triangles"] = [{"nodes": list(t.nodes), "signal": t.signal} for t in obj.triangles]
        d["triangle_truncation_residual"] = obj.triangle_truncation_residual
        return d
    return {"kind": "interaction_graph", **_graph_dict(obj)}


def to_json(obj, indent=2) -> str:
    return json.dumps(to_dict(obj), indent=indent, allow_nan=False) + "\n"


def from_dict(d: Mapping):
    nodes = sorted(d["nodes"], key=lambda n: n["index"])
    graph = InteractionGraph(
        feature_names=tuple(n["name"] for n in nodes),
        node_signals=tuple(float(n["signal"]) for n in nodes),
        edges=tuple(
            Edge(int(e["source"]), int(e["target"]), float(e["signal"]), e.get("third_order"))
            for e in d["edges"]
        ),
        threshold=float(d["threshold"]),
        truncation_residual=float(d["truncation_residual"]),
        node_truncation=tuple(float(n.get("truncation", 0.0)) for n in nodes),
        provenance=d.get("provenance", {}),
    )
    if d.get("kind") == "simplicial_explanation":
        triangles = tuple(Triangle(tuple(int(k) for k in t["nodes"]), float(t["signal"])) for t in d["triangles"])
        return SimplicialExplanation(graph, triangles, float(d.get("triangle_truncation_residual", 0.0)))
    return graph


def from_json(text: str):
    return from_dict(json.loads(text))
