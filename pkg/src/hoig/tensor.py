"""Symmetric attribution tensors and the index algebra that relates their orders.

An order-L tensor over D features is stored canonically: one value per
non-decreasing index tuple, in the lexicographic order produced by
``itertools.combinations_with_replacement``.  Expanding to the dense D**L
array repeats each canonical value over all permutations of its tuple, so
stored tensors are permutation symmetric by construction.
"""

from __future__ import annotations

import enum
import functools
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, OrderMismatch, OrderUnderflow

__all__ = [
    "Rule",
    "Method",
    "QuadratureConfig",
    "ExplanationMeta",
    "AttributionTensor",
    "contract_last_index",
    "total_sum",
    "aggregate_third_to_edges",
    "asymmetry_residual",
    "canonical_size",
    "default_feature_names",
]

THIRD_ORDER_SPLIT_RULE = "equal-split-mixed-triples"


class Rule(str, enum.Enum):
    RIGHT_HAND = "RightHand"
    TRAPEZOID = "Trapezoid"


class Method(str, enum.Enum):
    HESSIAN_FORMULA = "HessianFormula"
    OPERATOR_COMPOSITION = "OperatorComposition"
    # first-order path integral evaluated directly
    DIRECT = "Direct"
    # exact path integrals (polynomial models only)
    CLOSED_FORM = "ClosedForm"


@dataclass(frozen=True)
class QuadratureConfig:
    """Per-level quadrature on [0, 1]; every rule uses the nodes t = m / M."""

    points_per_level: int = 100
    rule: Rule = Rule.RIGHT_HAND

    def __post_init__(self):
        if int(self.points_per_level) != self.points_per_level or self.points_per_level < 1:
            raise ValueError(f"points_per_level must be a positive integer, got {self.points_per_level!r}")
        object.__setattr__(self, "points_per_level", int(self.points_per_level))
        object.__setattr__(self, "rule", Rule(self.rule))

    def numerators(self) -> np.ndarray:
        """Integer numerators m of the nodes t = m / M."""
        M = self.points_per_level
        if self.rule is Rule.RIGHT_HAND:
            return np.arange(1, M + 1, dtype=np.int64)
        return np.arange(0, M + 1, dtype=np.int64)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(t, w)`` for one level."""
        M = self.points_per_level
        m = self.numerators()
        w = np.full(m.shape, 1.0 / M)
        if self.rule is Rule.TRAPEZOID:
            w[0] = w[-1] = 0.5 / M
        return m / M, w

    def moment(self, power: int) -> float:
        """Quadrature estimate of the integral of t**power over [0, 1] (0**0 == 1)."""
        t, w = self.nodes()
        return float(np.dot(w, t ** power))

    def to_dict(self) -> dict:
        return {"points_per_level": self.points_per_level, "rule": self.rule.value}

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuadratureConfig":
        return cls(points_per_level=d["points_per_level"], rule=Rule(d["rule"]))


def _as_vector(v) -> tuple[float, ...]:
    return tuple(float(a) for a in np.asarray(v, dtype=float).ravel())


@dataclass(frozen=True)
class ExplanationMeta:
    input: tuple[float, ...]
    baseline: tuple[float, ...]
    delta_f: float
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    method: Method = Method.OPERATOR_COMPOSITION
    tolerance: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "input", _as_vector(self.input))
        object.__setattr__(self, "baseline", _as_vector(self.baseline))
        object.__setattr__(self, "delta_f", float(self.delta_f))
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "tolerance", float(self.tolerance))
        if len(self.input) != len(self.baseline):
            raise DimensionMismatch(
                f"input has length {len(self.input)} but baseline has length {len(self.baseline)}"
            )
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")

    @property
    def dim(self) -> int:
        return len(self.input)

    @property
    def delta_x(self) -> np.ndarray:
        return np.subtract(self.input, self.baseline)

    def to_dict(self) -> dict:
        return {
            "input": list(self.input),
            "baseline": list(self.baseline),
            "delta_f": self.delta_f,
            "quadrature": self.quadrature.to_dict(),
            "method": self.method.value,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExplanationMeta":
        return cls(
            input=d["input"],
            baseline=d["baseline"],
            delta_f=d["delta_f"],
            quadrature=QuadratureConfig.from_dict(d["quadrature"]),
            method=Method(d["method"]),
            tolerance=d["tolerance"],
        )


def canonical_size(dim: int, order: int) -> int:
    return math.comb(dim + order - 1, order)


def default_feature_names(dim: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(dim))


@functools.lru_cache(maxsize=64)
def _index_tables(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical tuples (C, L) and the dense-flat -> canonical-position lookup."""
    combos = np.array(
        list(itertools.combinations_with_replacement(range(dim), order)), dtype=np.int64
    ).reshape(-1, order)
    lookup = np.empty(dim ** order, dtype=np.int64)
    position = {tuple(c): k for k, c in enumerate(combos.tolist())}
    for flat, idx in enumerate(itertools.product(range(dim), repeat=order)):
        lookup[flat] = position[tuple(sorted(idx))]
    combos.setflags(write=False)
    lookup.setflags(write=False)
    return combos, lookup


def asymmetry_residual(raw) -> float:
    """Largest |raw[idx] - raw[perm(idx)]| over all index permutations."""
    raw = np.asarray(raw, dtype=float)
    order = raw.ndim
    if order == 0:
        return 0.0
    if len(set(raw.shape)) != 1:
        raise DimensionMismatch(f"raw tensor must be hypercubic, got shape {raw.shape}")
    worst = 0.0
    for perm in itertools.permutations(range(order)):
        worst = max(worst, float(np.max(np.abs(raw - raw.transpose(perm)), initial=0.0)))
    return worst


def _symmetrize(raw: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(raw.ndim)))
    acc = np.zeros_like(raw)
    for perm in perms:
        acc += raw.transpose(perm)
    return acc / len(perms)


@dataclass(frozen=True, eq=False)
class AttributionTensor:
    """Order-L symmetric attribution tensor for a single prediction."""

    order: int
    dim: int
    values: np.ndarray
    meta: ExplanationMeta
    feature_names: tuple[str, ...] = ()
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1 or self.dim < 1:
            raise ValueError(f"order and dim must be >= 1, got order={self.order}, dim={self.dim}")
        values = np.array(self.values, dtype=float).ravel()
        expected = canonical_size(self.dim, self.order)
        if values.size != expected:
            raise DimensionMismatch(
                f"order-{self.order} tensor over {self.dim} features needs {expected} canonical values, got {values.size}"
            )
        if self.meta.dim != self.dim:
            raise DimensionMismatch(f"meta describes {self.meta.dim} features, tensor has {self.dim}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = tuple(self.feature_names) or default_feature_names(self.dim)
        if len(names) != self.dim:
            raise DimensionMismatch(f"{len(names)} feature names for {self.dim} features")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "diagnostics", dict(self.diagnostics))

    @classmethod
    def from_dense(cls, raw, meta, feature_names=(), diagnostics=None) -> "AttributionTensor":
        """Build from a dense D**L array, averaging over index permutations.

        The pre-average asymmetry is kept in ``diagnostics['asymmetry_residual']``.
        """
        raw = np.asarray(raw, dtype=float)
        order, dim = raw.ndim, raw.shape[0]
        diagnostics = dict(diagnostics or {})
        diagnostics["asymmetry_residual"] = asymmetry_residual(raw)
        combos, _ = _index_tables(dim, order)
        sym = _symmetrize(raw)
        values = sym[tuple(combos.T)]
        return cls(order, dim, values, meta, feature_names, diagnostics)

    @classmethod
    def zeros(cls, order, dim, meta, feature_names=(), diagnostics=None) -> "AttributionTensor":
        return cls(order, dim, np.zeros(canonical_size(dim, order)), meta, feature_names, diagnostics or {})

    @property
    def canonical_indices(self) -> np.ndarray:
        return _index_tables(self.dim, self.order)[0]

    def dense(self) -> np.ndarray:
        _, lookup = _index_tables(self.dim, self.order)
        return self.values[lookup].reshape((self.dim,) * self.order)

    def __getitem__(self, idx) -> float:
        if isinstance(idx, (int, np.integer)):
            idx = (idx,)
        if len(idx) != self.order:
            raise IndexError(f"expected {self.order} indices, got {len(idx)}")
        _, lookup = _index_tables(self.dim, self.order)
        return float(self.values[lookup[np.ravel_multi_index(tuple(idx), (self.dim,) * self.order)]])

    def with_values(self, values, **changes) -> "AttributionTensor":
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    def completeness_defect(self) -> float:
        return total_sum(self) - self.meta.delta_f

    def to_dict(self) -> dict:
        meta = self.meta.to_dict()
        meta["diagnostics"] = _jsonable(self.diagnostics)
        return {
            "order": self.order,
            "dim": self.dim,
            "feature_names": list(self.feature_names),
            "canonical_values": [float(v) for v in self.values],
            "meta": meta,
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributionTensor":
        meta = dict(d["meta"])
        diagnostics = meta.pop("diagnostics", {})
        return cls(
            order=int(d["order"]),
            dim=int(d["dim"]),
            values=np.array(d["canonical_values"], dtype=float),
            meta=ExplanationMeta.from_dict(meta),
            feature_names=tuple(d.get("feature_names", ())),
            diagnostics=diagnostics,
        )

    @classmethod
    def from_json(cls, text: str) -> "AttributionTensor":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, AttributionTensor):
            return NotImplemented
        return (
            self.order == other.order
            and self.dim == other.dim
            and np.array_equal(self.values, other.values)
            and self.meta == other.meta
            and self.feature_names == other.feature_names
        )

    __hash__ = None


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def contract_last_index(tensor: AttributionTensor) -> AttributionTensor:
    """Sum out the last index: b[i1..i(L-1)] = sum_j a[i1..i(L-1), j]."""
    if tensor.order < 2:
        raise OrderUnderflow("cannot contract a first-order tensor")
    reduced = tensor.dense().sum(axis=-1)
    combos, _ = _index_tables(tensor.dim, tensor.order - 1)
    diagnostics = {"contracted_from_order": tensor.order}
    return AttributionTensor(
        tensor.order - 1,
        tensor.dim,
        reduced[tuple(combos.T)],
        tensor.meta,
        tensor.feature_names,
        diagnostics,
    )


def contract_to_order(tensor: AttributionTensor, order: int) -> AttributionTensor:
    while tensor.order > order:
        tensor = contract_last_index(tensor)
    return tensor


def total_sum(tensor: AttributionTensor) -> float:
    """Sum of all D**L expanded entries."""
    return float(tensor.dense().sum())


def aggregate_third_to_edges(tensor: AttributionTensor) -> AttributionTensor:
    """Fold a third-order tensor onto edges of the feature graph.

    The undirected edge {i, j} collects every expanded entry whose index
    multiset is {i, i, j} or {i, j, j}, plus one third of the six entries of
    each fully mixed triple {i, j, k}.  The returned symmetric matrix holds
    half of that edge mass in each of (i, j) and (j, i); the diagonal keeps
    a_iii.  The expanded total is therefore unchanged.
    """
    if tensor.order != 3:
        raise OrderMismatch(f"expected an order-3 tensor, got order {tensor.order}")
    D = tensor.dim
    edge = np.zeros((D, D))
    for (i, j, k), v in zip(tensor.canonical_indices.tolist(), tensor.values):
        distinct = sorted({i, j, k})
        if len(distinct) == 1:
            edge[i, i] += v
        elif len(distinct) == 2:
            a, b = distinct
            half = 1.5 * v
            edge[a, b] += half
            edge[b, a] += half
        else:
            for a, b in itertools.combinations(distinct, 2):
                edge[a, b] += v
                edge[b, a] += v
    combos, _ = _index_tables(D, 2)
    diagnostics = {"aggregated_from_order": 3, "split_rule": THIRD_ORDER_SPLIT_RULE}
    return AttributionTensor(2, D, edge[tuple(combos.T)], tensor.meta, tensor.feature_names, diagnostics)


def stack_to_dict(tensors: Sequence[AttributionTensor]) -> dict:
    return {"kind": "attribution_stack", "tensors": [t.to_dict() for t in tensors]}


def stack_from_dict(d: Mapping) -> list[AttributionTensor]:
    if d.get("kind") == "attribution_stack":
        return [AttributionTensor.from_dict(t) for t in d["tensors"]]
    return [AttributionTensor.from_dict(d)]
