"""Integrated Gradients attributions of order 1 to 4.

Three routes are provided and are meant to cross-check each other:

* :func:`first_order` evaluates the path integral of the gradient directly;
* :func:`second_order_hessian` evaluates the two double-integral formulas for
  mixed and repeated second-order attributions on the M x M grid;
* :func:`compose_order` applies attribution operators recursively.

For the recursion, write a term of an attribution function of y as
``c * (y - b)^alpha * d^alpha f(b + U (y - b))`` with b the baseline.  The
operator for feature i maps it to two terms: one from differentiating the
prefactor (only when i is already in alpha; coefficient times the
multiplicity of i, path weight t ** (|alpha| - 1)) and one from the chain
rule through f (alpha gains i, weight t ** |alpha| * U).  Hence every order-L
entry is a finite sum of ``c * Delta^alpha * sum_grid prod t_l ** e_l *
d^alpha f(b + t_1...t_L Delta)`` over tensor-product quadrature grids, with
exact model derivatives propagated through the inner quadrature sums.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DimensionMismatch, OrderCapExceeded, OrderMismatch
from ..models.base import PredictiveModel, chunked_rows
from ..tensor import (
    AttributionTensor,
    ExplanationMeta,
    Method,
    QuadratureConfig,
    total_sum,
)
from .path import StraightLinePath
from .quadrature import ProductGrid, exact_moment

log = logging.getLogger(__name__)

DEFAULT_ORDER_CAP = 4
NODE_WARNING_THRESHOLD = 10 ** 7
TOLERANCE_FACTOR = 5.0


@dataclass(frozen=True)
class ExplanationRequest:
    model: PredictiveModel
    x: np.ndarray
    baseline: np.ndarray | None = None
    order: int = 1
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    method: Method = Method.OPERATOR_COMPOSITION
    order_cap: int = DEFAULT_ORDER_CAP
    # "auto" collapses polynomial models onto exact moments; "grid" always samples the model
    strategy: str = "auto"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        baseline = np.zeros_like(x) if self.baseline is None else np.asarray(self.baseline, dtype=float).ravel()
        if x.size != self.model.dim or baseline.size != self.model.dim:
            raise DimensionMismatch(
                f"model has {self.model.dim} inputs; got input of length {x.size} and baseline of length {baseline.size}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "method", Method(self.method))
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.method is Method.HESSIAN_FORMULA and self.order > 2:
            raise OrderMismatch("the Hessian formulas only cover orders 1 and 2")
        if self.strategy not in ("auto", "grid"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def path(self) -> StraightLinePath:
        return StraightLinePath(self.x, self.baseline)

    def with_order(self, order, **changes) -> "ExplanationRequest":
        return replace(self, order=order, **changes)


@dataclass(frozen=True)
class _Context:
    f_input: float
    f_baseline: float
    lip_scale: float

    @property
    def delta_f(self):
        return self.f_input - self.f_baseline

    def tolerance(self, order: int, M: int) -> float:
        floor = 1e-12 * (1.0 + abs(self.f_input) + abs(self.f_baseline))
        return TOLERANCE_FACTOR * order * self.lip_scale / M + floor


def path_scales(req: ExplanationRequest) -> tuple[float, float]:
    """max |phi'| and max |phi''| of phi(t) = f(gamma(t)), sampled at the level nodes and midpoints."""
    path = req.path
    t, _ = req.quadrature.nodes()
    M = req.quadrature.points_per_level
    t = np.unique(np.concatenate([t, np.linspace(0.0, 1.0, 2 * M + 1)]))
    _, grad, hess = req.model.derivatives(path(t), 2)
    d = path.delta
    first = grad @ d
    second = np.einsum("pab,a,b->p", hess, d, d)
    return float(np.max(np.abs(first))), float(np.max(np.abs(second)))


def _context(req: ExplanationRequest) -> _Context:
    """Model values at both ends and the Lipschitz scale of the first-level integrand."""
    values = req.model.value_batch(np.vstack([req.x, req.baseline]))
    if req.path.degenerate:
        return _Context(float(values[0]), float(values[0]), 0.0)
    _, second = path_scales(req)
    return _Context(float(values[0]), float(values[1]), second)


def _meta(req, ctx: _Context, order: int, method: Method, tolerance=None) -> ExplanationMeta:
    tol = ctx.tolerance(order, req.quadrature.points_per_level) if tolerance is None else tolerance
    return ExplanationMeta(req.x, req.baseline, ctx.delta_f, req.quadrature, method, tol)


def _degenerate(req, order, method) -> AttributionTensor:
    ctx = _Context(0.0, 0.0, 0.0)
    meta = _meta(req, ctx, order, method, tolerance=1e-12)
    diagnostics = {"node_evaluations": 0, "degenerate": True, "asymmetry_residual": 0.0, "completeness_defect": 0.0}
    return AttributionTensor.zeros(order, req.model.dim, meta, req.model.feature_names, diagnostics)


def _finish(req, ctx, raw, method, diagnostics) -> AttributionTensor:
    order = raw.ndim
    tensor = AttributionTensor.from_dense(raw, _meta(req, ctx, order, method), req.model.feature_names, diagnostics)
    tensor.diagnostics["completeness_defect"] = total_sum(tensor) - ctx.delta_f
    tensor.diagnostics["lip_scale"] = ctx.lip_scale
    return tensor


def first_order(req: ExplanationRequest, ctx: _Context | None = None) -> AttributionTensor:
    """a_i = Delta_i * sum_m w_m d_i f(gamma(t_m))."""
    if req.path.degenerate:
        return _degenerate(req, 1, Method.DIRECT)
    ctx = ctx or _context(req)
    t, w = req.quadrature.nodes()
    grad = req.model.derivatives(req.path(t), 1)[1]
    raw = req.path.delta * (w @ grad)
    return _finish(req, ctx, raw, Method.DIRECT, {"node_evaluations": len(t)})


def second_order_hessian(req: ExplanationRequest, ctx: _Context | None = None) -> AttributionTensor:
    """Mixed and repeated second-order attributions from the double-integral formulas.

    a_ij = Delta_i Delta_j sum_{s,t} w_s w_t s t d_ij f(gamma(st))
           + [i == j] Delta_i sum_{s,t} w_s w_t d_i f(gamma(st))
    """
    if req.path.degenerate:
        return _degenerate(req, 2, Method.HESSIAN_FORMULA)
    ctx = ctx or _context(req)
    D = req.model.dim
    t, w = req.quadrature.nodes()
    u = np.outer(t, t).ravel()
    weight = np.outer(w, w).ravel()
    grad_sum = np.zeros(D)
    hess_sum = np.zeros((D, D))
    for rows in chunked_rows(len(u), D, 2):
        _, grad, hess = req.model.derivatives(req.path(u[rows]), 2)
        grad_sum += weight[rows] @ grad
        hess_sum += np.tensordot(weight[rows] * u[rows], hess, axes=1)
    delta = req.path.delta
    raw = np.outer(delta, delta) * hess_sum + np.diag(delta * grad_sum)
    return _finish(req, ctx, raw, Method.HESSIAN_FORMULA, {"node_evaluations": len(u)})


@functools.lru_cache(maxsize=4096)
def composition_terms(indices: tuple[int, ...]) -> tuple[tuple[float, tuple[int, ...], tuple[int, ...]], ...]:
    """Expand A_{i1} ... A_{iL} f into (coefficient, alpha, level exponents) terms.

    ``indices[0]`` is the outermost operator; level 0 of the exponents belongs
    to the innermost operator ``indices[-1]``.
    """
    states = [(1.0, (), ())]
    for i in reversed(indices):
        grown = []
        for coef, alpha, exps in states:
            k = len(alpha)
            mult = alpha.count(i)
            if mult:
                grown.append((coef * mult, alpha, exps + (k - 1,)))
            grown.append((coef, tuple(sorted(alpha + (i,))), tuple(e + 1 for e in exps) + (k,)))
        states = grown
    merged: dict = {}
    for coef, alpha, exps in states:
        merged[(alpha, exps)] = merged.get((alpha, exps), 0.0) + coef
    return tuple((c, a, e) for (a, e), c in sorted(merged.items()))


def _chebyshev_unit_nodes(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.sort(0.5 - 0.5 * np.cos((2 * k + 1) * np.pi / (2 * n)))


def _sums_from_moments(model, path, exps_list, order, moment) -> tuple[list[np.ndarray], int]:
    """Grid sums for polynomial models: the derivative along the ray is a polynomial in u."""
    D = model.dim
    n = max(1, model.polynomial_degree + 1)
    u = _chebyshev_unit_nodes(n)
    V = np.vander(u, n, increasing=True)
    G = model.derivatives(path(u), order)
    mom = np.array([[math.prod(moment(e + j) for e in exps) for j in range(n)] for exps in exps_list])
    sums = [None]
    for k in range(1, order + 1):
        coeffs = np.linalg.solve(V, G[k].reshape(n, D ** k))
        sums.append(mom @ coeffs)
    return sums, n


def _sums_on_grid(model, path, exps_list, order, quadrature) -> tuple[list[np.ndarray], int]:
    D = model.dim
    grid = ProductGrid(quadrature, order)
    if grid.nominal_size > NODE_WARNING_THRESHOLD:
        warnings.warn(
            f"order-{order} composition spans {grid.nominal_size:.3g} nominal grid nodes "
            f"({len(grid)} distinct model evaluations)",
            RuntimeWarning,
            stacklevel=3,
        )
    W = np.vstack([grid.weights(e) for e in exps_list])
    sums = [None] + [np.zeros((len(exps_list), D ** k)) for k in range(1, order + 1)]
    for rows in chunked_rows(len(grid), D, order):
        G = model.derivatives(path(grid.u[rows]), order)
        for k in range(1, order + 1):
            sums[k] += W[:, rows] @ G[k].reshape(-1, D ** k)
    return sums, len(grid)


def _compose_raw(req: ExplanationRequest, moment=None) -> tuple[np.ndarray, dict]:
    model, L, D = req.model, req.order, req.model.dim
    path = req.path
    tuples = list(itertools.product(range(D), repeat=L))
    exps_index: dict = {}
    for idx in tuples:
        for _, _, exps in composition_terms(idx):
            exps_index.setdefault(exps, len(exps_index))
    exps_list = list(exps_index)
    if moment is not None:
        sums, evaluations = _sums_from_moments(model, path, exps_list, L, moment)
        strategy = "exact-moments"
    elif req.strategy == "auto" and model.polynomial_degree is not None:
        sums, evaluations = _sums_from_moments(model, path, exps_list, L, req.quadrature.moment)
        strategy = "polynomial-moments"
    else:
        sums, evaluations = _sums_on_grid(model, path, exps_list, L, req.quadrature)
        strategy = "product-grid"
    delta = path.delta
    raw = np.zeros(D ** L)
    for flat, idx in enumerate(tuples):
        acc = 0.0
        for coef, alpha, exps in composition_terms(idx):
            k = len(alpha)
            pos = np.ravel_multi_index(alpha, (D,) * k)
            acc += coef * math.prod(delta[a] for a in alpha) * sums[k][exps_index[exps], pos]
        raw[flat] = acc
    diagnostics = {
        "node_evaluations": int(evaluations),
        "nominal_nodes": int(len(req.quadrature.numerators()) ** L),
        "strategy": strategy,
    }
    return raw.reshape((D,) * L), diagnostics


def compose_order(req: ExplanationRequest, ctx: _Context | None = None) -> AttributionTensor:
    """Order-L attributions by recursive application of attribution operators."""
    if req.order > req.order_cap:
        raise OrderCapExceeded(f"order {req.order} exceeds the configured cap of {req.order_cap}")
    if req.path.degenerate:
        return _degenerate(req, req.order, Method.OPERATOR_COMPOSITION)
    ctx = ctx or _context(req)
    raw, diagnostics = _compose_raw(req)
    return _finish(req, ctx, raw, Method.OPERATOR_COMPOSITION, diagnostics)


def closed_form(model: PredictiveModel, x, baseline=None, order: int = 1) -> AttributionTensor:
    """Exact (M -> infinity) attributions of a polynomial model."""
    if model.polynomial_degree is None:
        raise TypeError("closed-form attributions need a polynomial model")
    req = ExplanationRequest(model, x, baseline, order=order, order_cap=max(order, DEFAULT_ORDER_CAP))
    if req.path.degenerate:
        return _degenerate(req, order, Method.CLOSED_FORM)
    values = model.value_batch(np.vstack([req.x, req.baseline]))
    ctx = _Context(float(values[0]), float(values[1]), 0.0)
    raw, diagnostics = _compose_raw(req, moment=exact_moment)
    tensor = AttributionTensor.from_dense(
        raw, _meta(req, ctx, order, Method.CLOSED_FORM), model.feature_names, diagnostics
    )
    tensor.diagnostics["completeness_defect"] = total_sum(tensor) - ctx.delta_f
    return tensor


def explain(req: ExplanationRequest) -> list[AttributionTensor]:
    """Attribution tensors of orders 1..req.order sharing one meta context.

    Order 1 is always the direct path integral; order 2 follows ``req.method``;
    orders 3 and up always use operator composition.
    """
    if req.order > req.order_cap:
        raise OrderCapExceeded(f"order {req.order} exceeds the configured cap of {req.order_cap}")
    ctx = None if req.path.degenerate else _context(req)
    stack = [first_order(req.with_order(1), ctx)]
    for L in range(2, req.order + 1):
        if L == 2 and req.method is Method.HESSIAN_FORMULA:
            stack.append(second_order_hessian(req.with_order(2), ctx))
        else:
            stack.append(compose_order(req.with_order(L, method=Method.OPERATOR_COMPOSITION), ctx))
    return stack
