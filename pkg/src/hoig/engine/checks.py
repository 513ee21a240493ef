"""Algebraic property checks on attribution tensor stacks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch
from ..models.base import LinearCombination, PredictiveModel
from ..tensor import AttributionTensor, Method, contract_last_index, total_sum
from .ig import ExplanationRequest, compose_order, first_order, second_order_hessian

MARGINALIZATION_FACTOR = 10.0
SYMMETRY_TOLERANCE = 1e-8
LINEARITY_TOLERANCE = 1e-10


@dataclass
class Check:
    name: str
    order: int
    value: float
    tolerance: float
    passed: bool
    location: tuple[int, ...] | None = None

    def line(self) -> str:
        where = f" at index {self.location}" if self.location is not None else ""
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.name}\torder={self.order}\tvalue={self.value:.3e}\ttol={self.tolerance:.3e}{where}"


@dataclass
class PropertyReport:
    checks: list[Check] = field(default_factory=list)
    delta_f: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def worst(self, name: str) -> float:
        vals = [c.value for c in self.checks if c.name == name]
        return max(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "delta_f": self.delta_f,
            "checks": [
                {**asdict(c), "location": list(c.location) if c.location is not None else None}
                for c in self.checks
            ],
        }

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def _locate(diff: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(np.abs(diff))), diff.shape))


def verify_properties(stack: Sequence[AttributionTensor], model: PredictiveModel | None = None,
                      x=None, baseline=None, symmetry_tolerance: float = SYMMETRY_TOLERANCE) -> PropertyReport:
    """Completeness per order, marginalization between consecutive orders, symmetry.

    When a model is given, f(x) - f(baseline) is recomputed from it instead of
    trusting the tensors' meta.  Marginalization is checked against ten times
    the higher order's tolerance.
    """
    stack = sorted(stack, key=lambda t: t.order)
    if not stack:
        return PropertyReport()
    ref = stack[0].meta
    x = np.asarray(ref.input if x is None else x, dtype=float)
    baseline = np.asarray(ref.baseline if baseline is None else baseline, dtype=float)
    for t in stack:
        if t.dim != stack[0].dim:
            raise DimensionMismatch("tensors in a stack must share the feature dimension")
        if not (np.array_equal(t.meta.input, x) and np.array_equal(t.meta.baseline, baseline)):
            raise DimensionMismatch("tensors in a stack must explain the same input against the same baseline")
    if model is not None:
        if model.dim != stack[0].dim:
            raise DimensionMismatch(f"model has {model.dim} inputs, tensors have {stack[0].dim}")
        fx, fb = model.value_batch(np.vstack([x, baseline]))
        delta_f = float(fx - fb)
    else:
        delta_f = ref.delta_f

    report = PropertyReport(delta_f=delta_f)
    for t in stack:
        defect = abs(total_sum(t) - delta_f)
        report.checks.append(Check("completeness", t.order, defect, t.meta.tolerance, defect <= t.meta.tolerance))
    for lower, upper in zip(stack, stack[1:]):
        if upper.order != lower.order + 1:
            continue
        diff = lower.dense() - contract_last_index(upper).dense()
        value = float(np.max(np.abs(diff)))
        tol = MARGINALIZATION_FACTOR * upper.meta.tolerance
        report.checks.append(Check("marginalization", upper.order, value, tol, value <= tol, _locate(diff)))
    for t in stack:
        residual = float(t.diagnostics.get("asymmetry_residual", 0.0))
        tol = symmetry_tolerance * max(1.0, float(np.max(np.abs(t.values), initial=0.0)))
        report.checks.append(Check("symmetry", t.order, residual, tol, residual <= tol))
    return report


@dataclass
class LinearityReport:
    alpha: float
    beta: float
    defects: dict[int, float]
    tolerance: float

    @property
    def max_defect(self) -> float:
        return max(self.defects.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tolerance


def _attribute(req: ExplanationRequest, order: int) -> AttributionTensor:
    if order == 1:
        return first_order(req.with_order(1))
    if order == 2 and req.method is Method.HESSIAN_FORMULA:
        return second_order_hessian(req.with_order(2))
    return compose_order(req.with_order(order, method=Method.OPERATOR_COMPOSITION))


def linearity_check(model_a: PredictiveModel, model_b: PredictiveModel, alpha: float, beta: float,
                    req: ExplanationRequest, tolerance: float = LINEARITY_TOLERANCE) -> LinearityReport:
    """Compare attributions of alpha*f + beta*g with alpha*attr(f) + beta*attr(g).

    Every order from 1 to ``req.order`` is checked; ``req.model`` is ignored.
    The tolerance is relative to max(1, largest attribution magnitude).
    """
    if model_a.dim != model_b.dim:
        raise DimensionMismatch("linearity check needs models over the same inputs")
    combo = LinearCombination([model_a, model_b], [alpha, beta])
    defects = {}
    worst_scale = 1.0
    for order in range(1, req.order + 1):
        ta = _attribute(replace(req, model=model_a), order)
        tb = _attribute(replace(req, model=model_b), order)
        tc = _attribute(replace(req, model=combo), order)
        expected = alpha * ta.values + beta * tb.values
        defects[order] = float(np.max(np.abs(tc.values - expected)))
        worst_scale = max(worst_scale, float(np.max(np.abs(expected), initial=0.0)))
    return LinearityReport(float(alpha), float(beta), defects, tolerance * worst_scale)
