"""Predictive model interface and finite-difference derivative fallbacks."""

from __future__ import annotations

import abc
import enum
import itertools
from typing import Callable, Sequence

import numpy as np

from ..errors import DimensionMismatch, StepError
from ..tensor import default_feature_names

EPS = np.finfo(float).eps
GRADIENT_STEP = EPS ** (1 / 3)
HESSIAN_STEP = EPS ** (1 / 4)

# bound on points * D**order elements materialised at once
_CHUNK_ELEMENTS = 4_000_000


class DerivativeKind(str, enum.Enum):
    EXACT = "Exact"
    FINITE_DIFFERENCE = "FiniteDifference"


class PredictiveModel(abc.ABC):
    """A scalar function of D real inputs with derivative oracles.

    Subclasses implement :meth:`_derivatives`, returning the value and exact
    derivative tensors up to ``max_exact_order`` for a batch of points.
    :meth:`derivatives` fills in higher orders by central differences of the
    highest exact order.
    """

    kind = "abstract"
    derivative_kind = DerivativeKind.EXACT
    max_exact_order = 2
    # total degree for polynomial models, None otherwise
    polynomial_degree: int | None = None

    def __init__(self, dim: int, feature_names: Sequence[str] | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        names = tuple(feature_names) if feature_names else default_feature_names(self.dim)
        if len(names) != self.dim:
            raise DimensionMismatch(f"{len(names)} feature names for a {self.dim}-dimensional model")
        self.feature_names = names

    @abc.abstractmethod
    def _derivatives(self, Z: np.ndarray, order: int) -> list[np.ndarray]:
        """Value and exact derivatives of orders 1..order at rows of Z."""

    def _check_points(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[None, :]
        if Z.ndim != 2 or Z.shape[1] != self.dim:
            raise DimensionMismatch(f"expected points with {self.dim} coordinates, got shape {Z.shape}")
        return Z

    def derivatives(self, Z, order: int) -> list[np.ndarray]:
        """Return ``[f, grad, hess, third, ...]`` evaluated at each row of Z.

        Entry k has shape ``(P,) + (D,) * k``.
        """
        Z = self._check_points(Z)
        exact = min(order, self.max_exact_order)
        out = list(self._derivatives(Z, exact))
        for k in range(exact + 1, order + 1):
            out.append(_fd_lift(lambda W, k=k: self.derivatives(W, k - 1)[k - 1], Z, k))
        return out

    def value_batch(self, Z) -> np.ndarray:
        return self.derivatives(Z, 0)[0]

    def value(self, x) -> float:
        return float(self.value_batch(np.asarray(x, dtype=float)[None, :])[0])

    def gradient(self, x) -> np.ndarray:
        return self.derivatives(np.asarray(x, dtype=float)[None, :], 1)[1][0]

    def hessian(self, x) -> np.ndarray:
        return self.derivatives(np.asarray(x, dtype=float)[None, :], 2)[2][0]

    def __call__(self, x) -> float:
        return self.value(x)

    # serialisation hooks, overridden by concrete models
    def to_dict(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} is not serialisable")


def _fd_lift(lower: Callable[[np.ndarray], np.ndarray], Z: np.ndarray, order: int) -> np.ndarray:
    """Central difference of an order-(k-1) tensor field, symmetrised to order k."""
    P, D = Z.shape
    h = GRADIENT_STEP * (1.0 + np.abs(Z))  # (P, D)
    stacked = []
    for a in range(D):
        step = np.zeros_like(Z)
        step[:, a] = h[:, a]
        up, down = Z + step, Z - step
        if np.any((up[:, a] - down[:, a]) == 0.0):
            raise StepError(f"finite-difference step underflowed along coordinate {a}")
        stacked.append((up, down, (up[:, a] - down[:, a])))
    ups = np.concatenate([s[0] for s in stacked])
    downs = np.concatenate([s[1] for s in stacked])
    diff = lower(ups) - lower(downs)  # (D*P, D, ..., D)
    widths = np.concatenate([s[2] for s in stacked])
    diff = diff / widths.reshape((-1,) + (1,) * (order - 1))
    diff = diff.reshape((D, P) + (D,) * (order - 1))
    raw = np.moveaxis(diff, 0, -1)  # new derivative axis last
    perms = list(itertools.permutations(range(1, order + 1)))
    sym = np.zeros_like(raw)
    for perm in perms:
        sym += raw.transpose((0,) + perm)
    return sym / len(perms)


def _as_callable(model) -> Callable[[np.ndarray], float]:
    if isinstance(model, PredictiveModel):
        return model.value
    return lambda x: float(model(x))


def _steps(x: np.ndarray, step, base: float) -> np.ndarray:
    if step is None:
        h = base * (1.0 + np.abs(x))
    else:
        if not np.all(np.asarray(step) > 0):
            raise ValueError("finite-difference step must be positive")
        h = np.broadcast_to(np.asarray(step, dtype=float), x.shape).copy()
    return h


def fd_gradient(model, x, step=None) -> np.ndarray:
    """Central-difference gradient; default step cbrt(eps) * (1 + |x_i|)."""
    f = _as_callable(model)
    x = np.asarray(x, dtype=float)
    h = _steps(x, step, GRADIENT_STEP)
    g = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h[i]
        down[i] -= h[i]
        width = up[i] - down[i]
        if width == 0.0:
            raise StepError(f"finite-difference step underflowed along coordinate {i}")
        g[i] = (f(up) - f(down)) / width
    return g


def fd_hessian(model, x, step=None) -> np.ndarray:
    """Central-difference Hessian; default step eps**(1/4) * (1 + |x_i|).

    The result is symmetrised.
    """
    f = _as_callable(model)
    x = np.asarray(x, dtype=float)
    h = _steps(x, step, HESSIAN_STEP)
    D = x.size
    if np.any((x + h) - (x - h) == 0.0):
        raise StepError("finite-difference step underflowed")
    f0 = f(x)
    H = np.empty((D, D))

    def shifted(moves):
        y = x.copy()
        for i, s in moves:
            y[i] += s
        return f(y)

    for i in range(D):
        H[i, i] = (shifted([(i, h[i])]) - 2.0 * f0 + shifted([(i, -h[i])])) / (h[i] * h[i])
        for j in range(i + 1, D):
            pp = shifted([(i, h[i]), (j, h[j])])
            pm = shifted([(i, h[i]), (j, -h[j])])
            mp = shifted([(i, -h[i]), (j, h[j])])
            mm = shifted([(i, -h[i]), (j, -h[j])])
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


class FiniteDifferenceModel(PredictiveModel):
    """Wraps a plain callable; every derivative comes from central differences."""

    kind = "callable"
    derivative_kind = DerivativeKind.FINITE_DIFFERENCE
    max_exact_order = 0

    def __init__(self, func: Callable[[np.ndarray], float], dim: int, feature_names=None):
        super().__init__(dim, feature_names)
        self.func = func

    def _derivatives(self, Z, order):
        return [np.array([float(self.func(z)) for z in Z])]

    def derivatives(self, Z, order):
        Z = self._check_points(Z)
        out = [self._derivatives(Z, 0)[0]]
        if order >= 1:
            out.append(np.array([fd_gradient(self.func, z) for z in Z]))
        if order >= 2:
            out.append(np.array([fd_hessian(self.func, z) for z in Z]))
        for k in range(3, order + 1):
            out.append(_fd_lift(lambda W, k=k: self.derivatives(W, k - 1)[k - 1], Z, k))
        return out


class LinearCombination(PredictiveModel):
    """sum_k c_k * f_k for models over the same inputs."""

    kind = "combination"

    def __init__(self, models: Sequence[PredictiveModel], coefficients: Sequence[float]):
        models = list(models)
        if not models or len(models) != len(coefficients):
            raise ValueError("need one coefficient per model")
        dims = {m.dim for m in models}
        if len(dims) != 1:
            raise DimensionMismatch(f"models disagree on dimension: {sorted(dims)}")
        super().__init__(models[0].dim, models[0].feature_names)
        self.models = models
        self.coefficients = [float(c) for c in coefficients]
        self.max_exact_order = min(m.max_exact_order for m in models)
        degrees = [m.polynomial_degree for m in models]
        self.polynomial_degree = None if None in degrees else max(degrees)
        if any(m.derivative_kind is DerivativeKind.FINITE_DIFFERENCE for m in models):
            self.derivative_kind = DerivativeKind.FINITE_DIFFERENCE

    def _derivatives(self, Z, order):
        total = None
        for c, m in zip(self.coefficients, self.models):
            parts = m.derivatives(Z, order)
            if total is None:
                total = [c * p for p in parts]
            else:
                total = [t + c * p for t, p in zip(total, parts)]
        return total

    def derivatives(self, Z, order):
        Z = self._check_points(Z)
        return self._derivatives(Z, order)


def chunked_rows(n_rows: int, dim: int, order: int):
    """Yield row slices so that rows * dim**order stays bounded."""
    size = max(1, _CHUNK_ELEMENTS // max(1, dim ** order))
    for start in range(0, n_rows, size):
        yield slice(start, min(n_rows, start + size))
