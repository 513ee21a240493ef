"""Gaussian process regression mean with an isotropic RBF kernel."""

from __future__ import annotations

import itertools
import logging

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from ..errors import NotPositiveDefinite
from .base import PredictiveModel, chunked_rows

log = logging.getLogger(__name__)

_LETTERS = "abcd"
GRID_FACTORS = (0.5, 1.0, 2.0)


def _outer_powers(V: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k-fold outer power, flattened to (N, D**k)."""
    out = np.ones((V.shape[0], 1))
    for _ in range(k):
        out = (out[:, :, None] * V[:, None, :]).reshape(V.shape[0], -1)
    return out


def _identity_sym(order: int, lower: np.ndarray, D: int) -> np.ndarray:
    """Sum over placements of one identity factor next to a symmetric (P, D^(order-2)) tensor."""
    eye = np.eye(D)
    idx = _LETTERS[:order]
    total = 0.0
    for pair in itertools.combinations(range(order), 2):
        rest = "".join(idx[p] for p in range(order) if p not in pair)
        subscripts = f"{idx[pair[0]]}{idx[pair[1]]},p{rest}->p{idx}"
        total = total + np.einsum(subscripts, eye, lower)
    return total


def _double_identity(D: int) -> np.ndarray:
    eye = np.eye(D)
    return (
        np.einsum("ab,cd->abcd", eye, eye)
        + np.einsum("ac,bd->abcd", eye, eye)
        + np.einsum("ad,bc->abcd", eye, eye)
    )


class GprModel(PredictiveModel):
    """Posterior mean f(x) = sum_k alpha_k k(x, x_k) of a zero-mean GP.

    k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 lengthscale^2)).
    Derivatives up to order four are exact (Hermite-tensor identities of the
    Gaussian), evaluated through weighted moments of the training inputs.
    """

    kind = "gpr"
    max_exact_order = 4

    def __init__(self, X, alpha, lengthscale, signal_variance, noise, feature_names=None, diagnostics=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        super().__init__(X.shape[1], feature_names)
        self.X = X
        self.alpha = np.asarray(alpha, dtype=float).ravel()
        self.lengthscale = float(lengthscale)
        self.signal_variance = float(signal_variance)
        self.noise = float(noise)
        self.diagnostics = dict(diagnostics or {})
        self._center = X.mean(axis=0)
        self._moment_bases = {}

    def kernel(self, A, B) -> np.ndarray:
        sq = cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean")
        return self.signal_variance * np.exp(-0.5 * sq / self.lengthscale ** 2)

    def _basis(self, k: int) -> np.ndarray:
        if k not in self._moment_bases:
            self._moment_bases[k] = _outer_powers(self.X - self._center, k)
        return self._moment_bases[k]

    def _weighted_powers(self, C: np.ndarray, Zc: np.ndarray, j: int) -> np.ndarray:
        """sum_k C[p, k] (z_p - x_k)^{(x) j}, expanded through training moments."""
        P, D = Zc.shape
        if j == 0:
            return C.sum(axis=1)
        idx = _LETTERS[:j]
        total = np.zeros((P,) + (D,) * j)
        for mask in itertools.product((0, 1), repeat=j):
            m = sum(mask)
            moment = (C @ self._basis(m)).reshape((P,) + (D,) * m) if m else C.sum(axis=1)
            from_x = "".join(idx[p] for p in range(j) if mask[p])
            operands = [moment]
            subs = [f"p{from_x}"]
            for p in range(j):
                if not mask[p]:
                    operands.append(Zc)
                    subs.append(f"p{idx[p]}")
            sign = -1.0 if m % 2 else 1.0
            total += sign * np.einsum(",".join(subs) + f"->p{idx}", *operands)
        return total

    def _derivatives(self, Z, order):
        P, D = Z.shape
        ell = self.lengthscale
        out = [np.empty((P,) + (D,) * k) for k in range(order + 1)]
        for rows in chunked_rows(P, D, order):
            Zb = Z[rows]
            C = self.kernel(Zb, self.X) * self.alpha
            Zc = Zb - self._center
            R = [self._weighted_powers(C, Zc, j) / ell ** j for j in range(order + 1)]
            out[0][rows] = R[0]
            if order >= 1:
                out[1][rows] = -R[1] / ell
            if order >= 2:
                out[2][rows] = (R[2] - R[0][:, None, None] * np.eye(D)) / ell ** 2
            if order >= 3:
                out[3][rows] = -(R[3] - _identity_sym(3, R[1], D)) / ell ** 3
            if order >= 4:
                out[4][rows] = (
                    R[4] - _identity_sym(4, R[2], D) + R[0][:, None, None, None, None] * _double_identity(D)
                ) / ell ** 4
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "feature_names": list(self.feature_names),
            "X": self.X.tolist(),
            "alpha": self.alpha.tolist(),
            "lengthscale": self.lengthscale,
            "signal_variance": self.signal_variance,
            "noise": self.noise,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d) -> "GprModel":
        return cls(
            d["X"], d["alpha"], d["lengthscale"], d["signal_variance"], d["noise"],
            feature_names=d.get("feature_names"), diagnostics=d.get("diagnostics"),
        )


def default_hyperparameters(X, y) -> dict:
    """Median-distance lengthscale, var(y) signal variance, 1% of var(y) noise."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    dists = pdist(X) if len(X) > 1 else np.array([])
    dists = dists[dists > 0]
    lengthscale = float(np.median(dists)) if dists.size else 1.0
    var = float(np.var(y))
    signal = var if var > 0 else 1.0
    return {"lengthscale": lengthscale, "signal_variance": signal, "noise": 1e-2 * signal}


def _factor(K: np.ndarray):
    N = len(K)
    try:
        factor = linalg.cho_factor(K, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"kernel system is not positive definite ({exc}); condition number {np.linalg.cond(K):.3e}",
            condition=float(np.linalg.cond(K)),
        ) from exc
    pivots = np.diag(factor[0]) ** 2
    floor = N * np.finfo(float).eps * float(np.max(np.diag(K)))
    if pivots.min() <= floor:
        cond = float(np.linalg.cond(K))
        raise NotPositiveDefinite(
            f"kernel system is numerically singular: smallest pivot {pivots.min():.3e} "
            f"<= {floor:.3e}, condition number {cond:.3e}",
            condition=cond,
            min_pivot=float(pivots.min()),
        )
    return factor


def _solve(X, y, lengthscale, signal_variance, noise):
    model = GprModel(X, np.zeros(len(X)), lengthscale, signal_variance, noise)
    K = model.kernel(X, X) + noise * np.eye(len(X))
    factor = _factor(K)
    alpha = linalg.cho_solve(factor, y)
    lml = float(-0.5 * y @ alpha - np.sum(np.log(np.diag(factor[0]))) - 0.5 * len(X) * np.log(2 * np.pi))
    return alpha, lml


def fit_gpr(data, kernel_params=None, noise=None, grid_search=False) -> GprModel:
    """Fit the GP mean weights by solving (K + noise I) alpha = y with Cholesky.

    ``kernel_params`` may set ``lengthscale`` and ``signal_variance``; anything
    unset falls back to :func:`default_hyperparameters`.  With ``grid_search``
    every hyperparameter is scaled by 0.5, 1 and 2 and the combination with
    the largest log marginal likelihood wins.
    """
    X = np.atleast_2d(np.asarray(data.X, dtype=float))
    y = np.asarray(data.y, dtype=float)
    if len(X) < 1:
        raise ValueError("need at least one training sample")
    params = default_hyperparameters(X, y)
    params.update(kernel_params or {})
    if noise is not None:
        if noise < 0:
            raise ValueError("noise variance must be nonnegative")
        params["noise"] = float(noise)

    candidates = [params]
    if grid_search:
        candidates = [
            {"lengthscale": params["lengthscale"] * a, "signal_variance": params["signal_variance"] * b,
             "noise": params["noise"] * c}
            for a, b, c in itertools.product(GRID_FACTORS, repeat=3)
        ]
    best = None
    for cand in candidates:
        try:
            alpha, lml = _solve(X, y, **cand)
        except NotPositiveDefinite:
            if not grid_search:
                raise
            continue
        if best is None or lml > best[2]:
            best = (cand, alpha, lml)
    if best is None:
        raise NotPositiveDefinite("no grid candidate produced a positive definite kernel system")
    cand, alpha, lml = best
    model = GprModel(X, alpha, cand["lengthscale"], cand["signal_variance"], cand["noise"],
                     feature_names=data.feature_names)
    resid = model.value_batch(X) - y
    model.diagnostics = {
        "train_rmse": float(np.sqrt(np.mean(resid ** 2))),
        "log_marginal_likelihood": lml,
        "grid_search": bool(grid_search),
        "n_train": int(len(X)),
    }
    log.info("fitted GPR: %s", model.diagnostics)
    return model
