"""Quadratic-feature GLM with a logistic inverse link, fit by damped Newton."""

from __future__ import annotations

import itertools
import logging

import numpy as np
from numpy.polynomial import Polynomial
from scipy import linalg
from scipy.special import expit

from ..errors import DataError, IterationLimit
from .base import PredictiveModel

log = logging.getLogger(__name__)

TARGET_MARGIN = 0.05


def _sigmoid_derivative_polys(order: int) -> list[Polynomial]:
    """d^k sigma / d eta^k written as polynomials in sigma, k = 0..order."""
    logistic = Polynomial([0.0, 1.0, -1.0])  # s (1 - s)
    polys = [Polynomial([0.0, 1.0])]
    for _ in range(order):
        polys.append(polys[-1].deriv() * logistic)
    return polys


def quadratic_features(Z: np.ndarray) -> np.ndarray:
    """(1, z_i, z_i z_j for i <= j) for each row."""
    Z = np.atleast_2d(Z)
    D = Z.shape[1]
    pairs = list(itertools.combinations_with_replacement(range(D), 2))
    cols = [np.ones(len(Z))] + [Z[:, i] for i in range(D)] + [Z[:, i] * Z[:, j] for i, j in pairs]
    return np.column_stack(cols)


def feature_count(dim: int) -> int:
    return 1 + dim + dim * (dim + 1) // 2


class GlmModel(PredictiveModel):
    """f(x) = y_low + (y_high - y_low) * sigmoid(beta . phi(z)), z = (x - mean) / scale."""

    kind = "glm"
    max_exact_order = 4

    def __init__(self, beta, x_mean, x_scale, y_low, y_high, feature_names=None, diagnostics=None):
        x_mean = np.asarray(x_mean, dtype=float).ravel()
        super().__init__(x_mean.size, feature_names)
        self.beta = np.asarray(beta, dtype=float).ravel()
        if self.beta.size != feature_count(self.dim):
            raise ValueError(f"beta must have {feature_count(self.dim)} entries, got {self.beta.size}")
        self.x_mean = x_mean
        self.x_scale = np.asarray(x_scale, dtype=float).ravel()
        self.y_low = float(y_low)
        self.y_high = float(y_high)
        self.diagnostics = dict(diagnostics or {})
        D = self.dim
        self._b = self.beta[1:1 + D]
        Q = np.zeros((D, D))
        for (i, j), c in zip(itertools.combinations_with_replacement(range(D), 2), self.beta[1 + D:]):
            if i == j:
                Q[i, i] = c
            else:
                Q[i, j] = Q[j, i] = 0.5 * c
        self._Q = Q

    def linear_predictor(self, X) -> np.ndarray:
        Z = (np.atleast_2d(X) - self.x_mean) / self.x_scale
        return quadratic_features(Z) @ self.beta

    def _derivatives(self, X, order):
        D = self.dim
        Z = (X - self.x_mean) / self.x_scale
        eta = quadratic_features(Z) @ self.beta
        s = expit(eta)
        span = self.y_high - self.y_low
        sig = [p(s) for p in _sigmoid_derivative_polys(order)]
        g1 = self._b + 2.0 * Z @ self._Q  # d eta / dz, (P, D)
        g2 = 2.0 * self._Q
        out = [self.y_low + span * s]
        # Faa di Bruno with a quadratic inner function: only blocks of size 1 and 2 survive
        if order >= 1:
            out.append(sig[1][:, None] * g1)
        if order >= 2:
            out.append(sig[2][:, None, None] * np.einsum("pa,pb->pab", g1, g1) + sig[1][:, None, None] * g2)
        if order >= 3:
            t = sig[3][:, None, None, None] * np.einsum("pa,pb,pc->pabc", g1, g1, g1)
            mixed = np.einsum("ab,pc->pabc", g2, g1) + np.einsum("ac,pb->pabc", g2, g1) + np.einsum("bc,pa->pabc", g2, g1)
            out.append(t + sig[2][:, None, None, None] * mixed)
        if order >= 4:
            t = sig[4][:, None, None, None, None] * np.einsum("pa,pb,pc,pd->pabcd", g1, g1, g1, g1)
            one_pair = sum(
                np.einsum(f"{p}{q},p{r}{u}->pabcd", g2, np.einsum("pa,pb->pab", g1, g1))
                for p, q, r, u in ("abcd", "acbd", "adbc", "bcad", "bdac", "cdab")
            )
            two_pairs = (
                np.einsum("ab,cd->abcd", g2, g2) + np.einsum("ac,bd->abcd", g2, g2) + np.einsum("ad,bc->abcd", g2, g2)
            )
            out.append(t + sig[3][:, None, None, None, None] * one_pair + sig[2][:, None, None, None, None] * two_pairs)
        inv = 1.0 / self.x_scale
        for k in range(1, order + 1):
            scaled = span * out[k]
            for axis in range(1, k + 1):
                shape = [1] * (k + 1)
                shape[axis] = D
                scaled = scaled * inv.reshape(shape)
            out[k] = scaled
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "feature_names": list(self.feature_names),
            "beta": self.beta.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_low": self.y_low,
            "y_high": self.y_high,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d) -> "GlmModel":
        return cls(d["beta"], d["x_mean"], d["x_scale"], d["y_low"], d["y_high"],
                   feature_names=d.get("feature_names"), diagnostics=d.get("diagnostics"))


def target_range(y, margin=TARGET_MARGIN) -> tuple[float, float]:
    """Output scale so that min(y) and max(y) map to margin and 1 - margin."""
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi == lo:
        return lo - 0.5, lo + 0.5
    pad = (hi - lo) * margin / (1.0 - 2.0 * margin)
    return lo - pad, hi + pad


def fit_glm(data, max_iters=200, tol=1e-8, output_range=None, standardize=True, margin=TARGET_MARGIN) -> GlmModel:
    """Least-squares fit of sigmoid(beta . phi) to min-max scaled targets.

    Newton steps use the full Hessian of the squared loss; when it is not
    positive definite a Levenberg shift is added until a Cholesky factor
    exists.  Steps are backtracked until the loss decreases.  Stops when the
    max-norm of the gradient is at most ``tol``.
    """
    X = np.atleast_2d(np.asarray(data.X, dtype=float))
    y = np.asarray(data.y, dtype=float)
    N, D = X.shape
    n_feat = feature_count(D)
    if N <= n_feat:
        raise DataError(f"need more than {n_feat} rows to fit a quadratic GLM in {D} features, got {N}")
    x_mean = X.mean(axis=0) if standardize else np.zeros(D)
    x_scale = X.std(axis=0) if standardize else np.ones(D)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y_low, y_high = output_range if output_range is not None else target_range(y, margin)
    target = (y - y_low) / (y_high - y_low)
    if np.any(target <= 0) or np.any(target >= 1):
        raise DataError("targets must lie strictly inside the output range")
    Phi = quadratic_features((X - x_mean) / x_scale)

    def loss_grad_hess(beta):
        s = expit(Phi @ beta)
        r = s - target
        d1 = s * (1 - s)
        d2 = d1 * (1 - 2 * s)
        loss = 0.5 * float(r @ r)
        grad = Phi.T @ (r * d1)
        hess = Phi.T @ ((d1 * d1 + r * d2)[:, None] * Phi)
        return loss, grad, hess

    beta = np.zeros(n_feat)
    beta[0] = float(np.log(np.mean(target) / (1 - np.mean(target))))
    loss, grad, hess = loss_grad_hess(beta)
    shift = 0.0
    history = []
    for it in range(1, max_iters + 1):
        if np.max(np.abs(grad)) <= tol:
            break
        shift = max(shift * 0.1, 0.0)
        scale = max(1e-12, float(np.max(np.abs(np.diag(hess)))))
        while True:
            try:
                factor = linalg.cho_factor(hess + shift * np.eye(n_feat))
                break
            except linalg.LinAlgError:
                shift = max(2.0 * shift, 1e-10 * scale)
        step = -linalg.cho_solve(factor, grad)
        t = 1.0
        while t > 1e-12:
            trial = beta + t * step
            trial_loss, trial_grad, trial_hess = loss_grad_hess(trial)
            if trial_loss <= loss:
                break
            t *= 0.5
        else:
            shift = max(10.0 * shift, 1e-6 * scale)
            continue
        beta, loss, grad, hess = trial, trial_loss, trial_grad, trial_hess
        history.append(loss)
    converged = np.max(np.abs(grad)) <= tol

    model = GlmModel(beta, x_mean, x_scale, y_low, y_high, feature_names=data.feature_names)
    pred = model.value_batch(X)
    resid = pred - y
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    model.diagnostics = {
        "iterations": len(history),
        "converged": bool(converged),
        "gradient_max_norm": float(np.max(np.abs(grad))),
        "train_rmse": float(np.sqrt(np.mean(resid ** 2))),
        "train_r2": float(1.0 - np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0,
        "standardized": bool(standardize),
        "target_scaling": f"min-max into ({margin}, {1 - margin})" if output_range is None else "user range",
    }
    if not converged:
        raise IterationLimit(
            f"GLM fit stopped after {max_iters} iterations with gradient norm {np.max(np.abs(grad)):.3e}",
            best=model,
            diagnostics=model.diagnostics,
        )
    log.info("fitted GLM: %s", model.diagnostics)
    return model
