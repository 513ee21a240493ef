"""Sparse multivariate polynomials with closed-form derivatives of any order."""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from ..errors import DimensionMismatch
from ..tensor import _index_tables
from .base import PredictiveModel


def _falling(n: int, k: int) -> int:
    out = 1
    for r in range(k):
        out *= n - r
    return out


class PolynomialModel(PredictiveModel):
    """f(x) = sum_t c_t * prod_i x_i ** e_{t,i}.

    Terms are ``(coefficient, exponents)`` pairs with one nonnegative
    integer exponent per feature.
    """

    kind = "polynomial"
    max_exact_order = 8

    def __init__(self, terms: Iterable[tuple[float, Sequence[int]]], dim: int | None = None, feature_names=None):
        terms = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms]
        if dim is None:
            if not terms:
                raise ValueError("dim is required for a polynomial without terms")
            dim = len(terms[0][1])
        for _, exps in terms:
            if len(exps) != dim:
                raise DimensionMismatch(f"term exponents {exps} do not match dim={dim}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
        super().__init__(dim, feature_names)
        self.terms = terms
        self.polynomial_degree = max((sum(e) for _, e in terms), default=0)

    @property
    def is_additive(self) -> bool:
        return all(sum(1 for e in exps if e) <= 1 for _, exps in self.terms)

    def _column(self, Z: np.ndarray, counts: np.ndarray) -> np.ndarray:
        col = np.zeros(len(Z))
        for c, exps in self.terms:
            if c == 0.0 or any(n > e for n, e in zip(counts, exps)):
                continue
            factor = c
            for n, e in zip(counts, exps):
                factor *= _falling(e, n)
            term = np.full(len(Z), factor)
            for i, (n, e) in enumerate(zip(counts, exps)):
                if e - n:
                    term = term * Z[:, i] ** (e - n)
            col += term
        return col

    def _derivatives(self, Z, order):
        D = self.dim
        out = []
        for k in range(order + 1):
            if k == 0:
                out.append(self._column(Z, np.zeros(D, dtype=int)))
                continue
            combos, lookup = _index_tables(D, k)
            canon = np.empty((len(Z), len(combos)))
            for pos, combo in enumerate(combos):
                canon[:, pos] = self._column(Z, np.bincount(combo, minlength=D))
            out.append(canon[:, lookup].reshape((len(Z),) + (D,) * k))
        return out

    def derivatives(self, Z, order):
        Z = self._check_points(Z)
        return self._derivatives(Z, order)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "feature_names": list(self.feature_names),
            "terms": [{"coefficient": c, "exponents": list(e)} for c, e in self.terms],
        }

    @classmethod
    def from_dict(cls, d) -> "PolynomialModel":
        return cls(
            [(t["coefficient"], t["exponents"]) for t in d["terms"]],
            dim=d["dim"],
            feature_names=d.get("feature_names"),
        )

    def __repr__(self):
        return f"PolynomialModel(dim={self.dim}, terms={self.terms!r})"


def monomial(coefficient: float, variables: Sequence[int], dim: int, feature_names=None) -> PolynomialModel:
    """c * prod of the listed (0-based) variables; repeats raise the power."""
    exps = [0] * dim
    for v in variables:
        exps[v] += 1
    return PolynomialModel([(coefficient, exps)], dim, feature_names)


def linear(beta: Sequence[float], intercept: float = 0.0, feature_names=None) -> PolynomialModel:
    dim = len(beta)
    terms = [(b, [int(i == j) for j in range(dim)]) for i, b in enumerate(beta)]
    if intercept:
        terms.append((intercept, [0] * dim))
    return PolynomialModel(terms, dim, feature_names)


SYNTHETIC_INTERACTIONS = ((0, 1), (0, 2), (1, 2), (4, 5), (5, 6), (5, 7), (6, 7))
SYNTHETIC_TRIANGLES = ((0, 1, 2), (5, 6, 7))


def synthetic_polynomial() -> PolynomialModel:
    """3 x1 x2 x3 + x4 + x5 + x5 x6 + x6 x7 x8 over eight features."""
    D = 8
    groups = [(3.0, (0, 1, 2)), (1.0, (3,)), (1.0, (4,)), (1.0, (4, 5)), (1.0, (5, 6, 7))]
    terms = []
    for c, vars_ in groups:
        exps = [0] * D
        for v in vars_:
            exps[v] += 1
        terms.append((c, exps))
    return PolynomialModel(terms, D)


def ground_truth_pairs(model: PolynomialModel) -> set[tuple[int, int]]:
    """Unordered feature pairs that share at least one term."""
    pairs = set()
    for c, exps in model.terms:
        if c == 0.0:
            continue
        active = [i for i, e in enumerate(exps) if e]
        pairs.update(itertools.combinations(active, 2))
    return pairs
