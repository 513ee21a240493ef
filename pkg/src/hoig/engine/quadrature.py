"""Tensor-product quadrature over nested path parameters.

Every composed attribution integrand depends on the level parameters
t_1..t_L only through the product u = t_1 * ... * t_L (where the model is
evaluated) and a monomial weight prod t_l ** e_l.  Since each rule places
its nodes at m / M, the grid can be collapsed exactly onto the distinct
integer products m_1 * ... * m_L, and the model only has to be evaluated
once per distinct product.
"""

from __future__ import annotations

import numpy as np

from ..tensor import QuadratureConfig


class ProductGrid:
    def __init__(self, config: QuadratureConfig, levels: int):
        self.config = config
        self.levels = levels
        m = config.numerators()
        self._t, self._w = config.nodes()
        keys = np.ones(1, dtype=np.int64)
        self._inverse = []
        self._sizes = []
        for _ in range(levels):
            products = (keys[:, None] * m[None, :]).ravel()
            keys, inverse = np.unique(products, return_inverse=True)
            self._inverse.append(inverse.ravel())
            self._sizes.append(len(keys))
        self.keys = keys
        self.u = keys / float(config.points_per_level) ** levels

    @property
    def nominal_size(self) -> int:
        return len(self._t) ** self.levels

    def __len__(self):
        return len(self.keys)

    def weights(self, exponents) -> np.ndarray:
        """Collapsed weights of prod_l w_l t_l ** exponents[l] onto ``self.u``."""
        if len(exponents) != self.levels:
            raise ValueError(f"need {self.levels} exponents, got {len(exponents)}")
        W = np.ones(1)
        for inverse, size, e in zip(self._inverse, self._sizes, exponents):
            level = self._w * self._t ** e
            W = np.bincount(inverse, weights=(W[:, None] * level[None, :]).ravel(), minlength=size)
        return W


def exact_moment(power: int) -> float:
    return 1.0 / (power + 1)
