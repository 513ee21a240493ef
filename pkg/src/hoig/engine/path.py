import numpy as np

from ..errors import DimensionMismatch


class StraightLinePath:
    """gamma(t) = t * x + (1 - t) * baseline, t in [0, 1].

    This form hits both endpoints exactly in floating point.
    """

    def __init__(self, x, baseline):
        self.x = np.asarray(x, dtype=float).ravel()
        self.baseline = np.asarray(baseline, dtype=float).ravel()
        if self.x.shape != self.baseline.shape:
            raise DimensionMismatch(f"input has {self.x.size} coordinates, baseline has {self.baseline.size}")
        self.delta = self.x - self.baseline

    def __call__(self, t):
        """Points on the path; a scalar t gives one point, an array gives rows."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return t * self.x + (1.0 - t) * self.baseline
        t = t[:, None]
        return t * self.x + (1.0 - t) * self.baseline

    def restart_from(self, t) -> "StraightLinePath":
        """Path from the same baseline to gamma(t)."""
        return StraightLinePath(self(t), self.baseline)

    @property
    def degenerate(self) -> bool:
        return not np.any(self.delta)
