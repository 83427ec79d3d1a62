"""Per-dimension min-max normalization with training-set statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Normalizer:
    """Maps each feature dimension into [0, 1] using fitted min/max.

    Dimensions whose fitted range is degenerate (max - min <= epsilon) map to
    zero. Values outside the fitted range clamp to [0, 1] so inference inputs
    stay in the trained regime.
    """

    lo: np.ndarray
    hi: np.ndarray
    epsilon: float = 1e-12

    span: np.ndarray = field(init=False, repr=False)
    degenerate: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("min/max must be equal-length vectors")
        if np.any(self.hi < self.lo):
            raise ValueError("max must be >= min elementwise")
        self.span = self.hi - self.lo
        self.degenerate = self.span <= self.epsilon

    @property
    def dim(self) -> int:
        return len(self.lo)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected last dim {self.dim}, got {x.shape[-1]}")
        span = np.where(self.degenerate, 1.0, self.span)
        out = (x - self.lo) / span
        out[..., self.degenerate] = 0.0
        return np.clip(out, 0.0, 1.0)

    def invert(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape[-1] != self.dim:
            raise ValueError(f"expected last dim {self.dim}, got {y.shape[-1]}")
        out = y * self.span + self.lo
        out[..., self.degenerate] = self.lo[self.degenerate]
        return out


def fit_normalizer(matrices: list[np.ndarray], epsilon: float = 1e-12) -> Normalizer:
    """Pool min/max per dimension over all frames of all matrices."""
    if not matrices:
        raise ValueError("need at least one feature matrix to fit a normalizer")
    lo = np.min([np.min(m, axis=0) for m in matrices], axis=0)
    hi = np.max([np.max(m, axis=0) for m in matrices], axis=0)
    return Normalizer(lo=lo, hi=hi, epsilon=epsilon)
