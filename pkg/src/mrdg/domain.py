"""Axis-aligned physical domains mapped onto the computational unit box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Domain", "unit_domain"]


@dataclass(frozen=True)
class Domain:
    """Box [lo_1, hi_1] x ... x [lo_d, hi_d]; solver state lives on [0,1]^d."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must share a length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("domain must have positive extent in every dimension")

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def to_physical(self, xi: np.ndarray) -> np.ndarray:
        """Map unit-box coordinates (..., d) to physical coordinates."""
        return np.asarray(self.lo) + self.widths * np.asarray(xi)

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - np.asarray(self.lo)) / self.widths


def unit_domain(d: int) -> Domain:
    return Domain((0.0,) * d, (1.0,) * d)
