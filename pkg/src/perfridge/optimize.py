"""Scalar minimization: coarse grid scan followed by golden-section refinement."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInput

__all__ = ["grid_then_golden"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, width: float = 1e-8
) -> tuple[float, float]:
    """Minimize unimodal ``f`` on [lo, hi] by golden section to interval ``width``."""
    if hi < lo:
        lo, hi = hi, lo
    h = hi - lo
    if h <= width:
        mid = 0.5 * (lo + hi)
        return mid, f(mid)
    x1 = lo + _INVPHI2 * h
    x2 = lo + _INVPHI * h
    f1, f2 = f(x1), f(x2)
    while h > width:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            h = hi - lo
            x1 = lo + _INVPHI2 * h
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            h = hi - lo
            x2 = lo + _INVPHI * h
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    return x, f(x)


def grid_then_golden(
    f: Callable[[float], float],
    grid: Sequence[float],
    width: float = 1e-8,
    skip_errors: tuple[type[Exception], ...] = (),
) -> tuple[float, float, list[float]]:
    """Scan ``grid``, then refine around the best point by golden section.

    Grid points where ``f`` raises one of ``skip_errors`` are skipped and
    returned in the third slot; at least one point must evaluate.
    """
    grid = np.asarray(list(grid), dtype=np.float64)
    if grid.size == 0:
        raise InvalidInput("empty search grid")
    vals = np.full(grid.size, np.inf)
    skipped: list[float] = []
    for i, x in enumerate(grid):
        try:
            vals[i] = f(float(x))
        except skip_errors:
            skipped.append(float(x))
    if not np.isfinite(vals).any():
        raise InvalidInput("objective failed at every grid point")
    i = int(np.argmin(vals))
    lo = grid[max(0, i - 1)]
    hi = grid[min(grid.size - 1, i + 1)]
    if lo == hi:
        return float(grid[i]), float(vals[i]), skipped
    x, fx = golden_section(f, float(lo), float(hi), width)
    if vals[i] < fx:
        x, fx = float(grid[i]), float(vals[i])
    return x, fx, skipped
