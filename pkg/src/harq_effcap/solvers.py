"""Small bracketed root-finding and 1-D maximization helpers used across the package."""

from __future__ import annotations

import math
from typing import Callable


class BracketError(RuntimeError):
    """A root or maximum could not be bracketed inside the allowed interval."""


_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # golden ratio step


def bisect_root(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    rtol: float = 1e-12,
    atol: float = 0.0,
    max_iter: int = 200,
) -> float:
    """Root of a sign-changing function on [lo, hi] by plain bisection.

    The bracket must satisfy sign(fn(lo)) != sign(fn(hi)); endpoints with
    value exactly zero are returned directly.
    """
    f_lo = fn(lo)
    if f_lo == 0.0:
        return lo
    f_hi = fn(hi)
    if f_hi == 0.0:
        return hi
    if (f_lo > 0.0) == (f_hi > 0.0):
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:  # interval collapsed to adjacent floats
            break
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if (hi - lo) <= atol + rtol * max(abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def illinois_root(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    f_lo: float,
    f_hi: float,
    *,
    rtol: float = 1e-12,
    max_iter: int = 120,
) -> float:
    """Root of an increasing-through-zero function with a known bracket.

    False position with the Illinois weighting (superlinear, never leaves
    the bracket); endpoint values are passed in so callers can reuse
    evaluations from their bracketing phase.
    """
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if not (f_lo < 0.0 < f_hi):
        raise BracketError(f"invalid bracket values ({f_lo!r}, {f_hi!r})")
    side = 0
    best = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not (lo < mid < hi):
            mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = fn(mid)
        best = mid
        if f_mid == 0.0:
            return mid
        if f_mid < 0.0:
            lo, f_lo = mid, f_mid
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            hi, f_hi = mid, f_mid
            if side == 1:
                f_lo *= 0.5
            side = 1
        if (hi - lo) <= rtol * max(abs(hi), abs(lo)):
            break
    return best


def expand_upper(
    fn: Callable[[float], float],
    start: float,
    *,
    factor: float = 2.0,
    limit: float = 1e308,
    max_steps: int = 200,
) -> float:
    """Smallest geometric expansion of `start` where fn becomes >= 0.

    Used to build the upper end of a bracket for an increasing residual.
    """
    hi = start
    for _ in range(max_steps):
        if fn(hi) >= 0.0:
            return hi
        hi *= factor
        if hi > limit:
            break
    raise BracketError(f"could not bracket above {start!r} within limit {limit!r}")


def golden_max(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    xtol: float = 1e-6,
    max_iter: int = 200,
) -> tuple[float, float]:
    """Golden-section maximization of a unimodal function on [lo, hi].

    Returns (x_best, fn(x_best)). The endpoints are also probed so a
    boundary maximum is never missed.
    """
    a, b = float(lo), float(hi)
    x1 = b - _PHI * (b - a)
    x2 = a + _PHI * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(max_iter):
        if (b - a) <= xtol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _PHI * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _PHI * (b - a)
            f2 = fn(x2)
    candidates = [(f1, x1), (f2, x2), (fn(a), a), (fn(b), b)]
    best_f, best_x = max(candidates, key=lambda t: t[0])
    return best_x, best_f
