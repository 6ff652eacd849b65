"""End-to-end delay machinery for two concatenated queues.

The delay tails of the two queues decay with exponents j1 and j2 (per
block); the end-to-end violation probability over a budget of D blocks is
the two-exponential convolution tail. Everything here is expressed per
block: converting a wall-clock deadline into blocks happens at the CLI
boundary so exponents and deadlines always share the frame unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .solvers import illinois_root

_INV_E = math.exp(-1.0)


class ConstraintDomainError(ValueError):
    """First-queue exponent below the single-queue minimum j0."""


class PhiUnboundedError(ValueError):
    """The constraint curve diverges at j1 == j0 exactly."""


def lambert_w_m1(x: float) -> float:
    """Lower branch W_-1 of w * exp(w) = x on (-1/e, 0); W_-1(-1/e) = -1.

    Seeds from the square-root expansion near the branch point and from the
    asymptotic series elsewhere, then polishes with Halley steps; a
    monotone bisection fallback guards the rare non-converging seed.
    """
    if x == -_INV_E:
        return -1.0
    if not (-_INV_E < x < 0.0):
        raise ValueError(f"lambert_w_m1 needs -1/e < x < 0, got {x}")
    p = math.sqrt(2.0 * (1.0 + math.e * x))
    if p < 1e-4:
        # branch-point series; residual O(p^5), well below 1e-12 relative here
        return -1.0 - p - p * p / 3.0 - 11.0 * p**3 / 72.0
    if p < 0.5:
        w = -1.0 - p - p * p / 3.0 - 11.0 * p**3 / 72.0
    else:
        log_neg_x = math.log(-x)
        w = log_neg_x - math.log(-log_neg_x)
    for _ in range(80):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            return w
        fp = ew * (w + 1.0)
        step = f / (fp - f * (w + 2.0) / (2.0 * (w + 1.0)))
        w_new = w - step
        if w_new > -1.0:  # Halley jumped toward the upper branch
            break
        w = w_new
        if abs(step) <= 1e-15 * (1.0 + abs(w)):
            break
    if w <= -1.0 and abs(w * math.exp(w) - x) <= 1e-13 * abs(x):
        return w
    return _lambert_bisect(x)


def _lambert_bisect(x: float) -> float:
    # w * e^w decreases from -1/e to 0 as w goes from -1 to -inf
    lo = -2.0
    while lo * math.exp(lo) < x:  # still above target in w; go deeper
        lo *= 2.0
    hi = -1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if mid * math.exp(mid) > x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DelayConstraint:
    """Statistical delay target: violation probability epsilon over d_max blocks."""

    epsilon: float
    d_max_blocks: float

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not self.d_max_blocks > 0.0:
            raise ValueError(f"d_max_blocks must be > 0, got {self.d_max_blocks}")

    @property
    def j0(self) -> float:
        """Exponent a single queue would need: -log(epsilon) / d_max."""
        return -math.log(self.epsilon) / self.d_max_blocks

    @property
    def j_th(self) -> float:
        return j_threshold(self)


def j_threshold(constraint: DelayConstraint) -> float:
    """Symmetric-point exponent: both queues at j_th meet the constraint exactly."""
    eps = constraint.epsilon
    if eps == 1.0:
        return 0.0
    w = lambert_w_m1(-eps / math.e)
    return -(1.0 + w) / constraint.d_max_blocks


def delay_violation(j1: float, j2: float, d_max_blocks: float) -> float:
    """Pr{D1 + D2 > d_max} for exponential stage delays with rates j1, j2.

    Evaluated through the symmetric form

        exp(-jbar*D) * (jbar*D*sinhc(delta*D) + cosh(delta*D)),

    jbar = (j1+j2)/2, delta = (j2-j1)/2, which is exact for all arguments
    and continuous through j1 == j2; the direct two-term form takes over
    when delta*D is large enough to overflow cosh.
    """
    if j1 < 0.0 or j2 < 0.0:
        raise ValueError(f"exponents must be >= 0, got ({j1}, {j2})")
    d = float(d_max_blocks)
    if math.isinf(j1) and math.isinf(j2):
        return 0.0
    if math.isinf(j1):
        return _clamp01(math.exp(-j2 * d))
    if math.isinf(j2):
        return _clamp01(math.exp(-j1 * d))
    jbar = 0.5 * (j1 + j2)
    delta = 0.5 * (j2 - j1)
    x = delta * d
    if abs(x) < 30.0:
        if abs(x) < 1e-4:
            sinhc = 1.0 + x * x / 6.0
        else:
            sinhc = math.sinh(x) / x
        val = math.exp(-jbar * d) * (jbar * d * sinhc + math.cosh(x))
    else:
        val = (j2 * math.exp(-j1 * d) - j1 * math.exp(-j2 * d)) / (j2 - j1)
    return _clamp01(val)


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def phi(
    j1: float,
    constraint: DelayConstraint,
    *,
    ceiling: float = 1e6,
    rtol: float = 1e-12,
) -> float:
    """The j2 that meets the constraint with equality at the given j1.

    Strictly decreasing and convex in j1, with phi(j_th) = j_th. Returns
    inf when the required j2 exceeds `ceiling` (the second queue cannot
    compensate within any physical exponent).
    """
    eps, d = constraint.epsilon, constraint.d_max_blocks
    j0 = constraint.j0
    if j1 < j0:
        raise ConstraintDomainError(f"j1 = {j1:g} below the single-queue minimum j0 = {j0:g}")
    if j1 == j0:
        raise PhiUnboundedError(f"constraint curve diverges at j1 == j0 == {j0:g}")
    if delay_violation(j1, ceiling, d) > eps:
        return math.inf

    def gap(j2: float) -> float:  # increasing in j2, zero on the curve
        return eps - delay_violation(j1, j2, d)

    lo = j0  # violation at (j1, j0) stays above epsilon for any finite j1
    f_lo = gap(lo)
    if f_lo >= 0.0:  # only at the symmetric fixed point with float ties
        return lo
    hi = max(constraint.j_th, j1, j0 * 2.0, 1.0 / d)
    f_hi = gap(hi)
    while f_hi < 0.0:
        hi *= 2.0
        f_hi = gap(hi)
    return illinois_root(gap, lo, hi, f_lo, f_hi, rtol=rtol)
