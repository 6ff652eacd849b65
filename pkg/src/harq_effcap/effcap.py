"""One-hop analytics: spectral-radius root, delay exponents, outage effective capacity.

The spectral radius of the buffer chain weighted by the goodput moment
generating function equals the unique positive root u* of

    u^M = sum_{m=0}^{M-2} (P_out,m - P_out,m+1) * g * u^{M-1-m} + P_out,M-1 * g,

with g = P_out + (1 - P_out) * exp(-theta * L). The root is solved in the
rescaled coordinate v = u / max(1, g), which keeps every coefficient in
[0, 1] for any real theta (negative theta makes g huge; exponents stay in
log space). The delay exponent is J(theta) = -log u*, in nats per block
with theta in 1/bits, and the effective capacity at fixed packet size is
J(theta) / (theta * TB) in bps/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .harq import HarqChain, goodput
from .solvers import BracketError, golden_max, illinois_root


class ExponentRangeError(ValueError):
    """Requested delay-exponent target at or above the hop's maximum."""


def _log_g(pout: float, theta: float, packet_bits: float) -> float:
    """log(P_out + (1 - P_out) * exp(-theta * L)) without overflow."""
    if pout >= 1.0:
        return 0.0
    x = -theta * packet_bits
    if pout <= 0.0:
        return x
    return float(np.logaddexp(math.log(pout), math.log1p(-pout) + x))


def _scaled_coeffs(series: tuple[float, ...], log_g: float) -> list[float]:
    """Coefficients d_0..d_{M-1} of the rescaled root polynomial.

    F(v) = v^M - sum_{m=0}^{M-2} d_m v^{M-1-m} - d_{M-1}, root v* in (0, 1].
    """
    rounds = len(series) - 1
    log_s = max(log_g, 0.0)
    d = []
    for m in range(rounds - 1):
        delta = max(series[m] - series[m + 1], 0.0)
        d.append(delta * math.exp(log_g - (m + 1) * log_s))
    d.append(series[rounds - 1] * math.exp(log_g - rounds * log_s))
    return d


def _poly_and_deriv(d: list[float], v: float) -> tuple[float, float]:
    """Horner evaluation of F and F' for coefficient layout [1, -d_0, .., -d_{K-1}]."""
    val, der = 1.0, 0.0
    for coeff in d:
        der = der * v + val
        val = val * v - coeff
    return val, der


def _solve_scaled_poly(d: list[float]) -> float:
    """log of the unique positive root of v^K = sum_m d_m v^{K-1-m}, root in (0, 1].

    Bisection runs on log v: the root can be astronomically small (large
    theta with tiny outage), where any absolute tolerance on v itself would
    stall. F(d_{K-1}^(1/K)) <= 0 gives a guaranteed positive lower bracket.
    """
    k = len(d)
    if k == 1:
        return math.log(d[0])
    log_lo = math.log(d[-1]) / k
    log_hi = 0.0
    # the true root never exceeds max(1, g)/s = 1; widen only against float noise
    while _poly_and_deriv(d, math.exp(log_hi))[0] < 0.0:
        log_hi += 4.0 * np.finfo(float).eps
    if log_lo >= log_hi:
        return log_hi
    # bisection/Newton hybrid on w = log v: Newton only when its step beats
    # the bisection halving, since far from the root F(exp(w)) is nearly
    # exponential in w and bare Newton crawls in 1/K steps
    lo, hi = log_lo, log_hi
    w = 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    dx = dx_old
    v = math.exp(w)
    f, der = _poly_and_deriv(d, v)
    df = v * der  # d/dw of F(exp(w))
    if f < 0.0:
        lo = w
    else:
        hi = w
    for _ in range(200):
        if f == 0.0:
            break
        out_of_bracket = ((w - hi) * df - f) * ((w - lo) * df - f) > 0.0
        if out_of_bracket or abs(2.0 * f) > abs(dx_old * df):
            dx_old = dx
            dx = 0.5 * (hi - lo)
            w_next = lo + dx
        else:
            dx_old = dx
            dx = f / df
            w_next = w - dx
        if w_next == w:
            break
        w = w_next
        if abs(dx) <= 1e-14 * (1.0 + abs(w)):
            break
        v = math.exp(w)
        f, der = _poly_and_deriv(d, v)
        df = v * der
        if f < 0.0:
            lo = w
        else:
            hi = w
    return w


def _root_log_u(series: tuple[float, ...], packet_bits: float, theta: float) -> float:
    """log(u*) for any real theta, stable against exp overflow/underflow."""
    if theta == 0.0:
        return 0.0
    pout = series[-1]
    log_g = _log_g(pout, theta, packet_bits)
    log_s = max(log_g, 0.0)
    d = _scaled_coeffs(series, log_g)
    # strip trailing zero coefficients: rounds past a sure decode never occur
    k = len(d) - 1
    while k >= 0 and d[k] == 0.0:
        k -= 1
    if k < 0:
        # every coefficient underflowed (huge positive theta, pout == 0);
        # the service is bounded by L bits so J <= theta * L, with equality
        # for a deterministic hop -- far beyond any solver's working range
        return -theta * packet_bits if pout == 0.0 else log_g
    return log_s + _solve_scaled_poly(d[: k + 1])


def root_u(chain: HarqChain, theta: float) -> float:
    """Unique positive root u* of the chain's rescaled spectral polynomial.

    Equals the spectral radius of the transition matrix weighted by the
    goodput moment generating function at -theta. May overflow to inf for
    extremely negative theta; use delay_exponent for a stable log form.
    """
    if theta == 0.0:
        return 1.0
    return math.exp(_root_log_u(chain.pout_series, chain.packet_bits, theta))


def delay_exponent(chain: HarqChain, theta: float) -> float:
    """J(theta) = -log u*, nats per block; J(0) = 0, increasing in theta."""
    return -_root_log_u(chain.pout_series, chain.packet_bits, theta)


def outage_ec_fixed_L(chain: HarqChain, theta: float) -> float:
    """Effective capacity of the hop at its fixed packet size, bps/Hz.

    theta = 0 is the analytic limit and returns the goodput directly.
    """
    if theta < 0.0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if theta == 0.0:
        return goodput(chain)
    return delay_exponent(chain, theta) / (theta * chain.block_symbols)


class DelayExponentFn:
    """Cached J(theta) for one hop, with the limits the two-hop solver needs."""

    def __init__(self, chain: HarqChain):
        self.chain = chain
        self._cache: dict[float, float] = {}
        self._series = chain.pout_series
        self._j_max: Optional[float] = None

    def __call__(self, theta: float) -> float:
        theta = float(theta)
        cached = self._cache.get(theta)
        if cached is None:
            cached = -_root_log_u(self._series, self.chain.packet_bits, theta)
            self._cache[theta] = cached
        return cached

    @property
    def j_max(self) -> float:
        """theta -> infinity limit of J; finite exactly when the hop can fail."""
        if self._j_max is None:
            pout = self._series[-1]
            if pout == 0.0:
                self._j_max = math.inf
            else:
                d = _scaled_coeffs(self._series, math.log(pout))
                log_u = _root_log_u_from_coeffs(d)
                self._j_max = -log_u
        return self._j_max

    @property
    def rate_at_zero(self) -> float:
        """lim theta->0 of J(theta)/theta in bits per block (the goodput)."""
        return goodput(self.chain) * self.chain.block_symbols

    def invert(self, target: float, *, rtol: float = 1e-12) -> float:
        return invert_delay_exponent(self, target, rtol=rtol)


def _root_log_u_from_coeffs(d: list[float]) -> float:
    """log root of the already-scaled polynomial (g <= 1 path only)."""
    k = len(d) - 1
    while k >= 0 and d[k] == 0.0:
        k -= 1
    if k < 0:
        return -math.inf
    return _solve_scaled_poly(d[: k + 1])


def invert_delay_exponent(
    fn: Callable[[float], float], target: float, *, rtol: float = 1e-12
) -> float:
    """theta >= 0 with J(theta) equal to the target, by bracketed bisection.

    `fn` must be increasing with a `j_max` attribute; targets at or above
    j_max are rejected because J approaches it only asymptotically.
    """
    if target < 0.0:
        raise ExponentRangeError(f"target must be >= 0, got {target}")
    if target == 0.0:
        return 0.0
    j_max = getattr(fn, "j_max", math.inf)
    if target >= j_max:
        raise ExponentRangeError(f"target {target:g} >= maximum delay exponent {j_max:g}")
    rate0 = getattr(fn, "rate_at_zero", 0.0)
    hi = target / rate0 if rate0 > 0.0 else 1e-6
    hi = max(hi, 1e-300)
    f_hi = fn(hi) - target
    steps = 0
    while f_hi < 0.0:
        hi *= 2.0
        f_hi = fn(hi) - target
        steps += 1
        if steps > 2000:
            raise ExponentRangeError(f"target {target:g} not reached below theta = {hi:g}")
    return illinois_root(lambda t: fn(t) - target, 0.0, hi, -target, f_hi, rtol=rtol)


# ---------------------------------------------------------------------------
# packet-size optimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateSearch:
    """Coarse log-spaced grid plus golden-section refinement over packet size."""

    l_lo: float = 1.0
    l_hi: Optional[float] = None  # defaults to 20 * block_symbols
    grid_points: int = 64
    xtol_bits: float = 0.5

    def upper(self, block_symbols: int) -> float:
        return self.l_hi if self.l_hi is not None else 20.0 * block_symbols


def maximize_rate(
    rate_fn: Callable[[float], float], lo: float, hi: float, grid_points: int, xtol: float
) -> tuple[float, float]:
    """Grid-then-golden maximization; the grid guards against local maxima."""
    grid = np.geomspace(lo, hi, grid_points)
    rates = [rate_fn(l) for l in grid]
    best = int(np.argmax(rates))
    if best == len(grid) - 1 and rates[best] > max(rates[:-1]):
        raise BracketError(
            f"rate still rising at the upper packet-size bound {hi:g}; widen the search"
        )
    left = grid[best - 1] if best > 0 else lo
    right = grid[best + 1] if best < len(grid) - 1 else hi
    l_ref, r_ref = golden_max(rate_fn, left, right, xtol=xtol)
    if r_ref >= rates[best]:
        return float(l_ref), float(r_ref)
    return float(grid[best]), float(rates[best])


def optimize_L(
    builder: Callable[[float], HarqChain],
    theta: float,
    search: Optional[RateSearch] = None,
) -> tuple[float, float, float]:
    """Packet size maximizing the fixed-size effective capacity.

    Returns (l_opt, rate at l_opt in bps/Hz, outage probability at l_opt).
    """
    if not theta > 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    search = search or RateSearch()
    cache: dict[float, HarqChain] = {}

    def chain_at(l_bits: float) -> HarqChain:
        chain = cache.get(l_bits)
        if chain is None:
            chain = builder(l_bits)
            cache[l_bits] = chain
        return chain

    probe = chain_at(search.l_lo)
    hi = search.upper(probe.block_symbols)
    l_opt, rate = maximize_rate(
        lambda l: outage_ec_fixed_L(chain_at(l), theta),
        search.l_lo,
        hi,
        search.grid_points,
        search.xtol_bits,
    )
    return l_opt, rate, chain_at(l_opt).pout


def t1_infinite_M_ec(model, block_symbols: int, theta: float, search: Optional[RateSearch] = None):
    """Unlimited-retransmission repeat-decoding effective capacity, bps/Hz.

    Closed form: max over L of -log(1 - Pr{z > (2^{L/TB}-1)/snr} (1 - e^{-theta L}))
    divided by theta * TB. Serves as the M -> infinity limit of the chain result.
    """
    if not theta > 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    search = search or RateSearch()

    def rate_fn(l_bits: float) -> float:
        thr = (np.exp2(l_bits / block_symbols) - 1.0) / model.snr
        inner = 1.0 - model.gain_sf(thr) * (-math.expm1(-theta * l_bits))
        return -math.log(inner) / (theta * block_symbols)

    _, rate = maximize_rate(
        rate_fn, search.l_lo, search.upper(block_symbols), search.grid_points, search.xtol_bits
    )
    return rate
