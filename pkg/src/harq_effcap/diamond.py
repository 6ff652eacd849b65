"""Two-hop diamond relay system: hop chains, delay exponents, case analysis.

The source broadcasts a common packet to two relays (both must decode); the
relays forward with a distributed space-time code whose per-round rate sees
the sum of the two relay-destination SNRs. Both relay queues evolve
identically, so the system reduces to two concatenated queues whose delay
exponents must land on the constraint curve. The solver walks that curve,
dispatches on which hop's maximum exponent is binding, and roots the
defining equation of the active case by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .channel import (
    ChannelModel,
    Combining,
    EstimatorConfig,
    HopSampler,
    HopSpec,
    Protocol,
    _stream_gains,
)
from .effcap import DelayExponentFn, invert_delay_exponent
from .harq import HarqChain, chain_from_series
from .solvers import golden_max
from .tradeoff import DelayConstraint, delay_violation, phi

SOURCE_STREAM = 0  # sampler stream tags; source and relay links are independent
RELAY_STREAM = 1


class Scheme(str, Enum):
    HARQ_IR = "harq_ir"
    DF_CSI = "df_csi"


class TwoHopCase(str, Enum):
    CASE_I = "case_i"
    CASE_IIA = "case_iia"
    CASE_IIB = "case_iib"
    CASE_IIC_SYM = "case_iic_sym"
    CASE_IIC_A = "case_iic_a"  # dispatched to the first-hop equation
    CASE_IIC_B = "case_iic_b"  # dispatched to the rate-balance equation


@dataclass(frozen=True)
class DiamondSystem:
    """Source -> two full-duplex relays -> destination; no direct or inter-relay link."""

    source_links: tuple[ChannelModel, ChannelModel]
    relay_links: tuple[ChannelModel, ChannelModel]
    block_symbols: int
    rounds: int  # M, maximum transmissions per hop
    scheme: Scheme = Scheme.HARQ_IR

    def __post_init__(self) -> None:
        if len(self.source_links) != 2 or len(self.relay_links) != 2:
            raise ValueError("a diamond system needs exactly two links per hop")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.block_symbols < 1:
            raise ValueError(f"block_symbols must be >= 1, got {self.block_symbols}")


def source_hop(system: DiamondSystem, packet_bits: float) -> HopSpec:
    """First hop: common message, both relays must accumulate the packet."""
    return HopSpec(
        protocol=Protocol.IR,
        links=system.source_links,
        block_symbols=system.block_symbols,
        packet_bits=packet_bits,
        combining=Combining.COMMON_MESSAGE,
    )


def relay_hop(system: DiamondSystem, packet_bits: float) -> HopSpec:
    """Second hop: space-time coded relays, per-round rate on the summed SNR."""
    return HopSpec(
        protocol=Protocol.IR,
        links=system.relay_links,
        block_symbols=system.block_symbols,
        packet_bits=packet_bits,
        combining=Combining.ALAMOUTI,
    )


def source_hop_chain(
    system: DiamondSystem, packet_bits: float, estimator: Optional[EstimatorConfig] = None
) -> HarqChain:
    sampler = HopSampler(
        source_hop(system, packet_bits), system.rounds, estimator, stream=SOURCE_STREAM
    )
    return chain_from_series(sampler.outage_series(), packet_bits, system.block_symbols)


def relay_hop_chain(
    system: DiamondSystem, packet_bits: float, estimator: Optional[EstimatorConfig] = None
) -> HarqChain:
    sampler = HopSampler(
        relay_hop(system, packet_bits), system.rounds, estimator, stream=RELAY_STREAM
    )
    return chain_from_series(sampler.outage_series(), packet_bits, system.block_symbols)


# ---------------------------------------------------------------------------
# decode-and-forward baseline (transmitter CSI, no decoding errors)
# ---------------------------------------------------------------------------


class DfDelayExponent:
    """J(theta) = -log E[exp(-theta C)] from fixed-seed service-rate samples.

    C is the per-block service in bits: the first hop carries the common
    message at the weaker source-relay rate; the relays beamform coherently
    toward the destination. The service support is unbounded, so J grows
    without a finite ceiling; `j_max` reports the value at a large theta
    probe as the operational stand-in the case analysis needs.
    """

    def __init__(
        self,
        system: DiamondSystem,
        hop: str,
        estimator: Optional[EstimatorConfig] = None,
        *,
        theta_probe: float = 1e3,
    ) -> None:
        if hop not in ("source", "relay"):
            raise ValueError(f"hop must be 'source' or 'relay', got {hop!r}")
        est = estimator or EstimatorConfig()
        self.hop = hop
        self.theta_probe = theta_probe
        self.heavy_tail = False
        n, seed = est.samples, est.seed
        tb = system.block_symbols
        if hop == "source":
            links = system.source_links
            stream = SOURCE_STREAM
            z = [ _stream_gains(links[j], n, seed, (stream, j, 0)) for j in (0, 1) ]
            gamma = np.minimum(links[0].snr * z[0], links[1].snr * z[1])
        else:
            links = system.relay_links
            stream = RELAY_STREAM
            z = [ _stream_gains(links[j], n, seed, (stream, j, 0)) for j in (0, 1) ]
            gamma = (np.sqrt(links[0].snr * z[0]) + np.sqrt(links[1].snr * z[1])) ** 2
        self._service_bits = tb * np.log2(1.0 + gamma)
        self._cache: dict[float, float] = {}

    def __call__(self, theta: float) -> float:
        theta = float(theta)
        cached = self._cache.get(theta)
        if cached is not None:
            return cached
        if theta == 0.0:
            j = 0.0
        else:
            exponents = -theta * self._service_bits
            lse = float(logsumexp(exponents))
            j = -(lse - math.log(exponents.size))
            if theta < 0.0 and float(np.max(exponents)) - lse > math.log(0.5):
                # a single sample dominates E[exp(|theta| C)]: heavy-tail estimate
                self.heavy_tail = True
        self._cache[theta] = j
        return j

    @property
    def j_max(self) -> float:
        return self(self.theta_probe)

    @property
    def rate_at_zero(self) -> float:
        return float(np.mean(self._service_bits))

    def invert(self, target: float, *, rtol: float = 1e-12) -> float:
        return invert_delay_exponent(self, target, rtol=rtol)


def df_delay_exponent(
    system: DiamondSystem,
    hop: str,
    theta: float,
    estimator: Optional[EstimatorConfig] = None,
) -> float:
    """One-shot decode-and-forward delay exponent for the given hop."""
    return DfDelayExponent(system, hop, estimator)(theta)


# ---------------------------------------------------------------------------
# two-hop case analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoHopSettings:
    sweep_points: int = 256  # constraint-curve grid used to bracket each case's root
    j_rtol: float = 1e-9  # relative tolerance of all exponent bisections
    theta_tie_rtol: float = 1e-6  # tie detection for the symmetric sub-case
    phi_ceiling: float = 1e6  # second-hop exponent cap, beyond any physical maximum
    edge_margin: float = 1e-9  # stay this far inside the open curve segment
    theta_probe: float = 1e3  # effective maximum-exponent probe for unbounded hops


@dataclass(frozen=True)
class TwoHopSolution:
    """Resolved operating point of the two concatenated queues."""

    case: TwoHopCase
    theta1: float
    theta2: float
    j1: float
    j2: float
    rate_bps_hz: float
    pout_end_to_end: float
    packet_bits: float = math.nan
    notes: tuple[str, ...] = ()


def _effective_j_max(fn, settings: TwoHopSettings) -> float:
    j_max = getattr(fn, "j_max", math.inf)
    return j_max if math.isfinite(j_max) else fn(settings.theta_probe)


def solve_two_hop(
    j1_fn: Callable[[float], float],
    j2_fn: Callable[[float], float],
    constraint: DelayConstraint,
    block_symbols: int,
    *,
    packet_bits: float = math.nan,
    pout_source: float = 0.0,
    pout_relay: float = 0.0,
    settings: Optional[TwoHopSettings] = None,
) -> TwoHopSolution:
    """Case analysis for two concatenated queues on the constraint curve.

    `j1_fn` / `j2_fn` must be increasing, callable at any real theta, and
    expose `j_max`, `rate_at_zero` (bits/block) and `invert`. Rates are
    reported in bps/Hz; the end-to-end outage composes the per-hop outages.
    """
    s = settings or TwoHopSettings()
    pout = 1.0 - (1.0 - pout_source) * (1.0 - pout_relay)
    tb = block_symbols
    if constraint.epsilon >= 1.0:
        # vacuous constraint: any positive exponents qualify, so the supremum
        # is the stability boundary given by the slower hop's mean goodput
        rate_bits = min(j1_fn.rate_at_zero, j2_fn.rate_at_zero)
        return TwoHopSolution(
            TwoHopCase.CASE_IIC_SYM, 0.0, 0.0, 0.0, 0.0, rate_bits / tb, pout,
            packet_bits, notes=("vacuous-constraint",),
        )
    j1_hi = _effective_j_max(j1_fn, s)
    j2_hi = _effective_j_max(j2_fn, s)
    if delay_violation(j1_hi, j2_hi, constraint.d_max_blocks) > constraint.epsilon:
        return TwoHopSolution(
            TwoHopCase.CASE_I, math.nan, math.nan, j1_hi, j2_hi, 0.0, pout, packet_bits
        )
    j_th = constraint.j_th
    ctx = _CurveContext(j1_fn, j2_fn, constraint, j1_hi, j2_hi, s)
    # exact ties with the threshold exponent stay with the one-sided cases:
    # the symmetric sub-case would need the unreachable theta at j_max itself
    if j1_hi <= j_th:
        return ctx.solve(TwoHopCase.CASE_IIA, "first_hop", tb, packet_bits, pout)
    if j2_hi <= j_th:
        return ctx.solve(TwoHopCase.CASE_IIB, "ratio", tb, packet_bits, pout)
    theta1_th = j1_fn.invert(j_th)
    theta2_th = j2_fn.invert(j_th)
    if math.isclose(theta1_th, theta2_th, rel_tol=s.theta_tie_rtol):
        rate = j_th / (theta1_th * tb)
        return TwoHopSolution(
            TwoHopCase.CASE_IIC_SYM, theta1_th, theta2_th, j_th, j_th, rate, pout, packet_bits
        )
    if theta1_th > theta2_th:
        return ctx.solve(TwoHopCase.CASE_IIC_A, "first_hop", tb, packet_bits, pout)
    return ctx.solve(TwoHopCase.CASE_IIC_B, "ratio", tb, packet_bits, pout)


class _CurveContext:
    """Feasible segment of the constraint curve, parameterized by j1."""

    def __init__(self, j1_fn, j2_fn, constraint, j1_hi, j2_hi, settings):
        self.j1_fn, self.j2_fn = j1_fn, j2_fn
        self.constraint = constraint
        self.j1_hi, self.j2_hi = j1_hi, j2_hi
        self.s = settings

    def point(self, j1_val: float):
        """(theta1, theta2, j2) on the curve, or None when not realizable."""
        j2_val = phi(j1_val, self.constraint, ceiling=self.s.phi_ceiling)
        if not j2_val < self.j2_hi:
            return None
        theta1 = self.j1_fn.invert(j1_val)
        theta2 = self.j2_fn.invert(j2_val)
        return theta1, theta2, j2_val

    def residual(self, kind: str, j1_val: float, point) -> float:
        theta1, theta2, j2_val = point
        if kind == "first_hop":
            # zero when the first hop's exponent balances the relay's
            # compensation; positive when the relay queue is the bottleneck
            return j1_val - j2_val - self.j1_fn(theta1 - theta2)
        return j1_val / theta1 - j2_val / theta2

    def bounds(self) -> tuple[float, float]:
        margin = self.s.edge_margin
        j2_lim = min(self.j2_hi * (1.0 - margin), 0.5 * self.s.phi_ceiling)
        if j2_lim <= self.constraint.j0:  # second hop cannot even cover j0
            return math.inf, -math.inf
        lo = phi(j2_lim, self.constraint, ceiling=self.s.phi_ceiling)
        lo = max(lo, self.constraint.j0 * (1.0 + 1e-12))
        hi = self.j1_hi * (1.0 - margin)
        return lo, hi

    def solve(self, label: TwoHopCase, kind: str, tb, packet_bits, pout) -> TwoHopSolution:
        lo, hi = self.bounds()
        if not lo < hi:
            return TwoHopSolution(
                label, math.nan, math.nan, math.nan, math.nan, 0.0, pout, packet_bits,
                notes=("curve-segment-empty",),
            )
        grid = np.geomspace(lo, hi, self.s.sweep_points)
        points = [self.point(v) for v in grid]
        valid = [
            (v, pt, self.residual(kind, v, pt))
            for v, pt in zip(grid, points)
            if pt is not None
        ]
        if not valid:
            return TwoHopSolution(
                label, math.nan, math.nan, math.nan, math.nan, 0.0, pout, packet_bits,
                notes=("curve-segment-empty",),
            )
        # residuals run positive -> negative as theta1 grows; a nonpositive
        # residual at the smallest theta1 means the binding condition is
        # already slack there, so the segment's low end is the supremum
        # (the feasible segment is clipped by the exponent caps)
        if valid[0][2] <= 0.0:
            return self._at_point(label, kind, valid[0][0], valid[0][1], tb, packet_bits,
                                  pout, notes=(f"{kind}-slack-at-curve-end",))
        bracket = None
        for (va, _, ra), (vb, _, rb) in zip(valid, valid[1:]):
            if ra > 0.0 >= rb:
                bracket = (va, vb)
                break
        if bracket is None:
            if kind == "ratio":
                # second hop faster along the whole segment: the balance point
                # sits beyond the clipped upper end, which is then optimal
                return self._at_point(label, kind, valid[-1][0], valid[-1][1], tb,
                                      packet_bits, pout, notes=("ratio-slack-at-curve-end",))
            return self._no_bracket(label, kind, valid, tb, packet_bits, pout)
        a, b = bracket
        resid_scale = None
        for _ in range(300):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            pt = self.point(mid)
            resid = self.residual(kind, mid, pt) if pt is not None else math.inf
            if resid > 0.0:
                a = mid
            else:
                b = mid
            if pt is not None and resid_scale is None:
                theta1, theta2, j2_val = pt
                resid_scale = j2_val / theta2 if kind == "ratio" else max(mid, j2_val)
            if (b - a) <= 1e-13 * b:
                break
            # the j1 -> theta map is stiff near exponent saturation, so the
            # interval tolerance alone does not bound the equation residual
            if (
                resid_scale is not None
                and abs(resid) <= 1e-10 * resid_scale
                and (b - a) <= self.s.j_rtol * b
            ):
                break
        j1_val = 0.5 * (a + b)
        pt = self.point(j1_val)
        if pt is None:  # fall back to the feasible bracket end
            j1_val, pt = a, self.point(a)
        return self._at_point(label, kind, j1_val, pt, tb, packet_bits, pout, notes=())

    def _at_point(self, label, kind, j1_val, pt, tb, packet_bits, pout, notes):
        theta1, theta2, j2_val = pt
        if kind == "first_hop":
            rate = j1_val / (theta1 * tb)
        else:
            rate = j2_val / (theta2 * tb)
        return TwoHopSolution(
            label, theta1, theta2, j1_val, j2_val, rate, pout, packet_bits, tuple(notes)
        )

    def _no_bracket(self, label, kind, valid, tb, packet_bits, pout) -> TwoHopSolution:
        """Unexpected sign pattern: report the best sweep point, flagged."""
        best = None
        for j1_val, pt, _ in valid:
            theta1, theta2, j2_val = pt
            rate = min(j1_val / theta1, j2_val / theta2) / tb
            if best is None or rate > best[0]:
                best = (rate, j1_val, j2_val, theta1, theta2)
        rate, j1_val, j2_val, theta1, theta2 = best
        return TwoHopSolution(
            label, theta1, theta2, j1_val, j2_val, rate, pout, packet_bits,
            notes=(f"no-bracket:{kind}",),
        )


# ---------------------------------------------------------------------------
# whole-system evaluation
# ---------------------------------------------------------------------------


class DiamondEvaluator:
    """Shared-sample evaluator of one system across packet sizes.

    Both hop samplers are drawn once, so every packet size shares all
    channel realizations; rate and outage curves over the packet size are
    then deterministic functions of a single seed.
    """

    def __init__(
        self,
        system: DiamondSystem,
        estimator: Optional[EstimatorConfig] = None,
        settings: Optional[TwoHopSettings] = None,
    ) -> None:
        if system.scheme != Scheme.HARQ_IR:
            raise ValueError("per-packet-size evaluation applies to the HARQ-IR scheme only")
        self.system = system
        self.estimator = estimator or EstimatorConfig()
        self.settings = settings or TwoHopSettings()
        self._src = HopSampler(
            source_hop(system, 1.0), system.rounds, self.estimator, stream=SOURCE_STREAM
        )
        self._rel = HopSampler(
            relay_hop(system, 1.0), system.rounds, self.estimator, stream=RELAY_STREAM
        )

    def chains(self, packet_bits: float) -> tuple[HarqChain, HarqChain]:
        tb = self.system.block_symbols
        return (
            chain_from_series(self._src.outage_series(packet_bits), packet_bits, tb),
            chain_from_series(self._rel.outage_series(packet_bits), packet_bits, tb),
        )

    def solve(self, packet_bits: float, constraint: DelayConstraint) -> TwoHopSolution:
        chain_s, chain_r = self.chains(packet_bits)
        return solve_two_hop(
            DelayExponentFn(chain_s),
            DelayExponentFn(chain_r),
            constraint,
            self.system.block_symbols,
            packet_bits=packet_bits,
            pout_source=chain_s.pout,
            pout_relay=chain_r.pout,
            settings=self.settings,
        )


def evaluate_harq_ir(
    system: DiamondSystem,
    constraint: DelayConstraint,
    packet_bits: float,
    estimator: Optional[EstimatorConfig] = None,
    settings: Optional[TwoHopSettings] = None,
) -> TwoHopSolution:
    """Two-hop solution of the HARQ-IR diamond at one packet size."""
    return DiamondEvaluator(system, estimator, settings).solve(packet_bits, constraint)


def solve_df(
    system: DiamondSystem,
    constraint: DelayConstraint,
    estimator: Optional[EstimatorConfig] = None,
    settings: Optional[TwoHopSettings] = None,
) -> TwoHopSolution:
    """Decode-and-forward baseline; no retransmissions, zero outage."""
    s = settings or TwoHopSettings()
    j1 = DfDelayExponent(system, "source", estimator, theta_probe=s.theta_probe)
    j2 = DfDelayExponent(system, "relay", estimator, theta_probe=s.theta_probe)
    sol = solve_two_hop(j1, j2, constraint, system.block_symbols, settings=s)
    notes = sol.notes
    if j1.heavy_tail or j2.heavy_tail:
        notes = notes + ("df-heavy-tail",)
    return replace(sol, notes=notes)


@dataclass(frozen=True)
class PacketSearch:
    """Packet-size search for the diamond: grid plus golden refinement."""

    l_lo: float = 1.0
    l_hi: Optional[float] = None  # defaults to 20 * block_symbols
    grid_points: int = 64
    xtol_bits: float = 0.5


def optimize_L_diamond(
    system: DiamondSystem,
    constraint: DelayConstraint,
    estimator: Optional[EstimatorConfig] = None,
    search: Optional[PacketSearch] = None,
    settings: Optional[TwoHopSettings] = None,
) -> TwoHopSolution:
    """Best packet size for the HARQ-IR diamond; DF has no packet size to tune."""
    if system.scheme == Scheme.DF_CSI:
        return solve_df(system, constraint, estimator, settings)
    search = search or PacketSearch()
    hi = search.l_hi if search.l_hi is not None else 20.0 * system.block_symbols
    ev = DiamondEvaluator(system, estimator, settings)
    cache: dict[float, TwoHopSolution] = {}

    def solution_at(l_bits: float) -> TwoHopSolution:
        sol = cache.get(l_bits)
        if sol is None:
            sol = ev.solve(l_bits, constraint)
            cache[l_bits] = sol
        return sol

    grid = np.geomspace(search.l_lo, hi, search.grid_points)
    rates = [solution_at(l).rate_bps_hz for l in grid]
    best = int(np.argmax(rates))
    if rates[best] <= 0.0:
        # the delay constraint fails at every probed packet size
        return solution_at(grid[0])
    left = grid[best - 1] if best > 0 else search.l_lo
    right = grid[best + 1] if best < len(grid) - 1 else hi
    l_ref, rate_ref = golden_max(
        lambda l: solution_at(l).rate_bps_hz, left, right, xtol=search.xtol_bits
    )
    l_best = l_ref if rate_ref >= rates[best] else grid[best]
    return solution_at(float(l_best))


# ---------------------------------------------------------------------------
# record serialization
# ---------------------------------------------------------------------------

SOLUTION_FIELDS = (
    "scheme",
    "L",
    "case",
    "theta1",
    "theta2",
    "j1",
    "j2",
    "rate_bps_hz",
    "pout",
    "epsilon",
    "dmax_s",
    "snr_s_db",
    "snr_r_db",
    "M",
    "seed",
)


def solution_row(
    solution: TwoHopSolution,
    *,
    scheme: Scheme,
    epsilon: float,
    dmax_s: float,
    snr_s_db: float,
    snr_r_db: float,
    rounds: int,
    seed: int,
) -> dict[str, object]:
    """Flatten a solution plus its experiment context into the CSV row schema."""
    return {
        "scheme": scheme.value,
        "L": solution.packet_bits,
        "case": solution.case.value,
        "theta1": solution.theta1,
        "theta2": solution.theta2,
        "j1": solution.j1,
        "j2": solution.j2,
        "rate_bps_hz": solution.rate_bps_hz,
        "pout": solution.pout_end_to_end,
        "epsilon": epsilon,
        "dmax_s": dmax_s,
        "snr_s_db": snr_s_db,
        "snr_r_db": snr_r_db,
        "M": rounds,
        "seed": seed,
    }
