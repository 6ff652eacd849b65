"""Fading links and per-round outage probabilities for HARQ hops.

Implements:
- Rayleigh / Nakagami-m block-fading gain models with per-link SNR,
- deterministic chunked gain sampling (streams depend only on the seed and
  a stream key, so estimates are reproducible and splittable across workers),
- Monte Carlo outage series P_out,0..P_out,M using common random numbers:
  every retransmission round and every packet size reuses the same draws,
  which keeps the series monotone sample-exactly,
- a high-accuracy alternative based on numerical convolution of the
  per-round rate (or accumulated-SNR) distribution, kept independent of the
  Monte Carlo path so the two can cross-check each other.

Repeat-decoding (T1) hops never fail independently across rounds only in
distribution, so their series is evaluated in closed form from the
single-round outage probability instead of by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate, signal, special

_CHUNK = 1 << 18  # draws per RNG substream; fixed so results never depend on worker count


class Family(str, Enum):
    RAYLEIGH = "rayleigh"
    NAKAGAMI = "nakagami"


class Protocol(str, Enum):
    T1 = "t1"  # repeat decoding each round
    CC = "cc"  # chase combining: accumulated SNR
    IR = "ir"  # incremental redundancy: accumulated mutual information


class Combining(str, Enum):
    SINGLE = "single"
    COMMON_MESSAGE = "common_message"  # both receivers must decode the packet
    ALAMOUTI = "alamouti"  # distributed space-time code, sum-SNR per round


class EstimatorBudgetError(RuntimeError):
    """The requested estimate precision is unreachable at the sample cap."""


@dataclass(frozen=True)
class ChannelModel:
    """One link's fading law for the gain z = |g|^2 plus its linear SNR."""

    mean_power: float  # E{z}
    snr: float  # linear (not dB)
    family: Family = Family.RAYLEIGH
    nakagami_m: float = 1.0  # shape, only used for NAKAGAMI

    def __post_init__(self) -> None:
        if not self.mean_power > 0.0:
            raise ValueError(f"mean_power must be > 0, got {self.mean_power}")
        if not self.snr > 0.0:
            raise ValueError(f"snr must be > 0, got {self.snr}")
        if self.family == Family.NAKAGAMI and not self.nakagami_m >= 0.5:
            raise ValueError(f"nakagami_m must be >= 0.5, got {self.nakagami_m}")

    def gain_cdf(self, x: float) -> float:
        """Pr{z < x} in closed form."""
        if x <= 0.0:
            return 0.0
        if not math.isfinite(x):
            return 1.0
        if self.family == Family.RAYLEIGH:
            return -math.expm1(-x / self.mean_power)
        m = self.nakagami_m
        return float(special.gammainc(m, m * x / self.mean_power))

    def gain_sf(self, x: float) -> float:
        """Pr{z >= x}."""
        if x <= 0.0:
            return 1.0
        if not math.isfinite(x):
            return 0.0
        if self.family == Family.RAYLEIGH:
            return math.exp(-x / self.mean_power)
        m = self.nakagami_m
        return float(special.gammaincc(m, m * x / self.mean_power))

    def gain_quantile(self, q: float) -> float:
        """Inverse of gain_cdf for q in (0, 1)."""
        if self.family == Family.RAYLEIGH:
            return -self.mean_power * math.log1p(-q)
        m = self.nakagami_m
        return float(special.gammaincinv(m, q)) * self.mean_power / m


@dataclass(frozen=True)
class HopSpec:
    """One HARQ hop: protocol, its link(s), block length and packet size."""

    protocol: Protocol
    links: tuple[ChannelModel, ...]
    block_symbols: int  # TB, symbols per fading block
    packet_bits: float  # L, fixed transmission rate in bits/block
    combining: Combining = Combining.SINGLE

    def __post_init__(self) -> None:
        if self.block_symbols < 1:
            raise ValueError(f"block_symbols must be >= 1, got {self.block_symbols}")
        if self.packet_bits < 0.0:
            raise ValueError(f"packet_bits must be >= 0, got {self.packet_bits}")
        links = tuple(self.links)
        object.__setattr__(self, "links", links)
        expected = 1 if self.combining == Combining.SINGLE else 2
        if len(links) != expected:
            raise ValueError(
                f"combining {self.combining.value} needs {expected} link(s), got {len(links)}"
            )

    def with_packet_bits(self, packet_bits: float) -> "HopSpec":
        return replace(self, packet_bits=float(packet_bits))


@dataclass(frozen=True)
class EstimatorConfig:
    """Monte Carlo budget: fixed sample count plus an optional CI target."""

    samples: int = 1_000_000
    seed: int = 20170301
    target_rel_ci: Optional[float] = None  # 95% half-width / estimate, checked per entry
    max_samples: int = 16_000_000

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if not 0 <= self.seed < 2**63:
            raise ValueError(f"seed must be a nonnegative 63-bit integer, got {self.seed}")
        if self.target_rel_ci is not None and not self.target_rel_ci > 0.0:
            raise ValueError("target_rel_ci must be positive when set")


def decode_threshold(packet_bits: float, block_symbols: int) -> float:
    """SNR value gamma with block_symbols*log2(1+gamma) == packet_bits."""
    return float(np.exp2(packet_bits / block_symbols) - 1.0)


def first_failure_prob(model: ChannelModel, packet_bits: float, block_symbols: int) -> float:
    """Probability the very first transmission round fails on a single link."""
    if packet_bits < 0.0:
        raise ValueError(f"packet_bits must be >= 0, got {packet_bits}")
    thr = decode_threshold(packet_bits, block_symbols)
    return model.gain_cdf(thr / model.snr)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _draw_gains(model: ChannelModel, rng: np.random.Generator, n: int) -> np.ndarray:
    if model.family == Family.RAYLEIGH:
        return rng.exponential(scale=model.mean_power, size=n)
    m = model.nakagami_m
    return rng.gamma(shape=m, scale=model.mean_power / m, size=n)


def _stream_gains(model: ChannelModel, count: int, seed: int, key: tuple[int, ...]) -> np.ndarray:
    """Fixed-chunk draws; chunk c comes from SeedSequence((seed, *key, c))."""
    out = np.empty(count)
    for c, lo in enumerate(range(0, count, _CHUNK)):
        n = min(_CHUNK, count - lo)
        rng = np.random.default_rng(np.random.SeedSequence((seed, *key, c)))
        out[lo : lo + n] = _draw_gains(model, rng, n)
    return out


def sample_gains(model: ChannelModel, count: int, seed: int) -> np.ndarray:
    """i.i.d. gain draws with E{z} = mean_power, deterministic for a seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return _stream_gains(model, count, seed, ())


# ---------------------------------------------------------------------------
# pair-gain distribution (sum of two independently faded, scaled gains)
# ---------------------------------------------------------------------------


def _scaled_means(links: tuple[ChannelModel, ...]) -> tuple[float, float]:
    return links[0].snr * links[0].mean_power, links[1].snr * links[1].mean_power


def pair_gain_cdf(links: tuple[ChannelModel, ...], x: float) -> float:
    """Pr{snr1*z1 + snr2*z2 < x} for two independent links."""
    if x <= 0.0:
        return 0.0
    if links[0].family == Family.RAYLEIGH and links[1].family == Family.RAYLEIGH:
        mu1, mu2 = _scaled_means(links)
        if abs(mu1 - mu2) <= 1e-9 * max(mu1, mu2):
            # equal rates: Gamma(2, mu)
            mu = 0.5 * (mu1 + mu2)
            return float(special.gammainc(2.0, x / mu))
        # hypoexponential CDF
        return 1.0 - (mu1 * math.exp(-x / mu1) - mu2 * math.exp(-x / mu2)) / (mu1 - mu2)
    # generic: integrate the first scaled density against the second CDF
    l1, l2 = links

    def integrand(u: float) -> float:
        return _scaled_gain_pdf(l1, u) * _scaled_gain_cdf(l2, x - u)

    val, _ = integrate.quad(integrand, 0.0, x, limit=200)
    return min(max(val, 0.0), 1.0)


def _scaled_gain_pdf(link: ChannelModel, y: float) -> float:
    """Density of snr*z at y."""
    if y <= 0.0:
        return 0.0
    s = link.snr
    if link.family == Family.RAYLEIGH:
        mu = s * link.mean_power
        return math.exp(-y / mu) / mu
    m = link.nakagami_m
    scale = s * link.mean_power / m
    # Gamma(m, scale) density, computed in logs to avoid overflow for large m
    logpdf = (m - 1.0) * math.log(y / scale) - y / scale - math.lgamma(m) - math.log(scale)
    return math.exp(logpdf)


def _scaled_gain_cdf(link: ChannelModel, y: float) -> float:
    return link.gain_cdf(y / link.snr)


def _pair_gain_quantile(links: tuple[ChannelModel, ...], q: float) -> float:
    """Inverse of pair_gain_cdf by bracketed bisection."""
    hi = links[0].gain_quantile(q) * links[0].snr + links[1].gain_quantile(q) * links[1].snr
    while pair_gain_cdf(links, hi) < q:
        hi *= 2.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if pair_gain_cdf(links, mid) < q:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# Monte Carlo outage series with common random numbers
# ---------------------------------------------------------------------------


class HopSampler:
    """Reusable common-random-number estimator for one hop.

    Gains are drawn once per (seed, stream, link, round) substream, so

    - outage series computed for different packet sizes share every sample,
    - the first rounds of a deeper sampler match a shallower one exactly,
    - two samplers with distinct `stream` tags are independent even under
      the same seed (needed when one system carries several hops).
    """

    def __init__(
        self,
        hop: HopSpec,
        rounds: int,
        estimator: Optional[EstimatorConfig] = None,
        *,
        stream: int = 0,
    ) -> None:
        if rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {rounds}")
        self.hop = hop
        self.rounds = int(rounds)
        self.estimator = estimator or EstimatorConfig()
        self.stream = int(stream)
        self._acc: Optional[list[np.ndarray]] = None  # per-link accumulated statistic

    def with_samples(self, samples: int) -> "HopSampler":
        return HopSampler(
            self.hop, self.rounds, replace(self.estimator, samples=samples), stream=self.stream
        )

    def _accumulated(self) -> list[np.ndarray]:
        """Per-link cumulative per-round statistic, shape (samples, rounds).

        IR accumulates bits, CC accumulates effective SNR. ALAMOUTI combines
        its two links into a single summed-SNR statistic; COMMON_MESSAGE keeps
        one matrix per link because both links must decode on their own.
        """
        if self._acc is not None:
            return self._acc
        hop, n, rounds = self.hop, self.estimator.samples, self.rounds
        seed = self.estimator.seed

        def gain_matrix(link_idx: int) -> np.ndarray:
            g = np.empty((n, rounds))
            for m in range(rounds):
                g[:, m] = _stream_gains(hop.links[link_idx], n, seed, (self.stream, link_idx, m))
            return g

        if hop.combining == Combining.ALAMOUTI:
            gamma = hop.links[0].snr * gain_matrix(0) + hop.links[1].snr * gain_matrix(1)
            per_link = [gamma]
        elif hop.combining == Combining.COMMON_MESSAGE:
            per_link = [hop.links[j].snr * gain_matrix(j) for j in (0, 1)]
        else:
            per_link = [hop.links[0].snr * gain_matrix(0)]

        acc = []
        for gamma in per_link:
            if hop.protocol == Protocol.IR:
                stat = hop.block_symbols * np.log2(1.0 + gamma)
            else:  # CC accumulates SNR; threshold comparison happens per packet size
                stat = gamma
            np.cumsum(stat, axis=1, out=stat)
            acc.append(stat)
        self._acc = acc
        return acc

    def outage_series(self, packet_bits: Optional[float] = None) -> np.ndarray:
        """P_out,0..P_out,rounds for the given (or the hop's own) packet size."""
        bits = self.hop.packet_bits if packet_bits is None else float(packet_bits)
        if bits < 0.0:
            raise ValueError(f"packet_bits must be >= 0, got {bits}")
        out = np.empty(self.rounds + 1)
        out[0] = 1.0
        if bits == 0.0:  # zero rate always decodes (continuous CDF at threshold 0)
            out[1:] = 0.0
            return out
        if self.hop.protocol == Protocol.T1:
            out[1:] = _t1_series(self.hop, self.rounds, bits)
            return out
        acc = self._accumulated()
        if self.hop.combining == Combining.COMMON_MESSAGE:
            fail1 = np.mean(acc[0] < bits, axis=0)
            fail2 = np.mean(acc[1] < bits, axis=0)
            out[1:] = 1.0 - (1.0 - fail1) * (1.0 - fail2)
        else:
            target = bits if self.hop.protocol == Protocol.IR else decode_threshold(
                bits, self.hop.block_symbols
            )
            out[1:] = np.mean(acc[0] < target, axis=0)
        return out


def _t1_series(hop: HopSpec, rounds: int, bits: float) -> np.ndarray:
    """Closed-form repeat-decoding series: rounds fail i.i.d. per link."""
    thr = decode_threshold(bits, hop.block_symbols)
    m_idx = np.arange(1, rounds + 1)
    if hop.combining == Combining.COMMON_MESSAGE:
        p0 = [link.gain_cdf(thr / link.snr) for link in hop.links]
        return 1.0 - (1.0 - p0[0] ** m_idx) * (1.0 - p0[1] ** m_idx)
    if hop.combining == Combining.ALAMOUTI:
        p0 = pair_gain_cdf(hop.links, thr)
    else:
        p0 = hop.links[0].gain_cdf(thr / hop.links[0].snr)
    return p0 ** m_idx.astype(float)


def _worst_rel_ci(series: np.ndarray, samples: int) -> tuple[float, float]:
    """Largest relative 95% half-width over the positive entries, and its p."""
    worst, worst_p = 0.0, 1.0
    for p in series[1:]:
        if 0.0 < p < 1.0:
            rel = 1.96 * math.sqrt(p * (1.0 - p) / samples) / p
            if rel > worst:
                worst, worst_p = rel, p
    return worst, worst_p


def outage_series(
    hop: HopSpec, rounds: int, estimator: Optional[EstimatorConfig] = None
) -> np.ndarray:
    """Outage series for one hop; escalates the sample count when a CI target is set."""
    est = estimator or EstimatorConfig()
    sampler = HopSampler(hop, rounds, est)
    series = sampler.outage_series()
    if est.target_rel_ci is None or hop.protocol == Protocol.T1 or hop.packet_bits == 0.0:
        return series
    rel, p = _worst_rel_ci(series, est.samples)
    if rel <= est.target_rel_ci:
        return series
    needed = int(math.ceil((1.96 / est.target_rel_ci) ** 2 * (1.0 - p) / p))
    if needed > est.max_samples:
        raise EstimatorBudgetError(
            f"relative CI {est.target_rel_ci:g} needs ~{needed} samples for P_out ~ {p:.3g}, "
            f"above the cap {est.max_samples}"
        )
    series = sampler.with_samples(needed).outage_series()
    rel, p = _worst_rel_ci(series, needed)
    if rel > est.target_rel_ci:
        raise EstimatorBudgetError(
            f"relative CI {est.target_rel_ci:g} unreachable at {needed} samples "
            f"(worst entry {p:.3g} has rel CI {rel:.3g})"
        )
    return series


# ---------------------------------------------------------------------------
# convolution path (independent of the Monte Carlo estimates)
# ---------------------------------------------------------------------------


def _grid_masses(cdf: Callable[[np.ndarray], np.ndarray], hi: float, bins: int) -> np.ndarray:
    """Bin masses of a nonnegative variable on [0, hi]; tail mass joins the last bin."""
    edges = np.linspace(0.0, hi, bins + 1)
    cdf_vals = cdf(edges)
    masses = np.diff(cdf_vals)
    masses[-1] += 1.0 - cdf_vals[-1]
    return np.clip(masses, 0.0, None)


def _fold_below(masses: np.ndarray, step: float, target: float, rounds: int) -> np.ndarray:
    """Pr{sum of m copies < target} for m = 1..rounds, masses at bin midpoints."""
    out = np.empty(rounds)
    conv = masses
    for m in range(1, rounds + 1):
        # index k of the m-fold convolution sits at value (k + 0.5*m) * step
        cutoff = int(math.ceil(target / step - 0.5 * m))
        if cutoff <= 0:
            out[m - 1] = 0.0
        else:
            out[m - 1] = float(np.sum(conv[:cutoff]))
        if m < rounds:
            conv = signal.fftconvolve(conv, masses)
    return np.clip(out, 0.0, 1.0)


def _gamma_cdf_fn(hop: HopSpec) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    """Vectorized CDF of the per-round effective SNR, and a high quantile of it."""
    tail = 1e-12
    if hop.combining == Combining.ALAMOUTI:
        links = hop.links
        if links[0].family == Family.RAYLEIGH and links[1].family == Family.RAYLEIGH:
            mu1, mu2 = _scaled_means(links)
            if abs(mu1 - mu2) <= 1e-9 * max(mu1, mu2):
                mu = 0.5 * (mu1 + mu2)

                def cdf(x: np.ndarray) -> np.ndarray:
                    return special.gammainc(2.0, np.maximum(x, 0.0) / mu)

            else:

                def cdf(x: np.ndarray) -> np.ndarray:
                    x = np.maximum(x, 0.0)
                    num = mu1 * np.exp(-x / mu1) - mu2 * np.exp(-x / mu2)
                    return np.clip(1.0 - num / (mu1 - mu2), 0.0, 1.0)

            hi = _pair_gain_quantile(links, 1.0 - tail)
            return cdf, hi
        # generic pair: one numerical self-convolution of the two gain grids
        hi = _pair_gain_quantile(links, 1.0 - tail)
        bins = 1 << 14
        m1 = _grid_masses(
            lambda x: np.vectorize(lambda v: _scaled_gain_cdf(links[0], v))(x), hi, bins
        )
        m2 = _grid_masses(
            lambda x: np.vectorize(lambda v: _scaled_gain_cdf(links[1], v))(x), hi, bins
        )
        pair = signal.fftconvolve(m1, m2)
        step = hi / bins
        csum = np.concatenate(([0.0], np.cumsum(pair)))

        def cdf(x: np.ndarray) -> np.ndarray:
            # mass of index k lies at (k + 1) * step; CDF is a right-continuous step fn
            idx = np.clip((np.asarray(x, dtype=float) / step).astype(int), 0, len(pair))
            return np.clip(csum[idx], 0.0, 1.0)

        return cdf, 2.0 * hi
    link = hop.links[0]
    s = link.snr

    def cdf(x: np.ndarray) -> np.ndarray:
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if link.family == Family.RAYLEIGH:
            return -np.expm1(-x / (s * link.mean_power))
        m = link.nakagami_m
        return special.gammainc(m, m * x / (s * link.mean_power))

    return cdf, link.gain_quantile(1.0 - tail) * s


def outage_series_quadrature(hop: HopSpec, rounds: int, *, bins: int = 1 << 14) -> np.ndarray:
    """Outage series by recursive numerical convolution on a uniform grid.

    Deterministic alternative to the Monte Carlo path with grid error of
    order rounds/bins in the accumulated variable; suitable as a
    verification channel, not as the production estimator.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    out = np.empty(rounds + 1)
    out[0] = 1.0
    bits = hop.packet_bits
    if bits == 0.0:
        out[1:] = 0.0
        return out
    if hop.protocol == Protocol.T1:
        out[1:] = _t1_series(hop, rounds, bits)
        return out
    if hop.combining == Combining.COMMON_MESSAGE:
        fails = []
        for link in hop.links:
            single = replace(hop, links=(link,), combining=Combining.SINGLE)
            fails.append(outage_series_quadrature(single, rounds, bins=bins)[1:])
        out[1:] = 1.0 - (1.0 - fails[0]) * (1.0 - fails[1])
        return out

    gamma_cdf, gamma_hi = _gamma_cdf_fn(hop)
    tb = hop.block_symbols
    if hop.protocol == Protocol.IR:
        rate_hi = tb * math.log2(1.0 + gamma_hi)

        def rate_cdf(r: np.ndarray) -> np.ndarray:
            return gamma_cdf(np.exp2(np.asarray(r, dtype=float) / tb) - 1.0)

        masses = _grid_masses(rate_cdf, rate_hi, bins)
        out[1:] = _fold_below(masses, rate_hi / bins, bits, rounds)
    else:  # CC: accumulate SNR, compare against the decoding threshold
        masses = _grid_masses(gamma_cdf, gamma_hi, bins)
        out[1:] = _fold_below(masses, gamma_hi / bins, decode_threshold(bits, tb), rounds)
    return out
