"""Buffer-activity Markov chain of one HARQ hop.

The chain stores the transition probabilities p_0..p_{M-1}; the outage
series is reconstructed from them so every downstream quantity computed for
one (packet size, M) point shares a single, internally consistent estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import EstimatorConfig, HopSampler, HopSpec, outage_series

RATIO_FLOOR = 1e-12  # below this, conditional-failure ratios are numerically meaningless


@dataclass(frozen=True)
class HarqChain:
    """Markov description of one hop: M states, per-round failure probabilities."""

    rounds: int  # M, maximum number of transmissions
    packet_bits: float  # L
    block_symbols: int  # TB
    p: tuple[float, ...]  # p_0..p_{M-1}
    floored_rounds: tuple[int, ...] = field(default=())  # rounds where the ratio guard fired

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if len(self.p) != self.rounds:
            raise ValueError(f"need {self.rounds} transition probabilities, got {len(self.p)}")
        for m, pm in enumerate(self.p):
            if not 0.0 <= pm <= 1.0:
                raise ValueError(f"p[{m}] = {pm} outside [0, 1]")

    @property
    def pout_series(self) -> tuple[float, ...]:
        """P_out,0..P_out,M as cumulative products of the stored p."""
        series = [1.0]
        for pm in self.p:
            series.append(series[-1] * pm)
        return tuple(series)

    @property
    def pout(self) -> float:
        """End outage probability after all M rounds."""
        out = 1.0
        for pm in self.p:
            out *= pm
        return out

    @property
    def degraded(self) -> bool:
        return bool(self.floored_rounds)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rounds": self.rounds,
                "packet_bits": self.packet_bits,
                "block_symbols": self.block_symbols,
                "p": list(self.p),
                "pout_series": list(self.pout_series),
                "pout": self.pout,
                "floored_rounds": list(self.floored_rounds),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "HarqChain":
        data = json.loads(text)
        return cls(
            rounds=int(data["rounds"]),
            packet_bits=float(data["packet_bits"]),
            block_symbols=int(data["block_symbols"]),
            p=tuple(float(x) for x in data["p"]),
            floored_rounds=tuple(int(m) for m in data.get("floored_rounds", ())),
        )


def chain_from_series(
    series: Sequence[float],
    packet_bits: float,
    block_symbols: int,
    *,
    ratio_floor: float = RATIO_FLOOR,
) -> HarqChain:
    """Turn an outage series P_out,0..P_out,M into a chain via the ratio rule.

    Exact zeros truncate the chain (p_k = 0 from there on); positive
    denominators below `ratio_floor` force p_m = 1 and flag the round, since
    a ratio of vanishing estimates carries no information.
    """
    rounds = len(series) - 1
    if rounds < 1:
        raise ValueError("series must contain at least P_out,0 and P_out,1")
    if series[0] != 1.0:
        raise ValueError(f"P_out,0 must be 1, got {series[0]}")
    p: list[float] = []
    floored: list[int] = []
    truncated = False
    for m in range(rounds):
        denom, numer = series[m], series[m + 1]
        if truncated or denom == 0.0:
            p.append(0.0)
            truncated = True
            continue
        if denom <= ratio_floor:
            p.append(1.0)
            floored.append(m)
            continue
        p.append(min(max(numer / denom, 0.0), 1.0))
        if numer == 0.0:
            truncated = True
    return HarqChain(
        rounds=rounds,
        packet_bits=float(packet_bits),
        block_symbols=int(block_symbols),
        p=tuple(p),
        floored_rounds=tuple(floored),
    )


def build_chain(
    hop: HopSpec, rounds: int, estimator: Optional[EstimatorConfig] = None
) -> HarqChain:
    """Estimate the outage series of the hop and assemble its chain."""
    series = outage_series(hop, rounds, estimator)
    return chain_from_series(series, hop.packet_bits, hop.block_symbols)


def chain_from_sampler(sampler: HopSampler, packet_bits: float) -> HarqChain:
    """Chain for an alternate packet size reusing a sampler's draws."""
    series = sampler.outage_series(packet_bits)
    return chain_from_series(series, packet_bits, sampler.hop.block_symbols)


def transition_matrix(chain: HarqChain) -> np.ndarray:
    """Column-stochastic M x M state transition matrix of the buffer activity.

    Column j feeds state j+1 with probability p_j and state 0 with 1 - p_j;
    the last column returns all mass to state 0 because the packet leaves
    the buffer after the M-th round regardless of the decoding outcome.
    """
    m = chain.rounds
    mat = np.zeros((m, m))
    mat[0, :] = 1.0
    for j in range(m - 1):
        mat[0, j] = 1.0 - chain.p[j]
        mat[j + 1, j] = chain.p[j]
    return mat


def goodput(chain: HarqChain) -> float:
    """Delay-unconstrained throughput of the truncated HARQ hop in bps/Hz."""
    series = chain.pout_series
    denom = sum(series[:-1])
    return (chain.packet_bits / chain.block_symbols) * (1.0 - series[-1]) / denom
