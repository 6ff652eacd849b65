"""Frame-clock simulation of HARQ queues, one hop or the two-hop diamond.

Each frame: the head packet of every busy queue gets one transmission round
on a freshly faded block; a packet leaves its queue on success or after the
M-th failed round (drop). Constant fluid arrivals accumulate and a packet
forms whenever a full packet's worth of bits is queued; a packet formed in
frame n can first be served in frame n+1.

Bit accounting runs in fixed point (2^-32 bit units, arbitrary-precision
integers) so the conservation identity bits_in = delivered + dropped +
queued holds exactly on every run. Dropped packets count as outage only;
they are excluded from the delay-violation denominator.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .channel import Combining, HopSpec, Protocol, _stream_gains, decode_threshold
from .diamond import RELAY_STREAM, SOURCE_STREAM, DiamondSystem, relay_hop, source_hop

_SCALE = 1 << 32  # fixed-point bit unit


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: workload, horizon, and the system under test."""

    system: Union[HopSpec, DiamondSystem]
    arrival_rate: float  # bits per block, constant
    frames: int
    warmup: int = 10_000
    seed: int = 20170301
    rounds: Optional[int] = None  # M for a bare HopSpec; DiamondSystem carries its own
    packet_bits: Optional[float] = None  # required for a DiamondSystem
    d_max_blocks: Optional[float] = None  # enables the delay-violation statistic
    trace_path: Optional[str] = None  # per-frame debug trace (large!)

    def __post_init__(self) -> None:
        if self.arrival_rate < 0.0:
            raise ValueError(f"arrival_rate must be >= 0, got {self.arrival_rate}")
        if not self.frames > self.warmup >= 0:
            raise ValueError(f"need frames > warmup >= 0, got {self.frames}, {self.warmup}")
        if isinstance(self.system, DiamondSystem):
            if self.packet_bits is None:
                raise ValueError("packet_bits is required when simulating a diamond system")
        elif self.rounds is None or self.rounds < 1:
            raise ValueError("rounds (maximum transmissions) is required for a one-hop run")


@dataclass(frozen=True)
class SimReport:
    """Empirical queue/delay/outage statistics of one run."""

    frames: int
    warmup: int
    arrival_rate: float
    packet_bits: float
    seed: int
    tail_slope: Optional[float]  # d log Pr{Q > q} / dq of the source queue, <= 0
    tail_points: tuple[tuple[float, float], ...]  # (q_bits, log survival) fit support
    empirical_outage: float  # dropped / formed
    outage_half_width: float  # 95% binomial half-width
    delay_violation: Optional[float]  # delivered packets later than d_max
    mean_delay_blocks: Optional[float]
    packets_formed: int
    packets_delivered: int
    packets_dropped: int
    mean_queue_bits: float
    bits_in: float
    bits_delivered: float
    bits_dropped: float
    bits_queued: float
    work_conserved: bool
    unstable: bool


SIM_FIELDS = (
    "arrival_rate",
    "frames",
    "warmup",
    "seed",
    "L",
    "tail_slope",
    "empirical_outage",
    "outage_half_width",
    "delay_violation",
    "mean_delay_blocks",
    "packets_formed",
    "packets_delivered",
    "packets_dropped",
    "mean_queue_bits",
    "work_conserved",
    "unstable",
)


def report_row(report: SimReport) -> dict[str, object]:
    return {
        "arrival_rate": report.arrival_rate,
        "frames": report.frames,
        "warmup": report.warmup,
        "seed": report.seed,
        "L": report.packet_bits,
        "tail_slope": math.nan if report.tail_slope is None else report.tail_slope,
        "empirical_outage": report.empirical_outage,
        "outage_half_width": report.outage_half_width,
        "delay_violation": math.nan if report.delay_violation is None else report.delay_violation,
        "mean_delay_blocks": (
            math.nan if report.mean_delay_blocks is None else report.mean_delay_blocks
        ),
        "packets_formed": report.packets_formed,
        "packets_delivered": report.packets_delivered,
        "packets_dropped": report.packets_dropped,
        "mean_queue_bits": report.mean_queue_bits,
        "work_conserved": int(report.work_conserved),
        "unstable": int(report.unstable),
    }


class _HopService:
    """Per-frame HARQ rounds of one hop's head packet, gains pre-drawn."""

    def __init__(self, hop: HopSpec, rounds: int, frames: int, seed: int, stream: int) -> None:
        self.rounds = rounds
        self.protocol = hop.protocol
        self.combining = hop.combining
        self.bits = hop.packet_bits
        self.threshold = decode_threshold(hop.packet_bits, hop.block_symbols)
        tb = hop.block_symbols

        def link_gamma(idx: int) -> np.ndarray:
            link = hop.links[idx]
            return link.snr * _stream_gains(link, frames, seed, (stream, idx, 0))

        if hop.combining == Combining.ALAMOUTI:
            streams = [link_gamma(0) + link_gamma(1)]
        elif hop.combining == Combining.COMMON_MESSAGE:
            streams = [link_gamma(0), link_gamma(1)]
        else:
            streams = [link_gamma(0)]
        if hop.protocol == Protocol.IR:
            streams = [tb * np.log2(1.0 + g) for g in streams]
        self._streams = [s.tolist() for s in streams]  # python floats: faster in the loop
        self.rounds_used = 0
        self._acc = [0.0] * len(self._streams)

    def reset(self) -> None:
        self.rounds_used = 0
        for i in range(len(self._acc)):
            self._acc[i] = 0.0

    def step(self, frame: int) -> str:
        """One round for the head packet: 'success', 'drop', or 'pending'."""
        self.rounds_used += 1
        if self.protocol == Protocol.T1:
            decoded = all(s[frame] >= self.threshold for s in self._streams)
        elif self.protocol == Protocol.CC:
            for i, s in enumerate(self._streams):
                self._acc[i] += s[frame]
            decoded = all(a >= self.threshold for a in self._acc)
        else:  # IR accumulates bits
            for i, s in enumerate(self._streams):
                self._acc[i] += s[frame]
            decoded = all(a >= self.bits for a in self._acc)
        if decoded:
            return "success"
        if self.rounds_used >= self.rounds:
            return "drop"
        return "pending"


def _fit_tail(q_samples: np.ndarray, points: int = 64):
    """LS slope of log-survival over the [1e-1, 1e-4] survival band."""
    qs = np.sort(q_samples)
    n = len(qs)
    q_lo = qs[int(0.9 * n)]
    q_hi = qs[min(int(0.9999 * n), n - 1)]
    if not q_hi > q_lo:
        return None, ()
    thresholds = np.linspace(q_lo, q_hi, points)
    surv = (n - np.searchsorted(qs, thresholds, side="right")) / n
    keep = surv > 0.0
    if int(np.sum(keep)) < 4:
        return None, ()
    x, y = thresholds[keep], np.log(surv[keep])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope), tuple(zip(x.tolist(), y.tolist()))


def _drift(q_samples: np.ndarray, arrival_rate: float, packet_bits: float) -> bool:
    """Positive linear queue trend: the arrival rate exceeds the hop capacity."""
    if len(q_samples) < 16 or arrival_rate == 0.0:
        return False
    idx = np.linspace(0, len(q_samples) - 1, min(4096, len(q_samples))).astype(int)
    slope, _ = np.polyfit(idx.astype(float), q_samples[idx], 1)
    return slope > 0.005 * arrival_rate and q_samples[-1] > 8.0 * max(packet_bits, 1.0)


class _Tally:
    """Shared arrival/packetization/accounting state of one run."""

    def __init__(self, config: SimConfig, packet_bits: float) -> None:
        self.rate_fx = round(config.arrival_rate * _SCALE)
        self.l_fx = round(packet_bits * _SCALE)
        if self.rate_fx > 0 and self.l_fx <= 0:
            raise ValueError("packet_bits must be positive when arrivals are nonzero")
        self.acc_fx = 0
        self.formed = 0
        self.delivered = 0
        self.dropped = 0
        self.delay_sum = 0
        self.late = 0

    def arrivals(self, frame: int, queue: deque) -> None:
        self.acc_fx += self.rate_fx
        if self.l_fx > 0:
            while self.acc_fx >= self.l_fx:
                self.acc_fx -= self.l_fx
                queue.append(frame)
                self.formed += 1

    def deliver(self, frame: int, arrival_frame: int, d_max: Optional[float]) -> None:
        self.delivered += 1
        delay = frame - arrival_frame
        self.delay_sum += delay
        if d_max is not None and delay > d_max:
            self.late += 1


def _build_report(
    config: SimConfig,
    packet_bits: float,
    tally: _Tally,
    q_samples: np.ndarray,
    queued_packets: int,
) -> SimReport:
    bits_in_fx = config.frames * tally.rate_fx
    delivered_fx = tally.delivered * tally.l_fx
    dropped_fx = tally.dropped * tally.l_fx
    queued_fx = queued_packets * tally.l_fx + tally.acc_fx
    conserved = bits_in_fx == delivered_fx + dropped_fx + queued_fx
    formed = tally.formed
    outage = tally.dropped / formed if formed else 0.0
    half = 1.96 * math.sqrt(outage * (1.0 - outage) / formed) if formed else 0.0
    slope, points = _fit_tail(q_samples) if q_samples.size else (None, ())
    return SimReport(
        frames=config.frames,
        warmup=config.warmup,
        arrival_rate=config.arrival_rate,
        packet_bits=packet_bits,
        seed=config.seed,
        tail_slope=slope,
        tail_points=points,
        empirical_outage=outage,
        outage_half_width=half,
        delay_violation=(
            tally.late / tally.delivered
            if config.d_max_blocks is not None and tally.delivered
            else None
        ),
        mean_delay_blocks=tally.delay_sum / tally.delivered if tally.delivered else None,
        packets_formed=formed,
        packets_delivered=tally.delivered,
        packets_dropped=tally.dropped,
        mean_queue_bits=float(np.mean(q_samples)) if q_samples.size else 0.0,
        bits_in=bits_in_fx / _SCALE,
        bits_delivered=delivered_fx / _SCALE,
        bits_dropped=dropped_fx / _SCALE,
        bits_queued=queued_fx / _SCALE,
        work_conserved=conserved,
        unstable=_drift(q_samples, config.arrival_rate, packet_bits),
    )


def simulate_one_hop(config: SimConfig) -> SimReport:
    """Single HARQ queue fed by constant arrivals."""
    hop = config.system
    if not isinstance(hop, HopSpec):
        raise TypeError("simulate_one_hop needs a HopSpec system")
    svc = _HopService(hop, config.rounds, config.frames, config.seed, SOURCE_STREAM)
    tally = _Tally(config, hop.packet_bits)
    queue: deque[int] = deque()
    q_samples = np.empty(config.frames - config.warmup)
    trace = open(config.trace_path, "w") if config.trace_path else None
    if trace:
        trace.write("frame,queue_bits,state,event\n")
    try:
        for n in range(config.frames):
            event = "idle"
            if queue:
                event = svc.step(n)
                if event == "success":
                    arrival = queue.popleft()
                    tally.deliver(n, arrival, config.d_max_blocks)
                    svc.reset()
                    event = f"success@{arrival}"  # arrival frame, for FIFO checks
                elif event == "drop":
                    queue.popleft()
                    tally.dropped += 1
                    svc.reset()
            tally.arrivals(n, queue)
            q_fx = len(queue) * tally.l_fx + tally.acc_fx
            if n >= config.warmup:
                q_samples[n - config.warmup] = q_fx / _SCALE
            if trace:
                trace.write(f"{n},{q_fx / _SCALE:.6f},{svc.rounds_used},{event}\n")
    finally:
        if trace:
            trace.close()
    return _build_report(config, hop.packet_bits, tally, q_samples, len(queue))


def simulate_diamond(config: SimConfig) -> SimReport:
    """Tandem source and relay queues of the HARQ-IR diamond."""
    system = config.system
    if not isinstance(system, DiamondSystem):
        raise TypeError("simulate_diamond needs a DiamondSystem")
    bits = float(config.packet_bits)
    src = _HopService(
        source_hop(system, bits), system.rounds, config.frames, config.seed, SOURCE_STREAM
    )
    rel = _HopService(
        relay_hop(system, bits), system.rounds, config.frames, config.seed, RELAY_STREAM
    )
    tally = _Tally(config, bits)
    src_queue: deque[int] = deque()
    rel_queue: deque[int] = deque()
    q_samples = np.empty(config.frames - config.warmup)
    trace = open(config.trace_path, "w") if config.trace_path else None
    if trace:
        trace.write("frame,src_queue_bits,src_state,rel_queue_bits,rel_state,event\n")
    try:
        for n in range(config.frames):
            event = "idle"
            moved = None
            if src_queue:
                event = src.step(n)
                if event == "success":
                    moved = src_queue.popleft()  # joins the relay at the end of the frame
                    src.reset()
                elif event == "drop":
                    src_queue.popleft()
                    tally.dropped += 1
                    src.reset()
            if rel_queue:
                rel_event = rel.step(n)
                if rel_event == "success":
                    arrival = rel_queue.popleft()
                    tally.deliver(n, arrival, config.d_max_blocks)
                    rel.reset()
                    rel_event = f"success@{arrival}"
                elif rel_event == "drop":
                    rel_queue.popleft()
                    tally.dropped += 1
                    rel.reset()
                event = f"{event}/{rel_event}"
            if moved is not None:
                rel_queue.append(moved)
            tally.arrivals(n, src_queue)
            q_fx = len(src_queue) * tally.l_fx + tally.acc_fx
            if n >= config.warmup:
                q_samples[n - config.warmup] = q_fx / _SCALE
            if trace:
                trace.write(
                    f"{n},{q_fx / _SCALE:.6f},{src.rounds_used},"
                    f"{len(rel_queue) * bits:.6f},{rel.rounds_used},{event}\n"
                )
    finally:
        if trace:
            trace.close()
    return _build_report(
        config, bits, tally, q_samples, len(src_queue) + len(rel_queue)
    )
