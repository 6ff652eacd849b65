"""Command-line front end: experiment configs, sweeps, CSV artifacts.

Configs are INI-style text files with sections [system], [constraint],
[estimator] and [sweep] (plus [simulate] for simulation runs); the format
is documented in the README. All dB <-> linear conversion and the
seconds -> blocks conversion of the delay budget happen here; the core
package works in linear SNR and per-block units only.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .channel import ChannelModel, EstimatorConfig, Family, HopSampler, HopSpec, Protocol
from .diamond import (
    SOLUTION_FIELDS,
    DiamondEvaluator,
    DiamondSystem,
    Scheme,
    optimize_L_diamond,
    solution_row,
    solve_df,
)
from .effcap import delay_exponent, optimize_L
from .harq import chain_from_sampler
from .sim import SIM_FIELDS, SimConfig, report_row, simulate_diamond, simulate_one_hop
from .tradeoff import DelayConstraint

SCENARIOS = (
    "onehop_ec",
    "ec_vs_L",
    "ec_vs_snr_r",
    "ec_vs_epsilon",
    "pout_vs_epsilon",
    "ec_vs_M",
    "simulate",
)


class ConfigError(ValueError):
    """Invalid or missing experiment configuration; the message names the field."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


class _Sections:
    """configparser wrapper whose errors name the offending field."""

    def __init__(self, parser: configparser.ConfigParser):
        self._parser = parser

    def get(self, section: str, key: str, cast: Callable, default=None, required: bool = False):
        if not self._parser.has_option(section, key):
            if required:
                raise ConfigError(f"missing required field '{key}' in [{section}]")
            return default
        raw = self._parser.get(section, key)
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for '{key}' in [{section}]: {raw!r}") from exc


def _parse_bool(raw: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: system, constraint, estimator, sweep."""

    scenario: str
    scheme: Scheme
    protocol: Protocol
    family: Family
    nakagami_m: float
    mean_power: float
    snr_s_db: Optional[float]
    snr_r_db: Optional[float]
    t_seconds: float
    bandwidth_hz: float
    block_symbols: int
    rounds: Optional[int]
    l_bits: Optional[float]
    epsilon: float
    d_max_seconds: float
    estimator: EstimatorConfig
    df_samples: int
    sweep: tuple[float, ...]
    sim_target: Optional[str] = None
    sim_frames: Optional[int] = None
    sim_warmup: int = 10_000
    sim_arrival_rate: Optional[float] = None

    @property
    def d_max_blocks(self) -> float:
        return self.d_max_seconds / self.t_seconds

    @property
    def constraint(self) -> DelayConstraint:
        return DelayConstraint(epsilon=self.epsilon, d_max_blocks=self.d_max_blocks)

    def link(self, snr_db: float) -> ChannelModel:
        return ChannelModel(
            mean_power=self.mean_power,
            snr=db_to_linear(snr_db),
            family=self.family,
            nakagami_m=self.nakagami_m,
        )

    def diamond(
        self, *, snr_r_db: Optional[float] = None, rounds: Optional[int] = None
    ) -> DiamondSystem:
        snr_r = self.snr_r_db if snr_r_db is None else snr_r_db
        src = self.link(self.snr_s_db)
        rel = self.link(snr_r)
        return DiamondSystem(
            source_links=(src, src),
            relay_links=(rel, rel),
            block_symbols=self.block_symbols,
            rounds=rounds if rounds is not None else self.rounds,
            scheme=self.scheme,
        )

    def df_estimator(self) -> EstimatorConfig:
        return replace(self.estimator, samples=min(self.estimator.samples, self.df_samples))


def _parse_sweep(cfg: _Sections, scenario: str) -> tuple[float, ...]:
    values = cfg.get("sweep", "values", str)
    if values is not None:
        items = [v for chunk in values.split(",") for v in chunk.split()]
        if not items:
            raise ConfigError("empty 'values' in [sweep]")
        return tuple(float(v) for v in items)
    start = cfg.get("sweep", "start", float, required=True)
    stop = cfg.get("sweep", "stop", float, required=True)
    step = cfg.get("sweep", "step", float, required=True)
    if step <= 0 or stop < start:
        raise ConfigError("need 'step' > 0 and 'stop' >= 'start' in [sweep]")
    out = []
    x = start
    while x <= stop * (1.0 + 1e-12):
        out.append(round(x, 12))
        x += step
    return tuple(out)


_DIAMOND_SCENARIOS = {"ec_vs_L", "ec_vs_snr_r", "ec_vs_epsilon", "pout_vs_epsilon", "ec_vs_M"}


def load_config(path: str, scenario: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{scenario}'; choose from {', '.join(SCENARIOS)}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = _Sections(parser)

    diamondish = scenario in _DIAMOND_SCENARIOS or (
        scenario == "simulate" and cfg.get("simulate", "target", str, default="onehop") == "diamond"
    )
    t_seconds = cfg.get("system", "t_seconds", float, required=True)
    bandwidth = cfg.get("system", "bandwidth_hz", float, required=True)
    tb = t_seconds * bandwidth
    block_symbols = int(round(tb))
    if block_symbols < 1 or abs(tb - block_symbols) > 1e-6 * max(tb, 1.0):
        raise ConfigError(
            f"'t_seconds' * 'bandwidth_hz' must round to a positive integer, got {tb!r}"
        )
    family = cfg.get("system", "family", lambda s: Family(s.strip().lower()), Family.RAYLEIGH)
    scheme = cfg.get("system", "scheme", lambda s: Scheme(s.strip().lower()), Scheme.HARQ_IR)
    protocol = cfg.get("system", "protocol", lambda s: Protocol(s.strip().lower()), Protocol.IR)
    needs_snr_r = diamondish
    needs_rounds = scenario not in ("ec_vs_M",)
    samples = cfg.get("estimator", "samples", int, 1_000_000)
    seed = cfg.get("estimator", "seed", int, 20170301)
    if seed_override is not None:
        seed = seed_override
    needs_epsilon = scenario not in ("ec_vs_epsilon", "pout_vs_epsilon")
    config = ExperimentConfig(
        scenario=scenario,
        scheme=scheme,
        protocol=protocol,
        family=family,
        nakagami_m=cfg.get("system", "nakagami_m", float, 1.0),
        mean_power=cfg.get("system", "mean_power", float, required=True),
        snr_s_db=cfg.get("system", "snr_s_db", float, required=True),
        snr_r_db=cfg.get("system", "snr_r_db", float, required=needs_snr_r),
        t_seconds=t_seconds,
        bandwidth_hz=bandwidth,
        block_symbols=block_symbols,
        rounds=cfg.get("system", "m_max", int, required=needs_rounds),
        l_bits=cfg.get("system", "l_bits", float, required=(scenario == "simulate")),
        epsilon=cfg.get("constraint", "epsilon", float, required=needs_epsilon, default=0.05),
        d_max_seconds=cfg.get("constraint", "d_max_seconds", float, required=True),
        estimator=EstimatorConfig(samples=samples, seed=seed),
        df_samples=cfg.get("estimator", "df_samples", int, 200_000),
        sweep=() if scenario == "simulate" else _parse_sweep(cfg, scenario),
        sim_target=cfg.get("simulate", "target", str, "onehop"),
        sim_frames=cfg.get("simulate", "frames", int, required=(scenario == "simulate")),
        sim_warmup=cfg.get("simulate", "warmup", int, 10_000),
        sim_arrival_rate=cfg.get(
            "simulate", "arrival_rate", float, required=(scenario == "simulate")
        ),
    )
    return config


# ---------------------------------------------------------------------------
# scenario implementations
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[k]) for k in fields) + "\n")


def _ordered_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))  # map preserves input order


def _row_context(config: ExperimentConfig, **overrides) -> dict:
    ctx = {
        "epsilon": config.epsilon,
        "dmax_s": config.d_max_seconds,
        "snr_s_db": config.snr_s_db,
        "snr_r_db": math.nan if config.snr_r_db is None else config.snr_r_db,
        "rounds": config.rounds,
        "seed": config.estimator.seed,
    }
    ctx.update(overrides)
    return ctx


def _scenario_onehop_ec(config: ExperimentConfig, workers: int) -> list[dict]:
    hop = HopSpec(
        protocol=config.protocol,
        links=(config.link(config.snr_s_db),),
        block_symbols=config.block_symbols,
        packet_bits=1.0,
    )
    sampler = HopSampler(hop, config.rounds, config.estimator)

    def one_theta(theta: float) -> dict:
        if not theta > 0.0:
            raise ConfigError(f"theta sweep values must be > 0, got {theta}")
        builder = lambda l: chain_from_sampler(sampler, l)
        l_opt, rate, pout = optimize_L(builder, theta)
        chain = builder(l_opt)
        ctx = _row_context(config)
        return {
            "scheme": f"onehop_{config.protocol.value}",
            "L": l_opt,
            "case": "onehop",
            "theta1": theta,
            "theta2": math.nan,
            "j1": delay_exponent(chain, theta),
            "j2": math.nan,
            "rate_bps_hz": rate,
            "pout": pout,
            "epsilon": ctx["epsilon"],
            "dmax_s": ctx["dmax_s"],
            "snr_s_db": ctx["snr_s_db"],
            "snr_r_db": ctx["snr_r_db"],
            "M": ctx["rounds"],
            "seed": ctx["seed"],
        }

    return _ordered_map(one_theta, config.sweep, workers)


def _scenario_ec_vs_l(config: ExperimentConfig, workers: int) -> list[dict]:
    if config.scheme != Scheme.HARQ_IR:
        raise ConfigError("'scheme' must be harq_ir for ec_vs_L (the baseline has no packet size)")
    evaluator = DiamondEvaluator(config.diamond(), config.estimator)
    constraint = config.constraint

    def one_l(l_bits: float) -> dict:
        sol = evaluator.solve(l_bits, constraint)
        return solution_row(sol, scheme=config.scheme, **_row_context(config))

    return _ordered_map(one_l, config.sweep, workers)


def _solve_point(
    config: ExperimentConfig,
    scheme: Scheme,
    constraint: DelayConstraint,
    *,
    snr_r_db: Optional[float] = None,
    rounds: Optional[int] = None,
):
    system = replace(
        config.diamond(snr_r_db=snr_r_db, rounds=rounds), scheme=scheme
    )
    if scheme == Scheme.DF_CSI:
        return solve_df(system, constraint, config.df_estimator())
    return optimize_L_diamond(system, constraint, config.estimator)


def _scenario_ec_vs_snr_r(config: ExperimentConfig, workers: int) -> list[dict]:
    constraint = config.constraint

    def one_point(snr_r_db: float) -> list[dict]:
        rows = []
        for scheme in (Scheme.HARQ_IR, Scheme.DF_CSI):
            sol = _solve_point(config, scheme, constraint, snr_r_db=snr_r_db)
            rows.append(
                solution_row(sol, scheme=scheme, **_row_context(config, snr_r_db=snr_r_db))
            )
        return rows

    nested = _ordered_map(one_point, config.sweep, workers)
    return [row for rows in nested for row in rows]


def _scenario_vs_epsilon(config: ExperimentConfig, workers: int, outage_only: bool) -> list[dict]:
    schemes = (Scheme.HARQ_IR,) if outage_only else (Scheme.HARQ_IR, Scheme.DF_CSI)

    def one_point(epsilon: float) -> list[dict]:
        constraint = DelayConstraint(epsilon=epsilon, d_max_blocks=config.d_max_blocks)
        rows = []
        for scheme in schemes:
            sol = _solve_point(config, scheme, constraint)
            rows.append(solution_row(sol, scheme=scheme, **_row_context(config, epsilon=epsilon)))
        return rows

    nested = _ordered_map(one_point, config.sweep, workers)
    return [row for rows in nested for row in rows]


def _scenario_ec_vs_m(config: ExperimentConfig, workers: int) -> list[dict]:
    if config.scheme != Scheme.HARQ_IR:
        raise ConfigError("'scheme' must be harq_ir for ec_vs_M (the baseline does not retransmit)")
    constraint = config.constraint

    def one_point(m_val: float) -> dict:
        rounds = int(m_val)
        if rounds != m_val or rounds < 1:
            raise ConfigError(f"M sweep values must be positive integers, got {m_val}")
        sol = _solve_point(config, Scheme.HARQ_IR, constraint, rounds=rounds)
        return solution_row(sol, scheme=Scheme.HARQ_IR, **_row_context(config, rounds=rounds))

    return _ordered_map(one_point, config.sweep, workers)


def _scenario_simulate(config: ExperimentConfig) -> tuple[tuple[str, ...], list[dict]]:
    if config.sim_target not in ("onehop", "diamond"):
        raise ConfigError(f"invalid value for 'target' in [simulate]: {config.sim_target!r}")
    if config.sim_target == "diamond":
        system = config.diamond()
        sim_config = SimConfig(
            system=system,
            arrival_rate=config.sim_arrival_rate,
            frames=config.sim_frames,
            warmup=config.sim_warmup,
            seed=config.estimator.seed,
            packet_bits=config.l_bits,
            d_max_blocks=config.d_max_blocks,
        )
        report = simulate_diamond(sim_config)
    else:
        hop = HopSpec(
            protocol=config.protocol,
            links=(config.link(config.snr_s_db),),
            block_symbols=config.block_symbols,
            packet_bits=config.l_bits,
        )
        sim_config = SimConfig(
            system=hop,
            arrival_rate=config.sim_arrival_rate,
            frames=config.sim_frames,
            warmup=config.sim_warmup,
            seed=config.estimator.seed,
            rounds=config.rounds,
            d_max_blocks=config.d_max_blocks,
        )
        report = simulate_one_hop(sim_config)
    row = {"target": config.sim_target, **report_row(report)}
    return ("target",) + SIM_FIELDS, [row]


def run(
    scenario: str,
    config_path: str,
    *,
    seed: Optional[int] = None,
    out_dir: str = ".",
    workers: int = 1,
) -> Path:
    """Execute one scenario and write its CSV; returns the artifact path."""
    config = load_config(config_path, scenario, seed_override=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{scenario}.csv"
    if scenario == "simulate":
        fields, rows = _scenario_simulate(config)
    else:
        fields = SOLUTION_FIELDS
        if scenario == "onehop_ec":
            rows = _scenario_onehop_ec(config, workers)
        elif scenario == "ec_vs_L":
            rows = _scenario_ec_vs_l(config, workers)
        elif scenario == "ec_vs_snr_r":
            rows = _scenario_ec_vs_snr_r(config, workers)
        elif scenario == "ec_vs_epsilon":
            rows = _scenario_vs_epsilon(config, workers, outage_only=False)
        elif scenario == "pout_vs_epsilon":
            rows = _scenario_vs_epsilon(config, workers, outage_only=True)
        elif scenario == "ec_vs_M":
            rows = _scenario_ec_vs_m(config, workers)
        else:  # unreachable: load_config validated the scenario
            raise ConfigError(f"unknown scenario '{scenario}'")
    _write_csv(path, fields, rows)
    return path


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="harq-effcap",
        description="Outage effective capacity experiments for HARQ diamond relay systems",
    )
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, help="experiment config file (INI format)")
    parser.add_argument("--seed", type=int, default=None, help="override the estimator seed")
    parser.add_argument("--out", default=".", help="output directory for CSV artifacts")
    parser.add_argument("--workers", type=int, default=1, help="parallel sweep evaluations")
    args = parser.parse_args(argv)
    try:
        path = run(
            args.scenario, args.config, seed=args.seed, out_dir=args.out, workers=args.workers
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
