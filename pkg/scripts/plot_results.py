#!/usr/bin/env python3
"""Plot CSV artifacts produced by the harq-effcap CLI.

Reads the solution-row schema, groups curves by scheme, and picks the x-axis
from the scenario (packet size, relay SNR, epsilon, or M). Matplotlib is a
plotting-only dependency; the core package never imports it.

    python3 scripts/plot_results.py out/ec_vs_L.csv --out fig.png
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

AXES = {
    "ec_vs_L": ("L", "rate_bps_hz", "packet size L (bits)", "outage effective capacity (bps/Hz)"),
    "ec_vs_snr_r": ("snr_r_db", "rate_bps_hz", "relay SNR (dB)", "effective capacity (bps/Hz)"),
    "ec_vs_epsilon": ("epsilon", "rate_bps_hz", "delay violation target", "effective capacity (bps/Hz)"),
    "pout_vs_epsilon": ("epsilon", "pout", "delay violation target", "optimal outage probability"),
    "ec_vs_M": ("M", "rate_bps_hz", "maximum transmissions M", "effective capacity (bps/Hz)"),
    "onehop_ec": ("theta1", "rate_bps_hz", "QoS exponent theta (1/bit)", "effective capacity (bps/Hz)"),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv_path", type=Path)
    parser.add_argument("--out", type=Path, default=None, help="output image path")
    args = parser.parse_args()

    scenario = args.csv_path.stem
    if scenario not in AXES:
        raise SystemExit(f"unknown scenario CSV '{scenario}'; expected one of {sorted(AXES)}")
    x_key, y_key, x_label, y_label = AXES[scenario]

    curves = defaultdict(list)
    with open(args.csv_path) as fh:
        for row in csv.DictReader(fh):
            curves[row["scheme"]].append((float(row[x_key]), float(row[y_key])))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scheme, points in sorted(curves.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=scheme)
    if scenario == "onehop_ec":
        ax.set_xscale("log")
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    out = args.out or args.csv_path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
