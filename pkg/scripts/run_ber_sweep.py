#!/usr/bin/env python3
"""Reproduce the headline BER curves: coded and uncoded sweeps plus the
closed-form uncoded reference, written as CSVs and (optionally) one PNG.

The defaults give curves good enough to read the ~6 dB coding gain off
the plot in a few minutes of desk time; crank --trials for smoother
tails.  Output lands in --out-dir (default ./sweep_out).
"""

import argparse
import csv
import math
import sys
import time
from pathlib import Path

from ambclink.config import LinkConfig, load_config
from ambclink.harness import ber_sweep, theoretical_uncoded_ber, write_report


def frange(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def run(label, config, grid, trials, parallelism, seed, coded, out_dir):
    t0 = time.monotonic()
    bins = ber_sweep(config, grid, trials, parallelism=parallelism,
                     master_seed=seed, coded=coded)
    path = out_dir / f"ber_{label}.csv"
    write_report(bins, path)
    dt = time.monotonic() - t0
    print(f"{label}: {len(bins)} bins -> {path} ({dt:.1f} s)")
    return bins


def crossing(bins, target=1e-3):
    """Eb/N0 at which the binned curve crosses target, or None."""
    pts = [(0.5 * (b.bin_low_db + b.bin_high_db), b.ber)
           for b in bins if b.n_bits and b.ber > 0]
    for (d0, b0), (d1, b1) in zip(pts, pts[1:]):
        if b0 >= target >= b1:
            x = (math.log(b0) - math.log(target)) / (math.log(b0) - math.log(b1))
            return d0 + x * (d1 - d0)
    return None


def maybe_plot(out_dir, coded_bins, uncoded_bins):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping plot", file=sys.stderr)
        return
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, bins, marker in (("coded", coded_bins, "o"),
                                ("uncoded", uncoded_bins, "s")):
        xs = [0.5 * (b.bin_low_db + b.bin_high_db) for b in bins if b.n_bits]
        ys = [b.ber for b in bins if b.n_bits]
        ax.semilogy(xs, ys, marker + "-", label=label, markersize=4)
    ref = [x * 0.1 for x in range(0, 141)]
    ax.semilogy(ref, [theoretical_uncoded_ber(x) for x in ref],
                "k--", linewidth=1, label="uncoded theory")
    ax.axhline(1e-3, color="gray", linewidth=0.6)
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BER")
    ax.set_ylim(1e-5, 1)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = out_dir / "ber_curves.png"
    fig.savefig(path, dpi=150)
    print(f"plot -> {path}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--trials", type=int, default=400,
                    help="frames per grid point (default 400)")
    ap.add_argument("--parallelism", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out-dir", default="sweep_out")
    ap.add_argument("--no-plot", action="store_true")
    args = ap.parse_args(argv)

    config = load_config(args.config) if args.config else LinkConfig()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    coded = run("coded", config, frange(3.0, 6.0, 0.25), args.trials,
                args.parallelism, args.seed, True, out_dir)
    uncoded = run("uncoded", config, frange(6.0, 13.0, 0.5), args.trials,
                  args.parallelism, args.seed, False, out_dir)

    c_cross, u_cross = crossing(coded), crossing(uncoded)
    if c_cross is not None and u_cross is not None:
        print(f"BER=1e-3 crossings: uncoded {u_cross:.2f} dB, "
              f"coded {c_cross:.2f} dB, gain {u_cross - c_cross:.2f} dB")
    else:
        print("BER=1e-3 crossing not bracketed; raise --trials or widen grid")

    summary = out_dir / "crossings.csv"
    with open(summary, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["curve", "crossing_db_at_1e-3"])
        w.writerow(["uncoded", "" if u_cross is None else repr(u_cross)])
        w.writerow(["coded", "" if c_cross is None else repr(c_cross)])

    if not args.no_plot:
        maybe_plot(out_dir, coded, uncoded)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
