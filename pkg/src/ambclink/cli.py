"""Command line front end.

Subcommands: encode, simulate, ber-sweep, decode, listen, theory.  All
randomness hangs off --seed, so any invocation is reproducible; file
outputs are byte-stable for fixed seeds.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from .config import LinkConfig, load_config
from .estio import read_estimates, udp_ingest
from .framing import PAYLOAD_BITS, assemble_frame
from .harness import aggregate_bins, ber_sweep, run_link_trial, \
    theoretical_uncoded_ber, trial_seed, write_report
from .receiver import FrameScanner, scan_series
from .waveform import modulate_frame

ENV_CONFIG = "AMBCLINK_CONFIG"


def _config_from(args) -> LinkConfig:
    path = args.config or os.environ.get(ENV_CONFIG)
    return load_config(path) if path else LinkConfig()


def _payload_bits(args) -> np.ndarray:
    if args.payload_hex is not None:
        digits = args.payload_hex.strip().lower()
        if len(digits) != PAYLOAD_BITS // 4 or set(digits) - set("0123456789abcdef"):
            raise ValueError(f"payload must be {PAYLOAD_BITS // 4} hex digits")
        bits = bin(int(digits, 16))[2:].zfill(PAYLOAD_BITS)
        return np.frombuffer(bits.encode(), np.uint8) - ord("0")
    rng = np.random.default_rng(args.seed)
    return rng.integers(0, 2, PAYLOAD_BITS).astype(np.uint8)


def _payload_hex(bits: np.ndarray) -> str:
    return f"{int(''.join(map(str, bits)), 2):0{bits.size // 4}x}"


def _grid(args) -> list[float]:
    if args.to_db < args.from_db:
        raise ValueError("--to must be >= --from")
    n = int(round((args.to_db - args.from_db) / args.step_db)) + 1
    return [args.from_db + i * args.step_db for i in range(n)]


def _report_line(rep, index: int) -> str:
    return (f"frame {index}: chip {rep.sync.start}, "
            f"crc={'ok' if rep.crc_ok else 'BAD'}, "
            f"snr={rep.snr_db:.1f} dB, payload={_payload_hex(rep.payload)}")


def cmd_encode(args) -> int:
    cfg = _config_from(args)
    payload = _payload_bits(args)
    frame = assemble_frame(payload, cfg.code_spec())
    chips = modulate_frame(frame, cfg.fsk_spec())
    with open(args.out, "wb") as fh:
        fh.write(chips.astype(np.uint8).tobytes())
    print(f"payload {_payload_hex(payload)}: {frame.size} symbols, "
          f"{chips.size} chips -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    records = [run_link_trial(cfg, args.ebn0_db, trial_seed(args.seed, 0, t),
                              coded=args.mode == "coded")
               for t in range(args.trials)]
    bits = sum(r.info_bits for r in records if r.synced)
    errs = sum(r.bit_errors for r in records if r.synced)
    synced = sum(r.synced for r in records)
    crc = sum(r.crc_ok for r in records)
    ber = errs / bits if bits else math.nan
    print(f"{args.trials} {args.mode} trials at {args.ebn0_db} dB: "
          f"synced {synced}, crc_ok {crc}, ber {ber:.3e} "
          f"({errs}/{bits} bits)")
    if args.out:
        write_report(aggregate_bins(records), args.out)
        print(f"bins -> {args.out}")
    return 0


def cmd_ber_sweep(args) -> int:
    cfg = _config_from(args)
    bins = ber_sweep(cfg, _grid(args), args.trials, args.parallelism,
                     master_seed=args.seed, coded=args.mode == "coded")
    write_report(bins, args.out)
    print(f"{len(bins)} bins -> {args.out}")
    return 0


def cmd_decode(args) -> int:
    series = read_estimates(args.input)
    cfg = _config_from(args)
    reports = scan_series(series, cfg.fsk_spec(), cfg.sync_threshold)
    for i, rep in enumerate(reports):
        print(_report_line(rep, i))
    print(f"{len(reports)} frame(s) decoded")
    return 0


def cmd_listen(args) -> int:
    cfg = _config_from(args)
    scanner = FrameScanner(cfg.fsk_spec(), cfg.sync_threshold)
    count = 0

    def handle(kind, payload) -> None:
        nonlocal count
        if kind == "gap":
            print(f"gap: {payload} datagram(s) lost, sync reset")
            scanner.reset()
            return
        for rep in scanner.feed(payload):
            print(_report_line(rep, count))
            count += 1

    stats = udp_ingest(args.port, handle,
                       idle_timeout_s=args.timeout_s,
                       stop=(lambda: count >= args.max_frames)
                       if args.max_frames else None)
    for rep in scanner.flush():
        print(_report_line(rep, count))
        count += 1
    print(f"{stats.datagrams} datagrams, {stats.samples} samples, "
          f"{stats.gaps} gap(s), {count} frame(s)")
    return 0


def cmd_theory(args) -> int:
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(("ebn0_db", "uncoded_ber"))
        for db in _grid(args):
            out.writerow((repr(db), repr(theoretical_uncoded_ber(db))))
    print(f"{len(_grid(args))} rows -> {args.out}")
    return 0


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--from", dest="from_db", type=float, required=True)
    p.add_argument("--to", dest="to_db", type=float, required=True)
    p.add_argument("--step", dest="step_db", type=float, default=0.25)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ambclink",
        description="Backscatter-over-channel-estimates link tools")
    top.add_argument("--seed", type=int, default=0)
    top.add_argument("--config", help=f"key=value config file "
                     f"(or ${ENV_CONFIG})")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="payload bits to a chip file")
    p.add_argument("--payload-hex", help="20 hex digits; random if omitted")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("simulate", help="Monte Carlo trials at one Eb/N0")
    p.add_argument("--ebn0-db", type=float, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--mode", choices=("coded", "uncoded"), default="coded")
    p.add_argument("--out", help="optional CSV of the SNR bins")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("ber-sweep", help="BER vs Eb/N0 sweep to CSV")
    _add_grid_flags(p)
    p.add_argument("--trials", type=int, required=True,
                   help="trials per grid point")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--mode", choices=("coded", "uncoded"), default="coded")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ber_sweep)

    p = sub.add_parser("decode", help="decode an estimate file")
    p.add_argument("input")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("listen", help="decode a live UDP estimate stream")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--timeout-s", type=float, default=None,
                   help="exit after this much idle time")
    p.add_argument("--max-frames", type=int, default=None)
    p.set_defaults(fn=cmd_listen)

    p = sub.add_parser("theory", help="reference uncoded BER curve to CSV")
    _add_grid_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_theory)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
