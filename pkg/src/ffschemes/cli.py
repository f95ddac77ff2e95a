"""``ffs`` command-line front end.

Exit codes: 0 success or certified, 1 refuted or mismatch, 2 usage or parse
error, 3 resource limit (enumeration too large).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import sys
from pathlib import Path

from . import __version__
from .diversity import DEFAULT_BUDGET, certify_full_diversity
from .errors import BitrateMismatch, EnumerationTooLarge, FFSError, SlopeUndefined
from .schemefile import load_scheme
from .simulator import (
    SimConfig,
    default_workers,
    estimate_diversity_slope,
    read_csv,
    run_ber,
    write_csv,
    write_plot_data,
)

EXIT_OK, EXIT_REFUTED, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

# (family, Nt, N, T, R) with symbolic entries where the family is parametric
SCHEME_TABLE = [
    ("golden_thread", "2", "2", "1", "2"),
    ("t1", "Nt", "Nt", "1", "Nt"),
    ("threaded", "Nt", "N", "T", "Nt"),
    ("antenna_selection", "Nt", "Nt", "1", "1"),
    ("beamforming", "Nt", "N", "1", "1"),
    ("heath_paulraj", "2", "N", "1", "1"),
    ("switching", "2", "2", "2", "1|2"),
    ("alamouti", "2", "1", "2", "1"),
    ("spatial_multiplexing", "Nt", "1", "T", "Nt"),
]


class UsageError(Exception):
    pass


def parse_snr_range(text: str) -> tuple:
    """``a:b:step`` to the inclusive list ``a, a + step, ..., <= b``."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"invalid SNR range {text!r}") from None
    if len(vals) == 1:
        return (vals[0],)
    if len(vals) != 3:
        raise UsageError(f"SNR range must be a:b:step, got {text!r}")
    a, b, step = vals
    if step <= 0 or b < a:
        raise UsageError(f"invalid SNR range {text!r}: need step > 0 and b >= a")
    count = int((b - a) / step + 1e-9) + 1
    return tuple(round(a + i * step, 10) for i in range(count))


def parse_window(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"window must be lo:hi, got {text!r}") from None
    if not lo < hi:
        raise UsageError(f"window needs lo < hi, got {text!r}")
    return lo, hi


def _manifest(args, specs) -> dict:
    return {
        "command": args.command,
        "specs": " ".join(str(s) for s in specs),
        "tool": f"ffschemes {__version__}",
        "seed": args.seed,
        "config": (f"snr={args.snr} nr={args.nr} trials={args.trials} "
                   f"target_errors={args.target_errors} workers={args.workers}"),
        "snr_definition": "E/N0 with E||X||_F^2 = T per codeword and noise variance N0 per entry",
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def cmd_schemes(args) -> int:
    rows = [r for r in SCHEME_TABLE if not args.filter or args.filter in r[0]]
    print("family Nt N T R")
    for r in rows:
        print(" ".join(r))
    return EXIT_OK


def cmd_certify(args) -> int:
    scheme = load_scheme(args.spec)
    if args.samples is not None:
        if args.seed is None:
            raise UsageError("--samples needs --seed")
        mode, samples = "sampled", args.samples
    else:
        mode, samples = "exhaustive", 0
    try:
        cert = certify_full_diversity(scheme, mode=mode, budget=args.budget, seed=args.seed,
                                      samples=samples or 1, workers=args.workers)
    except EnumerationTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: the exhaustive scan exceeds --budget; use --samples N --seed S "
              "for a sampled check", file=sys.stderr)
        return EXIT_RESOURCE
    print(f"scheme={scheme.label}")
    print(cert.summary())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["mode", "min_rank", "lambda_star", "stacks_checked", "counterexample_present"])
            wr.writerow([cert.mode, cert.min_rank, repr(cert.lambda_star), cert.stacks_checked,
                         "true" if cert.counterexample is not None else "false"])
    return EXIT_REFUTED if cert.refuted else EXIT_OK


def _config(args) -> SimConfig:
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    return SimConfig(parse_snr_range(args.snr), args.trials, args.target_errors,
                     seed=args.seed, workers=args.workers)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    scheme = load_scheme(args.spec)
    res = run_ber(scheme, args.nr, cfg)
    man = _manifest(args, [args.spec])
    write_csv([res], args.out, man)
    if args.plot_data:
        write_plot_data([res], args.plot_data, man)
    for p in res.points:
        print(f"{p.snr_db:g} dB: ber={p.ber:.4g} ({p.bit_errors}/{p.bits}, trials={p.trials})")
    return EXIT_OK


def ordering_summary(results) -> list:
    """Per SNR, the scheme with the lowest BER and whether its CI separates."""
    lines = []
    snrs = sorted({p.snr_db for r in results for p in r.points})
    for s in snrs:
        pts = [(r.scheme, p) for r in results for p in r.points if p.snr_db == s]
        if len(pts) < 2:
            continue
        pts.sort(key=lambda x: x[1].ber)
        best, bp = pts[0]
        sep = all(bp.ci95_high < q.ci95_low for _, q in pts[1:])
        lines.append(f"snr={s:g} best={best} ber={bp.ber:.4g} "
                     f"{'separated' if sep else 'inconclusive'}")
    return lines


def cmd_compare(args) -> int:
    cfg = _config(args)
    schemes = [load_scheme(p) for p in args.specs]
    rates = {s.label: s.bpcu for s in schemes}
    if len({round(v, 9) for v in rates.values()}) > 1:
        listing = ", ".join(f"{k}: {v:g} bpcu" for k, v in rates.items())
        raise BitrateMismatch(f"schemes differ in bitrate ({listing})")
    results = [run_ber(s, args.nr, cfg) for s in schemes]
    man = _manifest(args, args.specs)
    write_csv(results, args.out, man)
    if args.plot_data:
        write_plot_data(results, args.plot_data, man)
    for line in ordering_summary(results):
        print(line)
    return EXIT_OK


def cmd_slope(args) -> int:
    results = read_csv(args.input)
    if args.scheme:
        results = [r for r in results if r.scheme == args.scheme]
        if not results:
            raise UsageError(f"scheme {args.scheme!r} not in {args.input}")
    lo_hi = parse_window(args.ber_window)
    status = EXIT_OK
    for r in results:
        try:
            s = estimate_diversity_slope(r, ber_window=lo_hi, min_errors=args.min_errors)
            print(f"{r.scheme} slope={s:.4f}")
        except SlopeUndefined as exc:
            print(f"{r.scheme} slope=undefined ({exc})", file=sys.stderr)
            status = EXIT_REFUTED
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffs", description="Finite feedback scheme toolkit")
    p.add_argument("--version", action="version", version=f"ffs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("schemes", help="list built-in scheme families")
    sp.add_argument("filter", nargs="?", default="")
    sp.set_defaults(func=cmd_schemes)

    sp = sub.add_parser("certify", help="certify full diversity of a scheme")
    sp.add_argument("spec")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true")
    g.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    sp.add_argument("--workers", type=int, default=default_workers())
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_certify)

    def sim_flags(sp):
        sp.add_argument("--snr", required=True, help="a:b:step in dB")
        sp.add_argument("--nr", type=int, required=True)
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--trials", type=int, default=100_000, help="max trials per SNR point")
        sp.add_argument("--target-errors", type=int, default=200)
        sp.add_argument("--out", required=True)
        sp.add_argument("--plot-data")
        sp.add_argument("--workers", type=int, default=default_workers())

    sp = sub.add_parser("simulate", help="BER simulation of one scheme")
    sp.add_argument("spec")
    sim_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="BER comparison of equal-bitrate schemes")
    sp.add_argument("specs", nargs="+")
    sim_flags(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("slope", help="fit the diversity slope of a results CSV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--ber-window", required=True, help="lo:hi")
    sp.add_argument("--scheme")
    sp.add_argument("--min-errors", type=int, default=1)
    sp.set_defaults(func=cmd_slope)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ffs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationTooLarge as exc:
        print(f"ffs: error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except BitrateMismatch as exc:
        print(f"ffs: error: {exc}", file=sys.stderr)
        return EXIT_REFUTED
    except (FFSError, OSError, ValueError) as exc:
        print(f"ffs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
