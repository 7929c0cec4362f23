"""Command-line entry point.

    cqggadmm run --spec FILE [--out DIR] [--seed N]
    cqggadmm solve-reference --spec FILE
    cqggadmm plot --dir DIR

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_spec
from .errors import CQGGADMMError, NumericError
from .experiment import ExperimentError, prepare, render_plots, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("cqggadmm")


def _cmd_run(args) -> int:
    spec = parse_spec(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    summary = run_experiment(spec, output_dir=args.out)
    for o in summary.outcomes:
        last = o.rows[-1] if o.rows else None
        gap = f"{last.gap:.3e}" if last else "n/a"
        bits = last.bits_cum if last else 0
        print(f"{o.variant:10s} iters={len(o.rows):6d} gap={gap} bits={bits} stop={o.stop_reason}")
    print(f"results in {summary.output_dir}")
    return EXIT_OK


def _cmd_solve_reference(args) -> int:
    spec = parse_spec(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    _, objectives, reference = prepare(spec)
    optimum = sum(obj.value(reference) for obj in objectives)
    print(f"# optimal objective {optimum:.12g}")
    print("index,theta")
    for i, v in enumerate(reference):
        print(f"{i},{v:.17g}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    written = render_plots(args.dir)
    if not written:
        print(f"no plot_*.csv files in {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqggadmm", description="Censored/quantized group ADMM simulator"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every configured algorithm and write CSV results")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("solve-reference", help="print the centralized solution")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_solve_reference)

    p = sub.add_parser("plot", help="render plot_*.csv files as PNG charts")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, NumericError) else EXIT_CONFIG
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CQGGADMMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
