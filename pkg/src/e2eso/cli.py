"""``e2eso`` command line.

    e2eso <experiment> [--config cfg.json] [--seed N] [--eps R] [--paper-scale]
          [--data synthetic|csv:<path>] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 training divergence.
"""
import argparse
import logging
import sys

from . import experiments, reporting
from .errors import E2ESOError


def build_parser():
    ap = argparse.ArgumentParser(prog="e2eso", description="Run an end-to-end learning experiment.")
    ap.add_argument("experiment", choices=experiments.EXPERIMENTS)
    ap.add_argument("--config", help="JSON file with an ExperimentConfig")
    ap.add_argument("--seed", type=int, help="base seed (overrides the config)")
    ap.add_argument("--eps", type=float, help="KL ambiguity radius (default 0.025)")
    ap.add_argument("--paper-scale", action="store_true",
                    help="use the full sample sizes instead of the desk-scale defaults")
    ap.add_argument("--data", help="'synthetic' (default) or 'csv:<path>' for dispatch")
    ap.add_argument("--out", help="output directory (default: results)")
    ap.add_argument("--strategies", help="comma-separated subset of strategies")
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    ap.add_argument("-q", "--quiet", action="store_true", help="print nothing on success")
    return ap


def config_from_args(args):
    d = {}
    if args.config:
        d = experiments.ExperimentConfig.from_json(args.config).to_dict()
        if d["experiment"] != args.experiment:
            raise experiments.ConfigError(
                f"config is for {d['experiment']!r} but {args.experiment!r} was requested")
    d["experiment"] = args.experiment
    for key in ("seed", "eps", "data", "out"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if args.paper_scale:
        d["paper_scale"] = True
    if args.strategies:
        d["strategies"] = [s.strip() for s in args.strategies.split(",") if s.strip()]
    return experiments.ExperimentConfig.from_dict(d)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        report = experiments.run(config)
        paths = reporting.emit_outputs(report, config.out, config)
    except E2ESOError as exc:
        print(f"e2eso: error: {exc}", file=sys.stderr)
        return exc.exit_code
    if not args.quiet:
        print(reporting.format_text(report))
        print(f"wrote {len(paths)} files to {config.out}")
    return 0
