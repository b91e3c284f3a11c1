"""Command-line entry point: ``aisforge <verb> [options]``.

Verbs: ``run``, ``compare-freq``, ``plot-data``, ``validate`` and ``synth``.
Exit codes: 0 success, 1 invalid config or arguments, 2 partial failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .config import load_config
from .data import Frequency, rebuild_prices
from .errors import ConfigError, InvalidParameters, UnknownRunId
from .experiment import EXIT_OK, EXIT_VALIDATION, emit_plot_data, run_experiment, run_frequency_comparison
from .synthetic import KINDS, GeneratorSpec, generate, make_timestamps

logger = logging.getLogger("aisforge")


def _csv_list(s: str | None) -> list[str] | None:
    return None if s is None else [x.strip() for x in s.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="experiment YAML file")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for strategy runs")
    p.add_argument("--models", help="comma-separated subset of models")
    p.add_argument("--assets", help="comma-separated subset of assets")


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except ValueError:
        return k, v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aisforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    _common(sub.add_parser("run", help="run the experiment matrix"))
    _common(sub.add_parser("compare-freq", help="daily vs hourly comparison for configured pairs"))
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)

    pd_ = sub.add_parser("plot-data", help="wide equity-line CSVs from stored runs")
    pd_.add_argument("--config", help="take figures from this config")
    pd_.add_argument("--out", help="experiment output directory holding runs/")
    pd_.add_argument("--runs", help="comma-separated run directory names for a single figure")
    pd_.add_argument("--name", default="figure", help="figure name used with --runs")
    pd_.add_argument("--dest", help="directory for the figure CSVs")

    s = sub.add_parser("synth", help="write a synthetic price CSV")
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--length", type=int, default=1000, help="number of returns")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frequency", default="daily", choices=[f.value for f in Frequency])
    s.add_argument("--start", default="2000-01-03")
    s.add_argument("--asset-id", default="SYN")
    s.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                   help="generator parameter; values are read as JSON when possible")
    s.add_argument("--out", required=True, help="CSV path (timestamp, close)")
    return parser


def _synth(args) -> int:
    spec = GeneratorSpec(args.kind, dict(args.param), args.length, args.seed, Frequency(args.frequency),
                         args.asset_id, args.start)
    try:
        g = generate(spec)
    except InvalidParameters as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    prices = rebuild_prices(g.returns)
    # One more stamp than returns: the first price opens the series.
    ts = make_timestamps(len(prices), spec.frequency, spec.start)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"timestamp": pd.to_datetime(ts).strftime("%Y-%m-%dT%H:%M:%S"), "close": prices}).to_csv(
        out, index=False, float_format="%.17g", lineterminator="\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")

    if args.verb == "synth":
        return _synth(args)

    if args.verb == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"{args.config}: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"{args.config}: ok ({len(cfg.assets)} assets, {len(cfg.models)} models, {len(cfg.seeds)} seeds)")
        return EXIT_OK

    if args.verb == "plot-data":
        try:
            if args.runs:
                figures = {args.name: _csv_list(args.runs)}
                out = Path(args.out or ".")
            elif args.config:
                cfg = load_config(args.config)
                figures, out = cfg.figures, Path(args.out or cfg.output_dir)
            else:
                print("plot-data needs --runs or --config", file=sys.stderr)
                return EXIT_VALIDATION
            for p in emit_plot_data(out, figures, args.dest):
                print(p)
        except (ConfigError, UnknownRunId) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        return EXIT_OK

    overrides = dict(out=args.out, seed=args.seed, models=_csv_list(args.models), assets=_csv_list(args.assets))
    try:
        load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.verb == "run":
        res = run_experiment(args.config, jobs=max(1, args.jobs), **overrides)
    else:
        overrides.pop("models")
        res = run_frequency_comparison(args.config, **overrides)
    for f in res.failures:
        print(f"failed: {f.asset} {f.model} seed={f.seed}: {f.error}", file=sys.stderr)
    if res.status == EXIT_OK:
        print(res.output_dir)
    return res.status


if __name__ == "__main__":
    sys.exit(main())
