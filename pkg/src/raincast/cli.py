"""Command-line interface.

Subcommands:
    ingest       parse one configured city and cache it as versioned JSON
    train        fit an expert model for a city, writing checkpoint + history
    climatology  export a city's baseline mean/std/support as CSV
    prompt       render an experiment prompt to stdout (no network)
    run          execute a full experiment from a TOML/JSON config
    evaluate     score a stored run against an observations file
    report       re-emit metrics/charts from a stored run directory

Exit codes: 0 success, 1 when a run recorded failures, 2 on bad usage or
configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from .checkpoint import save_checkpoint
from .climatology import build_climatology
from .em_model import init_model
from .errors import ConfigError, RaincastError
from .prompts import KINDS, PromptSpec, render_prompt
from .report import ReportBundle, city_slug, emit_report
from .runner import (
    ExperimentConfig,
    _cut_before,
    _load_city_series,
    derive_seed,
    evaluate_run,
    run_experiment,
    target_period,
)
from .series import (
    aggregate_monthly,
    chrono_split,
    fit_scaler,
    make_windows,
    training_span,
)
from .training import history_to_csv, train

log = logging.getLogger(__name__)


def _find_city(cfg: ExperimentConfig, name: str):
    for c in cfg.cities:
        if c.name == name:
            return c
    raise ConfigError(f"city {name!r} is not in the config")


def _city_timeseries(cfg: ExperimentConfig, name: str):
    series = _load_city_series(_find_city(cfg, name))
    ts_full = (
        series.to_timeseries()
        if cfg.scale == "short"
        else aggregate_monthly(series, cfg.min_valid_fraction)
    )
    return series, _cut_before(ts_full, cfg.as_of)


def cmd_ingest(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    series, _ = _city_timeseries(cfg, args.city)
    out = Path(args.out or f"{city_slug(args.city)}_series.json")
    out.write_text(series.to_json())
    print(f"wrote {out} ({len(series)} days)")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    _, ts = _city_timeseries(cfg, args.city)
    target = args.target
    features = ("tmin", "tmax", "prcp") if target == "prcp" else ("tmin", "tmax")
    idx = [ts.feature_names.index(f) for f in features]
    from .series import TimeSeries

    sub = TimeSeries(ts.frequency, ts.stamps, features, ts.values[:, idx])
    span = training_span(sub, cfg.input_len, cfg.horizon, cfg.train_frac)
    scaler = fit_scaler(sub, span)
    ds = make_windows(scaler.transform_series(sub), cfg.input_len, cfg.horizon, target, scaler)
    train_ds, val_ds = chrono_split(ds, cfg.train_frac)
    seed = derive_seed(cfg.train.seed, args.city, target)
    model = init_model(len(features), cfg.hidden, cfg.horizon, seed)
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    best, history = train(model, train_ds, val_ds, train_cfg)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / f"{city_slug(args.city)}__{target}.json"
    save_checkpoint(
        best, None, train_cfg, ckpt,
        scaler=scaler, feature_names=features, target_feature=target,
        data_span={"start": ts.stamps[0].isoformat(), "end": ts.stamps[-1].isoformat(),
                   "frequency": ts.frequency},
        meta={"city": args.city},
    )
    (out_dir / f"{city_slug(args.city)}__{target}_history.csv").write_text(
        history_to_csv(history)
    )
    final = history[-1] if history else None
    print(f"wrote {ckpt}" + (f" (val mse {final.val_mse:.6g})" if final else ""))
    return 0


def cmd_climatology(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    _, ts = _city_timeseries(cfg, args.city)
    clim = build_climatology(ts, cfg.as_of, cfg.climatology_window_years, "prcp")
    text = clim.to_csv()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_prompt(args) -> int:
    as_of = dt.date(2023, 9, 30)
    if args.config:
        as_of = ExperimentConfig.from_file(args.config).as_of
    payload = {}
    if args.payload:
        payload = json.loads(Path(args.payload).read_text())
    spec = PromptSpec(
        kind=args.kind,
        city=args.city,
        period=target_period(args.scale, as_of),
        granularity="daily" if args.scale == "short" else "monthly",
        payload=payload,
    )
    sys.stdout.write(render_prompt(spec) + "\n")
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    bundle = run_experiment(cfg)
    for line in _summary_lines(bundle):
        print(line)
    if bundle.failures:
        print(f"{len(bundle.failures)} failure(s) recorded", file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(args) -> int:
    bundle = evaluate_run(args.run_dir, args.observations)
    for line in _summary_lines(bundle):
        print(line)
    return 0


def cmd_report(args) -> int:
    bundle = ReportBundle.load(args.run_dir)
    formats = tuple(args.formats.split(","))
    written = emit_report(bundle, args.run_dir, formats)
    print(f"wrote {len(written)} file(s) under {args.run_dir}")
    return 0


def _summary_lines(bundle: ReportBundle) -> list[str]:
    lines = []
    for source in sorted(bundle.summary, key=lambda s: s):
        s = bundle.summary[source]
        pearson = "n/a" if s.pearson is None else f"{s.pearson:.4f}"
        nse = "n/a" if s.nse is None else f"{s.nse:.4f}"
        lines.append(
            f"{source:10s} rmse {s.rmse:.4f}  pearson {pearson}  nse {nse}  "
            f"({s.n_cities} cities)"
        )
    return lines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raincast", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and cache one city's series")
    p.add_argument("--config", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit an expert model and write a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--target", choices=("prcp", "tmin", "tmax"), default="prcp")
    p.add_argument("--out-dir", default="checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("climatology", help="export baseline mean/std as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_climatology)

    p = sub.add_parser("prompt", help="render an experiment prompt to stdout")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--city", required=True)
    p.add_argument("--scale", choices=("short", "long"), default="short")
    p.add_argument("--config")
    p.add_argument("--payload", help="JSON file with payload vectors")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("run", help="execute a full experiment")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score a stored run against observations")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--observations", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-emit outputs from a stored run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--formats", default="csv,json,svg")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RaincastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
