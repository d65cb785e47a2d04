"""End-to-end experiment orchestration.

A run executes, per city: ingest -> dataset build -> (train or load)
expert models -> expert forecast; climatology mean/std; prompt render ->
backend query -> numeric parse for each requested experiment; fusion;
metrics against observed values when supplied. Every intermediate is
persisted under the run directory, and partial failures are recorded
without aborting the remaining cities.
"""

from __future__ import annotations

import calendar
import dataclasses
import datetime as dt
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from csv import DictReader
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .climatology import baseline_forecast, build_climatology
from .em_model import ModelError, init_model, predict
from .errors import ConfigError, RaincastError
from .fusion import FusionConfig, fuse, fusion_trace
from .ingest import (
    CitySeries,
    CsvSchema,
    TeleconnectionSeries,
    build_city_series,
    load_csv_series,
    parse_ghcn_dly,
    parse_index_table,
)
from .llm import (
    FixtureStore,
    HarnessError,
    LlmBackendConfig,
    make_backend,
    prompt_hash,
    request_forecast,
)
from .metrics import MetricReport, metric_report, pearson, summarize
from .prompts import PromptSpec, render_prompt
from .report import ReportBundle, city_slug, emit_report
from .series import (
    TimeSeries,
    aggregate_monthly,
    chrono_split,
    fit_scaler,
    make_windows,
    training_span,
)
from .training import TrainConfig, history_to_csv, train

log = logging.getLogger(__name__)

ALL_SOURCES = ("EM", "Baseline", "Exp1", "Exp2", "Exp3", "Exp4", "Exp5", "Fusion")
_EXP_KINDS = {"Exp1": "exp1", "Exp2": "exp2", "Exp3": "exp3", "Exp4": "exp4", "Exp5": "exp5"}
INDEX_NAMES = ("Nino3.4", "PDO", "NAO")

MANIFEST_NOTES = (
    "monthly precipitation is the present-day sum rescaled to the full month length",
    "train/validation split is by window origin; input spans may overlap the boundary",
    "long-scale prompts carry 12 monthly values; short-scale prompts carry 15 daily values",
    "all rainfall values are mm, all temperatures degC",
)


@dataclass
class CityDataConfig:
    name: str
    ghcn_path: str | None = None
    station_id: str | None = None
    csv_path: str | None = None
    csv_schema: dict | None = None
    start: dt.date | None = None
    end: dt.date | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "CityDataConfig":
        d = dict(d)
        for key in ("start", "end"):
            if isinstance(d.get(key), str):
                d[key] = dt.date.fromisoformat(d[key])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown city keys: {sorted(unknown)}")
        if "name" not in d:
            raise ConfigError("city entry needs a name")
        return cls(**d)


@dataclass
class ExperimentConfig:
    cities: list[CityDataConfig]
    scale: str = "short"  # short (daily, H=15) | long (monthly, H=12)
    as_of: dt.date = dt.date(2023, 9, 30)
    sources: tuple[str, ...] = ("EM", "Baseline", "Exp1", "Exp2")
    backend: LlmBackendConfig = field(default_factory=lambda: LlmBackendConfig(mode="echo_payload"))
    train: TrainConfig = field(default_factory=TrainConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    seed: int = 42
    output_dir: str = "runs"
    run_name: str | None = None
    observations_path: str | None = None
    index_paths: dict = field(default_factory=dict)
    min_valid_fraction: float = 0.8
    climatology_window_years: int = 30
    input_len: int = 60
    hidden: int = 128
    train_frac: float = 0.8
    checkpoint_dir: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.scale not in ("short", "long"):
            raise ConfigError(f"scale must be short or long, not {self.scale!r}")
        if not self.cities:
            raise ConfigError("no cities configured")
        bad = [s for s in self.sources if s not in ALL_SOURCES]
        if bad:
            raise ConfigError(f"unknown sources {bad}; valid: {list(ALL_SOURCES)}")
        if "Exp4" in self.sources:
            if self.scale != "long":
                raise ConfigError("Exp4 uses monthly teleconnection indices; scale must be long")
            missing = [n for n in INDEX_NAMES if n not in self.index_paths]
            if missing:
                raise ConfigError(f"Exp4 needs index_paths for {missing}")
        names = [c.name for c in self.cities]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate city names")
        for c in self.cities:
            has_ghcn = bool(c.ghcn_path and c.station_id)
            has_csv = bool(c.csv_path and c.csv_schema)
            if not (has_ghcn or has_csv):
                raise ConfigError(
                    f"{c.name}: needs ghcn_path+station_id or csv_path+csv_schema"
                )

    @property
    def horizon(self) -> int:
        return 15 if self.scale == "short" else 12

    @property
    def granularity(self) -> str:
        return "daily" if self.scale == "short" else "monthly"

    def period(self) -> list[dt.date]:
        return target_period(self.scale, self.as_of)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            cities = [CityDataConfig.from_dict(c) for c in d.pop("cities", [])]
            backend = LlmBackendConfig(**d.pop("backend", {"mode": "echo_payload"}))
            train_cfg = TrainConfig.from_dict(d.pop("train", {}))
            fusion_cfg = FusionConfig(**d.pop("fusion", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if isinstance(d.get("as_of"), str):
            d["as_of"] = dt.date.fromisoformat(d["as_of"])
        if "sources" in d:
            d["sources"] = tuple(d["sources"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(cities=cities, backend=backend, train=train_cfg, fusion=fusion_cfg, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        if path.suffix == ".json":
            raw = json.loads(text)
        else:
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            raw = tomllib.loads(text)
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "cities": [dataclasses.asdict(c) for c in self.cities],
            "scale": self.scale,
            "as_of": self.as_of.isoformat(),
            "sources": list(self.sources),
            "backend": self.backend.to_dict(),
            "train": self.train.to_dict(),
            "fusion": self.fusion.to_dict(),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "run_name": self.run_name,
            "observations_path": self.observations_path,
            "index_paths": dict(self.index_paths),
            "min_valid_fraction": self.min_valid_fraction,
            "climatology_window_years": self.climatology_window_years,
            "input_len": self.input_len,
            "hidden": self.hidden,
            "train_frac": self.train_frac,
            "checkpoint_dir": self.checkpoint_dir,
            "workers": self.workers,
        }


def _next_month(d: dt.date) -> dt.date:
    return dt.date(d.year + (d.month == 12), d.month % 12 + 1, 1)


def target_period(scale: str, as_of: dt.date) -> list[dt.date]:
    """Target stamps immediately following as_of: 15 days or 12 months."""
    if scale == "short":
        return [as_of + dt.timedelta(days=i + 1) for i in range(15)]
    month = _next_month(dt.date(as_of.year, as_of.month, 1))
    out = []
    for _ in range(12):
        out.append(month)
        month = _next_month(month)
    return out


def derive_seed(base: int, *parts: str) -> int:
    """Stable per-(city, target) seed so cities stay independent."""
    key = "|".join((str(base),) + parts)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big")


def load_observations(path, frequency: str) -> dict[str, dict[dt.date, float]]:
    """Observed rainfall: CSV with columns city, stamp, prcp_mm.

    Daily stamps are YYYY-MM-DD; monthly stamps may be YYYY-MM.
    """
    out: dict[str, dict[dt.date, float]] = {}
    with open(path, newline="") as fh:
        reader = DictReader(fh)
        required = {"city", "stamp", "prcp_mm"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"observations file missing columns {sorted(missing)}")
        for row in reader:
            stamp_text = row["stamp"].strip()
            if frequency == "monthly" and len(stamp_text) == 7:
                stamp_text += "-01"
            stamp = dt.date.fromisoformat(stamp_text)
            out.setdefault(row["city"], {})[stamp] = float(row["prcp_mm"])
    return out


def _load_city_series(city: CityDataConfig) -> CitySeries:
    if city.csv_path:
        schema = CsvSchema.from_dict(city.csv_schema)
        return load_csv_series(Path(city.csv_path).read_text(), city.name, schema)
    records = parse_ghcn_dly(Path(city.ghcn_path).read_bytes())
    starts, ends = [], []
    for rec in records:
        if rec.station_id == city.station_id:
            starts.append(dt.date(rec.year, rec.month, 1))
            ends.append(dt.date(rec.year, rec.month, 28))
    if not starts:
        raise ConfigError(f"{city.name}: station {city.station_id} not in {city.ghcn_path}")
    start = city.start or min(starts)
    end_month = max(ends)
    end = city.end or dt.date(
        end_month.year, end_month.month, calendar.monthrange(end_month.year, end_month.month)[1]
    )
    return build_city_series(records, city.name, city.station_id, start, end)


def _cut_before(ts: TimeSeries, as_of: dt.date) -> TimeSeries:
    """Drop stamps not fully observed by as_of (the training firewall)."""
    if ts.frequency == "daily":
        keep = sum(1 for s in ts.stamps if s <= as_of)
    else:
        keep = sum(
            1
            for s in ts.stamps
            if dt.date(s.year, s.month, calendar.monthrange(s.year, s.month)[1]) <= as_of
        )
    return ts.slice(0, keep)


@dataclass
class _CityOutcome:
    city: str
    forecasts: dict[str, list[float]] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)
    fixture_hashes: dict[str, list[str]] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    baseline: list[float] | None = None
    stds: list[float] | None = None
    data_span: dict | None = None


class _CityPipeline:
    """All per-city work for one run; keeps runner state out of module scope."""

    def __init__(self, cfg: ExperimentConfig, city_cfg: CityDataConfig, run_dir: Path,
                 backend, indices: dict[str, TeleconnectionSeries],
                 baseline_by_city: dict, record_store: FixtureStore | None):
        self.cfg = cfg
        self.city_cfg = city_cfg
        self.city = city_cfg.name
        self.slug = city_slug(city_cfg.name)
        self.run_dir = run_dir
        self.backend = backend
        self.indices = indices
        self.baseline_by_city = baseline_by_city
        self.record_store = record_store
        self.out = _CityOutcome(city=self.city)
        self.period = cfg.period()
        self.failed_sources: set[str] = set()

    def fail(self, source: str, exc: Exception) -> None:
        log.warning("%s %s failed: %s", self.city, source, exc)
        self.failed_sources.add(source)
        self.out.failures.append({"city": self.city, "source": source, "error": str(exc)})

    def run(self) -> _CityOutcome:
        cfg = self.cfg
        series = _load_city_series(self.city_cfg)
        self.out.data_span = {
            "start": series.dates[0].isoformat(),
            "end": series.dates[-1].isoformat(),
            "days": len(series),
        }
        ts_full = (
            series.to_timeseries()
            if cfg.scale == "short"
            else aggregate_monthly(series, cfg.min_valid_fraction)
        )
        ts = _cut_before(ts_full, cfg.as_of)

        clim = build_climatology(ts, cfg.as_of, cfg.climatology_window_years, "prcp")
        baseline = baseline_forecast(clim, self.period)
        stds = clim.stds_for(self.period)
        self.out.baseline = [float(v) for v in baseline]
        self.out.stds = [float(v) for v in stds]
        self.baseline_by_city[self.city] = self.out.baseline
        clim_path = self.run_dir / "climatology" / f"{self.slug}.csv"
        clim_path.write_text(clim.to_csv())

        if "Baseline" in cfg.sources:
            self.out.forecasts["Baseline"] = self.out.baseline
            self.out.provenance["Baseline"] = str(clim_path.relative_to(self.run_dir))

        em_forecast = self._expert_rainfall(ts) if self._needs_rainfall_em() else None
        temp_payload = self._expert_temperature(ts) if "Exp3" in cfg.sources else None

        for source in cfg.sources:
            if source not in _EXP_KINDS or source in self.failed_sources:
                continue
            try:
                payload = self._payload_for(source, em_forecast, temp_payload, stds)
                self._run_experiment_prompt(source, payload)
            except (HarnessError, RaincastError) as exc:
                self.fail(source, exc)

        if "Fusion" in cfg.sources and "Fusion" not in self.failed_sources:
            try:
                self._run_fusion(em_forecast, stds)
            except RaincastError as exc:
                self.fail("Fusion", exc)
        return self.out

    def _needs_rainfall_em(self) -> bool:
        return bool({"EM", "Exp2", "Exp5", "Fusion"} & set(self.cfg.sources))

    def _fit_or_load(self, ts: TimeSeries, feature_names: tuple[str, ...], target: str):
        """Return (model, scaler); load a reusable checkpoint when present."""
        cfg = self.cfg
        name = f"{self.slug}__{target}.json"
        if cfg.checkpoint_dir:
            path = Path(cfg.checkpoint_dir) / name
            if path.exists():
                bundle = load_checkpoint(path)
                if bundle.model.horizon != cfg.horizon:
                    raise ConfigError(f"{path}: horizon {bundle.model.horizon} != {cfg.horizon}")
                if bundle.scaler is None:
                    raise ConfigError(f"{path}: checkpoint has no scaler, cannot predict")
                if bundle.feature_names and tuple(bundle.feature_names) != feature_names:
                    raise ConfigError(
                        f"{path}: checkpoint features {bundle.feature_names} != {feature_names}"
                    )
                self.out.provenance[f"checkpoint:{target}"] = str(path)
                return bundle.model, bundle.scaler

        idx = [ts.feature_names.index(f) for f in feature_names]
        sub = TimeSeries(ts.frequency, ts.stamps, feature_names, ts.values[:, idx])
        span = training_span(sub, cfg.input_len, cfg.horizon, cfg.train_frac)
        scaler = fit_scaler(sub, span)
        scaled = scaler.transform_series(sub)
        ds = make_windows(scaled, cfg.input_len, cfg.horizon, target, scaler)
        train_ds, val_ds = chrono_split(ds, cfg.train_frac)
        seed = derive_seed(cfg.train.seed, self.city, target)
        model = init_model(len(feature_names), cfg.hidden, cfg.horizon, seed)
        train_cfg = dataclasses.replace(cfg.train, seed=seed)
        best, history = train(model, train_ds, val_ds, train_cfg)

        ckpt_path = self.run_dir / "checkpoints" / name
        save_checkpoint(
            best,
            None,
            train_cfg,
            ckpt_path,
            scaler=scaler,
            feature_names=feature_names,
            target_feature=target,
            data_span={
                "start": ts.stamps[0].isoformat(),
                "end": ts.stamps[-1].isoformat(),
                "frequency": ts.frequency,
            },
            meta={"city": self.city},
        )
        history_path = self.run_dir / "checkpoints" / f"{self.slug}__{target}_history.csv"
        history_path.write_text(history_to_csv(history))
        self.out.provenance[f"checkpoint:{target}"] = str(ckpt_path.relative_to(self.run_dir))
        return best, scaler

    def _window_for_prediction(self, ts: TimeSeries, feature_names: tuple[str, ...], scaler):
        # The window must be the input_len stamps immediately before the
        # target period, or the forecast would be silently misaligned.
        if self.cfg.scale == "short":
            expected_last = self.period[0] - dt.timedelta(days=1)
        else:
            first = self.period[0]
            expected_last = dt.date(first.year - (first.month == 1),
                                    (first.month - 2) % 12 + 1, 1)
        if not ts.stamps or ts.stamps[-1] != expected_last:
            have = ts.stamps[-1].isoformat() if ts.stamps else "nothing"
            raise ModelError(
                f"series must reach {expected_last.isoformat()} for prediction, have {have}"
            )
        idx = [ts.feature_names.index(f) for f in feature_names]
        values = ts.values[:, idx]
        if len(values) < self.cfg.input_len:
            raise ModelError(f"only {len(values)} stamps before as_of, need {self.cfg.input_len}")
        window = values[-self.cfg.input_len :]
        if np.isnan(window).any():
            raise ModelError("prediction window has masked values")
        return scaler.transform(window)

    def _expert_rainfall(self, ts: TimeSeries) -> list[float] | None:
        features = ("tmin", "tmax", "prcp")
        try:
            model, scaler = self._fit_or_load(ts, features, "prcp")
            window = self._window_for_prediction(ts, features, scaler)
            values = predict(model, window, scaler, "prcp")
            em = [float(v) for v in values]
        except RaincastError as exc:
            for source in ("EM", "Exp2", "Exp5", "Fusion"):
                if source in self.cfg.sources:
                    self.fail(source, exc)
            return None
        if "EM" in self.cfg.sources:
            self.out.forecasts["EM"] = em
            self.out.provenance["EM"] = self.out.provenance.get("checkpoint:prcp", "")
        return em

    def _expert_temperature(self, ts: TimeSeries) -> dict[str, list[float]] | None:
        features = ("tmin", "tmax")
        payload = {}
        try:
            for target, label in (("tmin", "Tmin"), ("tmax", "Tmax")):
                model, scaler = self._fit_or_load(ts, features, target)
                window = self._window_for_prediction(ts, features, scaler)
                payload[label] = [float(v) for v in predict(model, window, scaler, target)]
        except RaincastError as exc:
            self.fail("Exp3", exc)
            return None
        return payload

    def _payload_for(self, source, em_forecast, temp_payload, stds) -> dict:
        if source == "Exp1":
            return {}
        if source == "Exp2":
            if em_forecast is None:
                raise HarnessError("expert rainfall forecast unavailable")
            return {"Rainfall": em_forecast}
        if source == "Exp3":
            if temp_payload is None:
                raise HarnessError("expert temperature forecast unavailable")
            return dict(temp_payload)
        if source == "Exp4":
            payload = {}
            for name in INDEX_NAMES:
                values = [self.indices[name].value_for(m) for m in self.period]
                if any(np.isnan(v) for v in values):
                    raise HarnessError(f"{name} has missing values in the target period")
                payload[name] = values
            return payload
        if em_forecast is None:  # Exp5
            raise HarnessError("expert rainfall forecast unavailable")
        return {"Rainfall": em_forecast, "StdDev": [float(v) for v in stds]}

    def _run_experiment_prompt(self, source: str, payload: dict) -> None:
        cfg = self.cfg
        kind = _EXP_KINDS[source]
        spec = PromptSpec(kind, self.city, self.period, cfg.granularity, payload)
        prompt = render_prompt(spec)
        prompt_path = self.run_dir / "prompts" / f"{self.slug}__{kind}.txt"
        prompt_path.write_text(prompt)
        hashes: list[str] = []

        def on_reply(attempt: int, used_prompt: str, reply: str) -> None:
            # Raw replies are persisted verbatim before any parsing happens.
            if attempt > 1:
                (self.run_dir / "prompts" / f"{self.slug}__{kind}__a{attempt}.txt").write_text(
                    used_prompt
                )
            reply_path = self.run_dir / "replies" / f"{self.slug}__{kind}__a{attempt}.txt"
            reply_path.write_text(reply)
            hashes.append(prompt_hash(used_prompt))
            if self.record_store is not None:
                self.record_store.record(used_prompt, reply)

        parsed = request_forecast(
            self.backend, spec, max_retries=cfg.backend.max_retries, on_reply=on_reply
        )
        self.out.fixture_hashes[kind] = hashes
        self.out.forecasts[source] = [float(v) for v in parsed.values]
        self.out.provenance[source] = f"replies/{self.slug}__{kind}__a{parsed.attempts}.txt"

    def _run_fusion(self, em_forecast, stds) -> None:
        cfg = self.cfg
        if em_forecast is None:
            raise RaincastError("fusion needs the expert forecast")
        fallback_source = cfg.fusion.fallback_source
        if fallback_source == "Baseline":
            fallback = self.out.baseline
        elif fallback_source in self.out.forecasts:
            fallback = self.out.forecasts[fallback_source]
        else:
            raise RaincastError(f"fusion fallback source {fallback_source!r} not available")
        result = fuse(em_forecast, fallback, stds, cfg.fusion)
        trace = fusion_trace(em_forecast, fallback, stds, result)
        trace_path = self.run_dir / "fusion" / f"{self.slug}.json"
        trace_path.write_text(json.dumps(trace, indent=1))
        self.out.forecasts["Fusion"] = [float(v) for v in result.values]
        self.out.provenance["Fusion"] = str(trace_path.relative_to(self.run_dir))


def run_experiment(cfg: ExperimentConfig) -> ReportBundle:
    """Execute the configured experiment and persist a self-describing run."""
    run_name = cfg.run_name or dt.datetime.now().strftime("run_%Y%m%d_%H%M%S_%f")
    run_dir = Path(cfg.output_dir) / run_name
    for sub in ("prompts", "replies", "forecasts", "charts", "checkpoints", "climatology", "fusion"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)

    indices: dict[str, TeleconnectionSeries] = {}
    if "Exp4" in cfg.sources:
        for name in INDEX_NAMES:
            indices[name] = parse_index_table(
                Path(cfg.index_paths[name]).read_text(), name
            )

    baseline_by_city: dict[str, list[float]] = {}

    def baseline_provider(spec: PromptSpec):
        return baseline_by_city[spec.city]

    backend = make_backend(cfg.backend, baseline_provider)
    record_store = None
    if cfg.backend.mode == "http" and cfg.backend.fixtures_path:
        record_store = FixtureStore(cfg.backend.fixtures_path)

    observations: dict[str, dict[dt.date, float]] = {}
    if cfg.observations_path:
        observations = load_observations(cfg.observations_path, cfg.granularity)

    ordered = sorted(cfg.cities, key=lambda c: c.name)
    outcomes: dict[str, _CityOutcome] = {}
    failures: list[dict] = []

    def run_city(city_cfg: CityDataConfig) -> _CityOutcome:
        pipeline = _CityPipeline(
            cfg, city_cfg, run_dir, backend, indices, baseline_by_city, record_store
        )
        return pipeline.run()

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {c.name: pool.submit(run_city, c) for c in ordered}
            for name in sorted(futures):
                try:
                    outcomes[name] = futures[name].result()
                except RaincastError as exc:
                    failures.append({"city": name, "source": "*", "error": str(exc)})
    else:
        for city_cfg in ordered:
            try:
                outcomes[city_cfg.name] = run_city(city_cfg)
            except RaincastError as exc:
                failures.append({"city": city_cfg.name, "source": "*", "error": str(exc)})

    period = cfg.period()
    bundle = ReportBundle(
        scale=cfg.scale,
        period=period,
        cities=[c.name for c in ordered if c.name in outcomes],
        forecasts={},
        manifest=_build_manifest(cfg, run_name, outcomes),
    )
    for name, outcome in sorted(outcomes.items()):
        bundle.forecasts[name] = outcome.forecasts
        failures.extend(outcome.failures)

        obs_map = observations.get(name, {})
        obs = [obs_map.get(stamp) for stamp in period]
        if all(v is not None for v in obs) and obs:
            bundle.observed[name] = [float(v) for v in obs]
        elif obs_map:
            failures.append(
                {"city": name, "source": "Observed", "error": "observations do not cover the period"}
            )

        if name in bundle.observed:
            reports = {}
            for source, values in outcome.forecasts.items():
                reports[source] = metric_report(values, bundle.observed[name])
            bundle.metrics[name] = reports
        if outcome.baseline is not None:
            corr = {}
            for source, values in outcome.forecasts.items():
                corr[source] = pearson(values, outcome.baseline)
            bundle.baseline_corr[name] = corr

    per_source: dict[str, dict[str, MetricReport]] = {}
    for name, reports in bundle.metrics.items():
        for source, report in reports.items():
            per_source.setdefault(source, {})[name] = report
    bundle.summary = {source: summarize(city_reports) for source, city_reports in per_source.items()}
    bundle.failures = failures

    bundle.save(run_dir)
    emit_report(bundle, run_dir)
    log.info("run complete: %s (%d failures)", run_dir, len(failures))
    return bundle


def _build_manifest(cfg: ExperimentConfig, run_name: str, outcomes: dict) -> dict:
    return {
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "run_name": run_name,
        "output_dir": cfg.output_dir,
        "package_version": __version__,
        "config": cfg.to_dict(),
        "units": {"precipitation": "mm", "temperature": "degC"},
        "notes": list(MANIFEST_NOTES),
        "data_spans": {name: o.data_span for name, o in sorted(outcomes.items())},
        "fixtures": {name: o.fixture_hashes for name, o in sorted(outcomes.items())},
        "provenance": {name: o.provenance for name, o in sorted(outcomes.items())},
        "uncertainty": {name: o.stds for name, o in sorted(outcomes.items())},
    }


def evaluate_run(run_dir, observations_path) -> ReportBundle:
    """Re-score a stored run against an observations file and rewrite metrics."""
    bundle = ReportBundle.load(run_dir)
    frequency = "daily" if bundle.scale == "short" else "monthly"
    observations = load_observations(observations_path, frequency)
    bundle.observed = {}
    bundle.metrics = {}
    for city in bundle.cities:
        obs_map = observations.get(city, {})
        obs = [obs_map.get(stamp) for stamp in bundle.period]
        if obs and all(v is not None for v in obs):
            bundle.observed[city] = [float(v) for v in obs]
            bundle.metrics[city] = {
                source: metric_report(values, bundle.observed[city])
                for source, values in bundle.forecasts.get(city, {}).items()
            }
    per_source: dict[str, dict[str, MetricReport]] = {}
    for city, reports in bundle.metrics.items():
        for source, report in reports.items():
            per_source.setdefault(source, {})[city] = report
    bundle.summary = {s: summarize(city_reports) for s, city_reports in per_source.items()}
    bundle.save(run_dir)
    emit_report(bundle, run_dir)
    return bundle
