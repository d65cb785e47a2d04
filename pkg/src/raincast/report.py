"""Run-directory persistence and report emission.

A run directory is self-describing:

    manifest.json   config echo, data spans, units, fixture hashes, notes
    prompts/        every rendered prompt, per city and experiment
    replies/        every raw backend reply, persisted before parsing
    forecasts/      one JSON vector per (city, source), plus observed
    metrics.csv     columns: city, source, rmse, pearson, nse, n
    metrics.json    per-city metrics, cross-city summary, baseline correlation
    charts/         one SVG per city overlaying all sources
    checkpoints/    expert-model checkpoints and training histories
    climatology/    baseline mean/std/support exports

ReportBundle round-trips through these files; equality ignores volatile
manifest fields (timestamps), which is what run-level determinism checks
compare.
"""

from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .charts import line_chart_svg
from .errors import RaincastError
from .metrics import MetricReport, MetricSummary

SOURCE_ORDER = ("EM", "Baseline", "Exp1", "Exp2", "Exp3", "Exp4", "Exp5", "Fusion")
_VOLATILE_MANIFEST_KEYS = ("created_at", "run_name", "output_dir")


class ReportError(RaincastError):
    pass


def city_slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def source_sort_key(source: str):
    try:
        return (0, SOURCE_ORDER.index(source))
    except ValueError:
        return (1, source)


@dataclass
class ReportBundle:
    """Per-city forecasts from every source, scores, and run metadata."""

    scale: str
    period: list[dt.date]
    cities: list[str]
    forecasts: dict[str, dict[str, list[float]]]  # city -> source -> mm values
    observed: dict[str, list[float]] = field(default_factory=dict)
    metrics: dict[str, dict[str, MetricReport]] = field(default_factory=dict)
    baseline_corr: dict[str, dict[str, float | None]] = field(default_factory=dict)
    summary: dict[str, MetricSummary] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def sources(self) -> list[str]:
        seen = {s for per_city in self.forecasts.values() for s in per_city}
        return sorted(seen, key=source_sort_key)

    # Equality for determinism checks: everything except volatile manifest keys.
    def __eq__(self, other) -> bool:
        if not isinstance(other, ReportBundle):
            return NotImplemented
        return self._comparable() == other._comparable()

    def _comparable(self):
        manifest = {
            k: v for k, v in self.manifest.items() if k not in _VOLATILE_MANIFEST_KEYS
        }
        return (
            self.scale,
            self.period,
            self.cities,
            json.dumps(self.forecasts, sort_keys=True),
            json.dumps(self.observed, sort_keys=True),
            json.dumps(self.metrics_dict(), sort_keys=True),
            json.dumps(self.failures, sort_keys=True),
            json.dumps(manifest, sort_keys=True, default=str),
        )

    def metrics_dict(self) -> dict:
        return {
            "per_city": {
                city: {source: report.to_dict() for source, report in sorted(per.items())}
                for city, per in sorted(self.metrics.items())
            },
            "summary": {s: summ.to_dict() for s, summ in sorted(self.summary.items())},
            "baseline_correlation": {
                city: dict(sorted(per.items())) for city, per in sorted(self.baseline_corr.items())
            },
        }

    def metrics_csv(self) -> str:
        lines = ["city,source,rmse,pearson,nse,n"]
        for city in sorted(self.metrics):
            for source in sorted(self.metrics[city], key=source_sort_key):
                r = self.metrics[city][source]
                pearson = "" if r.pearson is None else repr(r.pearson)
                nse = "" if r.nse is None else repr(r.nse)
                lines.append(f'"{city}",{source},{r.rmse!r},{pearson},{nse},{r.n}')
        return "\n".join(lines) + "\n"

    def save(self, run_dir) -> None:
        run_dir = Path(run_dir)
        (run_dir / "forecasts").mkdir(parents=True, exist_ok=True)
        header = {
            "scale": self.scale,
            "stamps": [d.isoformat() for d in self.period],
        }
        for city in self.cities:
            slug = city_slug(city)
            for source, values in sorted(self.forecasts.get(city, {}).items()):
                payload = {"city": city, "source": source, **header, "values": values}
                path = run_dir / "forecasts" / f"{slug}__{source.lower()}.json"
                path.write_text(json.dumps(payload, indent=1))
            if city in self.observed:
                payload = {"city": city, "source": "Observed", **header,
                           "values": self.observed[city]}
                path = run_dir / "forecasts" / f"{slug}__observed.json"
                path.write_text(json.dumps(payload, indent=1))
        (run_dir / "metrics.json").write_text(
            json.dumps(self.metrics_dict(), indent=1, sort_keys=True)
        )
        (run_dir / "metrics.csv").write_text(self.metrics_csv())
        manifest = dict(self.manifest)
        manifest["scale"] = self.scale
        manifest["cities"] = self.cities
        manifest["period"] = header["stamps"]
        manifest["failures"] = self.failures
        (run_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True, default=str)
        )

    @classmethod
    def load(cls, run_dir) -> "ReportBundle":
        run_dir = Path(run_dir)
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.exists():
            raise ReportError(f"{run_dir} has no manifest.json")
        manifest = json.loads(manifest_path.read_text())
        period = [dt.date.fromisoformat(s) for s in manifest["period"]]
        cities = list(manifest["cities"])
        forecasts: dict[str, dict[str, list[float]]] = {c: {} for c in cities}
        observed: dict[str, list[float]] = {}
        for path in sorted((run_dir / "forecasts").glob("*.json")):
            payload = json.loads(path.read_text())
            city, source = payload["city"], payload["source"]
            if source == "Observed":
                observed[city] = payload["values"]
            else:
                forecasts.setdefault(city, {})[source] = payload["values"]
        metrics_raw = json.loads((run_dir / "metrics.json").read_text())
        metrics = {
            city: {s: MetricReport.from_dict(d) for s, d in per.items()}
            for city, per in metrics_raw.get("per_city", {}).items()
        }
        summary = {
            s: MetricSummary.from_dict(d) for s, d in metrics_raw.get("summary", {}).items()
        }
        scale = manifest.get("scale", "short")
        failures = manifest.get("failures", [])
        keep = {k: v for k, v in manifest.items()
                if k not in ("scale", "cities", "period", "failures")}
        return cls(
            scale=scale,
            period=period,
            cities=cities,
            forecasts=forecasts,
            observed=observed,
            metrics=metrics,
            baseline_corr=metrics_raw.get("baseline_correlation", {}),
            summary=summary,
            failures=failures,
            manifest=keep,
        )


def emit_report(bundle: ReportBundle, run_dir, formats=("csv", "json", "svg")) -> list[Path]:
    """Write the requested report artifacts; returns the paths written."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = run_dir / "metrics.json"
        path.write_text(json.dumps(bundle.metrics_dict(), indent=1, sort_keys=True))
        written.append(path)
    if "csv" in formats:
        path = run_dir / "metrics.csv"
        path.write_text(bundle.metrics_csv())
        written.append(path)
    if "svg" in formats:
        chart_dir = run_dir / "charts"
        chart_dir.mkdir(exist_ok=True)
        labels = [d.isoformat() for d in bundle.period]
        for city in bundle.cities:
            series: dict[str, list[float]] = {}
            if city in bundle.observed:
                series["Observed"] = bundle.observed[city]
            for source in sorted(bundle.forecasts.get(city, {}), key=source_sort_key):
                series[source] = bundle.forecasts[city][source]
            if not series:
                continue
            path = chart_dir / f"{city_slug(city)}.svg"
            path.write_text(line_chart_svg(city, labels, series))
            written.append(path)
    return written

