"""Scenario runs: load a case, build loading scenarios, analyze, switch, report.

A :class:`ScenarioConfig` names a case, a list of :class:`Scenario` loadings
and a mode. :func:`run` executes every scenario in order and returns a
:class:`RunReport`; :func:`emit` writes it as a summary CSV (one row per
reported state, the nine stress columns) or as schema-versioned JSON.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Mapping

import numpy as np
import scipy

from .dcflow import MonitorSets, compute_lodf, compute_ptdf, save_matrices
from .errors import InvalidNetworkError
from .metrics import TABLE_COLUMNS, LimitSet, StressReport, analyze
from .network import Network, builtin_case_text, increase_overrides, parse_case, scale_load
from .switching import DEFAULT_BUDGET, StressPolicy, SwitchingRecommendation, corrective_search, preventive_search

SCHEMA = "gridstress.run/1"
CHART_METRICS = (
    "max_v_rank", "max_v_degree", "v_system", "max_c_rank", "max_c_degree", "c_system",
    "emergency_violations", "contingency_violations",
)

Mode = Literal["analyze", "preventive", "corrective"]


@dataclass(frozen=True)
class Scenario:
    """One loading condition: a uniform load factor plus per-bus factors.

    Per-bus factors replace the uniform factor at their bus.
    """

    label: str
    scale: float = 1.0
    bus_scale: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scenario {self.label!r}: load factor must be positive")
        if any(not f > 0 for f in self.bus_scale.values()):
            raise ValueError(f"scenario {self.label!r}: bus load factors must be positive")

    def apply(self, net: Network) -> Network:
        return scale_load(net, self.scale, self.bus_scale)

    def to_dict(self) -> dict:
        return {"label": self.label, "scale": self.scale,
                "bus_scale": {str(k): v for k, v in sorted(self.bus_scale.items())}}


def ieee118_scenarios() -> tuple[Scenario, ...]:
    """The four IEEE 118-bus loadings: 97%, 105%, select-bus 106% and 110%.

    The select-bus case raises load at bus 40 (West End) by 16% and at bus 41
    (S. Tiffin) by 105% on top of the 105% base, which lifts system load to
    about 106.2% of the base case.
    """
    return (
        Scenario("97%", 0.97),
        Scenario("105%", 1.05),
        Scenario("106% (select buses)", 1.05, increase_overrides(1.05, {40: 16.0, 41: 105.0})),
        Scenario("110%", 1.10),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a run.

    ``case`` is a file path or ``builtin:NAME``. ``contingency`` (corrective
    mode) is a branch id, a bus pair such as ``"8-5"``, or ``"worst"`` for the
    non-radial outage with the highest criticality rank. ``trigger_threshold``
    overrides the switching policy's threshold (percent for rank metrics).
    ``monitored`` and ``outages`` restrict the monitor sets to branch ids.
    """

    case: str
    scenarios: tuple[Scenario, ...] = (Scenario("100%"),)
    mode: Mode = "analyze"
    contingency: str | int | None = None
    limits: LimitSet = field(default_factory=LimitSet)
    system_threshold: float = 1.0
    sparsity_threshold: float = 0.0
    monitored: tuple[int, ...] | None = None
    outages: tuple[int, ...] | None = None
    budget: int | None = DEFAULT_BUDGET
    trigger_threshold: float | None = None
    default_rating: float | None = None

    def __post_init__(self):
        if self.mode not in ("analyze", "preventive", "corrective"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "corrective" and self.contingency is None:
            raise ValueError("corrective mode needs a contingency")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.system_threshold <= 0 or self.sparsity_threshold < 0:
            raise ValueError("thresholds must be positive")
        labels = [s.label for s in self.scenarios]
        if len(set(labels)) != len(labels):
            raise ValueError(f"scenario labels must be unique: {labels}")

    def policy(self) -> StressPolicy:
        base = StressPolicy.corrective() if self.mode == "corrective" else StressPolicy()
        if self.trigger_threshold is None:
            return base
        return dataclasses.replace(base, threshold=self.trigger_threshold)

    def monitor_sets(self, net: Network) -> MonitorSets | None:
        if self.monitored is None and self.outages is None:
            return None
        full = MonitorSets.default(net)
        return MonitorSets(
            tuple(self.monitored) if self.monitored is not None else full.monitored_branches,
            tuple(self.outages) if self.outages is not None else full.outage_branches,
        )

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "mode": self.mode,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "contingency": self.contingency,
            "limits": {**dataclasses.asdict(self.limits),
                       "branch_thresholds": {str(k): v for k, v in sorted(self.limits.branch_thresholds.items())}},
            "system_threshold": self.system_threshold,
            "sparsity_threshold": self.sparsity_threshold,
            "monitored": list(self.monitored) if self.monitored is not None else None,
            "outages": list(self.outages) if self.outages is not None else None,
            "budget": self.budget,
            "trigger_threshold": self.trigger_threshold,
            "default_rating": self.default_rating,
        }


@dataclass(frozen=True)
class ScenarioResult:
    """Reports for one scenario.

    ``rows`` lists the states to tabulate, in order: the scenario itself and,
    for switching modes, the post-contingency and post-switching states.
    """

    scenario: Scenario
    rows: tuple[StressReport, ...]
    recommendation: SwitchingRecommendation | None = None
    contingency: int | None = None


@dataclass(frozen=True)
class RunReport:
    config: ScenarioConfig
    results: tuple[ScenarioResult, ...]
    provenance: dict
    timing: dict | None = None
    created: str | None = None

    @property
    def reports(self) -> list[StressReport]:
        return [r for res in self.results for r in res.rows]

    @property
    def statuses(self) -> list[str]:
        return [res.recommendation.status for res in self.results if res.recommendation is not None]

    def table(self) -> list[dict]:
        """Summary rows in the nine-column layout, ranks as numbers (percent)."""
        out = []
        for rep in self.reports:
            out.append({
                "loading": rep.label,
                "V_rank": rep.max_v_rank,
                "V_degree": rep.max_v_degree,
                "V_N": rep.v_system,
                "C_rank": rep.max_c_rank,
                "C_degree": rep.max_c_degree,
                "C_N": rep.c_system,
                "emergency_violations": rep.emergency_violations,
                "contingency_violations": rep.contingency_violations,
            })
        return out

    def chart_rows(self) -> list[tuple[str, str, float]]:
        """Tidy (scenario, metric, value) rows for plotting."""
        rows = []
        for rep in self.reports:
            s = rep.summary()
            rows.extend((rep.label, m, s[m]) for m in CHART_METRICS)
        return rows

    def to_dict(self) -> dict:
        doc = {
            "schema": SCHEMA,
            "provenance": self.provenance,
            "scenarios": [
                {
                    "scenario": res.scenario.to_dict(),
                    "contingency": res.contingency,
                    "reports": [r.to_dict() for r in res.rows],
                    "recommendation": res.recommendation.to_dict() if res.recommendation else None,
                }
                for res in self.results
            ],
            "table": self.table(),
        }
        if self.timing is not None:
            doc["timing"] = self.timing
        if self.created is not None:
            doc["created"] = self.created
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _read_case(config: ScenarioConfig) -> tuple[Network, str]:
    kwargs = {"default_rating": config.default_rating} if config.default_rating is not None else {}
    if config.case.startswith("builtin:"):
        name = config.case.split(":", 1)[1]
        text = builtin_case_text(name)
    else:
        name = Path(config.case).stem
        text = Path(config.case).read_text()
    net = parse_case(text, name=name, **kwargs)
    return net, hashlib.sha256(text.encode()).hexdigest()


def _provenance(config: ScenarioConfig, digest: str) -> dict:
    from . import __version__
    return {
        "tool": "gridstress",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "input_sha256": digest,
        "config": config.to_dict(),
    }


def worst_contingency(net: Network, monitors=None, limits=None) -> int:
    """Non-radial outage with the highest criticality rank (lowest id on ties)."""
    c_rank = analyze(net, monitors, limits).report.c_rank.dropna()
    if c_rank.empty:
        raise InvalidNetworkError("no valid contingency to select")
    top = c_rank[c_rank == c_rank.max()]
    return int(min(top.index))


def run(config: ScenarioConfig, *, timestamp: bool = True, dump_matrices: str | None = None,
        matrix_format: str = "csv") -> RunReport:
    """Execute every scenario of ``config`` in order."""
    timing: dict = {}
    t0 = time.perf_counter()
    net, digest = _read_case(config)
    timing["parse"] = time.perf_counter() - t0
    policy = config.policy()
    results = []
    for sc in config.scenarios:
        t = time.perf_counter()
        scaled = sc.apply(net)
        monitors = config.monitor_sets(scaled)
        kw = dict(sparsity_threshold=config.sparsity_threshold)
        if config.mode == "analyze":
            a = analyze(scaled, monitors, config.limits, label=sc.label,
                        system_threshold=config.system_threshold, **kw)
            results.append(ScenarioResult(sc, (a.report,)))
        elif config.mode == "preventive":
            rec = preventive_search(scaled, policy, monitors, config.limits, config.budget, label=sc.label, **kw)
            rows = [rec.pre_report]
            if rec.post_report is not None:
                rows.append(dataclasses.replace(rec.post_report, label=f"{sc.label} (PTS)"))
            results.append(ScenarioResult(sc, tuple(rows), rec))
        else:
            if str(config.contingency).lower() == "worst":
                ctg = worst_contingency(scaled, monitors, config.limits)
            else:
                ctg = scaled.find_branch(config.contingency)
            rec = corrective_search(scaled, ctg, policy, monitors, config.limits, config.budget,
                                    label=sc.label, **kw)
            rows = [rec.context_report, rec.pre_report]
            if rec.post_report is not None:
                rows.append(dataclasses.replace(rec.post_report, label=f"{sc.label} (CTS)"))
            results.append(ScenarioResult(sc, tuple(rows), rec, ctg))
        if dump_matrices:
            ptdf = compute_ptdf(scaled)
            lodf = compute_lodf(ptdf, scaled, config.sparsity_threshold)
            save_matrices(ptdf, lodf, f"{dump_matrices}_{_slug(sc.label)}", matrix_format)
        timing[sc.label] = time.perf_counter() - t
    timing["total"] = time.perf_counter() - t0
    return RunReport(
        config,
        tuple(results),
        _provenance(config, digest),
        timing=timing if timestamp else None,
        created=datetime.now(timezone.utc).isoformat(timespec="seconds") if timestamp else None,
    )


def _slug(label: str) -> str:
    keep = "".join(c if c.isalnum() else "_" for c in label)
    return "_".join(p for p in keep.split("_") if p) or "scenario"


def summary_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in report.table():
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def chart_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scenario", "metric", "value"))
    for label, metric, value in report.chart_rows():
        w.writerow((label, metric, repr(float(value)) if isinstance(value, float) else value))
    return buf.getvalue()


def emit(report: RunReport, fmt: Literal["csv", "json"] = "csv", path: str | Path | None = None) -> str:
    """Render ``report`` as CSV or JSON; write it to ``path`` if given."""
    if fmt == "csv":
        text = summary_csv(report)
    elif fmt == "json":
        text = report.to_json()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def read_summary_csv(text: str) -> list[dict]:
    """Parse a summary CSV back into typed rows."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {"loading": raw["loading"]}
        for k in TABLE_COLUMNS[1:]:
            row[k] = float(raw[k]) if k in ("V_rank", "C_rank") else int(raw[k])
        rows.append(row)
    return rows


def load_reports(text: str) -> list[StressReport]:
    """Stress reports from a JSON run document, in table order."""
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    return [StressReport.from_dict(r) for s in doc["scenarios"] for r in s["reports"]]


def format_table(report: RunReport) -> str:
    """Fixed-width text rendering of the summary table."""
    head = ("Loading", "V_rank", "V_deg", "V_N", "C_rank", "C_deg", "C_N", "Emerg", "Cont")
    lines = []
    rows = [
        (r["loading"], f"{r['V_rank']:.2f}%", r["V_degree"], r["V_N"], f"{r['C_rank']:.2f}%",
         r["C_degree"], r["C_N"], r["emergency_violations"], r["contingency_violations"])
        for r in report.table()
    ]
    width = max([len(head[0])] + [len(r[0]) for r in rows])
    fmt = f"{{:<{width}}}  {{:>8}}  {{:>5}}  {{:>4}}  {{:>8}}  {{:>5}}  {{:>4}}  {{:>5}}  {{:>4}}"
    lines.append(fmt.format(*head))
    lines.extend(fmt.format(*map(str, r)) for r in rows)
    return "\n".join(lines)


__all__ = [
    "SCHEMA", "Scenario", "ScenarioConfig", "ScenarioResult", "RunReport", "ieee118_scenarios", "run", "emit",
    "summary_csv", "chart_csv", "read_summary_csv", "load_reports", "format_table", "worst_contingency",
]
