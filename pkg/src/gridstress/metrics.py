"""Vulnerability/criticality stress metrics and limit-violation counts.

All metrics are reductions of one post-contingency loading table: rows are
monitored branches, columns are single outages, and each cell is the
post-outage flow in per unit of the monitored branch's normal rating.
Vulnerability reduces along rows, criticality along columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd

from .dcflow import FlowState, LodfMatrix, MonitorSets, compute_lodf, compute_ptdf, solve_dc
from .errors import InvalidNetworkError, NoContingenciesError
from .network import Network, TopologyClassification, classify_topology

TABLE_COLUMNS = (
    "loading",
    "V_rank",
    "V_degree",
    "V_N",
    "C_rank",
    "C_degree",
    "C_N",
    "emergency_violations",
    "contingency_violations",
)


@dataclass(frozen=True)
class LimitSet:
    """Loading limits as fractions of the normal rating.

    ``branch_thresholds`` overrides the degree threshold for individual
    branches (by id). ``violation_mode`` selects whether violation counts
    report lines (each overloaded line once) or table cells
    (line/contingency pairs).
    """

    normal_fraction: float = 1.0
    contingency_fraction: float = 1.2
    contingency_hours: float = 4.0
    emergency_fraction: float = 1.35
    emergency_minutes: float = 15.0
    degree_threshold_fraction: float = 1.0
    branch_thresholds: Mapping[int, float] = field(default_factory=dict)
    violation_mode: str = "lines"

    def __post_init__(self):
        fracs = (self.normal_fraction, self.contingency_fraction, self.emergency_fraction)
        if min(fracs) <= 0 or self.degree_threshold_fraction <= 0:
            raise ValueError("limit fractions must be positive")
        if not (self.normal_fraction <= self.contingency_fraction <= self.emergency_fraction):
            raise ValueError("limits must satisfy normal <= contingency <= emergency")
        if any(v <= 0 for v in self.branch_thresholds.values()):
            raise ValueError("branch thresholds must be positive")
        if self.violation_mode not in ("lines", "cells"):
            raise ValueError(f"unknown violation_mode {self.violation_mode!r}")

    def thresholds_for(self, branch_ids, default: float | None = None) -> np.ndarray:
        base = self.degree_threshold_fraction if default is None else default
        return np.array([self.branch_thresholds.get(int(b), base) for b in branch_ids], dtype=float)


@dataclass(frozen=True)
class PostContingencyTable:
    """``loading[i, j]`` = |post-outage flow on monitored i| / rating_i after outage j.

    Invalid (islanding) outage columns hold NaN.
    """

    loading: np.ndarray
    monitored: np.ndarray
    outages: np.ndarray
    valid: np.ndarray

    @property
    def valid_block(self) -> np.ndarray:
        return self.loading[:, self.valid]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.loading, index=pd.Index(self.monitored, name="monitored"),
                            columns=pd.Index(self.outages, name="outage"))


def build_table(flow: FlowState, lodf: LodfMatrix, monitors: MonitorSets, net: Network) -> PostContingencyTable:
    """Post-contingency loading of every monitored branch for every outage."""
    pos = net.branch_index
    for bid in set(monitors.monitored_branches) | set(monitors.outage_branches):
        if bid not in pos:
            raise InvalidNetworkError(f"monitor set references unknown branch {bid}")
        if not net.branches[pos[bid]].in_service:
            raise InvalidNetworkError(f"monitor set references out-of-service branch {bid}")
    rows = np.array([pos[b] for b in monitors.monitored_branches], dtype=int)
    cols = np.array([pos[b] for b in monitors.outage_branches], dtype=int)
    f0 = np.asarray(flow.flows)
    rating = net.ratings[rows]
    L = lodf.entries[np.ix_(rows, cols)]
    post = f0[rows][:, None] + L * f0[cols][None, :]
    # outaged line carries nothing, whatever the diagonal convention
    post[rows[:, None] == cols[None, :]] = 0.0
    valid = lodf.valid_outage[cols].copy()
    loading = np.abs(post) / rating[:, None]
    loading[:, ~valid] = np.nan
    return PostContingencyTable(loading, np.array(monitors.monitored_branches, dtype=int),
                                np.array(monitors.outage_branches, dtype=int), valid)


def vulnerability_rank(table: PostContingencyTable) -> pd.Series:
    """Worst post-contingency loading of each monitored branch, in percent."""
    if not table.valid.any():
        raise NoContingenciesError("no contingencies evaluated")
    vals = table.valid_block.max(axis=1) * 100.0
    return pd.Series(vals, index=pd.Index(table.monitored, name="branch"), name="v_rank")


def vulnerability_degree(
    table: PostContingencyTable,
    limits: LimitSet | None = None,
    threshold_fraction: float | None = None,
) -> pd.Series:
    """Number of valid outages that push each monitored branch above its threshold."""
    limits = limits or LimitSet()
    thr = limits.thresholds_for(table.monitored, threshold_fraction)
    counts = (table.valid_block > thr[:, None]).sum(axis=1)
    return pd.Series(counts, index=pd.Index(table.monitored, name="branch"), name="v_degree")


def system_vulnerability_degree(
    v_rank: pd.Series, topology: TopologyClassification, threshold_fraction: float = 1.0
) -> int:
    """Count of non-radial monitored branches whose rank exceeds the threshold."""
    keep = [not topology.is_radial(int(b)) for b in v_rank.index]
    return int((v_rank[keep] > 100.0 * threshold_fraction).sum())


def criticality_rank(table: PostContingencyTable) -> pd.Series:
    """Worst loading each outage induces on the other monitored branches, in percent.

    Invalid outages are NaN.
    """
    vals = np.full(table.outages.size, np.nan)
    if table.loading.shape[0]:
        vals[table.valid] = table.valid_block.max(axis=0) * 100.0
    return pd.Series(vals, index=pd.Index(table.outages, name="branch"), name="c_rank")


def criticality_degree(
    table: PostContingencyTable,
    limits: LimitSet | None = None,
    threshold_fraction: float | None = None,
) -> pd.Series:
    """Number of monitored branches each outage pushes above their thresholds (NA if invalid)."""
    limits = limits or LimitSet()
    thr = limits.thresholds_for(table.monitored, threshold_fraction)
    counts = (table.valid_block > thr[:, None]).sum(axis=0)
    out = pd.Series(pd.array([pd.NA] * table.outages.size, dtype="Int64"),
                    index=pd.Index(table.outages, name="branch"), name="c_degree")
    out[table.valid] = counts
    return out


def system_criticality_degree(
    c_rank: pd.Series, topology: TopologyClassification, threshold_fraction: float = 1.0
) -> int:
    """Count of non-radial outages whose criticality rank exceeds the threshold."""
    keep = [not topology.is_radial(int(b)) for b in c_rank.index]
    return int((c_rank[keep].dropna() > 100.0 * threshold_fraction).sum())


def violation_counts(table: PostContingencyTable, limits: LimitSet | None = None) -> tuple[int, int]:
    """``(emergency, contingency)`` violation counts.

    In the default ``"lines"`` mode a monitored branch counts once if any
    valid outage loads it beyond the limit; ``"cells"`` counts every
    (branch, outage) pair instead.
    """
    limits = limits or LimitSet()
    block = table.valid_block
    out = []
    for frac in (limits.emergency_fraction, limits.contingency_fraction):
        over = block > frac
        out.append(int(over.sum() if limits.violation_mode == "cells" else over.any(axis=1).sum()))
    return out[0], out[1]


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------


def _series_to_json(s: pd.Series) -> dict:
    return {str(int(k)): (None if pd.isna(v) else (int(v) if s.dtype.kind in "iu" else float(v)))
            for k, v in s.items()}


def _series_from_json(d: dict, name: str, integer: bool) -> pd.Series:
    # JSON writers may sort keys as strings ("1", "10", "2"); restore numeric order
    d = dict(sorted(d.items(), key=lambda kv: int(kv[0])))
    idx = pd.Index([int(k) for k in d], name="branch")
    if integer:
        return pd.Series(pd.array([pd.NA if v is None else v for v in d.values()], dtype="Int64"), index=idx, name=name)
    return pd.Series([np.nan if v is None else float(v) for v in d.values()], index=idx, name=name, dtype=float)


@dataclass(frozen=True)
class StressReport:
    """All stress metrics for one operating state.

    ``present_overloads`` counts branches whose *current* flow already exceeds
    the contingency limit, i.e. lines running on their short-duration
    emergency rating (used by corrective switching).
    """

    label: str
    v_rank: pd.Series
    v_degree: pd.Series
    v_system: int
    c_rank: pd.Series
    c_degree: pd.Series
    c_system: int
    emergency_violations: int
    contingency_violations: int
    present_overloads: int = 0
    invalid_outages: tuple[int, ...] = ()

    @property
    def max_v_rank(self) -> float:
        """Highest vulnerability rank; 0 when no outage could be evaluated."""
        return float(self.v_rank.max()) if self.v_rank.notna().any() else 0.0

    @property
    def max_c_rank(self) -> float:
        return float(self.c_rank.max()) if self.c_rank.notna().any() else 0.0

    @property
    def max_v_degree(self) -> int:
        return int(self.v_degree.max()) if len(self.v_degree) else 0

    @property
    def max_c_degree(self) -> int:
        return int(self.c_degree.dropna().max()) if self.c_degree.notna().any() else 0

    def worst_branch(self) -> int:
        """Monitored branch with the highest vulnerability rank (lowest id on ties)."""
        if not self.v_rank.notna().any():
            raise NoContingenciesError("no contingencies evaluated")
        top = self.v_rank[self.v_rank == self.v_rank.max()]
        return int(min(top.index))

    def metric(self, name: str) -> float:
        """Scalar metric by name, as used by switching policies."""
        getters = {
            "v_rank": lambda: self.max_v_rank,
            "c_rank": lambda: self.max_c_rank,
            "v_degree": lambda: self.max_v_degree,
            "c_degree": lambda: self.max_c_degree,
            "v_system": lambda: self.v_system,
            "c_system": lambda: self.c_system,
            "emergency_violations": lambda: self.emergency_violations,
            "contingency_violations": lambda: self.contingency_violations,
            "present_overloads": lambda: self.present_overloads,
        }
        try:
            return float(getters[name]())
        except KeyError:
            raise ValueError(f"unknown metric {name!r}; choose from {sorted(getters)}") from None

    def table_row(self) -> dict:
        """The nine summary columns, ranks formatted with two decimals."""
        return {
            "loading": self.label,
            "V_rank": f"{self.max_v_rank:.2f}%",
            "V_degree": self.max_v_degree,
            "V_N": self.v_system,
            "C_rank": f"{self.max_c_rank:.2f}%",
            "C_degree": self.max_c_degree,
            "C_N": self.c_system,
            "emergency_violations": self.emergency_violations,
            "contingency_violations": self.contingency_violations,
        }

    def summary(self) -> dict:
        return {
            "max_v_rank": self.max_v_rank,
            "max_v_degree": self.max_v_degree,
            "v_system": self.v_system,
            "max_c_rank": self.max_c_rank,
            "max_c_degree": self.max_c_degree,
            "c_system": self.c_system,
            "emergency_violations": self.emergency_violations,
            "contingency_violations": self.contingency_violations,
            "present_overloads": self.present_overloads,
        }

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "summary": self.summary(),
            "v_rank": _series_to_json(self.v_rank),
            "v_degree": _series_to_json(self.v_degree),
            "v_system": self.v_system,
            "c_rank": _series_to_json(self.c_rank),
            "c_degree": _series_to_json(self.c_degree),
            "c_system": self.c_system,
            "emergency_violations": self.emergency_violations,
            "contingency_violations": self.contingency_violations,
            "present_overloads": self.present_overloads,
            "invalid_outages": list(self.invalid_outages),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StressReport":
        return cls(
            label=d["label"],
            v_rank=_series_from_json(d["v_rank"], "v_rank", False),
            v_degree=_series_from_json(d["v_degree"], "v_degree", False).astype(int),
            v_system=int(d["v_system"]),
            c_rank=_series_from_json(d["c_rank"], "c_rank", False),
            c_degree=_series_from_json(d["c_degree"], "c_degree", True),
            c_system=int(d["c_system"]),
            emergency_violations=int(d["emergency_violations"]),
            contingency_violations=int(d["contingency_violations"]),
            present_overloads=int(d.get("present_overloads", 0)),
            invalid_outages=tuple(d.get("invalid_outages", ())),
        )

    def equals(self, other: "StressReport", rank_tol: float = 0.0) -> bool:
        """Counts compared exactly, ranks within ``rank_tol`` percentage points."""
        if self.summary().keys() != other.summary().keys():
            return False
        ints = ("v_system", "c_system", "emergency_violations", "contingency_violations", "present_overloads")
        if any(getattr(self, k) != getattr(other, k) for k in ints):
            return False
        if not (self.v_degree.sort_index().equals(other.v_degree.sort_index())
                and self.c_degree.sort_index().equals(other.c_degree.sort_index())):
            return False
        for a, b in ((self.v_rank, other.v_rank), (self.c_rank, other.c_rank)):
            a, b = a.sort_index(), b.sort_index()
            if not a.index.equals(b.index):
                return False
            if not np.allclose(a.to_numpy(float), b.to_numpy(float), rtol=0.0, atol=rank_tol, equal_nan=True):
                return False
        return True


def report_from_table(
    table: PostContingencyTable,
    topology: TopologyClassification,
    limits: LimitSet | None = None,
    label: str = "",
    system_threshold: float = 1.0,
    present_loading: np.ndarray | None = None,
) -> StressReport:
    """Reduce a loading table to a :class:`StressReport`."""
    limits = limits or LimitSet()
    if table.valid.any():
        v_rank = vulnerability_rank(table)
    else:
        # every outage islands the grid: ranks undefined, counts zero
        v_rank = pd.Series(np.nan, index=pd.Index(table.monitored, name="branch"), name="v_rank")
    c_rank = criticality_rank(table)
    emergency, contingency = violation_counts(table, limits)
    present = 0 if present_loading is None else int((present_loading > limits.contingency_fraction).sum())
    return StressReport(
        label=label,
        v_rank=v_rank,
        v_degree=vulnerability_degree(table, limits),
        v_system=system_vulnerability_degree(v_rank, topology, system_threshold),
        c_rank=c_rank,
        c_degree=criticality_degree(table, limits),
        c_system=system_criticality_degree(c_rank, topology, system_threshold),
        emergency_violations=emergency,
        contingency_violations=contingency,
        present_overloads=present,
        invalid_outages=tuple(int(b) for b, ok in zip(table.outages, table.valid) if not ok),
    )


class Analysis(NamedTuple):
    """Every intermediate of one stress evaluation."""

    net: Network
    topology: TopologyClassification
    flow: FlowState
    lodf: LodfMatrix
    monitors: MonitorSets
    table: PostContingencyTable
    report: StressReport


def analyze(
    net: Network,
    monitors: MonitorSets | None = None,
    limits: LimitSet | None = None,
    *,
    label: str = "",
    sparsity_threshold: float = 0.0,
    system_threshold: float = 1.0,
) -> Analysis:
    """Full N-1 pipeline: topology, DC flow, PTDF, LODF, table and metrics."""
    topology = classify_topology(net)
    flow = solve_dc(net)
    lodf = compute_lodf(compute_ptdf(net), net, sparsity_threshold, topology)
    monitors = (monitors or MonitorSets.default(net)).restricted_to(net)
    table = build_table(flow, lodf, monitors, net)
    rows = [net.branch_index[b] for b in monitors.monitored_branches]
    present = np.abs(flow.flows[rows]) / net.ratings[rows]
    report = report_from_table(table, topology, limits, label, system_threshold, present)
    return Analysis(net, topology, flow, lodf, monitors, table, report)


def stress_report(net: Network, monitors=None, limits=None, **kwargs) -> StressReport:
    return analyze(net, monitors, limits, **kwargs).report

