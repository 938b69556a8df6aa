"""Preventive and corrective transmission switching driven by LODF candidates.

The search is: check the stress trigger, pick the worst-stressed monitored
branch, score every other in-service non-radial branch by the flow relief
its opening is predicted to bring to that branch, then evaluate candidates
with a full stress re-analysis in score order until one is acceptable or the
list runs out.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .dcflow import FlowState, LodfMatrix, MonitorSets
from .errors import GridStressError, InvalidNetworkError, IslandingError
from .metrics import Analysis, LimitSet, StressReport, analyze
from .network import Network, TopologyClassification, classify_topology

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 20
RELIEF_TOL = 1e-9  # MW
IMPROVE_TOL = 1e-9  # relative; smaller changes are float noise, not improvement
METRICS = frozenset({
    "v_rank", "c_rank", "v_degree", "c_degree", "v_system", "c_system",
    "emergency_violations", "contingency_violations", "present_overloads",
})


@dataclass(frozen=True)
class SwitchingAction:
    branch: int
    mode: Literal["preventive", "corrective"]
    triggering_context: str = ""

    def to_dict(self) -> dict:
        return {"branch": self.branch, "mode": self.mode, "triggering_context": self.triggering_context}


@dataclass(frozen=True)
class StressPolicy:
    """When a state counts as atypically stressed, and what fixes it.

    The state is *triggered* when ``metric > threshold``, or
    ``v_system > v_system_baseline`` (if a baseline is set), or, with
    ``require_no_present_overloads``, when some line's present flow already
    exceeds its contingency limit. The default (max vulnerability rank above
    135%) fires exactly when at least one emergency-limit violation exists.

    A candidate is *acceptable* when it clears every trigger, creates no new
    emergency violations and no new present overloads.

    ``selection="first"`` returns the first acceptable candidate in score
    order; ``"best"`` evaluates the whole budget and returns the acceptable
    candidate with the lowest triggering metric. ``candidate_pool="all"``
    also queues branches with no predicted relief (after the relieving ones).
    """

    metric: str = "v_rank"
    threshold: float = 135.0
    v_system_baseline: int | None = None
    require_no_present_overloads: bool = False
    selection: Literal["first", "best"] = "first"
    candidate_pool: Literal["relief", "all"] = "relief"

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("trigger threshold must be non-negative")
        if self.v_system_baseline is not None and self.v_system_baseline < 0:
            raise ValueError("v_system baseline must be non-negative")
        if self.selection not in ("first", "best"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.candidate_pool not in ("relief", "all"):
            raise ValueError(f"unknown candidate_pool {self.candidate_pool!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; choose from {sorted(METRICS)}")

    @classmethod
    def corrective(cls, **kwargs) -> "StressPolicy":
        """Post-contingency defaults: worst criticality above 135%, lines on their emergency rating."""
        kwargs.setdefault("metric", "c_rank")
        kwargs.setdefault("require_no_present_overloads", True)
        return cls(**kwargs)

    def fired(self, report: StressReport) -> list[str]:
        """Names of the trigger conditions that hold for ``report``, primary first."""
        out = []
        if report.metric(self.metric) > self.threshold:
            out.append(self.metric)
        if self.v_system_baseline is not None and report.v_system > self.v_system_baseline:
            out.append("v_system")
        if self.require_no_present_overloads and report.present_overloads > 0:
            out.append("present_overloads")
        return out

    def triggering_metric(self, report: StressReport) -> str | None:
        fired = self.fired(report)
        return fired[0] if fired else None

    def accepts(self, pre: StressReport, post: StressReport) -> bool:
        return (
            not self.fired(post)
            and post.emergency_violations <= pre.emergency_violations
            and post.present_overloads <= pre.present_overloads
        )


@dataclass(frozen=True)
class CandidateResult:
    branch: int
    score: float
    metric_value: float | None = None
    summary: dict | None = None
    accepted: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {"branch": self.branch, "score": self.score, "metric_value": self.metric_value,
                "accepted": self.accepted, "error": self.error, "summary": self.summary}


@dataclass(frozen=True)
class SwitchingRecommendation:
    """Outcome of a switching search with its full audit trail.

    ``status`` is ``"improved"`` when an action was found or when the trigger
    was not met (``triggered`` is then False and ``action`` None),
    ``"no-candidate"`` when no branch offers predicted relief and
    ``"list-depleted"`` when every evaluated candidate failed.
    """

    action: SwitchingAction | None
    pre_report: StressReport
    post_report: StressReport | None
    candidates_evaluated: tuple[CandidateResult, ...]
    status: Literal["improved", "no-candidate", "list-depleted"]
    triggered: bool = True
    triggering_metric: str | None = None
    worst_branch: int | None = None
    accepted: bool = False
    context_report: StressReport | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "triggered": self.triggered,
            "triggering_metric": self.triggering_metric,
            "worst_branch": self.worst_branch,
            "accepted": self.accepted,
            "action": self.action.to_dict() if self.action else None,
            "pre_report": self.pre_report.to_dict(),
            "post_report": self.post_report.to_dict() if self.post_report else None,
            "context_report": self.context_report.to_dict() if self.context_report else None,
            "candidates_evaluated": [c.to_dict() for c in self.candidates_evaluated],
            "notes": list(self.notes),
        }


def predicted_relief(flow: FlowState, lodf: LodfMatrix, overloaded: int, candidate: int) -> float:
    """Reduction of |flow| on ``overloaded`` predicted for opening ``candidate`` (MW)."""
    o = int(np.flatnonzero(lodf.branch_ids == overloaded)[0])
    j = int(np.flatnonzero(lodf.branch_ids == candidate)[0])
    f_o, f_j = flow.flows[o], flow.flows[j]
    return float(abs(f_o) - abs(f_o + lodf.entries[o, j] * f_j))


def rank_candidates(
    lodf: LodfMatrix,
    overloaded: int,
    flow: FlowState,
    topology: TopologyClassification,
    budget: int | None = DEFAULT_BUDGET,
    *,
    include_non_relieving: bool = False,
) -> list[tuple[int, float]]:
    """Switching candidates for relieving ``overloaded``, best first.

    Each in-service non-radial branch ``j`` other than ``overloaded`` is
    scored by :func:`predicted_relief`, ``|f_o| - |f_o + LODF[o, j] f_j|``;
    for small corrections this is ``-sign(f_o) LODF[o, j] f_j``, so a strongly
    negative LODF on a heavily loaded line ranks first. Only positive relief is
    kept unless ``include_non_relieving``. Ties break by ascending branch id.
    ``budget=None`` keeps the whole list.
    """
    if budget is not None and budget < 1:
        raise ValueError("budget must be at least 1")
    if overloaded not in set(lodf.branch_ids.tolist()):
        raise InvalidNetworkError(f"unknown branch {overloaded}")
    o = int(np.flatnonzero(lodf.branch_ids == overloaded)[0])
    if np.isnan(lodf.entries[o]).all():
        raise InvalidNetworkError(f"branch {overloaded} is not monitored (out of service)")
    f = np.asarray(flow.flows)
    scored = []
    for j, bid in enumerate(lodf.branch_ids.tolist()):
        if bid == overloaded or not lodf.valid_outage[j] or topology.is_radial(bid):
            continue
        relief = float(abs(f[o]) - abs(f[o] + lodf.entries[o, j] * f[j]))
        if relief > RELIEF_TOL or include_non_relieving:
            scored.append((bid, relief))
    scored.sort(key=lambda c: (-c[1], c[0]))
    return scored if budget is None else scored[:budget]


def evaluate_switch(
    net: Network,
    open_branch: int,
    monitors: MonitorSets | None = None,
    limits: LimitSet | None = None,
    *,
    close: bool = False,
    label: str = "",
    sparsity_threshold: float = 0.0,
) -> StressReport:
    """Stress report of ``net`` with ``open_branch`` opened (or closed), dispatch frozen."""
    return _switched_analysis(net, open_branch, monitors, limits, close=close, label=label,
                              sparsity_threshold=sparsity_threshold).report


def _switched_analysis(net, branch, monitors, limits, *, close=False, label="", sparsity_threshold=0.0) -> Analysis:
    br = net.branch(branch)
    if close:
        if br.in_service:
            raise InvalidNetworkError(f"branch {branch} is already closed")
        switched = net.with_branch_status(branch, True)
        monitors = _with_branch(monitors, branch)
    else:
        if not br.in_service:
            raise InvalidNetworkError(f"branch {branch} is already open")
        switched = net.with_branch_status(branch, False)
        if classify_topology(net).is_radial(branch):
            raise IslandingError(f"opening radial branch {branch} islands the network")
    return analyze(switched, monitors, limits, label=label, sparsity_threshold=sparsity_threshold)


def _with_branch(monitors: MonitorSets | None, branch: int) -> MonitorSets | None:
    if monitors is None:
        return None
    mon = monitors.monitored_branches + ((branch,) if branch not in monitors.monitored_branches else ())
    out = monitors.outage_branches + ((branch,) if branch not in monitors.outage_branches else ())
    return MonitorSets(mon, out)


def _worst_branch(base: Analysis, metric: str | None) -> int:
    report = base.report
    if metric == "present_overloads":
        rows = [base.net.branch_index[b] for b in base.monitors.monitored_branches]
        loading = np.abs(base.flow.flows[rows]) / base.net.ratings[rows]
        top = np.flatnonzero(loading == loading.max())
        return int(min(base.monitors.monitored_branches[k] for k in top))
    return report.worst_branch()


def _search(
    base: Analysis,
    policy: StressPolicy,
    limits: LimitSet | None,
    budget: int | None,
    mode: str,
    context: str,
    label: str,
) -> SwitchingRecommendation:
    pre = base.report
    metric = policy.triggering_metric(pre)
    if metric is None:
        return SwitchingRecommendation(None, pre, None, (), "improved", triggered=False)

    worst = _worst_branch(base, metric)
    ranked = rank_candidates(base.lodf, worst, base.flow, base.topology, budget,
                             include_non_relieving=policy.candidate_pool == "all")
    if not ranked:
        return SwitchingRecommendation(None, pre, None, (), "no-candidate", triggering_metric=metric,
                                       worst_branch=worst)

    pre_value = pre.metric(metric)
    results: list[CandidateResult] = []
    reports: dict[int, StressReport] = {}
    for bid, score in ranked:
        try:
            post = _switched_analysis(base.net, bid, base.monitors, limits,
                                      label=f"{label} open {bid}".strip(),
                                      sparsity_threshold=base.lodf.sparsity_threshold).report
        except GridStressError as exc:
            log.info("switching candidate %s skipped: %s", bid, exc)
            results.append(CandidateResult(bid, score, error=str(exc)))
            continue
        ok = policy.accepts(pre, post)
        results.append(CandidateResult(bid, score, post.metric(metric), post.summary(), ok))
        reports[bid] = post
        if ok and policy.selection == "first":
            break

    chosen = _choose(results, policy, pre, reports, metric, pre_value)
    if chosen is None:
        return SwitchingRecommendation(None, pre, None, tuple(results), "list-depleted",
                                       triggering_metric=metric, worst_branch=worst)
    action = SwitchingAction(chosen.branch, mode, context)
    return SwitchingRecommendation(action, pre, reports[chosen.branch], tuple(results), "improved",
                                   triggering_metric=metric, worst_branch=worst, accepted=chosen.accepted)


def improves(post_value: float, pre_value: float) -> bool:
    """Strict decrease beyond round-off."""
    return post_value < pre_value - IMPROVE_TOL * max(1.0, abs(pre_value))


def _choose(results, policy, pre, reports, metric, pre_value):
    evaluated = [r for r in results if r.error is None]
    accepted = [r for r in evaluated if r.accepted]
    if accepted:
        if policy.selection == "first":
            return accepted[0]
        return min(accepted, key=lambda r: (r.metric_value, reports[r.branch].max_v_rank))
    # fall back to the best strict improvement that stays safe
    improving = [
        r for r in evaluated
        if improves(r.metric_value, pre_value)
        and reports[r.branch].emergency_violations <= pre.emergency_violations
        and reports[r.branch].present_overloads <= pre.present_overloads
    ]
    if not improving:
        return None
    return min(improving, key=lambda r: (r.metric_value, reports[r.branch].max_v_rank))


def preventive_search(
    net: Network,
    policy: StressPolicy | None = None,
    monitors: MonitorSets | None = None,
    limits: LimitSet | None = None,
    budget: int | None = DEFAULT_BUDGET,
    *,
    label: str = "",
    sparsity_threshold: float = 0.0,
) -> SwitchingRecommendation:
    """Search for one line opening that relieves atypical stress in the base case."""
    policy = policy or StressPolicy()
    base = analyze(net, monitors, limits, label=label, sparsity_threshold=sparsity_threshold)
    return _search(base, policy, limits, budget, "preventive", label or net.name, label)


def corrective_search(
    net: Network,
    contingency: int,
    policy: StressPolicy | None = None,
    monitors: MonitorSets | None = None,
    limits: LimitSet | None = None,
    budget: int | None = DEFAULT_BUDGET,
    *,
    label: str = "",
    sparsity_threshold: float = 0.0,
) -> SwitchingRecommendation:
    """Search for one line opening that relieves stress after ``contingency``.

    The N-1 network (contingency applied, dispatch frozen) is re-analyzed as
    a new base: its own N-1 table measures exposure to a further (N-1-1)
    outage, and present overloads are lines already beyond their contingency
    limit and running on the emergency clock.
    """
    policy = policy or StressPolicy.corrective()
    if not net.branch(contingency).in_service:
        raise InvalidNetworkError(f"contingency branch {contingency} is already out of service")
    if classify_topology(net).is_radial(contingency):
        raise IslandingError(f"contingency {contingency} is radial and islands the network")
    post_ctg = net.with_branch_status(contingency, False)
    ctx_label = f"{label} N-1 {contingency}".strip()
    base = analyze(post_ctg, monitors, limits, label=ctx_label, sparsity_threshold=sparsity_threshold)
    rec = _search(base, policy, limits, budget, "corrective", f"contingency {contingency}", ctx_label)
    intact = analyze(net, monitors, limits, label=label, sparsity_threshold=sparsity_threshold).report
    return dataclasses.replace(rec, context_report=intact)
