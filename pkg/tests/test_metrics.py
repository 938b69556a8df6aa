import json

import numpy as np
import pandas as pd
import pytest

from gridstress.dcflow import MonitorSets, compute_lodf, compute_ptdf, solve_dc
from gridstress.errors import InvalidNetworkError, NoContingenciesError
from gridstress.metrics import (
    TABLE_COLUMNS,
    LimitSet,
    PostContingencyTable,
    StressReport,
    analyze,
    build_table,
    criticality_degree,
    criticality_rank,
    system_criticality_degree,
    system_vulnerability_degree,
    violation_counts,
    vulnerability_degree,
    vulnerability_rank,
)
from gridstress.network import builtin_case, classify_topology, scale_load
from oracles import exhaustive_metrics


def _table(net, monitors=None):
    flow = solve_dc(net)
    lodf = compute_lodf(compute_ptdf(net), net)
    return build_table(flow, lodf, monitors or MonitorSets.default(net), net)


def _synthetic_table(cells):
    cells = np.asarray(cells, dtype=float)
    m, k = cells.shape
    return PostContingencyTable(cells, np.arange(1, m + 1), np.arange(1, k + 1), np.ones(k, dtype=bool))


def test_triangle_table(triangle):
    t = _table(triangle).to_frame()
    assert t.loc[2, 1] == pytest.approx(0.90)
    assert t.loc[2, 3] == pytest.approx(0.90)
    assert t.loc[3, 1] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diag(t.to_numpy()) == 0.0)


def test_triangle_metrics(triangle):
    table = _table(triangle)
    topo = classify_topology(triangle)
    v = vulnerability_rank(table)
    np.testing.assert_allclose(v, 90.0, atol=1e-9)
    assert (vulnerability_degree(table) == 0).all()
    assert vulnerability_degree(table, threshold_fraction=0.85)[2] == 2
    assert system_vulnerability_degree(v, topo) == 0
    assert system_vulnerability_degree(v, topo, 0.85) == 3
    c = criticality_rank(table)
    assert c[1] == pytest.approx(90.0)
    assert criticality_degree(table, threshold_fraction=0.85)[1] == 1
    assert system_criticality_degree(c, topo, 0.85) == 3
    assert system_criticality_degree(c, topo) == 0
    assert violation_counts(table) == (0, 0)


def test_single_cell_violation_and_modes():
    table = _synthetic_table([[0.5, 1.4], [1.25, 1.3]])
    assert violation_counts(table) == (1, 2)
    assert violation_counts(table, LimitSet(violation_mode="cells")) == (1, 3)
    assert violation_counts(_synthetic_table([[1.4]])) == (1, 1)


def test_all_zero_table():
    table = _synthetic_table(np.zeros((3, 3)))
    assert (vulnerability_rank(table) == 0).all()
    assert (criticality_rank(table) == 0).all()


def test_infinite_threshold_gives_zero_degrees(triangle):
    table = _table(triangle)
    assert (vulnerability_degree(table, threshold_fraction=1e12) == 0).all()
    assert (criticality_degree(table, threshold_fraction=1e12) == 0).all()


def test_per_branch_thresholds(triangle):
    table = _table(triangle)
    limits = LimitSet(branch_thresholds={2: 0.85})
    deg = vulnerability_degree(table, limits)
    assert deg.tolist() == [0, 2, 0]


def test_no_contingencies():
    net = builtin_case("two_bus")
    table = _table(net)
    with pytest.raises(NoContingenciesError, match="no contingencies evaluated"):
        vulnerability_rank(table)
    report = analyze(net).report
    assert report.v_system == 0 and report.c_system == 0
    assert report.max_v_rank == 0.0
    assert report.invalid_outages == (1,)


def test_invalid_outages_reported(case118):
    report = analyze(case118).report
    assert set(report.invalid_outages) == set(classify_topology(case118).radial_branches)
    assert report.c_rank[list(report.invalid_outages)].isna().all()
    assert report.c_degree[list(report.invalid_outages)].isna().all()


def test_monitor_set_errors(triangle):
    with pytest.raises(InvalidNetworkError, match="unknown"):
        _table(triangle, MonitorSets((1, 9), (1,)))
    net = triangle.with_branch_status(1, False)
    with pytest.raises(InvalidNetworkError, match="out-of-service"):
        _table(net, MonitorSets((1, 2), (2,)))


def _check_against_oracle(net, limits=None, monitors=None, system_threshold=1.0):
    limits = limits or LimitSet()
    rep = analyze(net, monitors, limits, system_threshold=system_threshold).report
    ref = exhaustive_metrics(
        net,
        degree_threshold=limits.degree_threshold_fraction,
        system_threshold=system_threshold,
        emergency=limits.emergency_fraction,
        contingency=limits.contingency_fraction,
        monitored=monitors.monitored_branches if monitors else None,
        outages=monitors.outage_branches if monitors else None,
    )
    for b, r in ref["v_rank"].items():
        assert rep.v_rank[b] == pytest.approx(r, abs=1e-6)
        assert rep.v_degree[b] == ref["v_degree"][b]
    for b, r in ref["c_rank"].items():
        assert rep.c_rank[b] == pytest.approx(r, abs=1e-6)
        assert rep.c_degree[b] == ref["c_degree"][b]
    assert rep.c_rank.notna().sum() == len(ref["valid"])
    assert rep.v_system == ref["v_system"]
    assert rep.c_system == ref["c_system"]
    assert rep.emergency_violations == ref["emergency_violations"]
    assert rep.contingency_violations == ref["contingency_violations"]


@pytest.mark.parametrize("name", ["triangle", "four_bus", "ladder12", "mesh30"])
def test_oracle_equivalence_synthetic(name):
    _check_against_oracle(builtin_case(name))
    _check_against_oracle(builtin_case(name), LimitSet(degree_threshold_fraction=0.8), system_threshold=0.9)


def test_oracle_equivalence_restricted_monitors():
    net = builtin_case("mesh30")
    _check_against_oracle(net, monitors=MonitorSets((1, 2, 5, 9, 14, 22), (3, 5, 7, 9, 11, 20, 30)))


def test_degree_monotone_in_threshold(select_bus):
    a = analyze(select_bus)
    prev = None
    for thr in (0.6, 0.8, 1.0, 1.2, 1.5):
        limits = LimitSet(degree_threshold_fraction=thr)
        vd = vulnerability_degree(a.table, limits)
        cd = criticality_degree(a.table, limits).fillna(0)
        vs = system_vulnerability_degree(a.report.v_rank, a.topology, thr)
        cs = system_criticality_degree(a.report.c_rank, a.topology, thr)
        if prev is not None:
            assert (vd <= prev[0]).all() and (cd <= prev[1]).all()
            assert vs <= prev[2] and cs <= prev[3]
        prev = (vd, cd, vs, cs)


def test_scaling_covariance(case118):
    base = analyze(case118)
    for k in (0.97, 1.05, 1.10):
        a = analyze(scale_load(case118, k))
        np.testing.assert_allclose(a.table.valid_block, k * base.table.valid_block, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(a.report.v_rank, k * base.report.v_rank, rtol=1e-9)
        more, less = (a, base) if k > 1 else (base, a)
        assert (more.report.v_degree >= less.report.v_degree).all()


def test_report_invariants(case118, select_bus):
    for net in (case118, select_bus):
        r = analyze(net).report
        assert r.max_v_rank == pytest.approx(r.max_c_rank)
        assert r.emergency_violations <= r.contingency_violations
        assert r.v_degree.sum() == r.c_degree.sum()
        assert r.max_v_degree <= r.c_rank.notna().sum()


def test_report_round_trip_and_row(triangle, select_bus):
    for net in (triangle, select_bus):
        r = analyze(net, label="x").report
        back = StressReport.from_dict(json.loads(json.dumps(r.to_dict())))
        assert back.equals(r)
        assert back.to_dict() == r.to_dict()
    row = analyze(triangle, label="100%").report.table_row()
    assert tuple(row) == TABLE_COLUMNS
    assert row["V_rank"] == "90.00%" and row["C_rank"] == "90.00%"
    assert (row["V_degree"], row["V_N"], row["emergency_violations"]) == (0, 0, 0)


def test_worst_branch_ties(triangle):
    # all three lines sit at 90%: lowest id wins
    assert analyze(triangle).report.worst_branch() == 1
    rep = analyze(triangle).report
    with pytest.raises(ValueError, match="unknown metric"):
        rep.metric("bogus")


def test_present_overloads(triangle):
    import dataclasses
    tight = dataclasses.replace(triangle, branches=tuple(
        dataclasses.replace(b, rating_normal=40.0) if b.id == 2 else b for b in triangle.branches))
    rep = analyze(tight).report
    assert rep.present_overloads == 1  # 60 MW on a 40 MW line
    assert rep.v_degree[2] == 2


def test_limit_validation():
    with pytest.raises(ValueError):
        LimitSet(contingency_fraction=1.5, emergency_fraction=1.35)
    with pytest.raises(ValueError):
        LimitSet(degree_threshold_fraction=0.0)
    with pytest.raises(ValueError):
        LimitSet(violation_mode="pairs")


def test_frames(triangle):
    a = analyze(triangle)
    frame = a.table.to_frame()
    assert isinstance(frame, pd.DataFrame) and frame.shape == (3, 3)
    assert a.report.v_rank.index.name == "branch"
