import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridstress.dcflow import (
    MonitorSets,
    compute_lodf,
    compute_ptdf,
    factorize,
    post_outage_flows,
    save_matrices,
    solve_dc,
)
from gridstress.errors import IslandingError, SingularNetworkError
from gridstress.network import Branch, Bus, Generator, Network, builtin_case, classify_topology
from oracles import dense_flows


@st.composite
def meshed_networks(draw, max_buses=8):
    n = draw(st.integers(3, max_buses))
    parents = [draw(st.integers(1, k)) for k in range(1, n)]
    ends = [(p, k + 2) for k, p in enumerate(parents)]
    extra = draw(st.lists(st.tuples(st.integers(1, n), st.integers(1, n)), max_size=2 * n))
    ends += [(a, b) for a, b in extra if a != b]
    xs = draw(st.lists(st.floats(0.01, 0.5), min_size=len(ends), max_size=len(ends)))
    loads = draw(st.lists(st.floats(0.0, 100.0), min_size=n, max_size=n))
    slack = draw(st.integers(1, n))
    buses = [Bus(k + 1, loads[k]) for k in range(n)]
    branches = [Branch(k + 1, a, b, x, 100.0) for k, ((a, b), x) in enumerate(zip(ends, xs))]
    total = sum(loads)
    return Network(100.0, buses, branches, [Generator(slack, total, 10.0 * total + 1.0)], slack)


def test_triangle_flows(triangle):
    flow = solve_dc(triangle)
    np.testing.assert_allclose(flow.flows, [30.0, 60.0, 30.0], atol=1e-9)
    assert flow.flow(2) == pytest.approx(60.0, abs=1e-9)
    assert flow.angles[0] == 0.0


def test_triangle_lodf(triangle):
    lodf = compute_lodf(compute_ptdf(triangle), triangle)
    assert lodf.factor(2, 1) == pytest.approx(1.0, abs=1e-9)
    assert lodf.factor(3, 1) == pytest.approx(-1.0, abs=1e-9)
    assert lodf.factor(1, 1) == -1.0
    assert lodf.valid_outage.all()
    after = post_outage_flows(solve_dc(triangle), lodf, 1)
    np.testing.assert_allclose(after.flows, [0.0, 90.0, 0.0], atol=1e-9)


def test_ptdf_other_slack():
    # slack moved to bus 2: 1 MW from bus 1 splits 2/3 direct, 1/3 via bus 3 (against L23's orientation)
    net = builtin_case("triangle")
    net = Network(net.base_power, net.buses, net.branches, (Generator(2, 90.0, 200.0),), 2)
    ptdf = compute_ptdf(net)
    col = ptdf.to_frame()[1]
    assert col[1] == pytest.approx(2.0 / 3.0)
    assert col[2] == pytest.approx(1.0 / 3.0)
    assert col[3] == pytest.approx(-1.0 / 3.0)
    assert (ptdf.to_frame()[2] == 0.0).all()


def test_ptdf_reproduces_base_flows(case118, synthetic_cases):
    for net in [case118, *synthetic_cases]:
        flow = solve_dc(net)
        ptdf = compute_ptdf(net)
        np.testing.assert_allclose(ptdf.entries @ net.injections(), flow.flows, atol=1e-8)


def test_solve_matches_dense_oracle(case118, synthetic_cases):
    for net in [case118, *synthetic_cases]:
        ref = dense_flows(net)
        np.testing.assert_allclose(solve_dc(net).flows, [ref[b] for b in net.branch_ids], atol=1e-8)


def test_lodf_matches_resolve(case118, synthetic_cases):
    for net in [case118, *synthetic_cases]:
        flow = solve_dc(net)
        lodf = compute_lodf(compute_ptdf(net), net)
        for j, bid in enumerate(net.branch_ids):
            ref = dense_flows(net, out=[bid])
            if ref is None:
                assert not lodf.valid_outage[j]
                continue
            after = post_outage_flows(flow, lodf, int(bid))
            err = np.abs(after.flows - [ref[b] for b in net.branch_ids]).max()
            assert err / net.base_power < 1e-6, (net.name, bid)


def test_radial_columns_invalid(case118):
    lodf = compute_lodf(compute_ptdf(case118), case118)
    radial = classify_topology(case118).radial_branches
    for j, bid in enumerate(case118.branch_ids):
        assert lodf.valid_outage[j] == (bid not in radial)
    assert np.isnan(lodf.entries[:, ~lodf.valid_outage]).all()
    assert "radial" in lodf.diagnostics[7]
    with pytest.raises(IslandingError, match="radial"):
        post_outage_flows(solve_dc(case118), lodf, 7)


def test_out_of_service_branch(case118):
    net = case118.with_branch_status(42, False)
    flow = solve_dc(net)
    assert flow.flow(42) == 0.0
    lodf = compute_lodf(compute_ptdf(net), net)
    assert not lodf.is_valid(42)
    assert lodf.diagnostics[42] == "out of service"
    k = int(np.flatnonzero(net.branch_ids == 42)[0])
    assert np.isnan(lodf.entries[k]).all()


def test_lodf_bounds(case118, synthetic_cases):
    for net in [case118, *synthetic_cases]:
        lodf = compute_lodf(compute_ptdf(net), net)
        vals = lodf.entries[:, lodf.valid_outage]
        vals = vals[np.isfinite(vals)]
        assert np.all(np.abs(vals) <= 1.0 + 1e-9), net.name


@pytest.mark.parametrize("threshold", [0.01, 0.05, 0.2])
def test_sparsification_error_bound(case118, threshold):
    flow = solve_dc(case118)
    ptdf = compute_ptdf(case118)
    exact = compute_lodf(ptdf, case118)
    sparse = compute_lodf(ptdf, case118, sparsity_threshold=threshold)
    dropped = (sparse.entries == 0) & (exact.entries != 0)
    assert np.all(np.abs(exact.entries[dropped]) < threshold)
    for bid in (1, 38, 104):
        a = post_outage_flows(flow, exact, bid).flows
        b = post_outage_flows(flow, sparse, bid).flows
        assert np.abs(a - b).max() <= threshold * abs(flow.flow(bid)) + 1e-9
    assert sparse.to_sparse().nnz < exact.to_sparse().nnz


def test_zero_injection_gives_zero_flows(triangle):
    net = Network(100.0, [Bus(b.id) for b in triangle.buses], triangle.branches, (), 1)
    assert np.all(solve_dc(net).flows == 0.0)


def test_unbalanced_and_stranded_injections(triangle):
    bad = Network(100.0, triangle.buses, triangle.branches, (Generator(1, 50.0, 200.0),), 1)
    with pytest.raises(SingularNetworkError, match="unbalanced"):
        solve_dc(bad)
    cut = triangle.with_branch_status(2, False).with_branch_status(3, False)
    with pytest.raises(SingularNetworkError, match="not connected"):
        solve_dc(cut)


def test_factorization_cached_per_topology(triangle):
    a = factorize(triangle)
    assert factorize(builtin_case("triangle")) is a
    assert factorize(triangle.with_branch_status(1, False)) is not a


def test_monitor_sets(triangle):
    ms = MonitorSets.default(triangle)
    assert ms.monitored_branches == (1, 2, 3)
    assert ms.restricted_to(triangle.with_branch_status(2, False)).outage_branches == (1, 3)


@pytest.mark.parametrize("fmt", ["csv", "npz"])
def test_save_matrices(tmp_path, triangle, fmt):
    ptdf = compute_ptdf(triangle)
    lodf = compute_lodf(ptdf, triangle)
    paths = save_matrices(ptdf, lodf, tmp_path / "tri", fmt)
    assert all(p.exists() for p in paths)
    if fmt == "npz":
        data = np.load(paths[0])
        np.testing.assert_array_equal(data["lodf"], lodf.entries)
    else:
        import pandas as pd
        back = pd.read_csv(paths[1], index_col=0)
        np.testing.assert_allclose(back.to_numpy(), lodf.entries)


@settings(max_examples=60, deadline=None)
@given(meshed_networks())
def test_property_lodf_exact_and_bounded(net):
    flow = solve_dc(net)
    lodf = compute_lodf(compute_ptdf(net), net)
    radial = classify_topology(net).radial_branches
    for j, bid in enumerate(net.branch_ids.tolist()):
        assert lodf.valid_outage[j] == (bid not in radial)
        if bid in radial:
            continue
        ref = dense_flows(net, out=[bid])
        after = post_outage_flows(flow, lodf, bid)
        np.testing.assert_allclose(after.flows, [ref[b] for b in net.branch_ids], atol=1e-6)
        col = np.delete(lodf.entries[:, j], j)
        assert np.all(np.abs(col) <= 1.0 + 1e-9)


@settings(max_examples=40, deadline=None)
@given(meshed_networks(), st.floats(0.1, 3.0))
def test_property_flows_linear_in_injections(net, k):
    from gridstress.network import scale_load
    base = solve_dc(net).flows
    scaled = solve_dc(scale_load(net, k)).flows
    np.testing.assert_allclose(scaled, k * base, atol=1e-9 * max(1.0, np.abs(base).max()) * k)
