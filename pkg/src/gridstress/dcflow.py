"""DC power flow, PTDF and LODF sensitivities.

Flows are in MW and positive from ``from_bus`` to ``to_bus``. Every matrix is
indexed by the position of the branch (or bus) in the owning
:class:`~gridstress.network.Network`, with the matching ids carried alongside.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .errors import InvalidNetworkError, IslandingError, SingularNetworkError
from .network import MW_TOL, Network, TopologyClassification, classify_topology

RESIDUAL_TOL = 1e-9  # per-unit
DENOMINATOR_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FlowState:
    """Branch flows (MW), bus injections (MW) and bus angles (rad).

    Out-of-service branches carry zero flow. Post-outage states produced by
    :func:`post_outage_flows` have NaN angles: the LODF update does not
    recover them.
    """

    flows: np.ndarray
    injections: np.ndarray
    angles: np.ndarray
    branch_ids: np.ndarray
    bus_ids: np.ndarray

    def __post_init__(self):
        for name in ("flows", "injections", "angles", "branch_ids", "bus_ids"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def flow(self, branch_id: int) -> float:
        return float(self.flows[_position(self.branch_ids, branch_id)])


@dataclass(frozen=True)
class PtdfMatrix:
    """Branch-flow change per MW injected at a bus and withdrawn at the slack."""

    entries: np.ndarray  # branches x buses
    branch_ids: np.ndarray
    bus_ids: np.ndarray
    slack_bus: int

    def __post_init__(self):
        for name in ("entries", "branch_ids", "bus_ids"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.entries, index=pd.Index(self.branch_ids, name="branch"),
                            columns=pd.Index(self.bus_ids, name="bus"))


@dataclass(frozen=True)
class LodfMatrix:
    """Line outage distribution factors.

    ``entries[i, j]`` is the fraction of branch ``j``'s pre-outage flow that
    appears on branch ``i`` when ``j`` is opened. The diagonal is stored as
    ``-1`` (an outaged branch loses all of its own flow). Columns of invalid
    outages (radial, out of service, outside the analyzed island or
    numerically degenerate) and rows of out-of-service branches are NaN;
    ``diagnostics`` records why each invalid column was rejected.
    """

    entries: np.ndarray  # branches x branches
    branch_ids: np.ndarray
    valid_outage: np.ndarray
    sparsity_threshold: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("entries", "branch_ids", "valid_outage"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def factor(self, monitored: int, outaged: int) -> float:
        i = _position(self.branch_ids, monitored)
        j = _position(self.branch_ids, outaged)
        return float(self.entries[i, j])

    def is_valid(self, branch_id: int) -> bool:
        return bool(self.valid_outage[_position(self.branch_ids, branch_id)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.entries, index=pd.Index(self.branch_ids, name="monitored"),
                            columns=pd.Index(self.branch_ids, name="outage"))

    def to_sparse(self) -> sp.csc_matrix:
        """Valid columns only, NaN and exact zeros dropped."""
        dense = np.where(self.valid_outage[None, :] & np.isfinite(self.entries), self.entries, 0.0)
        return sp.csc_matrix(dense)


@dataclass(frozen=True)
class MonitorSets:
    """Which branches are watched (rows) and which outages are simulated (columns)."""

    monitored_branches: tuple[int, ...]
    outage_branches: tuple[int, ...]

    @classmethod
    def default(cls, net: Network) -> "MonitorSets":
        ids = tuple(net.in_service_branch_ids)
        return cls(ids, ids)

    def restricted_to(self, net: Network) -> "MonitorSets":
        """Drop branches that are out of service in ``net`` (used after switching)."""
        live = set(net.in_service_branch_ids)
        return MonitorSets(
            tuple(b for b in self.monitored_branches if b in live),
            tuple(b for b in self.outage_branches if b in live),
        )


def _position(ids: np.ndarray, branch_id: int) -> int:
    hits = np.flatnonzero(ids == branch_id)
    if hits.size == 0:
        raise InvalidNetworkError(f"unknown id {branch_id}")
    return int(hits[0])


# --------------------------------------------------------------------------
# Factorization of the reduced susceptance matrix
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Factor:
    incidence: sp.csr_matrix  # branches x buses, zero rows for open branches
    susceptance: np.ndarray  # 1/x per branch, zero when open
    island: np.ndarray  # bool per bus: in the slack's island
    reduced: np.ndarray  # bus positions of the reduced system (island minus slack)
    bred: sp.csc_matrix
    lu: object


def _topology_key(net: Network) -> tuple:
    return (
        tuple(b.id for b in net.buses),
        net.slack_bus,
        tuple((br.from_bus, br.to_bus, br.reactance, br.in_service) for br in net.branches),
    )


def factorize(net: Network) -> _Factor:
    """Sparse LU of the reduced susceptance matrix, cached per topology."""
    return _factorize_cached(_topology_key(net))


@lru_cache(maxsize=64)
def _factorize_cached(key: tuple) -> _Factor:
    bus_ids, slack, rows = key
    index = {b: k for k, b in enumerate(bus_ids)}
    n, m = len(bus_ids), len(rows)
    live = np.array([r[3] for r in rows], dtype=bool)
    f = np.array([index[r[0]] for r in rows], dtype=int)
    t = np.array([index[r[1]] for r in rows], dtype=int)
    b = np.where(live, 1.0 / np.array([r[2] for r in rows], dtype=float), 0.0)
    data = np.concatenate([live.astype(float), -live.astype(float)])
    A = sp.csr_matrix((data, (np.r_[np.arange(m), np.arange(m)], np.r_[f, t])), shape=(m, n))
    A.eliminate_zeros()

    # analyzed island: buses reachable from the slack over in-service branches
    adj = sp.csr_matrix((np.ones(2 * live.sum()), (np.r_[f[live], t[live]], np.r_[t[live], f[live]])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    island = labels == labels[index[slack]]
    reduced = np.flatnonzero(island & (np.arange(n) != index[slack]))

    B = (A.T @ sp.diags(b) @ A).tocsc()
    bred = B[reduced][:, reduced].tocsc()
    if reduced.size:
        try:
            lu = splu(bred)
        except RuntimeError as exc:
            raise SingularNetworkError(f"singular susceptance matrix: {exc}") from None
    else:
        lu = None
    return _Factor(A, b, island, reduced, bred, lu)


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def solve_dc(net: Network) -> FlowState:
    """Solve the lossless DC power flow with the slack angle fixed at zero.

    Buses outside the slack's island must have zero net injection; their
    angles are reported as zero.

    Raises
    ------
    SingularNetworkError
        Unbalanced injections, live injections outside the analyzed island, or
        a linear-solve residual above ``RESIDUAL_TOL`` per unit.
    """
    fac = factorize(net)
    p = net.injections()
    stranded = (~fac.island) & (np.abs(p) > MW_TOL)
    if stranded.any():
        bad = [int(net.buses[k].id) for k in np.flatnonzero(stranded)]
        raise SingularNetworkError(f"buses {bad[:5]} have injections but are not connected to the slack")
    imbalance = p[fac.island].sum()
    if abs(imbalance) > MW_TOL * max(1.0, len(net.buses)):
        raise SingularNetworkError(
            f"injections are unbalanced by {imbalance:.6g} MW; rebalance with scale_load(net, 1.0)"
        )
    ppu = p / net.base_power
    theta = np.zeros(len(net.buses))
    if fac.reduced.size:
        theta[fac.reduced] = fac.lu.solve(ppu[fac.reduced])
        residual = fac.bred @ theta[fac.reduced] - ppu[fac.reduced]
        if not np.all(np.abs(residual) < RESIDUAL_TOL):
            raise SingularNetworkError(f"DC solve residual {np.abs(residual).max():.3g} pu exceeds tolerance")
    flows = fac.susceptance * (fac.incidence @ theta) * net.base_power
    return FlowState(flows, p, theta, net.branch_ids, net.bus_ids)


def compute_ptdf(net: Network) -> PtdfMatrix:
    """PTDF of every branch with respect to every bus (slack and off-island columns zero)."""
    fac = factorize(net)
    n = len(net.buses)
    entries = np.zeros((len(net.branches), n))
    if fac.reduced.size:
        rhs = np.eye(fac.reduced.size)
        xinv = fac.lu.solve(rhs)  # columns of the reduced inverse
        # flow sensitivity = b * (A_reduced @ X)
        a_red = fac.incidence[:, fac.reduced]
        entries[:, fac.reduced] = fac.susceptance[:, None] * (a_red @ xinv)
    return PtdfMatrix(entries, net.branch_ids, net.bus_ids, net.slack_bus)


def compute_lodf(
    ptdf: PtdfMatrix,
    net: Network,
    sparsity_threshold: float = 0.0,
    topology: TopologyClassification | None = None,
) -> LodfMatrix:
    """Single-outage LODFs from PTDFs.

    ``LODF[i, j] = phi[i, j] / (1 - phi[j, j])`` where ``phi[i, j]`` is the flow
    on ``i`` per MW transferred from ``j``'s from-bus to its to-bus. Entries
    below ``sparsity_threshold`` in magnitude are stored as zero.
    """
    if sparsity_threshold < 0:
        raise ValueError("sparsity_threshold must be non-negative")
    if ptdf.entries.shape != (len(net.branches), len(net.buses)) or not np.array_equal(ptdf.branch_ids, net.branch_ids):
        raise InvalidNetworkError("PTDF matrix does not match the network")
    topology = topology or classify_topology(net)
    fac = factorize(net)
    phi = np.asarray((fac.incidence @ ptdf.entries.T).T)  # branches x branches
    diag = np.diag(phi).copy()
    den = 1.0 - diag

    m = len(net.branches)
    live = np.array([br.in_service for br in net.branches])
    from_island = np.array([fac.island[net.bus_index[br.from_bus]] for br in net.branches])
    valid = np.zeros(m, dtype=bool)
    diagnostics: dict[int, str] = {}
    for j, br in enumerate(net.branches):
        if not br.in_service:
            diagnostics[br.id] = "out of service"
        elif not from_island[j]:
            diagnostics[br.id] = "outside the analyzed island"
        elif topology.is_radial(br.id):
            diagnostics[br.id] = "radial: outage islands the network"
        elif abs(den[j]) < DENOMINATOR_TOL:
            diagnostics[br.id] = f"degenerate denominator 1 - phi_jj = {den[j]:.3g}"
        else:
            valid[j] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        entries = phi / np.where(valid, den, np.nan)[None, :]
    if sparsity_threshold > 0:
        entries[np.abs(entries) < sparsity_threshold] = 0.0
    entries[:, ~valid] = np.nan
    entries[~live, :] = np.nan
    idx = np.flatnonzero(valid)
    entries[idx, idx] = -1.0
    return LodfMatrix(entries, net.branch_ids, valid, float(sparsity_threshold), diagnostics)


def post_outage_flows(flow: FlowState, lodf: LodfMatrix, outage: int) -> FlowState:
    """Flows after opening ``outage``: ``f_i + LODF[i, j] * f_j``; the outaged branch drops to zero."""
    j = _position(lodf.branch_ids, outage)
    if not lodf.valid_outage[j]:
        reason = lodf.diagnostics.get(int(outage), "invalid outage")
        raise IslandingError(f"cannot apply outage of branch {outage}: {reason}")
    if not np.array_equal(flow.branch_ids, lodf.branch_ids):
        raise InvalidNetworkError("flow state and LODF matrix describe different branch sets")
    col = np.nan_to_num(lodf.entries[:, j], nan=0.0)
    new = flow.flows + col * flow.flows[j]
    new[j] = 0.0
    return FlowState(new, flow.injections, np.full_like(flow.angles, np.nan), flow.branch_ids, flow.bus_ids)


def save_matrices(ptdf: PtdfMatrix, lodf: LodfMatrix, prefix: str | Path, fmt: str = "csv") -> list[Path]:
    """Dump PTDF and LODF for external validation (rows = branch, columns = bus/outage)."""
    prefix = Path(prefix)
    if fmt == "csv":
        paths = [prefix.with_name(prefix.name + "_ptdf.csv"), prefix.with_name(prefix.name + "_lodf.csv")]
        ptdf.to_frame().to_csv(paths[0])
        lodf.to_frame().to_csv(paths[1])
    elif fmt == "npz":
        paths = [prefix.with_name(prefix.name + "_sensitivities.npz")]
        np.savez(paths[0], ptdf=ptdf.entries, lodf=lodf.entries, branch_ids=lodf.branch_ids,
                 bus_ids=ptdf.bus_ids, valid_outage=lodf.valid_outage)
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")
    return paths
