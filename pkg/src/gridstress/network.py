"""In-memory grid model, case-file ingestion, load scaling and topology.

Two input formats are understood:

* MATPOWER-style ``.m`` case text (``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen``,
  ``mpc.branch`` and the optional ``mpc.bus_name`` cell array);
* the native JSON schema written by :func:`to_json` (see ``docs/case_schema.md``).

Only the fields carried by :class:`Bus`, :class:`Branch` and :class:`Generator`
are read; resistance, shunts, voltage data and costs are ignored.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CaseFormatError, DispatchError, InvalidNetworkError

JSON_FORMAT = "gridstress-case"
JSON_VERSION = 1

# Absolute tolerance (MW) used for generator limits and power balance.
MW_TOL = 1e-6


@dataclass(frozen=True)
class Bus:
    id: int
    load: float = 0.0
    name: str | None = None


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    rating_normal: float
    in_service: bool = True
    is_transformer: bool = False

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise InvalidNetworkError(f"branch {self.id}: self-loop branch at bus {self.from_bus}")
        if self.reactance == 0 or not np.isfinite(self.reactance):
            raise InvalidNetworkError(f"branch {self.id}: zero reactance")
        if not self.rating_normal > 0:
            raise InvalidNetworkError(f"branch {self.id}: rating must be positive, got {self.rating_normal}")


@dataclass(frozen=True)
class Generator:
    bus: int
    output: float
    max_output: float

    def __post_init__(self):
        if self.output < -MW_TOL or self.output > self.max_output + MW_TOL:
            raise InvalidNetworkError(
                f"generator at bus {self.bus}: output {self.output} outside [0, {self.max_output}]"
            )


@dataclass(frozen=True)
class Network:
    """A DC transmission network.

    Instances are immutable; helpers such as :meth:`with_branch_status` return
    modified copies.
    """

    base_power: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    slack_bus: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        if not self.base_power > 0:
            raise InvalidNetworkError(f"base_power must be positive, got {self.base_power}")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidNetworkError(f"duplicate bus id {dup[0]}")
        known = set(ids)
        if self.buses and self.slack_bus not in known:
            raise InvalidNetworkError(f"slack bus {self.slack_bus} is not a bus of the network")
        br_ids = [br.id for br in self.branches]
        if len(set(br_ids)) != len(br_ids):
            raise InvalidNetworkError("duplicate branch id")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise InvalidNetworkError(f"branch {br.id} references unknown bus {end}")
        for gen in self.generators:
            if gen.bus not in known:
                raise InvalidNetworkError(f"generator references unknown bus {gen.bus}")

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[int, int]:
        return {br.id: k for k, br in enumerate(self.branches)}

    @property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses], dtype=int)

    @property
    def branch_ids(self) -> np.ndarray:
        return np.array([br.id for br in self.branches], dtype=int)

    @property
    def in_service_branch_ids(self) -> list[int]:
        return [br.id for br in self.branches if br.in_service]

    @property
    def ratings(self) -> np.ndarray:
        return np.array([br.rating_normal for br in self.branches], dtype=float)

    @property
    def total_load(self) -> float:
        return float(sum(b.load for b in self.buses))

    @property
    def total_generation(self) -> float:
        return float(sum(g.output for g in self.generators))

    def branch(self, branch_id: int) -> Branch:
        try:
            return self.branches[self.branch_index[branch_id]]
        except KeyError:
            raise InvalidNetworkError(f"unknown branch id {branch_id}") from None

    def bus(self, bus_id: int) -> Bus:
        try:
            return self.buses[self.bus_index[bus_id]]
        except KeyError:
            raise InvalidNetworkError(f"unknown bus id {bus_id}") from None

    def injections(self) -> np.ndarray:
        """Net real-power injection (generation minus load) per bus, MW."""
        p = -np.array([b.load for b in self.buses], dtype=float)
        for gen in self.generators:
            p[self.bus_index[gen.bus]] += gen.output
        return p

    def with_branch_status(self, branch_id: int, in_service: bool) -> "Network":
        k = self.branch_index.get(branch_id)
        if k is None:
            raise InvalidNetworkError(f"unknown branch id {branch_id}")
        branches = list(self.branches)
        branches[k] = dataclasses.replace(branches[k], in_service=in_service)
        return dataclasses.replace(self, branches=tuple(branches))

    def find_branch(self, ref: str | int) -> int:
        """Resolve a branch reference to a branch id.

        ``ref`` is either a branch id or a bus pair ``"FROM-TO"`` where each end
        is a bus id or a bus name (``"17-113"``, ``"Sorenson-Deer Crk"``). The
        pair is matched in either orientation; parallel circuits are ambiguous
        and must be addressed by id.
        """
        if isinstance(ref, (int, np.integer)):
            self.branch(int(ref))
            return int(ref)
        text = str(ref).strip()
        if re.fullmatch(r"\d+", text):
            return self.find_branch(int(text))
        parts = _split_pair(text)
        if parts is None:
            raise InvalidNetworkError(f"cannot parse branch reference {ref!r}")
        a, b = (self._resolve_bus(p) for p in parts)
        hits = [
            br.id
            for br in self.branches
            if {br.from_bus, br.to_bus} == {a, b}
        ]
        if not hits:
            raise InvalidNetworkError(f"no branch between buses {a} and {b}")
        if len(hits) > 1:
            raise InvalidNetworkError(
                f"buses {a} and {b} are joined by parallel branches {hits}; use a branch id"
            )
        return hits[0]

    def _resolve_bus(self, token: str) -> int:
        token = token.strip()
        m = re.fullmatch(r"(\d+)(?:\s+.*)?", token)
        if m and int(m.group(1)) in self.bus_index:
            return int(m.group(1))
        key = _norm_name(token)
        matches = [b.id for b in self.buses if b.name and _norm_name(b.name).startswith(key)]
        if len(matches) == 1:
            return matches[0]
        exact = [b.id for b in self.buses if b.name and _norm_name(b.name) == key]
        if len(exact) == 1:
            return exact[0]
        if not matches:
            raise InvalidNetworkError(f"unknown bus {token!r}")
        raise InvalidNetworkError(f"bus name {token!r} is ambiguous: buses {matches}")


def _norm_name(name: str) -> str:
    return " ".join(name.lower().replace(".", " ").split())


def _split_pair(text: str) -> tuple[str, str] | None:
    # "17-113", "17 Sorenson - 113 Deer Crk", "Sorenson-Deer Crk"
    if " - " in text:
        a, b = text.split(" - ", 1)
        return a, b
    if text.count("-") == 1:
        a, b = text.split("-")
        return a, b
    return None


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_MATRIX_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([\[{])(.*)$")
_SCALAR = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^;\[{]+);")

# MATPOWER column positions (0-based)
_BUS_I, _BUS_TYPE, _PD, _BASE_KV = 0, 1, 2, 9
_GEN_BUS, _PG, _GEN_STATUS, _PMAX = 0, 1, 7, 8
_F_BUS, _T_BUS, _BR_X, _RATE_A, _TAP, _SHIFT, _BR_STATUS = 0, 1, 3, 5, 8, 9, 10


def parse_case(text: str, *, default_rating: float | None = None, name: str = "") -> Network:
    """Parse case-file text (MATPOWER ``.m`` or native JSON) into a :class:`Network`.

    Parameters
    ----------
    text : str
        Full content of the case file.
    default_rating : float, optional
        Rating (MW) substituted for MATPOWER branches with ``rateA == 0``
        (MATPOWER's "unlimited"). Without it such rows are rejected, because
        every metric is expressed per unit of rating.
    name : str
        Label stored on the returned network.

    Raises
    ------
    CaseFormatError
        Malformed rows (with line number), duplicate bus ids, branches that
        reference unknown buses, zero reactance or self loops.
    """
    if text.lstrip().startswith("{"):
        return _parse_json(text, name=name)
    return _parse_matpower(text, default_rating=default_rating, name=name)


def load_case(path: str | Path, **kwargs) -> Network:
    """Read and parse a case file; ``builtin:NAME`` loads a shipped case."""
    spec = str(path)
    if spec.startswith("builtin:"):
        return builtin_case(spec.split(":", 1)[1], **kwargs)
    p = Path(path)
    kwargs.setdefault("name", p.stem)
    return parse_case(p.read_text(), **kwargs)


def builtin_case(name: str, **kwargs) -> Network:
    """Load one of the cases shipped in ``gridstress/cases``.

    Available: ``case118`` (IEEE 118-bus with assigned ratings), ``triangle``,
    ``two_bus``, ``four_bus``, ``mesh30``, ``ladder12``.
    """
    kwargs.setdefault("name", name)
    return parse_case(builtin_case_text(name), **kwargs)


def builtin_case_text(name: str) -> str:
    """Raw file text of a shipped case."""
    root = resources.files("gridstress") / "cases"
    for suffix in (".m", ".json"):
        res = root / f"{name}{suffix}"
        if res.is_file():
            return res.read_text()
    available = sorted(p.name.rsplit(".", 1)[0] for p in root.iterdir() if p.is_file())
    raise FileNotFoundError(f"no builtin case {name!r}; available: {available}")


def _numbers(row: str, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in row.replace(",", " ").split()]
    except ValueError:
        raise CaseFormatError(f"malformed table row {row.strip()!r}", lineno) from None


def _parse_matpower(text: str, *, default_rating, name) -> Network:
    scalars: dict[str, str] = {}
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    cells: dict[str, list[str]] = {}
    current: str | None = None
    kind = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0]
        if current is None:
            m = _MATRIX_START.match(line)
            if m:
                current, kind, line = m.group(1), m.group(2), m.group(3)
                if kind == "[":
                    tables[current] = []
                else:
                    cells[current] = []
            else:
                s = _SCALAR.match(line)
                if s:
                    scalars[s.group(1)] = s.group(2).strip()
                continue
        closer = "]" if kind == "[" else "}"
        done = closer in line
        if done:
            line = line.split(closer, 1)[0]
        if kind == "[":
            for row in line.split(";"):
                if row.strip():
                    tables[current].append((lineno, _numbers(row, lineno)))
        else:
            for item in re.findall(r"'([^']*)'", line):
                cells[current].append(" ".join(item.split()))
        if done:
            current = None
    if current is not None:
        raise CaseFormatError(f"unterminated matrix mpc.{current}")

    for required in ("bus", "branch", "gen"):
        if required not in tables:
            raise CaseFormatError(f"missing mpc.{required} table")
    try:
        base = float(scalars.get("baseMVA", "100"))
    except ValueError:
        raise CaseFormatError(f"malformed baseMVA {scalars['baseMVA']!r}") from None

    names = cells.get("bus_name", [])
    buses, slack, seen = [], None, {}
    for k, (lineno, row) in enumerate(tables["bus"]):
        if len(row) < 3:
            raise CaseFormatError("malformed table row in mpc.bus (need at least 3 columns)", lineno)
        bid = int(row[_BUS_I])
        if bid in seen:
            raise CaseFormatError(f"duplicate bus id {bid}", lineno)
        seen[bid] = row[_BASE_KV] if len(row) > _BASE_KV else 0.0
        if int(row[_BUS_TYPE]) == 3:
            if slack is not None:
                raise CaseFormatError(f"second slack bus {bid} (first was {slack})", lineno)
            slack = bid
        buses.append(Bus(bid, float(row[_PD]), names[k] if k < len(names) else None))
    if slack is None:
        if not buses:
            raise CaseFormatError("case has no buses")
        raise CaseFormatError("no slack (type 3) bus in mpc.bus")

    gens = []
    for lineno, row in tables["gen"]:
        if len(row) <= _PMAX:
            raise CaseFormatError("malformed table row in mpc.gen (need at least 9 columns)", lineno)
        if row[_GEN_STATUS] <= 0:
            continue
        if int(row[_GEN_BUS]) not in seen:
            raise CaseFormatError(f"generator references unknown bus {int(row[_GEN_BUS])}", lineno)
        try:
            gens.append(Generator(int(row[_GEN_BUS]), float(row[_PG]), float(row[_PMAX])))
        except InvalidNetworkError as exc:
            raise CaseFormatError(str(exc), lineno) from None

    branches = []
    for k, (lineno, row) in enumerate(tables["branch"], start=1):
        if len(row) <= _BR_STATUS:
            raise CaseFormatError("malformed table row in mpc.branch (need at least 11 columns)", lineno)
        f, t = int(row[_F_BUS]), int(row[_T_BUS])
        for end in (f, t):
            if end not in seen:
                raise CaseFormatError(f"branch references unknown bus {end}", lineno)
        rating = float(row[_RATE_A])
        if rating <= 0:
            if default_rating is None:
                raise CaseFormatError(f"branch {f}-{t} has no rating (rateA = {rating:g})", lineno)
            rating = default_rating
        xfmr = row[_TAP] != 0 or row[_SHIFT] != 0 or (seen[f] > 0 and seen[t] > 0 and seen[f] != seen[t])
        try:
            branches.append(Branch(k, f, t, float(row[_BR_X]), rating, bool(row[_BR_STATUS] > 0), bool(xfmr)))
        except InvalidNetworkError as exc:
            raise CaseFormatError(str(exc).split(": ", 1)[-1], lineno) from None

    try:
        return Network(base, tuple(buses), tuple(branches), tuple(gens), slack, name=name)
    except InvalidNetworkError as exc:
        raise CaseFormatError(str(exc)) from None


def _parse_json(text: str, *, name) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if doc.get("format") != JSON_FORMAT:
        raise CaseFormatError(f"JSON case must declare \"format\": \"{JSON_FORMAT}\"")
    if doc.get("version") != JSON_VERSION:
        raise CaseFormatError(f"unsupported case schema version {doc.get('version')!r}")
    try:
        buses = [Bus(int(b["id"]), float(b.get("load", 0.0)), b.get("name")) for b in doc["buses"]]
        ids = [b.id for b in buses]
        for i in ids:
            if ids.count(i) > 1:
                raise CaseFormatError(f"duplicate bus id {i}")
        branches = [
            Branch(
                int(r["id"]),
                int(r["from_bus"]),
                int(r["to_bus"]),
                float(r["reactance"]),
                float(r["rating_normal"]),
                bool(r.get("in_service", True)),
                bool(r.get("is_transformer", False)),
            )
            for r in doc["branches"]
        ]
        gens = [Generator(int(g["bus"]), float(g["output"]), float(g["max_output"])) for g in doc.get("generators", [])]
        return Network(
            float(doc["base_power"]),
            tuple(buses),
            tuple(branches),
            tuple(gens),
            int(doc["slack_bus"]),
            name=doc.get("name", name) or name,
        )
    except KeyError as exc:
        raise CaseFormatError(f"missing field {exc.args[0]!r}") from None
    except InvalidNetworkError as exc:
        raise CaseFormatError(str(exc)) from None


def to_json(net: Network) -> str:
    """Canonical JSON serialization (sorted keys, stable ordering)."""
    doc = {
        "format": JSON_FORMAT,
        "version": JSON_VERSION,
        "name": net.name,
        "base_power": net.base_power,
        "slack_bus": net.slack_bus,
        "buses": [
            {"id": b.id, "load": b.load, **({"name": b.name} if b.name is not None else {})}
            for b in net.buses
        ],
        "branches": [dataclasses.asdict(br) for br in net.branches],
        "generators": [dataclasses.asdict(g) for g in net.generators],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# Load scaling
# --------------------------------------------------------------------------


def scale_load(
    net: Network,
    uniform: float = 1.0,
    overrides: Mapping[int, float] | None = None,
) -> Network:
    """Scale bus loads and rebalance generation proportionally.

    Every bus load is multiplied by ``overrides[bus]`` when present, otherwise
    by ``uniform``. Each generator's output is then multiplied by
    ``new_total_load / old_total_generation`` so the DC system stays lossless
    and balanced. Calling it with ``uniform=1`` on an unbalanced case simply
    rebalances it.
    """
    overrides = dict(overrides or {})
    if not uniform > 0:
        raise ValueError(f"scale factor must be positive, got {uniform}")
    for bid, factor in overrides.items():
        if bid not in net.bus_index:
            raise InvalidNetworkError(f"load override for unknown bus {bid}")
        if not factor > 0:
            raise ValueError(f"scale factor for bus {bid} must be positive, got {factor}")
    buses = tuple(dataclasses.replace(b, load=b.load * overrides.get(b.id, uniform)) for b in net.buses)
    new_load = sum(b.load for b in buses)
    old_gen = net.total_generation
    if abs(new_load - old_gen) <= MW_TOL:
        gens = net.generators
    else:
        if old_gen <= 0:
            raise DispatchError("cannot rebalance: base generation is zero")
        ratio = new_load / old_gen
        gens = []
        for g in net.generators:
            out = g.output * ratio
            if out > g.max_output + MW_TOL:
                raise DispatchError(
                    f"generator at bus {g.bus} would need {out:.2f} MW, above its {g.max_output:.2f} MW limit"
                )
            gens.append(dataclasses.replace(g, output=min(out, g.max_output)))
        gens = tuple(gens)
    return dataclasses.replace(net, buses=buses, generators=gens)


def increase_overrides(uniform: float, increases_pct: Mapping[int, float]) -> dict[int, float]:
    """Per-bus factors for "increase bus load by P percent on top of ``uniform``"."""
    return {bid: uniform * (1.0 + pct / 100.0) for bid, pct in increases_pct.items()}


# --------------------------------------------------------------------------
# Topology
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TopologyClassification:
    islands: tuple[tuple[int, ...], ...]
    radial_branches: frozenset[int] = field(default_factory=frozenset)

    def is_radial(self, branch_id: int) -> bool:
        return branch_id in self.radial_branches

    def island_of(self, bus_id: int) -> tuple[int, ...]:
        for island in self.islands:
            if bus_id in island:
                return island
        raise InvalidNetworkError(f"unknown bus id {bus_id}")


def classify_topology(net: Network) -> TopologyClassification:
    """Islands and bridges (radial branches) of the in-service graph.

    Parallel circuits are distinct edges, so a doubled connection is never a
    bridge. Uses an iterative low-link depth-first search keyed on edge ids.
    """
    n = len(net.buses)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for br in net.branches:
        if br.in_service:
            a, b = net.bus_index[br.from_bus], net.bus_index[br.to_bus]
            adj[a].append((b, br.id))
            adj[b].append((a, br.id))

    disc = [-1] * n
    low = [0] * n
    timer = 0
    bridges: set[int] = set()
    islands = []
    for root in range(n):
        if disc[root] >= 0:
            continue
        members = [root]
        disc[root] = low[root] = timer
        timer += 1
        # frame: (node, edge id used to enter it, iterator position)
        stack = [(root, -1, 0)]
        while stack:
            node, via, pos = stack[-1]
            if pos < len(adj[node]):
                stack[-1] = (node, via, pos + 1)
                nxt, eid = adj[node][pos]
                if eid == via:
                    continue
                if disc[nxt] < 0:
                    disc[nxt] = low[nxt] = timer
                    timer += 1
                    members.append(nxt)
                    stack.append((nxt, eid, 0))
                else:
                    low[node] = min(low[node], disc[nxt])
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(via)
        islands.append(tuple(sorted(net.buses[k].id for k in members)))
    islands.sort(key=lambda isl: isl[0])
    return TopologyClassification(tuple(islands), frozenset(bridges))

