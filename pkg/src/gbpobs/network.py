"""Bus/branch network model, measurement sets and the DC measurement Jacobian.

Branch susceptances are taken as unity, so every Jacobian entry is a small
integer: a flow row has ``+1``/``-1`` at its endpoints and an injection row has
the bus degree on the diagonal and ``-1`` per incident branch at the neighbour.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field
from typing import IO, Any, Iterable, Mapping, Sequence, Union

import numpy as np

MeasId = Union[int, str]


class InputError(ValueError):
    """Malformed case or measurement document."""


class MeasurementKind(enum.Enum):
    FLOW = "flow"
    INJECTION = "injection"
    PSEUDO_INJECTION = "pseudo_injection"


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int  # dense index
    to_bus: int  # dense index


@dataclass(frozen=True)
class PowerNetwork:
    """Network with buses remapped to dense indices ``0..n-1``.

    ``bus_ids[i]`` is the original id of dense bus ``i``.
    """

    bus_ids: tuple[int, ...]
    branches: tuple[Branch, ...]
    slack_bus: int | None = None
    name: str = ""
    bus_index: Mapping[int, int] = field(init=False, repr=False, compare=False)
    branch_index: Mapping[int, int] = field(init=False, repr=False, compare=False)
    incident: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.bus_ids:
            raise InputError("no buses")
        bus_index: dict[int, int] = {}
        for i, b in enumerate(self.bus_ids):
            if b in bus_index:
                raise InputError(f"duplicate bus id {b}")
            bus_index[b] = i
        n = len(self.bus_ids)
        branch_index: dict[int, int] = {}
        incident: list[list[int]] = [[] for _ in range(n)]
        for pos, br in enumerate(self.branches):
            if br.id in branch_index:
                raise InputError(f"duplicate branch id {br.id}")
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise InputError(f"branch {br.id} has an endpoint outside the bus range")
            if br.from_bus == br.to_bus:
                raise InputError(f"branch {br.id} is a self-loop at bus {self.bus_ids[br.from_bus]}")
            branch_index[br.id] = pos
            incident[br.from_bus].append(pos)
            incident[br.to_bus].append(pos)
        if self.slack_bus is not None and self.slack_bus not in bus_index:
            raise InputError(f"slack bus {self.slack_bus} is not a bus")
        object.__setattr__(self, "bus_index", bus_index)
        object.__setattr__(self, "branch_index", branch_index)
        object.__setattr__(self, "incident", tuple(tuple(x) for x in incident))

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    def degree(self, i: int) -> int:
        return len(self.incident[i])

    def other_end(self, branch_pos: int, i: int) -> int:
        br = self.branches[branch_pos]
        return br.to_bus if br.from_bus == i else br.from_bus

    def neighbors(self, i: int) -> list[int]:
        return list(self._neighbors[i])

    @functools.cached_property
    def _neighbors(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(self.other_end(p, i) for p in inc) for i, inc in enumerate(self.incident))

    def edge_array(self) -> np.ndarray:
        """``(n_branches, 2)`` array of dense endpoints."""
        if not self.branches:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array([(b.from_bus, b.to_bus) for b in self.branches], dtype=np.int64)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "buses": [{"id": b} for b in self.bus_ids],
            "branches": [
                {"id": br.id, "from": self.bus_ids[br.from_bus], "to": self.bus_ids[br.to_bus]}
                for br in self.branches
            ],
        }
        if self.slack_bus is not None:
            doc["slack"] = self.slack_bus
        return doc


def network_from_edges(
    bus_ids: Sequence[int],
    edges: Iterable[tuple[int, int]],
    slack_bus: int | None = None,
    name: str = "",
) -> PowerNetwork:
    """Build a network from original bus ids and ``(from, to)`` pairs of original ids.

    Branch ids are assigned ``1, 2, ...`` in edge order.
    """
    index = {b: i for i, b in enumerate(bus_ids)}
    branches = []
    for k, (a, b) in enumerate(edges, start=1):
        if a not in index or b not in index:
            raise InputError(f"branch {k} references unknown bus {a if a not in index else b}")
        branches.append(Branch(k, index[a], index[b]))
    return PowerNetwork(tuple(bus_ids), tuple(branches), slack_bus, name)


@dataclass(frozen=True)
class Measurement:
    """One measurement device.

    For ``FLOW``, ``branch`` is the branch id and ``bus`` is the original id of
    the bus at which the flow is metered. For injections only ``bus`` is set.
    ``value`` is carried through but never read by the analysis.
    """

    id: MeasId
    kind: MeasurementKind
    bus: int
    branch: int | None = None
    variance: float | None = None
    value: float | None = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id, "kind": self.kind.value}
        if self.kind is MeasurementKind.FLOW:
            doc["branch"] = self.branch
            doc["from"] = self.bus
        else:
            doc["bus"] = self.bus
        if self.variance is not None:
            doc["variance"] = self.variance
        if self.value is not None:
            doc["value"] = self.value
        return doc


def flow(mid: MeasId, branch: int, from_bus: int, **kw: Any) -> Measurement:
    return Measurement(mid, MeasurementKind.FLOW, from_bus, branch, **kw)


def injection(mid: MeasId, bus: int, pseudo: bool = False, **kw: Any) -> Measurement:
    kind = MeasurementKind.PSEUDO_INJECTION if pseudo else MeasurementKind.INJECTION
    return Measurement(mid, kind, bus, None, **kw)


@dataclass(frozen=True)
class MeasurementSet:
    measurements: tuple[Measurement, ...]
    network_ref: str = ""

    def __post_init__(self) -> None:
        seen = set()
        for m in self.measurements:
            if m.id in seen:
                raise InputError(f"duplicate measurement id {m.id!r}")
            seen.add(m.id)

    def __len__(self) -> int:
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    @property
    def ids(self) -> list[MeasId]:
        return [m.id for m in self.measurements]

    def subset(self, ids: Iterable[MeasId]) -> "MeasurementSet":
        wanted = set(ids)
        return MeasurementSet(tuple(m for m in self.measurements if m.id in wanted), self.network_ref)

    def to_json(self) -> list[dict[str, Any]]:
        return [m.to_json() for m in self.measurements]


def validate_measurement(m: Measurement, network: PowerNetwork) -> None:
    if m.variance is not None and not (m.variance > 0 and math.isfinite(m.variance)):
        raise InputError(f"measurement {m.id!r}: variance must be positive and finite, got {m.variance}")
    if m.kind is MeasurementKind.FLOW:
        if m.branch not in network.branch_index:
            raise InputError(f"measurement {m.id!r}: unknown branch {m.branch}")
        br = network.branches[network.branch_index[m.branch]]
        if m.bus not in network.bus_index or network.bus_index[m.bus] not in (br.from_bus, br.to_bus):
            raise InputError(f"measurement {m.id!r}: bus {m.bus} is not an endpoint of branch {m.branch}")
    elif m.bus not in network.bus_index:
        raise InputError(f"measurement {m.id!r}: unknown bus {m.bus}")


# ---------------------------------------------------------------- parsing


def _load_json(stream: IO[Any] | str | bytes) -> Any:
    if isinstance(stream, (str, bytes)):
        text = stream
    else:
        text = stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise InputError(f"{where}: unknown field(s) {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise InputError(f"{where}: missing field(s) {sorted(missing)}")


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise InputError(f"{where}: expected an integer, got {v!r}")
    return v


def parse_network(stream: IO[Any] | str | bytes, name: str = "") -> PowerNetwork:
    """Parse a case document ``{"buses": [...], "branches": [...]}``."""
    doc = _load_json(stream)
    _check_keys(doc, {"buses", "branches", "slack", "name"}, {"buses", "branches"}, "case")
    buses = doc["buses"]
    if not isinstance(buses, list):
        raise InputError("case: 'buses' must be a list")
    if not buses:
        raise InputError("no buses")
    bus_ids = []
    for k, b in enumerate(buses):
        _check_keys(b, {"id"}, {"id"}, f"buses[{k}]")
        bus_ids.append(_int(b["id"], f"buses[{k}].id"))
    index: dict[int, int] = {}
    for k, b in enumerate(bus_ids):
        if b in index:
            raise InputError(f"buses[{k}]: duplicate bus id {b}")
        index[b] = k
    branches = doc["branches"]
    if not isinstance(branches, list):
        raise InputError("case: 'branches' must be a list")
    out = []
    seen: set[int] = set()
    for k, br in enumerate(branches):
        where = f"branches[{k}]"
        _check_keys(br, {"id", "from", "to"}, {"id", "from", "to"}, where)
        bid = _int(br["id"], f"{where}.id")
        if bid in seen:
            raise InputError(f"{where}: duplicate branch id {bid}")
        seen.add(bid)
        ends = []
        for key in ("from", "to"):
            bus = _int(br[key], f"{where}.{key}")
            if bus not in index:
                raise InputError(f"{where}: branch {bid} references unknown bus {bus}")
            ends.append(index[bus])
        if ends[0] == ends[1]:
            raise InputError(f"{where}: branch {bid} is a self-loop")
        out.append(Branch(bid, ends[0], ends[1]))
    slack = doc.get("slack")
    if slack is not None:
        slack = _int(slack, "case.slack")
    return PowerNetwork(tuple(bus_ids), tuple(out), slack, name or str(doc.get("name", "")))


_MEAS_FIELDS = {"id", "kind", "branch", "from", "bus", "variance", "value"}


def parse_measurement_set(stream: IO[Any] | str | bytes, network: PowerNetwork) -> MeasurementSet:
    """Parse a measurement list and resolve every location against ``network``."""
    doc = _load_json(stream)
    if not isinstance(doc, list):
        raise InputError("measurement document must be a list")
    out = []
    for k, item in enumerate(doc):
        where = f"measurements[{k}]"
        _check_keys(item, _MEAS_FIELDS, {"id", "kind"}, where)
        mid = item["id"]
        if isinstance(mid, bool) or not isinstance(mid, (int, str)):
            raise InputError(f"{where}: id must be an integer or string")
        try:
            kind = MeasurementKind(item["kind"])
        except ValueError:
            raise InputError(f"{where}: unknown kind {item['kind']!r}") from None
        if kind is MeasurementKind.FLOW:
            _check_keys(item, _MEAS_FIELDS - {"bus"}, {"branch", "from"}, where)
            branch = _int(item["branch"], f"{where}.branch")
            bus = _int(item["from"], f"{where}.from")
        else:
            _check_keys(item, _MEAS_FIELDS - {"branch", "from"}, {"bus"}, where)
            branch = None
            bus = _int(item["bus"], f"{where}.bus")
        var = item.get("variance")
        val = item.get("value")
        for key, v in (("variance", var), ("value", val)):
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise InputError(f"{where}: {key} must be a number")
        m = Measurement(mid, kind, bus, branch, None if var is None else float(var),
                        None if val is None else float(val))
        try:
            validate_measurement(m, network)
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
        out.append(m)
    try:
        return MeasurementSet(tuple(out), network.name)
    except InputError as exc:
        raise InputError(f"measurements: {exc}") from None


# ---------------------------------------------------------------- Jacobian


@dataclass(frozen=True)
class SparseJacobian:
    """Integer measurement matrix in row-sparse form with a column index."""

    n_cols: int
    row_ids: tuple[MeasId, ...]
    rows: tuple[tuple[tuple[int, int], ...], ...]

    @functools.cached_property
    def col_rows(self) -> tuple[tuple[int, ...], ...]:
        """Row positions touching each column."""
        cols: list[list[int]] = [[] for _ in range(self.n_cols)]
        for r, row in enumerate(self.rows):
            for c, _ in row:
                cols[c].append(r)
        return tuple(tuple(x) for x in cols)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def take(self, indices: Iterable[int]) -> "SparseJacobian":
        idx = list(indices)
        return SparseJacobian(self.n_cols, tuple(self.row_ids[i] for i in idx), tuple(self.rows[i] for i in idx))

    def select(self, ids: Iterable[MeasId]) -> "SparseJacobian":
        pos = {mid: i for i, mid in enumerate(self.row_ids)}
        return self.take(pos[m] for m in ids)

    def row_dicts(self) -> list[dict[int, int]]:
        return [dict(r) for r in self.rows]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=np.int64)
        for r, row in enumerate(self.rows):
            for c, v in row:
                out[r, c] = v
        return out


def measurement_row(network: PowerNetwork, m: Measurement) -> tuple[tuple[int, int], ...]:
    """Sparse integer row of one measurement (dense column indices, sorted)."""
    coef: dict[int, int] = {}
    if m.kind is MeasurementKind.FLOW:
        br = network.branches[network.branch_index[m.branch]]
        i = network.bus_index[m.bus]
        j = br.to_bus if br.from_bus == i else br.from_bus
        coef[i] = 1
        coef[j] = -1
    else:
        i = network.bus_index[m.bus]
        nbrs = network._neighbors[i]
        if not nbrs:
            raise InputError(f"measurement {m.id!r}: isolated-bus injection at bus {m.bus}")
        coef[i] = len(nbrs)
        for j in nbrs:
            coef[j] = coef.get(j, 0) - 1
    return tuple(sorted(coef.items()))


def build_jacobian(network: PowerNetwork, ms: MeasurementSet | Iterable[Measurement]) -> SparseJacobian:
    meas = list(ms)
    rows = tuple(measurement_row(network, m) for m in meas)
    return SparseJacobian(network.n, tuple(m.id for m in meas), rows)


# ---------------------------------------------------------------- generators


def device_pool(network: PowerNetwork) -> list[Measurement]:
    """Both flow sides of every branch, then one injection per non-isolated bus."""
    pool = []
    for br in network.branches:
        for end in (br.from_bus, br.to_bus):
            bus = network.bus_ids[end]
            pool.append(flow(f"M_F{br.id}_{bus}", br.id, bus))
    for i, bus in enumerate(network.bus_ids):
        if network.degree(i) > 0:
            pool.append(injection(f"M_P{bus}", bus))
    return pool


def generate_measurement_config(network: PowerNetwork, redundancy: float, seed: int) -> MeasurementSet:
    """Draw ``ceil(redundancy * (n - 1))`` devices uniformly without replacement."""
    if redundancy < 0:
        raise ValueError("redundancy must be non-negative")
    pool = device_pool(network)
    count = math.ceil(redundancy * (network.n - 1) - 1e-12)
    if count > len(pool):
        raise ValueError(f"redundancy {redundancy} needs {count} devices but the pool has {len(pool)}")
    rng = np.random.default_rng(np.uint64(seed % 2**64))
    picked = rng.choice(len(pool), size=count, replace=False) if count else []
    return MeasurementSet(tuple(pool[int(i)] for i in picked), network.name)


def boundary_pseudo_candidates(
    network: PowerNetwork, partition: Any, existing: Iterable[Measurement] = ()
) -> MeasurementSet:
    """One pseudo-injection per bus incident to a branch that joins two islands.

    Buses that already carry an injection in ``existing`` are skipped: a
    pseudo-measurement there would only duplicate a real row.
    """
    owner = partition.owner()
    taken = {m.bus for m in existing if m.kind is not MeasurementKind.FLOW}
    out = []
    for i, bus in enumerate(network.bus_ids):
        if bus in taken:
            continue
        if any(owner[j] != owner[i] for j in network._neighbors[i]):
            out.append(injection(f"M_P{bus}", bus, pseudo=True))
    return MeasurementSet(tuple(out), network.name)
