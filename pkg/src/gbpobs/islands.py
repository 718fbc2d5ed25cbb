"""Observable-island detection by repeated probing of the variance message passing.

Each pass pins one remaining bus with a ZERO virtual factor, sweeps until the
stopping rule holds, and collects the buses whose marginal variance stays
finite. That set is an island. Its buses are removed together with every
measurement factor that touches them, and the next pass probes what is left.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order

from .exact import independent_row_subset
from .factor_graph import AmbiguousConvergence, FactorGraph, MessageState, classify_codes, run_sweeps
from .network import MeasId, MeasurementKind, MeasurementSet, PowerNetwork, SparseJacobian, build_jacobian
from .partition import IslandPartition
from .variance import DEFAULT, SweepConfig


class ProbeRule(enum.Enum):
    LOWEST_ID = "lowest"
    SEEDED_RANDOM = "random"


@dataclass(frozen=True)
class ProbePolicy:
    rule: ProbeRule = ProbeRule.LOWEST_ID
    seed: int = 0

    @classmethod
    def random(cls, seed: int) -> "ProbePolicy":
        return cls(ProbeRule.SEEDED_RANDOM, seed)


LOWEST_ID = ProbePolicy()


def select_probe(
    remaining: Iterable[int],
    policy: ProbePolicy = LOWEST_ID,
    rng: np.random.Generator | None = None,
    key=None,
) -> int:
    """Pick the next probe variable.

    ``key`` orders the candidates (default: the values themselves), so the
    detector can rank dense indices by bus id. A random pick draws from
    ``rng`` when given, else from a fresh generator seeded by the policy.
    """
    pool = sorted(remaining, key=key)
    if not pool:
        raise ValueError("no variables left to probe")
    if policy.rule is ProbeRule.LOWEST_ID:
        return pool[0]
    rng = rng if rng is not None else np.random.default_rng(policy.seed)
    return pool[int(rng.integers(len(pool)))]


def peel_subgraph(g: FactorGraph, observed: Iterable[int]) -> tuple[FactorGraph, list]:
    """Remove ``observed`` variables and every factor touching one of them.

    Returns the smaller graph (labels preserved, virtual factors reset to
    INFINITE) and the labels of the removed factors that also reach a
    surviving variable. Factors lying wholly inside ``observed`` vanish
    without being reported.
    """
    gone = np.zeros(g.n_vars, dtype=bool)
    gone[list(observed)] = True
    if not gone.any():
        return g.with_virtual(np.full(g.n_vars, math.inf)), []
    keep_v = np.flatnonzero(~gone)
    size = np.diff(g.factor_ptr)
    fidx = np.repeat(np.arange(g.n_factors), size)
    inside = np.bincount(fidx[gone[g.factor_var]], minlength=g.n_factors)
    touched = inside > 0
    dropped = [g.factor_labels[f] for f in np.flatnonzero(touched & (inside < size))]
    sub = _subgraph(g, keep_v, np.flatnonzero(~touched))
    return sub, dropped


def _subgraph(g: FactorGraph, vars_: np.ndarray, factors: np.ndarray) -> FactorGraph:
    """Induced graph on ``vars_`` and ``factors`` (every factor's variables must be in ``vars_``)."""
    local = np.full(g.n_vars, -1, dtype=np.int64)
    local[vars_] = np.arange(len(vars_))
    lo, hi = g.factor_ptr[factors], g.factor_ptr[factors + 1]
    sizes = hi - lo
    ptr = np.zeros(len(factors) + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    edges = np.repeat(lo - ptr[:-1], sizes) + np.arange(ptr[-1])
    fv = local[g.factor_var[edges]]
    return FactorGraph(
        len(vars_), ptr, fv, g.factor_own[factors], np.full(len(vars_), math.inf),
        tuple(g.factor_labels[f] for f in factors), tuple(g.var_labels[v] for v in vars_),
    )


@dataclass(frozen=True)
class DetectionConfig:
    sweep: SweepConfig = DEFAULT
    probe: ProbePolicy = LOWEST_ID
    flows_first: bool = True  # scan flows before injections when picking independent rows


class Detection(NamedTuple):
    partition: IslandPartition
    rejected: list[MeasId]
    dropped: list[MeasId]


def row_scan_order(ms: MeasurementSet | Sequence, flows_first: bool = True) -> list[int]:
    meas = list(ms)
    if not flows_first:
        return list(range(len(meas)))
    return sorted(range(len(meas)), key=lambda k: meas[k].kind is not MeasurementKind.FLOW)


def detect_islands(
    network: PowerNetwork,
    ms: MeasurementSet,
    cfg: DetectionConfig = DetectionConfig(),
    J: SparseJacobian | None = None,
) -> Detection:
    J = build_jacobian(network, ms) if J is None else J
    kept, rejected = independent_row_subset(J, row_scan_order(ms, cfg.flows_first))
    kept_set = set(kept)
    # keep the kept rows in measurement order so factor numbering is stable
    Jk = J.select([mid for mid in J.row_ids if mid in kept_set])
    return _detect(network, Jk, rejected, cfg)


def detect_islands_on_rows(network: PowerNetwork, J_kept: SparseJacobian,
                           cfg: DetectionConfig = DetectionConfig()) -> Detection:
    """Detection on rows already known to be independent."""
    return _detect(network, J_kept, [], cfg)


def _detect(network: PowerNetwork, Jk: SparseJacobian, rejected: list, cfg: DetectionConfig) -> Detection:
    n = network.n
    g = FactorGraph.from_rows(n, [[c for c, _ in r] for r in Jk.rows], Jk.row_ids)
    m = g.n_factors
    edge_f = np.repeat(np.arange(m), np.diff(g.factor_ptr))
    edge_v = g.factor_var
    size = np.diff(g.factor_ptr)
    alive_v = np.ones(n, dtype=bool)
    alive_f = np.ones(m, dtype=bool)
    order = np.argsort(np.asarray(network.bus_ids), kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    rng = np.random.default_rng(cfg.probe.seed) if cfg.probe.rule is ProbeRule.SEEDED_RANDOM else None

    islands, probes, sweeps, dropped = [], [], [], []
    cursor = 0  # LOWEST_ID: walk buses in id order, skipping those already placed
    while alive_v.any():
        if cfg.probe.rule is ProbeRule.LOWEST_ID:
            while not alive_v[order[cursor]]:
                cursor += 1
            p = int(order[cursor])
        else:
            p = select_probe(np.flatnonzero(alive_v).tolist(), cfg.probe, rng, key=lambda i: rank[i])
        comp_v, comp_f = _component(n, m, edge_v, edge_f, alive_f, p)
        sub = _subgraph(g, comp_v, comp_f).with_probe(int(np.searchsorted(comp_v, p)))
        try:
            s = run_sweeps(sub, MessageState.initial(sub, cfg.sweep), cfg.sweep)
        except AmbiguousConvergence as exc:
            exc.pass_index = len(islands)
            exc.variables = [network.bus_ids[comp_v[i]] for i in exc.variables]
            raise
        observed = comp_v[classify_codes(s, cfg.sweep) == 0]
        islands.append(frozenset(observed.tolist()))
        probes.append(p)
        sweeps.append(s.tau)
        alive_v[observed] = False
        gone = np.zeros(n, dtype=bool)
        gone[observed] = True
        inside = np.bincount(edge_f[gone[edge_v] & alive_f[edge_f]], minlength=m)
        hit = np.flatnonzero(inside)
        alive_f[hit] = False
        # factors wholly inside the island are spent; the rest straddle islands
        dropped.extend(g.factor_labels[f] for f in hit if inside[f] < size[f])
    part = IslandPartition(n, tuple(islands), tuple(probes), tuple(sweeps), method="gbp")
    return Detection(part, list(rejected), dropped)


def _component(n, m, edge_v, edge_f, alive_f, p):
    """Variables and factors reachable from variable ``p`` through alive factors."""
    live = alive_f[edge_f]
    ev, ef = edge_v[live], edge_f[live]
    if not len(ev):
        return np.array([p], dtype=np.int64), np.zeros(0, dtype=np.int64)
    adj = coo_matrix((np.ones(len(ev), dtype=np.int8), (ev, n + ef)), shape=(n + m, n + m)).tocsr()
    nodes = breadth_first_order(adj, p, directed=False, return_predecessors=False)
    nodes.sort()
    split = np.searchsorted(nodes, n)
    return nodes[:split].astype(np.int64), (nodes[split:] - n).astype(np.int64)
