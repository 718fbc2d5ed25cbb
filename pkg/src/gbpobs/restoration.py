"""Observability restoration on the reduced island graph.

Every island becomes one variable node. A measurement row is projected onto
islands by summing its coefficients per island; rows whose projection
vanishes live inside a single island and carry no information about the
island offsets. The projected rows left over from detection form the
candidate set F_c, the pseudo-measurements form F_p, and pseudo factors are
admitted one at a time while the residual-variance test calls them
independent.

Projection is exact for any partition that refines the true islands: every
null-space vector of the Jacobian is constant on each island, so the system
is fully observable iff the projected rows reach rank ``k - 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .exact import Echelon, independent_row_subset
from .factor_graph import AmbiguousConvergence, FactorGraph, MessageState, run_sweeps
from .islands import Detection
from .network import MeasId, MeasurementSet, PowerNetwork, SparseJacobian, build_jacobian
from .partition import IslandPartition, UnionFind
from .variance import DEFAULT, ExtendedVariance, SweepConfig


class RestorationError(RuntimeError):
    code = "RESTORATION"


class NegativeW(RestorationError):
    code = "NEGATIVE_W"


class CandidatesExhausted(RestorationError):
    code = "CANDIDATES_EXHAUSTED"

    def __init__(self, msg: str, result: "RestorationResult"):
        super().__init__(msg)
        self.result = result


class Independence(enum.Enum):
    INDEPENDENT = "independent"
    DEPENDENT = "dependent"


def project_row(row: Sequence[tuple[int, int]], owner: Sequence[int]) -> dict[int, int]:
    """Sum a bus-level row's coefficients per island; zero sums are dropped."""
    out: dict[int, int] = {}
    for c, v in row:
        s = owner[c]
        out[s] = out.get(s, 0) + v
    return {s: v for s, v in sorted(out.items()) if v}


@dataclass(frozen=True)
class ReducedGraph:
    """Island-level factor graph: candidate factors F_c and pseudo factors F_p.

    ``candidate_rows``/``pseudo_rows`` are projected rows (island -> coefficient),
    each touching at least two islands. Candidates always carry
    ``v_candidate``; a pseudo factor carries ``v_pseudo`` while it is active
    and is absent (INFINITE) otherwise.
    """

    k: int
    candidate_ids: tuple[MeasId, ...]
    candidate_rows: tuple[Mapping[int, int], ...]
    pseudo_ids: tuple[MeasId, ...]
    pseudo_rows: tuple[Mapping[int, int], ...]
    v_candidate: float = 1.0
    v_pseudo: float = 1.0

    def __post_init__(self) -> None:
        for mid, row in zip(self.candidate_ids + self.pseudo_ids, self.candidate_rows + self.pseudo_rows):
            if len(row) < 2:
                raise ValueError(f"factor {mid!r} touches fewer than two islands")
        if not (0 < self.v_candidate < math.inf and 0 < self.v_pseudo < math.inf):
            raise ValueError("factor variances must be finite and positive")

    def incident(self, p: int) -> tuple[int, ...]:
        """Islands touched by pseudo factor ``p`` (position in ``pseudo_ids``)."""
        return tuple(self.pseudo_rows[p])

    def scaled(self, factor: float) -> "ReducedGraph":
        return ReducedGraph(self.k, self.candidate_ids, self.candidate_rows, self.pseudo_ids,
                            self.pseudo_rows, self.v_candidate * factor, self.v_pseudo * factor)

    def factor_graph(self, active: Sequence[int], slack: int) -> FactorGraph:
        """Candidates plus the active pseudo factors, cut to the slack's connected component.

        Island variables are renumbered locally (``var_labels`` keeps the
        island index); the last entry of ``active`` becomes the last factor.
        """
        rows = list(self.candidate_rows) + [self.pseudo_rows[p] for p in active]
        labels = list(self.candidate_ids) + [self.pseudo_ids[p] for p in active]
        own = [self.v_candidate] * len(self.candidate_rows) + [self.v_pseudo] * len(active)
        uf = UnionFind(self.k)
        for r in rows:
            it = iter(r)
            a = next(it)
            for b in it:
                uf.union(a, b)
        root = uf.find(slack)
        keep = [i for i, r in enumerate(rows) if uf.find(next(iter(r))) == root]
        isl = sorted({s for i in keep for s in rows[i]} | {slack})
        local = {s: j for j, s in enumerate(isl)}
        virt = np.full(len(isl), math.inf)
        virt[local[slack]] = 0.0
        return FactorGraph.from_rows(
            len(isl), [[local[s] for s in rows[i]] for i in keep], [labels[i] for i in keep],
            tuple(isl), own=[own[i] for i in keep], virtual=virt)


@dataclass(frozen=True)
class RestorationProblem:
    k: int
    q: int
    b: int
    w: int
    h: int
    order: tuple[MeasId, ...]
    redundant_candidates: tuple[MeasId, ...] = ()  # single-island or dependent rows cut from F_c
    inert_pseudo: tuple[MeasId, ...] = ()  # pseudo rows inside one island


@dataclass
class RestorationResult:
    accepted: list[MeasId] = field(default_factory=list)
    rejected_dependent: list[MeasId] = field(default_factory=list)
    final_w: int = 0
    certificate: bool | None = None  # None until verified against the exact rank
    sweeps: list[int] = field(default_factory=list)


def partition_candidates(
    partition: IslandPartition,
    candidates: Sequence[MeasId],
    pseudo: Sequence[MeasId],
    J: SparseJacobian,
    v_candidate: float = 1.0,
    v_pseudo: float = 1.0,
) -> tuple[ReducedGraph, RestorationProblem]:
    """Project ``candidates`` and ``pseudo`` rows of ``J`` onto islands and count what is missing.

    ``candidates`` are the rows rejected or dropped during detection. They are
    cut down to a maximal independent subset of their projections (exact
    rank), so ``q`` is the rank they contribute and ``w = k - q - 1``
    pseudo-measurements are still needed.
    """
    # island variables in canonical order (by smallest member), so the slack rule is probe-independent
    canon = sorted(range(partition.k), key=lambda i: min(partition.islands[i]))
    rank = {isl: r for r, isl in enumerate(canon)}
    owner = [rank[o] for o in partition.owner()]
    pos = {mid: i for i, mid in enumerate(J.row_ids)}
    e = Echelon(partition.k)
    c_ids, c_rows, redundant = [], [], []
    for mid in candidates:
        r = project_row(J.rows[pos[mid]], owner)
        if len(r) >= 2 and e.add(r):
            c_ids.append(mid)
            c_rows.append(r)
        else:
            redundant.append(mid)
    p_ids, p_rows, inert = [], [], []
    for mid in pseudo:
        r = project_row(J.rows[pos[mid]], owner)
        if len(r) >= 2:
            p_ids.append(mid)
            p_rows.append(r)
        else:
            inert.append(mid)
    k, q = partition.k, len(c_ids)
    w = k - q - 1
    if w < 0:
        raise NegativeW(f"{q} independent candidates over-determine {k} islands")
    rg = ReducedGraph(k, tuple(c_ids), tuple(c_rows), tuple(p_ids), tuple(p_rows), v_candidate, v_pseudo)
    prob = RestorationProblem(k, q, len(p_ids), w, partition.n - k, tuple(p_ids), tuple(redundant), tuple(inert))
    return rg, prob


class IndependenceTest(NamedTuple):
    verdict: Independence
    residual: ExtendedVariance
    sweeps: int
    degree: float = math.nan  # log-log growth slope of the residual over the last doubling


def _residual(g: FactorGraph, x2f: np.ndarray, f: int) -> float:
    # serial sum of what the variables send f; the factor's own variance is left out
    return float(np.sum(x2f[g.factor_ptr[f]:g.factor_ptr[f + 1]]))


@dataclass(frozen=True)
class ResidualRule:
    """How a residual that is still moving at ``tau_max`` is read.

    Bounded residuals converge, sometimes only like ``1/t``, so their growth
    slope over a doubling of the sweep count tends to zero. Unbounded ones
    grow at least linearly. Slopes between the two bounds are ambiguous.
    """

    dependent_below: float = 0.35
    independent_above: float = 0.45


def test_independence(
    rg: ReducedGraph,
    nu: int,
    cfg: SweepConfig = DEFAULT,
    accepted: Sequence[int] = (),
    rule: ResidualRule = ResidualRule(),
) -> IndependenceTest:
    """Residual-variance test for pseudo factor ``nu`` against F_c and ``accepted``.

    The slack is the lowest island touched by ``nu``. Sweeps run in doubling
    chunks and the residual message of ``nu`` is read after each: INFINITE
    (or past ``v_high``) is independent, a value that no longer moves is
    dependent. A residual still moving at ``tau_max`` is judged by ``rule``
    from its growth over the last chunk.
    """
    slack = min(rg.incident(nu))
    g = rg.factor_graph(list(accepted) + [nu], slack)
    f = g.n_factors - 1
    s = MessageState.initial(g, cfg)
    t0, r0 = 0, math.nan
    chunk = 8
    while True:
        s = run_sweeps(g, s, cfg, max_sweeps=chunk, marginal_stop=False)
        r = _residual(g, s.x2f, f)
        rp = _residual(g, s.x2f_prev, f)
        ev = ExtendedVariance.from_float(r, cfg)
        if ev.is_infinite or r >= cfg.v_high:
            return IndependenceTest(Independence.INDEPENDENT, ev, s.tau)
        if r == rp or abs(r - rp) <= cfg.tol * max(r, rp):
            return IndependenceTest(Independence.DEPENDENT, ev, s.tau)
        if s.tau >= cfg.tau_max:
            d = math.log(r / r0) / math.log(s.tau / t0) if t0 and r0 > 0 and r > 0 else math.nan
            if d <= rule.dependent_below:
                return IndependenceTest(Independence.DEPENDENT, ev, s.tau, d)
            if d >= rule.independent_above:
                return IndependenceTest(Independence.INDEPENDENT, ev, s.tau, d)
            raise AmbiguousConvergence(
                f"residual of {rg.pseudo_ids[nu]!r} neither settled nor diverging after {s.tau} sweeps "
                f"(growth slope {d:.3g})")
        t0, r0 = s.tau, r
        chunk = min(s.tau, cfg.tau_max - s.tau)


test_independence.__test__ = False  # keep pytest from collecting it by name


def restore_observability(rg: ReducedGraph, prob: RestorationProblem, cfg: SweepConfig = DEFAULT) -> RestorationResult:
    """Walk the pseudo candidates in order, keeping independent ones until ``w`` reaches zero."""
    res = RestorationResult(final_w=prob.w)
    accepted: list[int] = []
    index = {mid: p for p, mid in enumerate(rg.pseudo_ids)}
    for mid in prob.order:
        if res.final_w == 0:
            break
        t = test_independence(rg, index[mid], cfg, accepted)
        res.sweeps.append(t.sweeps)
        if t.verdict is Independence.INDEPENDENT:
            accepted.append(index[mid])
            res.accepted.append(mid)
            res.final_w -= 1
        else:
            res.rejected_dependent.append(mid)
    if res.final_w > 0:
        raise CandidatesExhausted(f"pseudo candidates ran out with w = {res.final_w}", res)
    return res


def verify_full_observability(J: SparseJacobian, *extra: SparseJacobian) -> bool:
    """Exact test ``rank([J; extra...]) == n - 1``."""
    rows = list(J.rows)
    for X in extra:
        if X.n_cols != J.n_cols:
            raise ValueError("row blocks have different column counts")
        rows += list(X.rows)
    stacked = SparseJacobian(J.n_cols, tuple(range(len(rows))), tuple(rows))
    flows_first = sorted(range(len(rows)), key=lambda r: len(rows[r]) != 2)
    kept, _ = independent_row_subset(stacked, flows_first)
    return len(kept) == J.n_cols - 1


def incidence_rank(rg: ReducedGraph, pseudo: Sequence[int] = ()) -> int:
    """Exact rank of the projected F_c rows plus the given pseudo rows."""
    e = Echelon(rg.k)
    for r in rg.candidate_rows:
        e.add(r)
    for p in pseudo:
        e.add(rg.pseudo_rows[p])
    return e.rank



class Restoration(NamedTuple):
    graph: ReducedGraph
    problem: RestorationProblem
    result: RestorationResult


def restore(
    network: PowerNetwork,
    ms: MeasurementSet,
    detection: Detection,
    pseudo: MeasurementSet,
    cfg: SweepConfig = DEFAULT,
    v_candidate: float = 1.0,
    v_pseudo: float = 1.0,
) -> Restoration:
    """Detection output plus a pseudo pool in, certified restoration out.

    Raises :class:`CandidatesExhausted` (carrying the partial, certified
    result) when the pool cannot close the gap.
    """
    J = build_jacobian(network, list(ms) + list(pseudo))
    rg, prob = partition_candidates(
        detection.partition, list(detection.rejected) + list(detection.dropped), pseudo.ids, J,
        v_candidate, v_pseudo)
    base = J.select(ms.ids)
    try:
        res = restore_observability(rg, prob, cfg)
    except CandidatesExhausted as exc:
        exc.result.certificate = verify_full_observability(base, J.select(exc.result.accepted))
        raise
    res.certificate = verify_full_observability(base, J.select(res.accepted))
    return Restoration(rg, prob, res)
