"""Variance-only Gaussian belief propagation on measurement factor graphs.

Messages are plain ``float64`` arrays indexed by edge: ``0.0`` is ZERO and
``inf`` is INFINITE (see :mod:`gbpobs.variance`). A factor sends its target
variable the serial sum of what the other variables sent it (plus its own
variance, if it has one); a variable sends a factor the parallel (harmonic)
sum of what its other factors, including its virtual factor, sent it.

Sweeps are synchronous: the factor half-sweep reads only the variable-to-factor
buffer of the previous sweep, then the variable half-sweep reads only the
factor-to-variable buffer just produced. No update depends on the order in
which edges are visited.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Sequence

import numba as nb
import numpy as np

from .network import SparseJacobian
from .variance import DEFAULT, ExtendedVariance, Observability, SweepConfig, classify_variance

INF = math.inf


class AmbiguousConvergence(RuntimeError):
    """Message passing hit ``tau_max`` with a marginal that is neither settled nor growing."""

    def __init__(self, msg: str, pass_index: int | None = None, variables: Sequence[int] = ()):
        super().__init__(msg)
        self.pass_index = pass_index
        self.variables = list(variables)


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite variable/factor graph plus one virtual factor per variable.

    Edges are numbered factor by factor: the edges of factor ``f`` are
    ``factor_ptr[f]:factor_ptr[f + 1]`` and ``factor_var[e]`` is the local
    variable of edge ``e``. ``var_ptr``/``var_edge`` index the same edges by
    variable. ``factor_own`` holds each factor's own variance (NaN when the
    factor is noiseless) and ``virtual`` the virtual factor variances.
    """

    n_vars: int
    factor_ptr: np.ndarray
    factor_var: np.ndarray
    factor_own: np.ndarray
    virtual: np.ndarray
    factor_labels: tuple = ()
    var_labels: tuple = ()
    var_ptr: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    var_edge: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.var_ptr is None:
            order = np.argsort(self.factor_var, kind="stable")
            counts = np.bincount(self.factor_var, minlength=self.n_vars)
            ptr = np.zeros(self.n_vars + 1, dtype=np.int64)
            np.cumsum(counts, out=ptr[1:])
            object.__setattr__(self, "var_ptr", ptr)
            object.__setattr__(self, "var_edge", order.astype(np.int64))
        if not self.var_labels:
            object.__setattr__(self, "var_labels", tuple(range(self.n_vars)))
        if not self.factor_labels:
            object.__setattr__(self, "factor_labels", tuple(range(self.n_factors)))

    @classmethod
    def from_rows(
        cls,
        n_vars: int,
        rows: Sequence[Sequence[int]],
        factor_labels: Sequence[Hashable] = (),
        var_labels: Sequence[Hashable] = (),
        own: Sequence[float] | None = None,
        virtual: Sequence[float] | float = INF,
    ) -> "FactorGraph":
        ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum([len(r) for r in rows], out=ptr[1:])
        fv = np.fromiter((v for r in rows for v in r), dtype=np.int64, count=int(ptr[-1]))
        own_arr = np.full(len(rows), np.nan) if own is None else np.asarray(own, dtype=np.float64)
        virt = np.broadcast_to(np.asarray(virtual, dtype=np.float64), (n_vars,)).copy()
        return cls(n_vars, ptr, fv, own_arr, virt, tuple(factor_labels), tuple(var_labels))

    @property
    def n_factors(self) -> int:
        return len(self.factor_ptr) - 1

    @property
    def n_edges(self) -> int:
        return int(self.factor_ptr[-1])

    def factor_vars(self, f: int) -> np.ndarray:
        return self.factor_var[self.factor_ptr[f]:self.factor_ptr[f + 1]]

    def edge(self, f: int, var: int) -> int:
        """Edge id joining factor ``f`` and local variable ``var``."""
        lo, hi = self.factor_ptr[f], self.factor_ptr[f + 1]
        hits = np.flatnonzero(self.factor_var[lo:hi] == var)
        if not len(hits):
            raise KeyError(f"factor {f} does not touch variable {var}")
        return int(lo + hits[0])

    def with_virtual(self, virtual: np.ndarray) -> "FactorGraph":
        return replace(self, virtual=np.asarray(virtual, dtype=np.float64))

    def with_probe(self, var: int) -> "FactorGraph":
        """All virtual factors INFINITE except a ZERO probe on ``var``."""
        virt = np.full(self.n_vars, INF)
        virt[var] = 0.0
        return self.with_virtual(virt)

    def with_own(self, own: np.ndarray) -> "FactorGraph":
        return replace(self, factor_own=np.asarray(own, dtype=np.float64))

    @functools.cached_property
    def max_degree(self) -> int:
        fd = int(np.max(np.diff(self.factor_ptr))) if self.n_factors else 0
        vd = int(np.max(np.diff(self.var_ptr))) if self.n_vars else 0
        return max(fd, vd)

    def updates_per_sweep(self) -> int:
        """Messages written by one sweep: both directions of every edge plus the virtual ones."""
        return 2 * self.n_edges + self.n_vars


def build_detection_graph(J: SparseJacobian) -> FactorGraph:
    """One noiseless factor per row, one INFINITE virtual factor per column."""
    rows = [[c for c, _ in row] for row in J.rows]
    return FactorGraph.from_rows(J.n_cols, rows, J.row_ids, tuple(range(J.n_cols)))


@dataclass
class MessageState:
    """Double-buffered messages plus per-message trend bookkeeping."""

    x2f: np.ndarray
    f2x: np.ndarray
    x2f_prev: np.ndarray
    f2x_prev: np.ndarray
    marginal: np.ndarray
    marginal_prev: np.ndarray
    marginal_streak: np.ndarray
    snapshots: dict = field(default_factory=dict)
    tau: int = 0
    stopped: bool = False
    updates: int = 0

    @classmethod
    def initial(cls, g: FactorGraph, cfg: SweepConfig = DEFAULT) -> "MessageState":
        e, n = g.n_edges, g.n_vars
        full = np.full(e, cfg.v_init)
        return cls(
            x2f=full.copy(), f2x=full.copy(), x2f_prev=full.copy(), f2x_prev=full.copy(),
            marginal=np.full(n, np.nan), marginal_prev=np.full(n, np.nan),
            marginal_streak=np.zeros(n, np.int64),
        )

    def copy(self) -> "MessageState":
        out = MessageState(**{k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})
        out.snapshots = {t: v.copy() for t, v in self.snapshots.items()}
        return out

    def growth_degree(self) -> np.ndarray:
        """Apparent polynomial degree of each marginal since an earlier snapshot.

        ``log(v(t) / v(r)) / log(t / r)`` with ``r`` the latest snapshot at or
        before ``3t / 4``, i.e. the log-log slope over the last stretch of
        sweeps. Bounded for settling or polynomially drifting variances,
        proportional to ``t`` for geometric growth. NaN where undefined
        (fewer than four sweeps, or a ZERO/INFINITE endpoint).
        """
        t = self.tau
        out = np.full(self.marginal.shape, np.nan)
        past = [r for r in self.snapshots if r <= (3 * t) // 4]
        if t < 4 or not past:
            return out
        r = max(past)
        ref = self.snapshots[r]
        cur = self.marginal
        with np.errstate(invalid="ignore"):
            ok = np.isfinite(cur) & np.isfinite(ref) & (cur > 0) & (ref > 0)
        out[ok] = np.log(cur[ok] / ref[ok]) / math.log(t / r)
        return out

    def f2x_ev(self, edge: int, cfg: SweepConfig = DEFAULT) -> ExtendedVariance:
        return ExtendedVariance.from_float(float(self.f2x[edge]), cfg)

    def x2f_ev(self, edge: int, cfg: SweepConfig = DEFAULT) -> ExtendedVariance:
        return ExtendedVariance.from_float(float(self.x2f[edge]), cfg)


# ------------------------------------------------------------------ kernels


@nb.njit(cache=True, inline="always")
def _fold(v, v_zero, v_inf):
    if v <= v_zero:
        return 0.0
    if v >= v_inf:
        return np.inf
    return v


@nb.njit(cache=True, inline="always", error_model="numpy")
def _recip(v):
    # IEEE: 1/0 = inf and 1/inf = 0, exactly the ZERO/INFINITE swap
    return 1.0 / v


@nb.njit(cache=True, error_model="numpy")
def _factor_half(factor_ptr, factor_own, x2f, f2x_out, v_zero, v_inf, scratch):
    m = factor_ptr.shape[0] - 1
    for f in range(m):
        lo = factor_ptr[f]
        hi = factor_ptr[f + 1]
        own = factor_own[f]
        base = 0.0 if np.isnan(own) else own
        # prefix sums, then a right-to-left pass with the running suffix
        acc = 0.0
        for e in range(lo, hi):
            scratch[e - lo] = acc
            acc += x2f[e]
        suf = 0.0
        for e in range(hi - 1, lo - 1, -1):
            f2x_out[e] = _fold(base + (scratch[e - lo] + suf), v_zero, v_inf)
            suf += x2f[e]


@nb.njit(cache=True, error_model="numpy")
def _variable_half(var_ptr, var_edge, virtual, f2x, x2f_out, x2f_old, marg, marg_old, marg_streak,
                   v_zero, v_inf, tol, recips, prefix):
    """Variable-to-factor messages and marginals; returns True iff no message moved beyond ``tol``."""
    n = var_ptr.shape[0] - 1
    quiet = True
    for x in range(n):
        lo = var_ptr[x]
        hi = var_ptr[x + 1]
        vr = _recip(virtual[x])
        acc = 0.0
        for k in range(lo, hi):
            r = _recip(f2x[var_edge[k]])
            recips[k - lo] = r
            prefix[k - lo] = acc
            acc += r
        v = _fold(_recip(vr + acc), v_zero, v_inf)
        marg[x] = v
        if v > marg_old[x]:
            marg_streak[x] += 1
        else:
            marg_streak[x] = 0
        suf = 0.0
        for k in range(hi - 1, lo - 1, -1):
            e = var_edge[k]
            a = _fold(_recip(vr + (prefix[k - lo] + suf)), v_zero, v_inf)
            x2f_out[e] = a
            suf += recips[k - lo]
            if quiet:
                b = x2f_old[e]
                if a != b:
                    if a == 0.0 or a == np.inf or b == 0.0 or b == np.inf or abs(a - b) > tol * max(a, b):
                        quiet = False
    return quiet


@nb.njit(cache=True, error_model="numpy")
def _marginals(var_ptr, var_edge, virtual, f2x, out, v_zero, v_inf):
    n = var_ptr.shape[0] - 1
    for x in range(n):
        acc = _recip(virtual[x])
        for k in range(var_ptr[x], var_ptr[x + 1]):
            acc += _recip(f2x[var_edge[k]])
        out[x] = _fold(_recip(acc), v_zero, v_inf)


@nb.njit(cache=True, error_model="numpy")
def _decided(cur, prev, ref, log_span, tol, v_high, degree_unobs):
    """True iff every marginal is tagged, settled, or growing geometrically past ``v_high``."""
    for i in range(cur.shape[0]):
        a = cur[i]
        b = prev[i]
        if a == b:
            continue
        if b != 0.0 and b != np.inf and a != 0.0 and a != np.inf and abs(a - b) <= tol * max(a, b):
            continue
        c = ref[i]
        if a >= v_high and 0.0 < c < np.inf and np.log(a / c) / log_span >= degree_unobs:
            continue
        return False
    return True


SNAP_EVERY = 64


@functools.lru_cache(maxsize=64)
def snapshot_times(limit: int) -> np.ndarray:
    """Sweeps after which marginals are kept: powers of two, then every ``SNAP_EVERY``."""
    t = {1 << k for k in range(max(limit, 1).bit_length())}
    t.update(range(SNAP_EVERY, limit + 1, SNAP_EVERY))
    out = np.array(sorted(x for x in t if x <= limit), dtype=np.int64)
    out.flags.writeable = False
    return out


@nb.njit(cache=True, error_model="numpy")
def _run(factor_ptr, factor_own, var_ptr, var_edge, virtual,
         x2f, f2x, x2f_prev, f2x_prev, marg, marg_prev, marg_streak, snaps, snap_times, snap_ref,
         tau, limit, v_zero, v_inf, tol, v_high, degree_unobs, check_every, s1, s2):
    """Sweep from ``tau`` up to ``limit``.

    Buffers swap roles every sweep, so the (possibly exchanged) arrays are
    returned along with ``tau`` and the stop flag. ``snaps[k]`` receives the
    marginals after sweep ``snap_times[k]``; ``snap_ref[t]`` is the snapshot
    row at or before ``3t // 4`` (or -1). The marginal-level stop test runs
    every ``check_every`` sweeps (0 disables it).
    """
    stopped = False
    k = 0
    while k < snap_times.shape[0] and snap_times[k] <= tau:
        k += 1
    while tau < limit:
        x2f, x2f_prev = x2f_prev, x2f
        f2x, f2x_prev = f2x_prev, f2x
        marg, marg_prev = marg_prev, marg
        _factor_half(factor_ptr, factor_own, x2f_prev, f2x, v_zero, v_inf, s1)
        quiet = _variable_half(var_ptr, var_edge, virtual, f2x, x2f, x2f_prev, marg, marg_prev, marg_streak,
                               v_zero, v_inf, tol, s1, s2)
        tau += 1
        if k < snap_times.shape[0] and snap_times[k] == tau:
            snaps[k, :] = marg
            k += 1
        # x2f unchanged means the next factor half reproduces f2x: a fixed point
        stopped = quiet
        if not stopped and check_every > 0 and tau % check_every == 0:
            r = snap_ref[tau]
            if r >= 0:
                stopped = _decided(marg, marg_prev, snaps[r], np.log(tau / snap_times[r]),
                                   tol, v_high, degree_unobs)
        if stopped:
            break
    return x2f, f2x, x2f_prev, f2x_prev, marg, marg_prev, tau, stopped


@functools.lru_cache(maxsize=64)
def _snap_ref(limit: int) -> np.ndarray:
    times = snapshot_times(limit)
    ref = np.full(limit + 1, -1, dtype=np.int64)
    t = np.arange(limit + 1)
    idx = np.searchsorted(times, (3 * t) // 4, side="right") - 1
    ok = (idx >= 0) & (t >= 4)
    ref[ok] = idx[ok]
    ref.flags.writeable = False
    return ref


def _advance(g: FactorGraph, s: MessageState, cfg: SweepConfig, limit: int, marginal_stop: bool = True) -> None:
    times = snapshot_times(limit)
    snaps = np.full((len(times), g.n_vars), np.nan)
    for k, t in enumerate(times):
        if t in s.snapshots:
            snaps[k] = s.snapshots[t]
    d = max(g.max_degree, 1)
    (s.x2f, s.f2x, s.x2f_prev, s.f2x_prev, s.marginal, s.marginal_prev, tau, stopped) = _run(
        g.factor_ptr, g.factor_own, g.var_ptr, g.var_edge, g.virtual,
        s.x2f, s.f2x, s.x2f_prev, s.f2x_prev, s.marginal, s.marginal_prev, s.marginal_streak,
        snaps, times, _snap_ref(limit),
        s.tau, limit, cfg.v_zero, cfg.v_inf, cfg.tol, cfg.v_high, cfg.degree_unobs, 8 if marginal_stop else 0,
        np.empty(d), np.empty(d),
    )
    for k, t in enumerate(times):
        if s.tau < t <= tau:
            s.snapshots[int(t)] = snaps[k].copy()
    s.tau, s.stopped = int(tau), bool(stopped)
    s.updates = g.updates_per_sweep()


def sweep(g: FactorGraph, s: MessageState, cfg: SweepConfig = DEFAULT) -> bool:
    """One synchronous sweep in place; returns True when the stopping rule holds."""
    _advance(g, s, cfg, s.tau + 1)
    return s.stopped


def run_sweeps(
    g: FactorGraph,
    s: MessageState | None = None,
    cfg: SweepConfig = DEFAULT,
    max_sweeps: int | None = None,
    marginal_stop: bool = True,
) -> MessageState:
    """Sweep until every message is ZERO, INFINITE, settled, or diverging, or ``tau_max``.

    ``max_sweeps`` caps this call (for inspecting intermediate iterations);
    when it is not given and ``tau_max`` is hit with some marginal neither
    settled nor growing, :class:`AmbiguousConvergence` is raised. With
    ``marginal_stop=False`` only a true fixed point of the messages ends the
    run early.
    """
    if s is None:
        s = MessageState.initial(g, cfg)
    limit = cfg.tau_max if max_sweeps is None else min(cfg.tau_max, s.tau + max_sweeps)
    if s.tau < limit and not s.stopped:
        _advance(g, s, cfg, limit, marginal_stop)
    if max_sweeps is None and not s.stopped:
        bad = np.flatnonzero(classify_codes(s, cfg) == 2).tolist()
        if bad:
            raise AmbiguousConvergence(
                f"no convergence after {s.tau} sweeps; {len(bad)} marginal(s) undecided", variables=bad)
    return s


def marginal_variances(g: FactorGraph, s: MessageState, cfg: SweepConfig = DEFAULT) -> list[ExtendedVariance]:
    out = np.empty(g.n_vars)
    _marginals(g.var_ptr, g.var_edge, g.virtual, s.f2x, out, cfg.v_zero, cfg.v_inf)
    return [ExtendedVariance.from_float(float(v), cfg) for v in out]


def classify_marginals(g: FactorGraph, s: MessageState, cfg: SweepConfig = DEFAULT) -> list[Observability]:
    codes = classify_codes(s, cfg)
    return [_CODES[c] for c in codes]


_CODES = (Observability.OBSERVABLE, Observability.UNOBSERVABLE, Observability.AMBIGUOUS)


def classify_codes(s: MessageState, cfg: SweepConfig = DEFAULT) -> np.ndarray:
    """Vectorised :func:`classify_variance` over all marginals: 0 observable, 1 not, 2 ambiguous."""
    v = s.marginal
    prev = s.marginal_prev
    with np.errstate(invalid="ignore"):
        fin = (v > 0) & np.isfinite(v)
        settled = (v == prev) | (fin & np.isfinite(prev) & (np.abs(v - prev) <= cfg.tol * np.maximum(v, prev)))
    d = s.growth_degree()
    has_d = ~np.isnan(d)
    out = np.full(v.shape, 2, dtype=np.int8)
    fallback = ~has_d & (s.marginal_streak >= cfg.window) & (v >= cfg.v_high)
    out[fin & has_d & (d <= cfg.degree_obs)] = 0
    out[fin & (has_d & (d >= cfg.degree_unobs) | fallback)] = 1
    out[fin & settled] = 0
    out[fin & (v <= cfg.v_low)] = 0
    out[v == 0] = 0
    out[v == INF] = 1
    return out
