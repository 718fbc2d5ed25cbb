"""Exact row-rank tools over the rationals.

Everything here works on integer rows (``dict`` column -> ``int``); rational
input is scaled to integers first. Elimination is fraction-free with gcd
normalisation, so no rounding or pivot threshold is involved anywhere.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Mapping, Sequence, Union

from .network import MeasId, SparseJacobian
from .partition import UnionFind

Row = dict  # column -> int
RowLike = Union[Mapping[int, object], Sequence[object]]


def _as_int_row(row: RowLike) -> Row:
    if isinstance(row, Mapping):
        items = row.items()
    else:
        items = enumerate(row)
    items = [(c, Fraction(v)) for c, v in items if v != 0]
    if not items:
        return {}
    den = lcm(*(v.denominator for _, v in items))
    return {c: int(v * den) for c, v in items}


def _to_row(row: RowLike) -> Row:
    if isinstance(row, dict) and all(type(v) is int for v in row.values()):
        return {c: v for c, v in row.items() if v}
    return _as_int_row(row)


def _normalise(row: Row) -> Row:
    g = 0
    for v in row.values():
        g = gcd(g, v)
        if g == 1:
            return row
    if g > 1:
        for c in row:
            row[c] //= g
    return row


def _combine(a: Row, ka: int, b: Row, kb: int) -> Row:
    """Return ``ka*a - kb*b`` with zero entries removed."""
    out = {c: ka * v for c, v in a.items()} if ka != 1 else dict(a)
    for c, v in b.items():
        x = out.get(c, 0) - kb * v
        if x:
            out[c] = x
        else:
            out.pop(c, None)
    return out


class Echelon:
    """Incrementally built, fully reduced row basis.

    Each basis row owns a pivot column that appears in no other basis row, so
    reducing a candidate row is a single pass over the pivots in its support.
    The pivot of a new row is the column with the fewest basis rows touching it
    (cheapest update), ties broken by the lowest column index.
    """

    def __init__(self, n_cols: int | None = None):
        self.n_cols = n_cols
        self.pivot_rows: dict[int, Row] = {}
        # non-pivot column -> pivots of the rows that contain it
        self.col_index: dict[int, set[int]] = {}

    @property
    def rank(self) -> int:
        return len(self.pivot_rows)

    def reduce(self, row: RowLike) -> Row:
        r = _to_row(row)
        for p in [c for c in r if c in self.pivot_rows]:
            v = r.get(p)
            if not v:
                continue
            b = self.pivot_rows[p]
            bp = b[p]
            g = gcd(bp, v)
            r = _combine(r, bp // g, b, v // g)
        return _normalise(r)

    def contains(self, row: RowLike) -> bool:
        return not self.reduce(row)

    def add(self, row: RowLike) -> bool:
        """Insert ``row``; return True iff it raised the rank."""
        r = self.reduce(row)
        if not r:
            return False
        col_index = self.col_index
        p = min(r, key=lambda c: (len(col_index.get(c, ())), c))
        if r[p] < 0:
            r = {c: -v for c, v in r.items()}
        rp = r[p]
        for q in list(col_index.get(p, ())):
            b = self.pivot_rows[q]
            v = b[p]
            g = gcd(rp, v)
            old = b
            new = _normalise(_combine(b, rp // g, r, v // g))
            if new[q] < 0:
                new = {c: -x for c, x in new.items()}
            self.pivot_rows[q] = new
            for c in old:
                if c not in new and c != q:
                    col_index[c].discard(q)
            for c in new:
                if c not in old and c != q:
                    col_index.setdefault(c, set()).add(q)
        col_index.pop(p, None)
        self.pivot_rows[p] = r
        for c in r:
            if c != p:
                col_index.setdefault(c, set()).add(p)
        return True

    def free_columns(self, n_cols: int | None = None) -> list[int]:
        n = self.n_cols if n_cols is None else n_cols
        if n is None:
            raise ValueError("column count unknown")
        return [c for c in range(n) if c not in self.pivot_rows]

    def variable_forms(self, n_cols: int | None = None) -> list[tuple[tuple[int, Fraction], ...]]:
        """Express every column variable in terms of the free ones on the null space.

        Entry ``i`` is a sorted tuple of ``(free column, coefficient)``; two
        variables take equal values on every null-space vector iff their forms
        are equal.
        """
        n = self.n_cols if n_cols is None else n_cols
        forms: list[tuple[tuple[int, Fraction], ...]] = []
        for i in range(n):
            row = self.pivot_rows.get(i)
            if row is None:
                forms.append(((i, Fraction(1)),))
            else:
                d = row[i]
                forms.append(tuple(sorted((c, Fraction(-v, d)) for c, v in row.items() if c != i)))
        return forms


def _rows_of(J: SparseJacobian | Iterable[RowLike]) -> tuple[int | None, list[RowLike]]:
    if isinstance(J, SparseJacobian):
        return J.n_cols, [dict(r) for r in J.rows]
    rows = list(J)
    n = None
    if rows and not isinstance(rows[0], Mapping):
        n = len(rows[0])
    return n, rows


def row_rank(J: SparseJacobian | Iterable[RowLike]) -> int:
    _, rows = _rows_of(J)
    e = Echelon()
    for r in rows:
        e.add(r)
    return e.rank


def _is_difference(row) -> bool:
    return len(row) == 2 and row[0][1] == -row[1][1]


def independent_row_subset(
    J: SparseJacobian, order: Sequence[int] | None = None
) -> tuple[list[MeasId], list[MeasId]]:
    """Greedy scan: keep a row iff it raises the rank of the rows kept so far.

    ``order`` is a permutation of row positions to scan in (default: as
    stored). Both returned lists follow the scan order.

    Rows of the form ``a*x_i - a*x_j`` at the head of the scan only tie
    columns together, so they go through a union-find. Every later row is
    reduced modulo their span by summing its coefficients per tied group,
    which is exact, and the merged rows feed the fraction-free elimination.
    """
    order = range(J.n_rows) if order is None else order
    kept, rejected = [], []
    uf = UnionFind(J.n_cols)
    it = iter(order)
    e = None
    for k in it:
        row = J.rows[k]
        if not _is_difference(row):
            e = Echelon(J.n_cols)
            break
        (kept if uf.union(row[0][0], row[1][0]) else rejected).append(J.row_ids[k])
    if e is None:
        return kept, rejected
    find = uf.find
    roots = [find(c) for c in range(J.n_cols)]
    for k in itertools.chain((k,), it):
        merged: dict[int, int] = {}
        for c, v in J.rows[k]:
            r = roots[c]
            merged[r] = merged.get(r, 0) + v
        (kept if e.add(merged) else rejected).append(J.row_ids[k])
    return kept, rejected


def null_space_basis(J: SparseJacobian | Iterable[RowLike], n_cols: int | None = None) -> list[list[Fraction]]:
    """Exact basis of ``{x : Jx = 0}``, one list per basis vector."""
    n, rows = _rows_of(J)
    n = n_cols if n_cols is not None else n
    if n is None:
        raise ValueError("n_cols is required for sparse row input")
    e = Echelon(n)
    for r in rows:
        e.add(r)
    basis = []
    for f in e.free_columns():
        vec = [Fraction(0)] * n
        vec[f] = Fraction(1)
        for p, row in e.pivot_rows.items():
            v = row.get(f)
            if v:
                vec[p] = Fraction(-v, row[p])
        basis.append(vec)
    return basis
