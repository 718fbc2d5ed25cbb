"""Island partitions and a small union-find."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence


class UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra < rb:
            self.parent[rb] = ra
        else:
            self.parent[ra] = rb
        return True

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return list(out.values())


@dataclass(frozen=True)
class IslandPartition:
    """Disjoint cover of the dense bus indices ``0..n-1`` by islands.

    ``islands`` keeps discovery order; ``probes`` and ``sweeps`` are filled
    by the belief-propagation detector (one entry per pass) and left empty by
    the baselines.
    """

    n: int
    islands: tuple[frozenset[int], ...]
    probes: tuple[int, ...] = ()
    sweeps: tuple[int, ...] = ()
    method: str = ""
    _owner: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        owner = [-1] * self.n
        for k, isl in enumerate(self.islands):
            if not isl:
                raise ValueError("empty island")
            for i in isl:
                if not 0 <= i < self.n:
                    raise ValueError(f"bus index {i} outside 0..{self.n - 1}")
                if owner[i] != -1:
                    raise ValueError(f"bus index {i} appears in two islands")
                owner[i] = k
        if -1 in owner:
            raise ValueError(f"bus index {owner.index(-1)} is not covered")
        object.__setattr__(self, "_owner", tuple(owner))

    @classmethod
    def from_groups(cls, n: int, groups: Iterable[Iterable[int]], **kw) -> "IslandPartition":
        return cls(n, tuple(frozenset(g) for g in groups), **kw)

    @property
    def k(self) -> int:
        return len(self.islands)

    @property
    def passes(self) -> int:
        return len(self.probes)

    def owner(self) -> tuple[int, ...]:
        """Island index of every bus."""
        return self._owner

    def canonical(self) -> list[list[int]]:
        """Islands as sorted lists, ordered by their smallest member."""
        return sorted(sorted(s) for s in self.islands)

    def as_bus_ids(self, bus_ids: Sequence[int]) -> list[list[int]]:
        return sorted(sorted(bus_ids[i] for i in s) for s in self.islands)

    def as_set(self) -> frozenset[frozenset[int]]:
        return frozenset(self.islands)


def partitions_equal(a: IslandPartition, b: IslandPartition) -> bool:
    """Set-of-sets equality; raises if the bus universes differ."""
    if a.n != b.n:
        raise ValueError(f"partitions cover different bus sets ({a.n} vs {b.n} buses)")
    return a.as_set() == b.as_set()


def is_refinement(fine: IslandPartition, coarse: IslandPartition) -> bool:
    """True iff every island of ``fine`` lies inside one island of ``coarse``."""
    owner = coarse.owner()
    return all(len({owner[i] for i in s}) == 1 for s in fine.islands)
