"""Reference island partitions: an exact null-space oracle and a topological baseline."""

from __future__ import annotations

from .exact import Echelon
from .network import MeasurementKind, MeasurementSet, PowerNetwork, SparseJacobian
from .partition import IslandPartition, UnionFind


def observable_branches(network: PowerNetwork, J: SparseJacobian) -> list[bool]:
    """Branch ``(i, j)`` is observable iff ``x_i == x_j`` on the whole null space of ``J``."""
    e = Echelon(network.n)
    for row in J.rows:
        e.add(dict(row))
    forms = e.variable_forms()
    return [forms[br.from_bus] == forms[br.to_bus] for br in network.branches]


def oracle_islands(network: PowerNetwork, J: SparseJacobian) -> IslandPartition:
    """Islands are the connected components over observable branches."""
    uf = UnionFind(network.n)
    for br, ok in zip(network.branches, observable_branches(network, J)):
        if ok:
            uf.union(br.from_bus, br.to_bus)
    return IslandPartition.from_groups(network.n, uf.groups(), method="oracle")


def topological_islands(network: PowerNetwork, ms: MeasurementSet) -> IslandPartition:
    """Flow merging followed by iterative reduction of injections to boundary flows.

    Flow-measured branches merge their endpoints. Then, until nothing changes,
    an injection at bus ``i`` whose neighbours all lie in ``i``'s island except
    for those in exactly one foreign island reduces to a flow on the boundary
    and merges the two islands. Each injection is consumed at most once.
    """
    uf = UnionFind(network.n)
    injections = []
    for m in ms:
        i = network.bus_index[m.bus]
        if m.kind is MeasurementKind.FLOW:
            br = network.branches[network.branch_index[m.branch]]
            uf.union(br.from_bus, br.to_bus)
        elif network.degree(i) > 0:
            injections.append(i)
    pending = list(dict.fromkeys(injections))
    changed = True
    while changed and pending:
        changed = False
        left = []
        for i in pending:
            home = uf.find(i)
            foreign = {uf.find(j) for j in network.neighbors(i)} - {home}
            if len(foreign) == 1:
                uf.union(i, foreign.pop())
                changed = True
            elif foreign:
                left.append(i)
            # no foreign neighbour: the injection is internal to the island
        pending = left
    return IslandPartition.from_groups(network.n, uf.groups(), method="topological")
