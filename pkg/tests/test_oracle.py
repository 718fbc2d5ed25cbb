import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.linalg import null_space

from gbpobs import (
    IslandPartition, MeasurementSet, build_jacobian, generate_measurement_config, is_refinement,
    make_synthetic_network, network_from_edges, oracle_islands, partitions_equal, topological_islands,
)
from gbpobs.network import flow, injection
from gbpobs.oracle import observable_branches


def test_oracle_six_bus(six_bus, six_meas):
    J = build_jacobian(six_bus, six_meas)
    assert oracle_islands(six_bus, J).as_bus_ids(six_bus.bus_ids) == [[1, 2], [3], [4, 5, 6]]
    assert observable_branches(six_bus, J) == [True, False, False, False, True, True]


def test_oracle_trivial_cases(six_bus):
    none = oracle_islands(six_bus, build_jacobian(six_bus, []))
    assert none.k == 6
    tree = [flow(f"f{k}", k, a) for k, a in [(1, 1), (2, 1), (4, 3), (5, 4), (6, 5)]]
    assert oracle_islands(six_bus, build_jacobian(six_bus, tree)).k == 1


def test_topological_six_bus(six_bus, six_meas):
    part = topological_islands(six_bus, six_meas)
    assert part.as_bus_ids(six_bus.bus_ids) == [[1, 2], [3], [4, 5, 6]]


def test_topological_trivial_cases(six_bus):
    every = MeasurementSet(tuple(flow(f"f{br.id}", br.id, six_bus.bus_ids[br.from_bus]) for br in six_bus.branches))
    assert topological_islands(six_bus, every).k == 1
    leaf = topological_islands(six_bus, MeasurementSet((injection("p6", 6),)))
    assert [5, 6] in leaf.as_bus_ids(six_bus.bus_ids)
    assert partitions_equal(leaf, oracle_islands(six_bus, build_jacobian(six_bus, [injection("p6", 6)])))


def test_partitions_equal():
    a = IslandPartition.from_groups(3, [{0, 1}, {2}])
    assert partitions_equal(a, IslandPartition.from_groups(3, [{2}, {1, 0}]))
    assert not partitions_equal(a, IslandPartition.from_groups(3, [{0}, {1, 2}]))


def _float_islands(net, J):
    """Islands from a floating-point SVD null space; fine for small, well-scaled systems."""
    H = J.to_dense().astype(float)
    N = null_space(H) if H.size else np.eye(net.n)
    parent = list(range(net.n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for br in net.branches:
        if np.allclose(N[br.from_bus], N[br.to_bus], atol=1e-8):
            parent[find(br.from_bus)] = find(br.to_bus)
    out = {}
    for i in range(net.n):
        out.setdefault(find(i), set()).add(i)
    return IslandPartition.from_groups(net.n, out.values())


@settings(max_examples=60)
@given(st.integers(0, 2**32), st.floats(0.3, 1.6))
def test_oracle_matches_float_null_space(seed, red):
    net = make_synthetic_network(18, 2.6, seed % 9)
    J = build_jacobian(net, generate_measurement_config(net, red, seed))
    assert partitions_equal(oracle_islands(net, J), _float_islands(net, J))


@settings(max_examples=60)
@given(st.integers(0, 2**32), st.floats(0.3, 1.6))
def test_topological_refines_oracle(seed, red):
    net = make_synthetic_network(50, 2.6, seed % 9)
    ms = generate_measurement_config(net, red, seed)
    assert is_refinement(topological_islands(net, ms), oracle_islands(net, build_jacobian(net, ms)))


def test_oracle_on_disconnected_network():
    net = network_from_edges([1, 2, 3, 4], [(1, 2), (3, 4)])
    part = oracle_islands(net, build_jacobian(net, [flow("a", 1, 1), flow("b", 2, 3)]))
    assert part.as_bus_ids(net.bus_ids) == [[1, 2], [3, 4]]
