import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_tree

from gbpobs import (
    DetectionConfig, MeasurementSet, ProbePolicy, build_detection_graph, build_jacobian, detect_islands,
    generate_measurement_config, is_refinement, make_synthetic_network, network_from_edges,
    oracle_islands, partitions_equal, peel_subgraph, select_probe,
)
from gbpobs.exact import row_rank
from gbpobs.islands import row_scan_order
from gbpobs.network import flow


def test_select_probe():
    assert select_probe({1, 2, 3, 4, 5, 6}) == 1
    assert select_probe({9}) == 9
    assert select_probe({9}, ProbePolicy.random(3)) == 9
    picks = {select_probe({3, 4, 5, 6}, ProbePolicy.random(s)) for s in range(50)}
    assert 4 in picks and picks <= {3, 4, 5, 6}
    assert select_probe({3, 4, 5}, ProbePolicy.random(11)) == select_probe({5, 4, 3}, ProbePolicy.random(11))
    with pytest.raises(ValueError):
        select_probe(set())


def test_peel_after_first_island(six_bus, six_meas):
    g = build_detection_graph(build_jacobian(six_bus, six_meas))
    sub, dropped = peel_subgraph(g, {0, 1})
    assert sub.var_labels == (2, 3, 4, 5)
    assert sub.factor_labels == ("M_P45", "M_P5")
    assert dropped == ["M_P3"]
    assert np.isinf(sub.virtual).all()


def test_peel_nothing_and_everything(six_bus, six_meas):
    g = build_detection_graph(build_jacobian(six_bus, six_meas))
    same, dropped = peel_subgraph(g, set())
    assert same.n_factors == 4 and same.n_vars == 6 and dropped == []
    empty, dropped = peel_subgraph(g, range(6))
    assert (empty.n_vars, empty.n_factors) == (0, 0) and dropped == []


def test_detect_six_bus(six_bus, six_meas):
    det = detect_islands(six_bus, six_meas)
    assert det.partition.as_bus_ids(six_bus.bus_ids) == [[1, 2], [3], [4, 5, 6]]
    # lowest-id probing finds {3} before {4,5,6}
    assert [sorted(s) for s in det.partition.islands] == [[0, 1], [2], [3, 4, 5]]
    assert det.partition.probes == (0, 2, 3)
    assert det.rejected == [] and det.dropped == ["M_P3"]


def test_detect_spanning_tree_of_flows():
    net = make_synthetic_network(25, 2.6, 4)
    e = net.edge_array()
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(net.n, net.n))
    tree = breadth_first_tree(adj, 0, directed=False).tocoo()
    pairs = {frozenset(p) for p in zip(tree.row.tolist(), tree.col.tolist())}
    ms = MeasurementSet(tuple(
        flow(f"f{br.id}", br.id, net.bus_ids[br.from_bus])
        for br in net.branches if frozenset((br.from_bus, br.to_bus)) in pairs))
    det = detect_islands(net, ms)
    assert det.partition.k == 1 and det.partition.passes == 1


def test_detect_without_measurements():
    net = network_from_edges([5, 6, 7], [(5, 6), (6, 7)])
    det = detect_islands(net, MeasurementSet(()))
    assert det.partition.as_bus_ids(net.bus_ids) == [[5], [6], [7]]
    assert det.partition.passes == 3


def test_rejected_rows_are_reported():
    net = network_from_edges([1, 2], [(1, 2)])
    ms = MeasurementSet((flow("a", 1, 1), flow("b", 1, 2)))
    det = detect_islands(net, ms)
    assert det.rejected == ["b"] and det.partition.k == 1


def test_flows_are_scanned_first(six_meas):
    assert row_scan_order(six_meas) == [0, 1, 2, 3]
    assert row_scan_order(list(reversed(list(six_meas)))) == [2, 3, 0, 1]
    assert row_scan_order(six_meas, flows_first=False) == [0, 1, 2, 3]


def _config(seed, buses=60):
    net = make_synthetic_network(buses, 2.6, seed % 13)
    red = 0.5 + (seed % 997) / 997
    return net, generate_measurement_config(net, red, seed)


@settings(max_examples=40)
@given(st.integers(0, 2**32))
def test_islands_certified_by_kept_rows(seed):
    net, ms = _config(seed)
    det = detect_islands(net, ms)
    part = det.partition
    J = build_jacobian(net, ms)
    kept = J.select([m for m in J.row_ids if m not in set(det.rejected)])
    assert sorted(i for s in part.islands for i in s) == list(range(net.n))
    assert part.passes == part.k <= net.n
    for isl, p in zip(part.islands, part.probes):
        assert p in isl
        inside = [dict(r) for r in kept.rows if all(c in isl for c, _ in r)]
        assert row_rank(inside) == len(isl) - 1


@settings(max_examples=40)
@given(st.integers(0, 2**32))
def test_gbp_never_coarser_than_oracle(seed):
    net, ms = _config(seed)
    det = detect_islands(net, ms)
    assert is_refinement(det.partition, oracle_islands(net, build_jacobian(net, ms)))


@settings(max_examples=20)
@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_probe_order_invariance_small(seed, probe_seed):
    net, ms = _config(seed, buses=30)
    base = detect_islands(net, ms).partition
    other = detect_islands(net, ms, DetectionConfig(probe=ProbePolicy.random(probe_seed))).partition
    assert partitions_equal(base, other)


def test_agrees_with_oracle_on_six_bus(six_bus, six_meas):
    det = detect_islands(six_bus, six_meas)
    assert partitions_equal(det.partition, oracle_islands(six_bus, build_jacobian(six_bus, six_meas)))
