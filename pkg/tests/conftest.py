from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from gbpobs import MeasurementSet, network_from_edges
from gbpobs.network import flow, injection

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIX_BUS_EDGES = [(1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (5, 6)]
SIX_BUS_CASE = {
    "buses": [{"id": b} for b in range(1, 7)],
    "branches": [{"id": k, "from": a, "to": b} for k, (a, b) in enumerate(SIX_BUS_EDGES, start=1)],
}
SIX_BUS_MEAS = [
    {"id": "M_P12", "kind": "flow", "branch": 1, "from": 1},
    {"id": "M_P45", "kind": "flow", "branch": 5, "from": 4},
    {"id": "M_P3", "kind": "injection", "bus": 3},
    {"id": "M_P5", "kind": "injection", "bus": 5},
]


@pytest.fixture
def six_bus():
    return network_from_edges(range(1, 7), SIX_BUS_EDGES)


@pytest.fixture
def six_meas():
    return MeasurementSet((flow("M_P12", 1, 1), flow("M_P45", 5, 4), injection("M_P3", 3), injection("M_P5", 5)))


@pytest.fixture
def six_files(tmp_path):
    case = tmp_path / "case.json"
    meas = tmp_path / "meas.json"
    case.write_text(json.dumps(SIX_BUS_CASE))
    meas.write_text(json.dumps(SIX_BUS_MEAS))
    return case, meas


def dense_rank(rows, n_cols: int) -> int:
    """Textbook Gauss-Jordan over Fractions on a dense copy; reference for the sparse code."""
    m = [[Fraction(0)] * n_cols for _ in rows]
    for r, row in enumerate(rows):
        items = row.items() if isinstance(row, dict) else (row if row and isinstance(row[0], tuple) else enumerate(row))
        for c, v in items:
            m[r][c] = Fraction(v)
    rank = 0
    for c in range(n_cols):
        piv = next((r for r in range(rank, len(m)) if m[r][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][c] != 0:
                f = m[r][c] / m[rank][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
