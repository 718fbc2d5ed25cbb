"""Observability analysis of DC power networks by variance-only Gaussian belief propagation."""

from .exact import independent_row_subset, null_space_basis, row_rank
from .factor_graph import AmbiguousConvergence, FactorGraph, MessageState, build_detection_graph, run_sweeps
from .islands import DetectionConfig, ProbePolicy, ProbeRule, detect_islands, peel_subgraph, select_probe
from .network import (
    InputError,
    Measurement,
    MeasurementKind,
    MeasurementSet,
    PowerNetwork,
    SparseJacobian,
    boundary_pseudo_candidates,
    build_jacobian,
    generate_measurement_config,
    network_from_edges,
    parse_measurement_set,
    parse_network,
)
from .oracle import oracle_islands, topological_islands
from .partition import IslandPartition, is_refinement, partitions_equal
from .restoration import (
    CandidatesExhausted,
    Independence,
    NegativeW,
    partition_candidates,
    restore,
    restore_observability,
    verify_full_observability,
)
from .synthetic import make_synthetic_network
from .variance import DEFAULT, INFINITE, ZERO, ExtendedVariance, Observability, SweepConfig

__version__ = "0.1.0"
