"""Recovering a hidden dense community in a sparse random graph."""

from .bp import BeliefPropagation, BpConfig, edge_gain, log_star, run_bp, select_top_k
from .exact import BPPlusCleanup, DegreeThreshold, bp_plus_cleanup, degree_threshold_estimator
from .exceptions import DomainError, GraphFormatError
from .harness import SweepSpec, coupling_check, metrics, sweep
from .model import CommunityLabels, CommunityMode, ModelParams, PlantedGraph, generate, load_graph, save_graph
from .spectral import NonBacktrackingSpectral, run_spectral

__all__ = [
    "BPPlusCleanup",
    "BeliefPropagation",
    "BpConfig",
    "CommunityLabels",
    "CommunityMode",
    "DegreeThreshold",
    "DomainError",
    "GraphFormatError",
    "ModelParams",
    "NonBacktrackingSpectral",
    "PlantedGraph",
    "SweepSpec",
    "bp_plus_cleanup",
    "coupling_check",
    "degree_threshold_estimator",
    "edge_gain",
    "generate",
    "load_graph",
    "log_star",
    "metrics",
    "run_bp",
    "run_spectral",
    "save_graph",
    "select_top_k",
    "sweep",
]
