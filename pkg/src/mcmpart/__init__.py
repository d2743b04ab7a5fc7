"""mcmpart: partition tensor-computation DAGs onto ring-connected chiplets."""

__version__ = "0.1.0"

from .graph import ChipTopology, ComputationGraph, DataEdge, OpNode, load_graph, load_graph_file, save_graph, topological_order
from .generate import FAMILIES, GeneratorConfig, OP_VOCAB, generate_synthetic
from .solver import (
    ConstraintSolver,
    Partition,
    StaticReport,
    check_static,
    enumerate_valid,
    solve_fix,
    solve_sample,
    uniform_distribution,
)
from .evaluator import EvalResult, SurrogateConfig, analytical_eval, make_analytical, make_surrogate, memory_check, surrogate_eval

__all__ = [
    "ChipTopology",
    "ComputationGraph",
    "ConstraintSolver",
    "DataEdge",
    "EvalResult",
    "FAMILIES",
    "GeneratorConfig",
    "OP_VOCAB",
    "OpNode",
    "Partition",
    "StaticReport",
    "SurrogateConfig",
    "analytical_eval",
    "check_static",
    "enumerate_valid",
    "generate_synthetic",
    "load_graph",
    "load_graph_file",
    "make_analytical",
    "make_surrogate",
    "memory_check",
    "save_graph",
    "solve_fix",
    "solve_sample",
    "surrogate_eval",
    "topological_order",
    "uniform_distribution",
]
