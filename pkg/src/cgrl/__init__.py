"""Causal-guided representation learning for node classification under distribution shift."""

from .config import ExperimentConfig, load_config, parse_config
from .experiment import run_ablation, run_experiment, run_sensitivity, train_run
from .graph import Graph, build_graph
from .kernels import BACKEND
from .shift import Benchmark, SbmSpec, ShiftSpec, assemble_benchmark

__version__ = "0.1.0"

__all__ = ["BACKEND", "Benchmark", "ExperimentConfig", "Graph", "SbmSpec", "ShiftSpec",
           "assemble_benchmark", "build_graph", "load_config", "parse_config", "run_ablation",
           "run_experiment", "run_sensitivity", "train_run"]
