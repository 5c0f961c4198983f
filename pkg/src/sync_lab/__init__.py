"""Frustrated Kuramoto oscillators on digraphs: simulation and verification."""

from .combo import coefficients, q_quantity, q_trace, sine_chain_check
from .dynamics import SolverConfig, SystemParams, Trajectory, integrate
from .framework import admissible_region, derive_params, verify_theorem
from .graph import Digraph, node_decomposition
from .harness import Scenario, SweepSpec, run_scenario, run_sweep

__version__ = "0.1.0"

__all__ = [
    "Digraph", "node_decomposition",
    "SolverConfig", "SystemParams", "Trajectory", "integrate",
    "coefficients", "q_quantity", "q_trace", "sine_chain_check",
    "admissible_region", "derive_params", "verify_theorem",
    "Scenario", "SweepSpec", "run_scenario", "run_sweep",
]
