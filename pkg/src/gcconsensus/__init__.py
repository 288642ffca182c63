"""Guaranteed-cost consensus for Lipschitz nonlinear multi-agent systems under switching topologies."""

from .errors import ConsensusError
from .graph import TopologySet, WeightedGraph, laplacian, set_bounds, spectrum
from .mincost import LmiProblem, MinCostResult, barrier_solve, min_guaranteed_cost
from .model import AgentModel, NonlinearitySpec, check_stabilizable, validate_lipschitz
from .sim import SwitchingSignal, Trajectory, convergence_report, generate_signal, integrate
from .synthesis import (
    CostWeights,
    SynthesisResult,
    build_riccati,
    guaranteed_cost,
    solve_care,
    synthesize,
    theorem3_check,
)

__version__ = "0.1.0"
