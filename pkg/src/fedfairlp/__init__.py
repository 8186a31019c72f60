"""Federated post-processing for local and global group fairness."""

from .clientstats import ClientStats, DpConfig, apply_laplace, compute_client_stats
from .core import ClientGroupDataset, DataError, FairnessSpec, Metric, RngStream, SpecError
from .fairpredict import FairPredictor, MixWeights, SpRandomization, expected_operating_point, solve_lae
from .fedsim import ProtocolConfig, ProtocolRun, run_protocol
from .lpbuild import AggregatedParams, LpInstance, aggregate, build_lp, build_lp_eo, build_lp_eop, build_lp_sp
from .lpsolve import LpSolution, SolverConfig, solve
from .scorefn import FedAvgConfig, SyntheticSpec, generate_synthetic, train_fedavg_softmax

__version__ = "0.1.0"

__all__ = [
    "AggregatedParams",
    "ClientGroupDataset",
    "ClientStats",
    "DataError",
    "DpConfig",
    "FairPredictor",
    "FairnessSpec",
    "FedAvgConfig",
    "LpInstance",
    "LpSolution",
    "Metric",
    "MixWeights",
    "ProtocolConfig",
    "ProtocolRun",
    "RngStream",
    "SolverConfig",
    "SpRandomization",
    "SpecError",
    "SyntheticSpec",
    "aggregate",
    "apply_laplace",
    "build_lp",
    "build_lp_eo",
    "build_lp_eop",
    "build_lp_sp",
    "compute_client_stats",
    "expected_operating_point",
    "generate_synthetic",
    "run_protocol",
    "solve",
    "solve_lae",
    "train_fedavg_softmax",
]
