"""Convolution-matching graph coarsening with a linear SGC evaluation harness."""

from ._validation import InputError
from .candidates import MergeGraph, build_merge_graph
from .coarsener import ConvMatch, Hierarchy, coarsen
from .config import RunConfig
from .costs import approx_cost, brute_force_cost, exact_cost, init_cache, objective_value
from .evaluation import EvalReport, SgcModel, TrainConfig, infer_nc, train_eval_lp, train_sgc_nc
from .graph import (
    CoarseGraph,
    Graph,
    Partition,
    build_coarse,
    normalized_propagate,
    sgc_embed,
)

__all__ = [
    "CoarseGraph",
    "ConvMatch",
    "EvalReport",
    "Graph",
    "Hierarchy",
    "InputError",
    "MergeGraph",
    "Partition",
    "RunConfig",
    "SgcModel",
    "TrainConfig",
    "approx_cost",
    "brute_force_cost",
    "build_coarse",
    "build_merge_graph",
    "coarsen",
    "exact_cost",
    "infer_nc",
    "init_cache",
    "normalized_propagate",
    "objective_value",
    "sgc_embed",
    "train_eval_lp",
    "train_sgc_nc",
]

__version__ = "0.1.0"
