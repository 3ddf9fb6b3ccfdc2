"""Tree ensembles with generalized gain penalization for embedded feature selection."""

__version__ = "0.1.0"

from .data import Dataset, SplitPlan, load_csv, split_train_test, standardize_target, write_csv
from .ensemble import (Forest, ForestConfig, forest_importance, load_forest, predict_forest,
                       save_forest, selected_features, train_forest)
from .penalty import PenaltySpec, compute_lambdas
from .simulation import GroundTruth, SimSpec, simulate
from .splitting import NodeSample, SplitCandidate, best_split, node_cost, penalized_gain, split_gain
from .tree import GrowConfig, Tree, grow_tree, predict_tree

__all__ = [
    "Dataset", "SplitPlan", "load_csv", "write_csv", "split_train_test", "standardize_target",
    "Forest", "ForestConfig", "train_forest", "predict_forest", "forest_importance",
    "selected_features", "save_forest", "load_forest", "PenaltySpec", "compute_lambdas",
    "GroundTruth", "SimSpec", "simulate", "NodeSample", "SplitCandidate", "best_split",
    "node_cost", "penalized_gain", "split_gain", "GrowConfig", "Tree", "grow_tree",
    "predict_tree",
]
