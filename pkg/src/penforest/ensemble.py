"""Bagged / random-forest ensembles sharing one used-feature memory."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .data import CLASSIFICATION, Dataset
from .rng import SplitMix64, derive
from .tree import GrowConfig, Tree, grow_tree

log = logging.getLogger(__name__)

MODEL_FORMAT = "penforest-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    """``ntree`` trees; tree ``t`` draws from the sub-stream ``derive(master_seed, t)``."""

    ntree: int
    grow: GrowConfig
    bootstrap: bool = True
    master_seed: int = 0

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")

    def to_dict(self) -> dict:
        return {"ntree": self.ntree, "bootstrap": self.bootstrap,
                "master_seed": self.master_seed, "grow": self.grow.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(ntree=d["ntree"], grow=GrowConfig(**d["grow"]),
                   bootstrap=d["bootstrap"], master_seed=d["master_seed"])


@dataclass(eq=False)
class Forest:
    trees: list[Tree]
    lambdas: np.ndarray
    final_used_set: frozenset[int]
    config: ForestConfig
    task: str
    feature_names: tuple[str, ...]
    classes: tuple[str, ...] = ()
    # used set seen by each tree when its growth started; not serialized
    used_at_start: list[frozenset[int]] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _tree_rows(n: int, bootstrap: bool, rng: SplitMix64) -> np.ndarray:
    if not bootstrap:
        return np.arange(n, dtype=np.int64)
    state = np.array([rng.state], dtype=np.uint64)
    rows = K.bootstrap_rows(state, n)
    rng.state = int(state[0])
    return rows


def penalization_inert(lambdas) -> bool:
    """True when every lambda is 1, so split choices never depend on the used set."""
    return lambdas is None or bool(np.all(np.asarray(lambdas) == 1.0))


def train_forest(train: Dataset, config: ForestConfig, lambdas: Sequence[float] | None,
                 n_jobs: int = 1) -> Forest:
    """Grow ``config.ntree`` trees in index order with a shared used-feature set.

    ``lambdas=None`` turns penalization off. When penalization is inert the
    trees are independent and may be grown on ``n_jobs`` threads; the result
    is identical to sequential growth.
    """
    if train.n < 1:
        raise ValueError("empty training data")
    if config.grow.mtry > train.p:
        raise ValueError(f"mtry={config.grow.mtry} exceeds p={train.p}")
    lam = np.ones(train.p) if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (train.p,):
        raise ValueError(f"expected {train.p} lambdas, got {lam.shape}")

    def one_tree(t: int, used: set[int]) -> Tree:
        rng = SplitMix64(derive(config.master_seed, t))
        rows = _tree_rows(train.n, config.bootstrap, rng)
        return grow_tree(train, rows, config.grow, lambdas, used, rng)

    if penalization_inert(lambdas) and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda t: one_tree(t, set()), range(config.ntree)))
        used: set[int] = set()
        starts = []
        for tree in trees:
            starts.append(frozenset(used))
            used |= tree.used_features()
    else:
        used = set()
        trees, starts = [], []
        for t in range(config.ntree):
            starts.append(frozenset(used))
            trees.append(one_tree(t, used))
            log.debug("tree %d: %d nodes, used set size %d", t, trees[-1].n_nodes, len(used))
    return Forest(trees, lam, frozenset(used), config, train.task, train.feature_names,
                  train.classes, starts)


def predict_forest(f: Forest, rows: np.ndarray) -> np.ndarray:
    """Mean of tree predictions, or majority vote with ties to the lower code."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != f.n_features:
        raise ValueError(f"expected {f.n_features} feature columns, got {X.shape[1]}")
    preds = np.stack([t.predict(X) for t in f.trees])
    if f.task == CLASSIFICATION:
        k = len(f.classes)
        votes = np.zeros((X.shape[0], k), dtype=np.int64)
        for row in preds:
            votes[np.arange(X.shape[0]), row] += 1
        return np.argmax(votes, axis=1).astype(np.int64)
    total = np.zeros(X.shape[0])
    for row in preds:
        total += row
    return total / len(f.trees)


def forest_importance(f: Forest) -> np.ndarray:
    """Per-feature mean over trees of accumulated raw gain (exactly rounded sums)."""
    gains = np.stack([t.gain_totals for t in f.trees])
    return np.array([math.fsum(gains[:, i]) for i in range(gains.shape[1])]) / len(f.trees)


def selected_features(f: Forest) -> set[int]:
    return set(int(i) for i in np.flatnonzero(forest_importance(f) > 0))


# ------------------------------------------------------------- model files

def forest_to_dict(f: Forest) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "task": f.task,
        "feature_names": list(f.feature_names),
        "classes": list(f.classes),
        "config": f.config.to_dict(),
        "lambdas": [float(v) for v in f.lambdas],
        "final_used_set": sorted(f.final_used_set),
        "trees": [t.to_dict() for t in f.trees],
    }


def forest_from_dict(doc: dict) -> Forest:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a penforest model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    p = len(doc["feature_names"])
    trees = [Tree.from_dict(t, doc["task"], p) for t in doc["trees"]]
    return Forest(trees, np.array(doc["lambdas"], dtype=np.float64),
                  frozenset(doc["final_used_set"]), ForestConfig.from_dict(doc["config"]),
                  doc["task"], tuple(doc["feature_names"]), tuple(doc["classes"]))


def dumps_forest(f: Forest) -> str:
    return json.dumps(forest_to_dict(f), separators=(",", ":")) + "\n"


def save_forest(f: Forest, path: str | Path) -> None:
    Path(path).write_text(dumps_forest(f), encoding="utf-8")


def load_forest(path: str | Path) -> Forest:
    return forest_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
