"""Single CART trees grown greedily with penalized gains."""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .data import CLASSIFICATION, REGRESSION, Dataset
from .rng import SplitMix64
from .splitting import REGRESSION_COSTS, NodeSample, _cls_target, _reg_target, used_mask


@dataclass(frozen=True)
class GrowConfig:
    """Growth controls. ``max_depth=None`` means unlimited.

    ``regression_cost`` selects the regression node cost inside the gain:
    ``"sse"`` (total squared error) or ``"mse"`` (per-row, which makes the
    gain proportional to the usual variance reduction).
    """

    mtry: int
    min_node_size: int = 5
    max_depth: int | None = None
    depth_penalty: bool = False
    seed: int = 0
    regression_cost: str = "sse"

    def __post_init__(self):
        if self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.regression_cost not in REGRESSION_COSTS:
            raise ValueError(f"regression_cost must be one of {REGRESSION_COSTS}")

    @classmethod
    def default(cls, task: str, mtry: int, **kw) -> "GrowConfig":
        """``min_node_size`` defaults to 5 for regression and 1 for classification."""
        kw.setdefault("min_node_size", 5 if task == REGRESSION else 1)
        return cls(mtry=mtry, **kw)

    def to_dict(self) -> dict:
        return {"mtry": self.mtry, "min_node_size": self.min_node_size,
                "max_depth": self.max_depth, "depth_penalty": self.depth_penalty,
                "seed": self.seed, "regression_cost": self.regression_cost}


@dataclass(eq=False)
class Tree:
    """Flat preorder node table; leaves have ``feature == -1``.

    ``value`` is the node mean (regression) or majority class code
    (classification, ties to the lower code). ``raw_gain`` and
    ``penalized_gain`` record the committed split of internal nodes, and
    ``gain_totals`` sums raw gains per feature.
    """

    task: str
    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    depth: np.ndarray
    raw_gain: np.ndarray
    penalized_gain: np.ndarray
    gain_totals: np.ndarray = field(init=False)

    def __post_init__(self):
        totals = np.zeros(self.n_features)
        internal = self.feature >= 0
        np.add.at(totals, self.feature[internal], self.raw_gain[internal])
        self.gain_totals = totals

    @classmethod
    def from_table(cls, table: np.ndarray, task: str, n_features: int) -> "Tree":
        return cls(
            task=task, n_features=n_features,
            feature=table[:, K.F_FEATURE].astype(np.int64),
            threshold=table[:, K.F_THRESHOLD].copy(),
            left=table[:, K.F_LEFT].astype(np.int64),
            right=table[:, K.F_RIGHT].astype(np.int64),
            value=table[:, K.F_VALUE].copy(),
            count=table[:, K.F_COUNT].astype(np.int64),
            depth=table[:, K.F_DEPTH].astype(np.int64),
            raw_gain=table[:, K.F_RAW].copy(),
            penalized_gain=table[:, K.F_PEN].copy(),
        )

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def used_features(self) -> set[int]:
        return set(int(f) for f in np.unique(self.feature[self.feature >= 0]))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected rows with {self.n_features} features")
        out = K.predict_nodes(self.feature, self.threshold, self.left, self.right,
                              self.value, X)
        return out.astype(np.int64) if self.task == CLASSIFICATION else out

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by each row."""
        X = np.asarray(X, dtype=np.float64)
        return K.leaf_index(self.feature, self.threshold, self.left, self.right, X)

    # nested text form -------------------------------------------------------
    def to_dict(self) -> dict:
        def node(k: int) -> dict:
            out = {"n": int(self.count[k]), "prediction": _scalar(self.value[k], self.task)}
            if self.feature[k] >= 0:
                out.update(feature=int(self.feature[k]), threshold=float(self.threshold[k]),
                           gain=float(self.raw_gain[k]),
                           penalized_gain=float(self.penalized_gain[k]),
                           left=node(int(self.left[k])), right=node(int(self.right[k])))
            return out
        return node(0)

    @classmethod
    def from_dict(cls, root: dict, task: str, n_features: int) -> "Tree":
        rows: list[list[float]] = []

        def visit(nd: dict, depth: int) -> int:
            k = len(rows)
            rows.append([-1, 0.0, -1, -1, float(nd["prediction"]), nd["n"], depth, 0.0, 0.0])
            if "feature" in nd:
                rows[k][K.F_FEATURE] = nd["feature"]
                rows[k][K.F_THRESHOLD] = nd["threshold"]
                rows[k][K.F_RAW] = nd["gain"]
                rows[k][K.F_PEN] = nd["penalized_gain"]
                rows[k][K.F_LEFT] = visit(nd["left"], depth + 1)
                rows[k][K.F_RIGHT] = visit(nd["right"], depth + 1)
            return k

        visit(root, 1)
        return cls.from_table(np.array(rows, dtype=np.float64), task, n_features)


def _scalar(v: float, task: str):
    return int(v) if task == CLASSIFICATION else float(v)


_ORDER_CACHE: "weakref.WeakKeyDictionary[Dataset, np.ndarray]" = weakref.WeakKeyDictionary()


def presorted(d: Dataset) -> np.ndarray:
    """Per-feature stable argsort of ``d``'s rows, cached per dataset."""
    order = _ORDER_CACHE.get(d)
    if order is None:
        order = K.presort(d.X)
        _ORDER_CACHE[d] = order
    return order


def grow_tree(d: Dataset, rows: NodeSample | Sequence[int], config: GrowConfig,
              lambdas: Sequence[float] | None, used_set: set[int] | None = None,
              rng: SplitMix64 | None = None) -> Tree:
    """Grow one tree on ``rows`` of ``d`` (duplicate rows allowed).

    ``used_set`` is updated in place the moment each split is committed, so
    later nodes (and later trees sharing the set) see the feature as used.
    ``lambdas=None`` disables penalization. ``rng`` defaults to a stream
    seeded with ``config.seed`` and is advanced by the mtry draws.
    """
    if isinstance(rows, NodeSample):
        rows = rows.row_indices
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot grow a tree on zero rows")
    if config.mtry > d.p:
        raise ValueError(f"mtry={config.mtry} exceeds p={d.p}")
    penalize = lambdas is not None
    lam = np.ones(d.p) if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (d.p,):
        raise ValueError(f"expected {d.p} lambdas, got {lam.shape}")
    if used_set is None:
        used_set = set()
    if rng is None:
        rng = SplitMix64(config.seed)
    mask = used_mask(used_set, d.p)
    state = np.array([rng.state], dtype=np.uint64)
    table = K.grow(d.X, _reg_target(d), _cls_target(d), presorted(d), rows, lam, mask,
                   penalize, config.depth_penalty, config.mtry, config.min_node_size,
                   config.max_depth or 0, d.task == CLASSIFICATION,
                   max(d.n_classes, 1), config.regression_cost == "mse", state)
    rng.state = int(state[0])
    used_set.update(int(i) for i in np.flatnonzero(mask))
    return Tree.from_table(table, d.task, d.p)


def predict_tree(tree: Tree, row: Iterable[float]):
    """Prediction for a single feature row (``<=`` threshold goes left)."""
    x = np.asarray(list(row), dtype=np.float64).reshape(1, -1)
    return _scalar(tree.predict(x)[0], tree.task)
