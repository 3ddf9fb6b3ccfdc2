"""Node cost, split gain, gain penalization and best-split search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .data import CLASSIFICATION, REGRESSION, Dataset

REGRESSION_COSTS = ("sse", "mse")


@dataclass(frozen=True)
class NodeSample:
    """Rows reaching a node; the root has depth 1."""

    row_indices: tuple[int, ...]
    depth: int = 1

    def __post_init__(self):
        rows = tuple(int(r) for r in self.row_indices)
        if not rows:
            raise ValueError("a node must contain at least one row")
        if len(set(rows)) != len(rows):
            raise ValueError("node row indices must be unique")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        object.__setattr__(self, "row_indices", rows)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    raw_gain: float
    penalized_gain: float


def node_cost(targets: Sequence, task: str, regression_cost: str = "sse") -> float:
    """Total squared deviation (regression) or majority-vote error rate.

    ``regression_cost="mse"`` divides the squared deviation by the node size.
    """
    values = np.asarray(targets)
    m = values.shape[0]
    if m == 0:
        raise ValueError("cost of an empty node is undefined")
    if task == REGRESSION:
        sse = float(_kernels.node_cost_reg(values.astype(np.float64)))
        if regression_cost == "mse":
            return sse / m
        if regression_cost != "sse":
            raise ValueError(f"unknown regression cost {regression_cost!r}")
        return sse
    if task == CLASSIFICATION:
        _, counts = np.unique(values, return_counts=True)
        return (m - int(counts.max())) / m
    raise ValueError(f"unknown task {task!r}")


def split_gain(node: NodeSample, feature: int, threshold: float, d: Dataset,
               regression_cost: str = "sse") -> float:
    """Cost reduction of splitting ``node`` at ``x[feature] <= threshold``.

    Children costs are weighted by their share of the node, exactly as
    cost(D) - (|L|/|D| cost(L) + |R|/|D| cost(R)).
    """
    rows = np.asarray(node.row_indices)
    goes_left = d.X[rows, feature] <= threshold
    n_left = int(goes_left.sum())
    m = rows.shape[0]
    if n_left == 0 or n_left == m:
        raise ValueError(f"threshold {threshold} leaves a child empty")
    y = d.y[rows]
    n_right = m - n_left
    def cost(v):
        return node_cost(v, d.task, regression_cost)

    return cost(y) - (n_left / m * cost(y[goes_left]) + n_right / m * cost(y[~goes_left]))


def penalized_gain(raw_gain: float, lambda_i: float, in_used_set: bool,
                   depth: int = 1, depth_penalty: bool = False) -> float:
    if in_used_set:
        return raw_gain
    if depth_penalty:
        if depth < 1:
            raise ValueError("depth must be >= 1 with the depth penalty")
        return raw_gain * lambda_i ** depth
    return raw_gain * lambda_i


def used_mask(used_set: Iterable[int], p: int) -> np.ndarray:
    mask = np.zeros(p, dtype=np.uint8)
    for i in used_set:
        mask[i] = 1
    return mask


def best_split(node: NodeSample, candidate_features: Iterable[int], d: Dataset,
               lambdas: Sequence[float] | None = None, used_set: Iterable[int] = (),
               depth_penalty: bool = False,
               regression_cost: str = "sse") -> SplitCandidate | None:
    """Exhaustive search over candidate features and midpoint thresholds.

    Returns ``None`` when no admissible split has a positive penalized gain.
    ``lambdas=None`` disables penalization.
    """
    candidates = np.array(sorted(set(int(f) for f in candidate_features)), dtype=np.int64)
    if regression_cost not in REGRESSION_COSTS:
        raise ValueError(f"unknown regression cost {regression_cost!r}")
    if candidates.size == 0:
        raise ValueError("candidate_features must not be empty")
    if candidates[0] < 0 or candidates[-1] >= d.p:
        raise ValueError("candidate feature index out of range")
    penalize = lambdas is not None
    lam = np.ones(d.p) if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (d.p,):
        raise ValueError(f"expected {d.p} lambdas, got {lam.shape}")
    rows = np.asarray(node.row_indices, dtype=np.int64)
    f, t, raw, pen = _kernels.search_node(
        d.X, _reg_target(d), _cls_target(d), rows, candidates, lam,
        used_mask(used_set, d.p), penalize, depth_penalty, node.depth,
        d.task == CLASSIFICATION, max(d.n_classes, 1), regression_cost == "mse")
    if f < 0:
        return None
    return SplitCandidate(int(f), float(t), float(raw), float(pen))


_EMPTY_F = np.zeros(1, dtype=np.float64)
_EMPTY_I = np.zeros(1, dtype=np.int64)


def _reg_target(d: Dataset) -> np.ndarray:
    return d.y if d.task == REGRESSION else _EMPTY_F


def _cls_target(d: Dataset) -> np.ndarray:
    return d.y if d.task == CLASSIFICATION else _EMPTY_I
