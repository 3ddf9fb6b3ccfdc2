"""Per-feature penalty coefficients lambda_i = (1 - gamma) * lambda0 + gamma * g(x_i).

The local weight g comes from one of several sources: a constant, marginal
correlation with the target, normalized entropy, normalized mutual
information, normalized importances of a previously trained model
("boosted"), or a correlation/importance combination.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .data import CLASSIFICATION, REGRESSION, Dataset, DataError

LAMBDA_FLOOR = 1e-6

G_SOURCES = ("constant", "correlation", "entropy", "mutual-information", "boosted",
             "boosted-external", "combined", "combined-external")
CORRELATIONS = ("pearson", "spearman", "kendall")


class PenaltyError(ValueError):
    """g(x_i) cannot be computed for the given data."""


@dataclass(frozen=True)
class PenaltySpec:
    lambda0: float = 1.0
    gamma: float = 0.0
    g: str = "constant"
    correlation: str = "pearson"
    bins: int = 10
    epsilon: float = 0.5
    depth_penalty: bool = False
    guide_ntree: int = 500
    guide_mtry: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.lambda0 <= 1.0:
            raise ValueError(f"lambda0 must lie in [0, 1], got {self.lambda0}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.g not in G_SOURCES:
            raise ValueError(f"unknown g source {self.g!r}; choose from {G_SOURCES}")
        if self.correlation not in CORRELATIONS:
            raise ValueError(f"unknown correlation {self.correlation!r}")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.guide_ntree < 1:
            raise ValueError("guide_ntree must be >= 1")

    @property
    def needs_external(self) -> bool:
        return self.g in ("boosted-external", "combined-external")

    @property
    def needs_guide_forest(self) -> bool:
        return self.g in ("boosted", "combined")

    @property
    def uses_g(self) -> bool:
        return self.gamma > 0.0 and self.g != "constant"


def mixture(lambda0: float, gamma: float, g) -> np.ndarray:
    """Unclamped (1 - gamma) * lambda0 + gamma * g."""
    return (1.0 - gamma) * lambda0 + gamma * np.asarray(g, dtype=np.float64)


def compute_lambdas(spec: PenaltySpec, d: Dataset, importances: Sequence[float] | None = None,
                    seed: int = 0) -> np.ndarray:
    """Per-feature lambda vector, clamped to ``[LAMBDA_FLOOR, 1]``.

    ``importances`` feeds the boosted/combined sources; it is required for
    the ``*-external`` sources and, for ``boosted``/``combined``, replaces the
    guide forest that would otherwise be trained here with ``seed``.
    """
    if spec.needs_external and importances is None:
        raise PenaltyError(f"g source {spec.g!r} needs an importance vector")
    if spec.gamma == 0.0:
        g = np.zeros(d.p)  # g is irrelevant; skip computing it
    else:
        g = g_values(spec, d, importances, seed)
    return lambdas_from_g(spec, g)


def lambdas_from_g(spec: PenaltySpec, g) -> np.ndarray:
    """Clamped mixture for an already computed g vector."""
    return np.clip(mixture(spec.lambda0, spec.gamma, g), LAMBDA_FLOOR, 1.0)


def g_values(spec: PenaltySpec, d: Dataset, importances=None, seed: int = 0) -> np.ndarray:
    if spec.g == "constant":
        return np.ones(d.p)
    if spec.g == "correlation":
        return g_correlation(d, spec.correlation)
    if spec.g == "entropy":
        return g_entropy(d, spec.bins)
    if spec.g == "mutual-information":
        return g_mutual_information(d, spec.bins)
    if importances is None:
        importances = guide_importances(d, spec, seed)
    if spec.g in ("boosted", "boosted-external"):
        return g_boosted(importances)
    return g_combined(d, spec.epsilon, importances, spec.correlation)


def guide_importances(d: Dataset, spec: PenaltySpec, seed: int) -> np.ndarray:
    """Importances of a standard forest (default mtry = floor(sqrt(p)))."""
    from .ensemble import ForestConfig, forest_importance, train_forest
    from .tree import GrowConfig

    mtry = spec.guide_mtry or max(1, int(math.sqrt(d.p)))
    config = ForestConfig(ntree=spec.guide_ntree,
                          grow=GrowConfig.default(d.task, mtry=min(mtry, d.p)),
                          bootstrap=True, master_seed=seed)
    return forest_importance(train_forest(d, config, None))


# ---------------------------------------------------------------- correlation

def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.dot(xc, yc) / math.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))


def g_correlation(d: Dataset, kind: str = "pearson") -> np.ndarray:
    """|corr(y, x_i)| for every feature."""
    if d.task != REGRESSION:
        raise PenaltyError("correlation weights need a regression target")
    if kind not in CORRELATIONS:
        raise PenaltyError(f"unknown correlation {kind!r}")
    if np.ptp(d.y) == 0:
        raise PenaltyError("target has zero variance")
    constant = [d.feature_names[i] for i in range(d.p) if np.ptp(d.X[:, i]) == 0]
    if constant:
        raise PenaltyError(f"correlation undefined for zero-variance features: {constant}")
    y = d.y
    if kind == "spearman":
        y = stats.rankdata(y)
    out = np.empty(d.p)
    for i in range(d.p):
        x = d.X[:, i]
        if kind == "pearson":
            r = _pearson(x, y)
        elif kind == "spearman":
            r = _pearson(stats.rankdata(x), y)
        else:
            r = stats.kendalltau(x, d.y).statistic
        out[i] = abs(r)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------- entropy & mutual info

def discretize(x: np.ndarray, bins: int = 10) -> np.ndarray:
    """Integer states of a feature.

    A feature with at most ``bins`` distinct values keeps them as states;
    otherwise it is cut at the empirical ``k/bins`` quantiles (equal frequency,
    tied values always share a bin).
    """
    x = np.asarray(x, dtype=np.float64)
    uniq, codes = np.unique(x, return_inverse=True)
    if uniq.size <= bins:
        return codes.astype(np.int64)
    edges = np.quantile(x, np.arange(1, bins) / bins)
    return np.searchsorted(edges, x, side="right").astype(np.int64)


def entropy(codes: np.ndarray) -> float:
    """Plug-in Shannon entropy in bits."""
    _, counts = np.unique(codes, return_counts=True)
    prob = counts / counts.sum()
    return float(-np.sum(prob * np.log2(prob)))


def contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def mutual_information_table(table) -> float:
    """Plug-in mutual information (bits) of a contingency table of counts."""
    table = np.asarray(table, dtype=np.float64)
    joint = table / table.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (px * py)[nz])))


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    return mutual_information_table(contingency(a, b))


def g_entropy(d: Dataset, bins: int = 10) -> np.ndarray:
    """1 - H(x_i) / max_j H(x_j): low-entropy features get weights near 1."""
    h = np.array([entropy(discretize(d.X[:, i], bins)) for i in range(d.p)])
    top = h.max()
    if top <= 0.0:
        raise PenaltyError("every feature is constant; entropy weights undefined")
    return np.clip(1.0 - h / top, 0.0, 1.0)


def target_codes(d: Dataset, bins: int = 10) -> np.ndarray:
    return d.y if d.task == CLASSIFICATION else discretize(d.y, bins)


def g_mutual_information(d: Dataset, bins: int = 10) -> np.ndarray:
    """MutInf(x_i, y) / max_j MutInf(x_j, y)."""
    y = target_codes(d, bins)
    mi = np.array([mutual_information(discretize(d.X[:, i], bins), y) for i in range(d.p)])
    mi = np.maximum(mi, 0.0)
    top = mi.max()
    if top <= 0.0:
        raise PenaltyError("no feature shares information with the target")
    return np.clip(mi / top, 0.0, 1.0)


# ------------------------------------------------------ boosted & combined

def g_boosted(importances: Sequence[float]) -> np.ndarray:
    """Importances scaled by their maximum."""
    imp = np.asarray(importances, dtype=np.float64)
    if imp.ndim != 1 or imp.size == 0:
        raise PenaltyError("importances must be a non-empty vector")
    if not np.all(np.isfinite(imp)):
        raise PenaltyError("importances must be finite")
    if np.any(imp < 0):
        bad = np.flatnonzero(imp < 0).tolist()
        raise PenaltyError(f"negative importances at features {bad}")
    top = imp.max()
    if top <= 0.0:
        raise PenaltyError("all importances are zero")
    return imp / top


def g_combined(d: Dataset, epsilon: float, fallback: Sequence[float],
               kind: str = "pearson") -> np.ndarray:
    """|corr| where it exceeds ``epsilon``, normalized fallback importance elsewhere."""
    corr = g_correlation(d, kind)
    boosted = g_boosted(fallback)
    if boosted.shape != corr.shape:
        raise PenaltyError(f"expected {d.p} importances, got {boosted.size}")
    return np.where(corr > epsilon, corr, boosted)


def load_importances(path: str | Path, feature_names: Sequence[str]) -> np.ndarray:
    """Read a ``feature,importance`` CSV covering every feature exactly once."""
    path = Path(path)
    index = {name: i for i, name in enumerate(feature_names)}
    out = np.full(len(feature_names), np.nan)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["feature", "importance"]:
            raise DataError(f"{path}: header must be 'feature,importance'")
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise DataError(f"{path}: row {line}: expected 2 cells")
            name, value = rec
            if name not in index:
                raise DataError(f"{path}: row {line}: unknown feature {name!r}")
            if not np.isnan(out[index[name]]):
                raise DataError(f"{path}: row {line}: feature {name!r} listed twice")
            try:
                v = float(value)
            except ValueError:
                raise DataError(f"{path}: row {line}: non-numeric importance {value!r}") from None
            if not math.isfinite(v) or v < 0:
                raise DataError(f"{path}: row {line}: importance must be finite and >= 0")
            out[index[name]] = v
    missing = [feature_names[i] for i in np.flatnonzero(np.isnan(out))]
    if missing:
        raise DataError(f"{path}: missing importances for {missing}")
    return out
