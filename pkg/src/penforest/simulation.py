"""Synthetic regression benchmark with decaying signals and a correlated block.

Columns ``x1..x250`` (column index = feature number - 1)::

    x1..x205      iid Uniform[0, 1]
    x206..x250    clamp(x5 + eta, 0, 1), eta ~ N(0, correlated_noise_sd^2)

    y = 0.8 sin(x1 x2) + 2 (x3 - 0.5)^2 + x4 + 0.7 x5
        + sum_{j=1}^{200} 0.9^(j/3) x_{j+5}
        + sum_{j=1}^{45}  0.9^j  z_j
        + eps,  eps ~ N(0, noise_sd^2)

where ``z_j = x5`` (default, ``correlated_term="x5"``) or
``z_j = x_{205+j}`` (``correlated_term="block"``).

Draw order from ``SplitMix64(seed)``: the ``n * 205`` uniforms row-major,
then the ``n * 45`` block deviates row-major, then the ``n`` noise deviates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import REGRESSION, Dataset
from .rng import SplitMix64

N_UNIFORM = 205
N_DECAY = 200
N_CORRELATED = 45
P = N_UNIFORM + N_CORRELATED
IMPORTANCE_CUTOFF = 0.01


@dataclass(frozen=True)
class SimSpec:
    n: int = 1000
    seed: int = 0
    noise_sd: float = 1.0
    correlated_noise_sd: float = 0.3
    correlated_term: str = "x5"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.noise_sd < 0 or self.correlated_noise_sd < 0:
            raise ValueError("standard deviations must be >= 0")
        if self.correlated_term not in ("x5", "block"):
            raise ValueError("correlated_term must be 'x5' or 'block'")


@dataclass(frozen=True)
class GroundTruth:
    """Zero-based column indices of the informative and the correlated features."""

    important_set: frozenset[int]
    correlated_set: frozenset[int]

    def to_dict(self) -> dict:
        return {"important_set": sorted(self.important_set),
                "correlated_set": sorted(self.correlated_set),
                "feature_names": {"important": [f"x{i + 1}" for i in sorted(self.important_set)],
                                  "correlated": [f"x{i + 1}" for i in sorted(self.correlated_set)]}}

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundTruth":
        return cls(frozenset(doc["important_set"]), frozenset(doc["correlated_set"]))


def important_set() -> frozenset[int]:
    """x1..x5 plus every decaying feature whose weight 0.9^(j/3) exceeds 0.01."""
    decaying = {j + 4 for j in range(1, N_DECAY + 1) if 0.9 ** (j / 3) > IMPORTANCE_CUTOFF}
    return frozenset(range(5)) | frozenset(decaying)


def correlated_set() -> frozenset[int]:
    return frozenset(range(N_UNIFORM, P))


def ground_truth() -> GroundTruth:
    return GroundTruth(important_set(), correlated_set())


def feature_names() -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(P))


def response(X: np.ndarray, correlated_term: str = "x5") -> np.ndarray:
    """Noise-free target for an ``n x 250`` feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    decay = 0.9 ** (np.arange(1, N_DECAY + 1) / 3)
    block = 0.9 ** np.arange(1, N_CORRELATED + 1)
    y = (0.8 * np.sin(X[:, 0] * X[:, 1]) + 2.0 * (X[:, 2] - 0.5) ** 2 + X[:, 3]
         + 0.7 * X[:, 4] + X[:, 5:N_UNIFORM] @ decay)
    if correlated_term == "x5":
        y = y + block.sum() * X[:, 4]
    else:
        y = y + X[:, N_UNIFORM:P] @ block
    return y


def simulate(spec: SimSpec) -> tuple[Dataset, GroundTruth]:
    rng = SplitMix64(spec.seed)
    n = spec.n
    X = np.empty((n, P))
    X[:, :N_UNIFORM] = rng.random_array(n * N_UNIFORM).reshape(n, N_UNIFORM)
    eta = rng.normal_array(n * N_CORRELATED).reshape(n, N_CORRELATED)
    X[:, N_UNIFORM:] = np.clip(X[:, [4]] + spec.correlated_noise_sd * eta, 0.0, 1.0)
    eps = rng.normal_array(n)
    y = response(X, spec.correlated_term) + spec.noise_sd * eps
    return Dataset(feature_names(), X, y, REGRESSION, (), "y"), ground_truth()


def write_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    Path(path).write_text(json.dumps(truth.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_ground_truth(path: str | Path) -> GroundTruth:
    return GroundTruth.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

