"""Metrics, grid sweeps and the select-then-refit protocol.

Seeds. Replicate ``r`` of a grid draws everything from ``derive(r, k)``::

    k = 0  simulated dataset        k = 2  forest of every cell
    k = 1  train/test split         k = 3  guide forest (boosted / combined g)

Resample ``r`` of a refit run with base seed ``s`` uses ``derive(s, r, k)`` with
the same ``k`` plus ``k = 4`` for the stage-two forest. Every cell of a
replicate therefore sees the same data and the same tree streams, and results
do not depend on the order in which cells are evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .data import CLASSIFICATION, REGRESSION, TASKS, Dataset, load_csv, split_train_test, standardize_target
from .ensemble import ForestConfig, predict_forest, selected_features, train_forest
from .penalty import (CORRELATIONS, PenaltySpec, compute_lambdas, g_values,
                      guide_importances, lambdas_from_g, load_importances)
from .rng import derive
from .simulation import P as SIM_P
from .simulation import GroundTruth, SimSpec, read_ground_truth, simulate
from .splitting import REGRESSION_COSTS
from .tree import GrowConfig

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("replicate", "mtry", "lambda0", "gamma", "g", "metric_name", "metric",
                  "n_selected", "pct_important", "pct_correlated", "selected_features")
REFIT_COLUMNS = RESULT_COLUMNS + ("pct_features", "empty_selection")
MANIFEST_FORMAT = "penforest-grid"

SEED_DATA, SEED_SPLIT, SEED_FOREST, SEED_GUIDE, SEED_REFIT = range(5)


class ExperimentError(ValueError):
    """Invalid grid/refit configuration or unusable results file."""


# ------------------------------------------------------------------ metrics

def _paired(predictions, truth) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(predictions)
    b = np.asarray(truth)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("metrics need at least one prediction")
    return a, b


def rmse(predictions, truth) -> float:
    a, b = _paired(predictions, truth)
    diff = a.astype(np.float64) - b.astype(np.float64)
    return math.sqrt(float(np.mean(diff * diff)))


def misclassification_rate(predictions, truth) -> float:
    a, b = _paired(predictions, truth)
    return float(np.mean(a != b))


def table2_metrics(selected: Iterable[int], truth: GroundTruth) -> tuple[float, float]:
    """``(pct_important, pct_correlated)`` of a selected feature set.

    Important features are counted among the selected non-correlated ones;
    correlated ones as a share of the whole correlated block. 0/0 is 0.
    """
    sel = set(int(i) for i in selected)
    n_corr = len(sel & truth.correlated_set)
    n_imp = len(sel & truth.important_set)
    rest = len(sel) - n_corr
    pct_important = n_imp / rest if rest else 0.0
    pct_correlated = n_corr / len(truth.correlated_set) if truth.correlated_set else 0.0
    return pct_important, pct_correlated


def metric_for(task: str) -> tuple[str, Callable]:
    if task == REGRESSION:
        return "rmse", rmse
    return "misclassification_rate", misclassification_rate


# ------------------------------------------------------------------ records

@dataclass(frozen=True)
class ExperimentRecord:
    replicate: int
    mtry: int
    lambda0: float
    gamma: float
    g: str
    metric_name: str
    metric: float
    n_selected: int
    pct_important: float | None
    pct_correlated: float | None
    selected_features: tuple[int, ...]
    pct_features: float | None = None
    empty_selection: bool = False

    def __post_init__(self):
        if not self.metric >= 0:
            raise ValueError("metric must be >= 0")
        if self.n_selected != len(self.selected_features):
            raise ValueError("n_selected must equal the size of selected_features")
        for v in (self.pct_important, self.pct_correlated, self.pct_features):
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError("percentages must lie in [0, 1]")

    def row(self, columns: Sequence[str] = RESULT_COLUMNS) -> list[str]:
        cells = {
            "replicate": str(self.replicate), "mtry": str(self.mtry),
            "lambda0": repr(float(self.lambda0)), "gamma": repr(float(self.gamma)),
            "g": self.g, "metric_name": self.metric_name, "metric": repr(float(self.metric)),
            "n_selected": str(self.n_selected),
            "pct_important": _opt(self.pct_important),
            "pct_correlated": _opt(self.pct_correlated),
            "selected_features": ";".join(str(i) for i in self.selected_features),
            "pct_features": _opt(self.pct_features),
            "empty_selection": "1" if self.empty_selection else "0",
        }
        return [cells[c] for c in columns]

    @classmethod
    def from_row(cls, row: dict) -> "ExperimentRecord":
        sel = tuple(int(v) for v in row["selected_features"].split(";") if v)
        return cls(int(row["replicate"]), int(row["mtry"]), float(row["lambda0"]),
                   float(row["gamma"]), row["g"], row["metric_name"], float(row["metric"]),
                   int(row["n_selected"]), _unopt(row["pct_important"]),
                   _unopt(row["pct_correlated"]), sel,
                   _unopt(row.get("pct_features", "")), row.get("empty_selection") == "1")


def _opt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _unopt(s: str | None) -> float | None:
    return float(s) if s else None


def format_rows(records: Iterable[ExperimentRecord], columns=RESULT_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow(r.row(columns))
    return buf.getvalue()


def write_records(records: Iterable[ExperimentRecord], path: str | Path,
                  columns=RESULT_COLUMNS) -> None:
    Path(path).write_text(format_rows(records, columns), encoding="utf-8")


def read_records(path: str | Path) -> list[ExperimentRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [ExperimentRecord.from_row(r) for r in csv.DictReader(fh)]


def _record(replicate: int, mtry: int, spec: PenaltySpec, task: str, metric: float,
            selected: Sequence[int], truth: GroundTruth | None, p: int | None = None,
            empty: bool = False) -> ExperimentRecord:
    sel = tuple(sorted(int(i) for i in selected))
    imp, corr = table2_metrics(sel, truth) if truth is not None else (None, None)
    return ExperimentRecord(replicate, mtry, spec.lambda0, spec.gamma, spec.g,
                            metric_for(task)[0], metric, len(sel), imp, corr, sel,
                            None if p is None else len(sel) / p, empty)


# ------------------------------------------------------------------ grids

@dataclass(frozen=True)
class GridConfig:
    """One record per replicate x mtry x g x lambda0 x gamma, in that nesting order.

    Data are simulated (``simulation`` holds :class:`SimSpec` overrides) unless
    ``data`` names a CSV file. ``truth`` may point at a ground-truth sidecar
    for loaded data.
    """

    replicates: tuple[int, ...] = (0,)
    mtry: tuple[int, ...] = (15,)
    lambda0: tuple[float, ...] = (1.0,)
    gamma: tuple[float, ...] = (0.0,)
    g: tuple[str, ...] = ("constant",)
    ntree: int = 100
    bootstrap: bool = True
    min_node_size: int | None = None
    max_depth: int | None = None
    depth_penalty: bool = False
    regression_cost: str = "sse"
    correlation: str = "pearson"
    bins: int = 10
    epsilon: float = 0.5
    guide_ntree: int = 500
    guide_mtry: int | None = None
    train_fraction: float = 0.8
    standardize: bool = True
    simulation: dict = field(default_factory=dict)
    data: str | None = None
    target: str = "y"
    task: str = REGRESSION
    truth: str | None = None
    importance_file: str | None = None

    _LISTS = ("replicates", "mtry", "lambda0", "gamma", "g")

    def __post_init__(self):
        for name in self._LISTS:
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
            if not getattr(self, name):
                raise ExperimentError(f"grid list {name!r} is empty")
        if any(m < 1 for m in self.mtry):
            raise ExperimentError("mtry values must be >= 1")
        if self.ntree < 1:
            raise ExperimentError("ntree must be >= 1")
        if self.task not in TASKS:
            raise ExperimentError(f"unknown task {self.task!r}")
        if self.regression_cost not in REGRESSION_COSTS:
            raise ExperimentError(f"regression_cost must be one of {REGRESSION_COSTS}")
        if self.correlation not in CORRELATIONS:
            raise ExperimentError(f"unknown correlation {self.correlation!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ExperimentError("train_fraction must lie in (0, 1)")
        if self.data is None and self.task != REGRESSION:
            raise ExperimentError("simulated data are regression only")
        if any(g in ("boosted-external", "combined-external") for g in self.g) \
                and self.importance_file is None:
            raise ExperimentError("external g sources need importance_file")
        try:
            self.sim_spec(0)
            GrowConfig(mtry=1, min_node_size=self.min_node_size or 1, max_depth=self.max_depth)
            self.penalty_specs()
        except (TypeError, ValueError) as exc:
            raise ExperimentError(str(exc)) from None

    @classmethod
    def from_dict(cls, doc: dict) -> "GridConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ExperimentError(f"unknown grid keys: {unknown}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "GridConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ExperimentError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ExperimentError(f"{path}: expected a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = asdict(self)
        for name in self._LISTS:
            out[name] = list(out[name])
        return out

    def sim_spec(self, replicate: int) -> SimSpec:
        allowed = {"n", "noise_sd", "correlated_noise_sd", "correlated_term"}
        unknown = sorted(set(self.simulation) - allowed)
        if unknown:
            raise ExperimentError(f"unknown simulation keys: {unknown}")
        return SimSpec(seed=derive(replicate, SEED_DATA), **self.simulation)

    def penalty(self, lambda0: float, gamma: float, g: str) -> PenaltySpec:
        return PenaltySpec(lambda0=lambda0, gamma=gamma, g=g, correlation=self.correlation,
                           bins=self.bins, epsilon=self.epsilon,
                           depth_penalty=self.depth_penalty, guide_ntree=self.guide_ntree,
                           guide_mtry=self.guide_mtry)

    def penalty_specs(self) -> list[PenaltySpec]:
        return [self.penalty(l0, gm, g) for g in self.g for l0 in self.lambda0
                for gm in self.gamma]

    def cells(self) -> list[tuple[int, int, str, float, float]]:
        """Canonical cell order: replicate, mtry, g, lambda0, gamma."""
        return [(r, m, g, l0, gm) for r in self.replicates for m in self.mtry
                for g in self.g for l0 in self.lambda0 for gm in self.gamma]

    def grow_config(self, task: str, mtry: int) -> GrowConfig:
        kw = dict(max_depth=self.max_depth, depth_penalty=self.depth_penalty,
                  regression_cost=self.regression_cost)
        if self.min_node_size is not None:
            kw["min_node_size"] = self.min_node_size
        return GrowConfig.default(task, mtry, **kw)


@dataclass
class _Replicate:
    replicate: int
    train: Dataset
    test: Dataset
    truth: GroundTruth | None
    g: dict[str, np.ndarray]


def load_grid_data(grid: GridConfig) -> tuple[Dataset | None, GroundTruth | None]:
    """Loaded dataset and truth (``None`` for simulated grids)."""
    if grid.data is None:
        return None, None
    d = load_csv(grid.data, grid.target, grid.task)
    truth = read_ground_truth(grid.truth) if grid.truth else None
    return d, truth


def validate_grid(grid: GridConfig, data: Dataset | None) -> None:
    p = SIM_P if data is None else data.p
    bad = [m for m in grid.mtry if m > p]
    if bad:
        raise ExperimentError(f"mtry values {bad} exceed the {p} available features")
    if data is not None and data.task == CLASSIFICATION:
        if any(g in ("correlation", "combined", "combined-external") for g in grid.g):
            raise ExperimentError("correlation-based g needs a regression target")


def _prepare(grid: GridConfig, replicate: int, data: Dataset | None,
             truth: GroundTruth | None, external: np.ndarray | None) -> _Replicate:
    if data is None:
        data, truth = simulate(grid.sim_spec(replicate))
    plan = split_train_test(data, grid.train_fraction, derive(replicate, SEED_SPLIT))
    train, test = data.subset(plan.train_indices), data.subset(plan.test_indices)
    if grid.standardize and train.task == REGRESSION:
        train, test, _, _ = standardize_target(train, test)
    needed = {g for g in grid.g if any(gm > 0 for gm in grid.gamma)}
    importances = external
    if needed & {"boosted", "combined"}:
        importances = guide_importances(train, grid.penalty(1.0, 0.0, "boosted"),
                                        derive(replicate, SEED_GUIDE))
    gv = {}
    for g in sorted(needed):
        gv[g] = g_values(grid.penalty(1.0, 1.0, g), train, importances)
    return _Replicate(replicate, train, test, truth, gv)


def _run_cell(grid: GridConfig, rep: _Replicate, mtry: int, g: str, lambda0: float,
              gamma: float) -> ExperimentRecord:
    spec = grid.penalty(lambda0, gamma, g)
    g_vec = rep.g[g] if gamma > 0 else np.zeros(rep.train.p)
    lambdas = lambdas_from_g(spec, g_vec)
    config = ForestConfig(grid.ntree, grid.grow_config(rep.train.task, mtry), grid.bootstrap,
                          derive(rep.replicate, SEED_FOREST))
    forest = train_forest(rep.train, config, lambdas)
    name, fn = metric_for(rep.train.task)
    metric = fn(predict_forest(forest, rep.test.X), rep.test.y)
    return _record(rep.replicate, mtry, spec, rep.train.task, metric,
                   selected_features(forest), rep.truth)


def _manifest(grid: GridConfig, completed: int) -> dict:
    return {"format": MANIFEST_FORMAT, "version": 1, "code_version": __version__,
            "grid": grid.to_dict(), "columns": list(RESULT_COLUMNS),
            "seed_scheme": {"data": "derive(replicate, 0)", "split": "derive(replicate, 1)",
                            "forest": "derive(replicate, 2)", "guide": "derive(replicate, 3)"},
            "n_cells": len(grid.cells()), "completed": completed,
            "complete": completed == len(grid.cells())}


def _write_json(path: Path, doc: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _resume_point(grid: GridConfig, out: Path, manifest: Path) -> list[ExperimentRecord]:
    """Completed records of an interrupted run; drops a partially written last line."""
    if not manifest.exists() or not out.exists():
        return []
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    if doc.get("format") != MANIFEST_FORMAT:
        raise ExperimentError(f"{manifest}: not a grid manifest")
    if doc.get("grid") != grid.to_dict():
        raise ExperimentError(f"{manifest}: grid differs from the current configuration")
    text = out.read_text(encoding="utf-8")
    complete = text[: text.rfind("\n") + 1]
    lines = complete.splitlines()
    if not lines or lines[0] != ",".join(RESULT_COLUMNS):
        return []
    records = [ExperimentRecord.from_row(r) for r in csv.DictReader(io.StringIO(complete))]
    for rec, cell in zip(records, grid.cells()):
        if (rec.replicate, rec.mtry, rec.g, rec.lambda0, rec.gamma) != cell:
            raise ExperimentError(f"{out}: rows do not follow the grid's cell order")
    if len(records) > len(grid.cells()):
        raise ExperimentError(f"{out}: more rows than grid cells")
    out.write_text(complete, encoding="utf-8")
    return records


def run_grid(grid: GridConfig, out: str | Path | None = None,
             manifest: str | Path | None = None, jobs: int = 1, resume: bool = False,
             stop_after: int | None = None) -> list[ExperimentRecord]:
    """Evaluate every cell, streaming rows to ``out`` in canonical order.

    ``manifest`` defaults to ``out`` + ``.manifest.json``. With ``resume`` the
    completed prefix of a previous run with the same grid is kept and only the
    remaining cells are computed; the final file is byte-identical to an
    uninterrupted run. ``stop_after`` ends the run after that many new cells
    (used to emulate interruptions). Up to ``jobs`` cells run concurrently.
    """
    data, truth = load_grid_data(grid)
    validate_grid(grid, data)
    external = None
    if grid.importance_file is not None:
        names = data.feature_names if data is not None else tuple(f"x{i + 1}" for i in range(SIM_P))
        external = load_importances(grid.importance_file, names)
    cells = grid.cells()

    out_path = Path(out) if out is not None else None
    man_path = None
    if out_path is not None:
        man_path = Path(manifest) if manifest else out_path.with_name(out_path.name + ".manifest.json")
    done: list[ExperimentRecord] = []
    if resume and out_path is not None:
        done = _resume_point(grid, out_path, man_path)
    if out_path is not None:
        if not done:
            out_path.write_text(",".join(RESULT_COLUMNS) + "\n", encoding="utf-8")
        _write_json(man_path, _manifest(grid, len(done)))
    log.info("grid: %d cells, %d already complete", len(cells), len(done))

    todo = cells[len(done):]
    if stop_after is not None:
        todo = todo[:stop_after]
    records = list(done)
    fh = out_path.open("a", newline="", encoding="utf-8") if out_path is not None else None
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        writer = csv.writer(fh, lineterminator="\n") if fh else None
        for r in dict.fromkeys(c[0] for c in todo):
            rep = _prepare(grid, r, data, truth, external)
            mine = [c for c in todo if c[0] == r]
            run = (lambda c: _run_cell(grid, rep, *c[1:]))  # noqa: E731
            results = pool.map(run, mine) if pool else map(run, mine)
            for rec in results:
                records.append(rec)
                if writer:
                    writer.writerow(rec.row())
                    fh.flush()
                    _write_json(man_path, _manifest(grid, len(records)))
                log.info("cell %d/%d: mtry=%d g=%s lambda0=%g gamma=%g %s=%.4f n_selected=%d",
                         len(records), len(cells), rec.mtry, rec.g, rec.lambda0, rec.gamma,
                         rec.metric_name, rec.metric, rec.n_selected)
    finally:
        if fh:
            fh.close()
        if pool:
            pool.shutdown()
    return records


# ------------------------------------------------------------------ refit

def parse_mtry_rule(text: str) -> str | float | int:
    """``"sqrt"``, a fraction of p such as ``"0.15"``, or an integer count."""
    text = str(text).strip()
    if text == "sqrt":
        return "sqrt"
    try:
        if any(ch in text for ch in ".eE"):
            value = float(text)
            if not 0.0 < value <= 1.0:
                raise ValueError
            return value
        count = int(text)
        if count < 1:
            raise ValueError
        return count
    except ValueError:
        raise ExperimentError(f"mtry rule must be 'sqrt', a fraction in (0, 1] or a "
                              f"positive integer, got {text!r}") from None


def resolve_mtry(rule: str | float | int, p: int) -> int:
    """Concrete mtry for ``p`` features, clamped to ``[1, p]``."""
    if rule == "sqrt":
        m = int(math.floor(math.sqrt(p)))
    elif isinstance(rule, float):
        m = int(math.floor(rule * p))
    else:
        m = int(rule)
    return max(1, min(m, p))


@dataclass(frozen=True)
class RefitConfig:
    """Stage-two standard forest; ``mtry`` is resolved on the selected features."""

    ntree: int = 100
    mtry: str | float | int = "sqrt"
    min_node_size: int | None = None
    master_seed: int = 0


def _constant_prediction(train: Dataset, n: int) -> np.ndarray:
    if train.task == REGRESSION:
        return np.full(n, float(np.mean(train.y)))
    counts = np.bincount(train.y, minlength=train.n_classes)
    return np.full(n, int(np.argmax(counts)), dtype=np.int64)


def select_then_refit(train: Dataset, test: Dataset, penalty: PenaltySpec,
                      stage1: ForestConfig, refit: RefitConfig,
                      truth: GroundTruth | None = None, importances=None,
                      guide_seed: int = 0, replicate: int = 0,
                      lambdas: np.ndarray | None = None) -> ExperimentRecord:
    """Select with a penalized forest, then score a standard forest on the selection.

    An empty selection is flagged and scored with a constant predictor
    (training mean, or majority class).
    """
    if lambdas is None:
        lambdas = compute_lambdas(penalty, train, importances, guide_seed)
    first = train_forest(train, stage1, lambdas)
    sel = sorted(selected_features(first))
    name, fn = metric_for(train.task)
    if not sel:
        log.warning("replicate %d: stage one selected no features", replicate)
        metric = fn(_constant_prediction(train, test.n), test.y)
        return _record(replicate, stage1.grow.mtry, penalty, train.task, metric, sel, truth,
                       train.p, empty=True)
    tr, te = train.select_features(sel), test.select_features(sel)
    kw = {"regression_cost": stage1.grow.regression_cost}
    if refit.min_node_size is not None:
        kw["min_node_size"] = refit.min_node_size
    grow = GrowConfig.default(train.task, resolve_mtry(refit.mtry, len(sel)), **kw)
    second = train_forest(tr, ForestConfig(refit.ntree, grow, True, refit.master_seed), None)
    metric = fn(predict_forest(second, te.X), te.y)
    return _record(replicate, stage1.grow.mtry, penalty, train.task, metric, sel, truth, train.p)


def run_refit(data: Dataset, penalty: PenaltySpec, mtry_rules: Sequence, resamples: int,
              train_fraction: float = 2 / 3, ntree: int = 100,
              refit: RefitConfig = RefitConfig(), seed: int = 0,
              truth: GroundTruth | None = None, standardize: bool = True,
              importances=None, grow_kw: dict | None = None) -> list[ExperimentRecord]:
    """Select-then-refit over ``resamples`` random splits and every mtry rule.

    Records are ordered by resample, then mtry rule.
    """
    if resamples < 1:
        raise ExperimentError("resamples must be >= 1")
    rules = [parse_mtry_rule(r) if isinstance(r, str) else r for r in mtry_rules]
    if not rules:
        raise ExperimentError("need at least one mtry rule")
    records = []
    for r in range(resamples):
        plan = split_train_test(data, train_fraction, derive(seed, r, SEED_SPLIT))
        train, test = data.subset(plan.train_indices), data.subset(plan.test_indices)
        if standardize and train.task == REGRESSION:
            train, test, _, _ = standardize_target(train, test)
        imp = importances
        if imp is None and penalty.needs_guide_forest and penalty.uses_g:
            imp = guide_importances(train, penalty, derive(seed, r, SEED_GUIDE))
        lambdas = compute_lambdas(penalty, train, imp)
        for rule in rules:
            grow = GrowConfig.default(train.task, resolve_mtry(rule, train.p),
                                      depth_penalty=penalty.depth_penalty, **(grow_kw or {}))
            stage1 = ForestConfig(ntree, grow, True, derive(seed, r, SEED_FOREST))
            rec = select_then_refit(train, test, penalty, stage1,
                                    replace(refit, master_seed=derive(seed, r, SEED_REFIT)),
                                    truth, replicate=r, lambdas=lambdas)
            log.info("resample %d mtry=%d: %s=%.4f using %d features", r, rec.mtry,
                     rec.metric_name, rec.metric, rec.n_selected)
            records.append(rec)
    return records


def summarize_refit(records: Sequence[ExperimentRecord]) -> list[dict]:
    """Per penalty configuration: mean over resamples and the lowest-error resample.

    Each resample is first averaged over its mtry rows (metric and feature
    share); ties for the best resample go to the lower resample id.
    """
    groups: dict[tuple, dict[int, list[ExperimentRecord]]] = {}
    for rec in records:
        key = (rec.g, rec.lambda0, rec.gamma)
        groups.setdefault(key, {}).setdefault(rec.replicate, []).append(rec)
    out = []
    for (g, l0, gm), by_rep in groups.items():
        per = []
        for r in sorted(by_rep):
            rows = by_rep[r]
            per.append({"resample": r,
                        "metric": math.fsum(x.metric for x in rows) / len(rows),
                        "pct_features": math.fsum(x.pct_features or 0.0 for x in rows) / len(rows)})
        best = min(per, key=lambda d: (d["metric"], d["resample"]))
        out.append({"g": g, "lambda0": l0, "gamma": gm,
                    "metric_name": next(iter(by_rep.values()))[0].metric_name,
                    "resamples": len(per),
                    "mean_metric": math.fsum(d["metric"] for d in per) / len(per),
                    "mean_pct_features": math.fsum(d["pct_features"] for d in per) / len(per),
                    "best_resample": best, "per_resample": per})
    return out
