"""Command-line front end: simulate, train, predict, select, grid, refit.

Every option may also come from a JSON file given with ``--config``; its keys
are the long option names without the leading dashes (``"lambda0"``,
``"model-out"``). Options given on the command line override the file.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 data or
runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (CLASSIFICATION, REGRESSION, TASKS, DataError, load_csv, read_features,
                   write_csv)
from .ensemble import (ForestConfig, forest_importance, load_forest, predict_forest,
                       save_forest, selected_features, train_forest)
from .experiments import (REFIT_COLUMNS, ExperimentError, GridConfig, RefitConfig,
                          load_grid_data, parse_mtry_rule, resolve_mtry, run_grid, run_refit,
                          summarize_refit, validate_grid, write_records)
from .penalty import CORRELATIONS, G_SOURCES, PenaltyError, PenaltySpec, compute_lambdas, load_importances
from .simulation import SimSpec, read_ground_truth, simulate, write_ground_truth
from .splitting import REGRESSION_COSTS
from .tree import GrowConfig

log = logging.getLogger("penforest")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    """Invalid flags or configuration (exit code 2)."""


# ----------------------------------------------------------------- parser

def _data_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--data", required=required, default=None, help="input CSV with a header row")
    p.add_argument("--target", default="y", help="name of the target column")
    p.add_argument("--task", choices=TASKS, default=REGRESSION, help="learning task")


def _forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ntree", type=int, default=500, help="number of trees")
    p.add_argument("--mtry", default="sqrt",
                   help="candidate features per node: 'sqrt', a fraction of p, or a count")
    p.add_argument("--min-node-size", type=int, default=None,
                   help="nodes with fewer than twice this many rows are not split "
                        "(default: 5 for regression, 1 for classification)")
    p.add_argument("--max-depth", type=int, default=None, help="maximum depth (root = 1)")
    p.add_argument("--no-bootstrap", action="store_true", help="grow every tree on all rows")
    p.add_argument("--regression-cost", choices=REGRESSION_COSTS, default="sse",
                   help="regression node cost inside the gain: total ('sse') or per-row ('mse')")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def _penalty_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda0", type=float, default=1.0, help="baseline penalty in [0, 1]")
    p.add_argument("--gamma", type=float, default=0.0, help="weight of g in the mixture, in [0, 1]")
    p.add_argument("--g", choices=G_SOURCES, default="constant", help="source of the local weight g")
    p.add_argument("--correlation", choices=CORRELATIONS, default="pearson",
                   help="correlation used by the correlation and combined sources")
    p.add_argument("--bins", type=int, default=10, help="discretization bins for entropy / MI")
    p.add_argument("--epsilon", type=float, default=0.5, help="correlation cut-off of 'combined'")
    p.add_argument("--depth-penalty", action="store_true",
                   help="penalize new features by lambda ** depth")
    p.add_argument("--importance-file", default=None,
                   help="feature,importance CSV for the *-external sources")
    p.add_argument("--guide-ntree", type=int, default=500, help="trees of the guide forest")
    p.add_argument("--guide-mtry", type=int, default=None,
                   help="mtry of the guide forest (default floor(sqrt(p)))")
    p.add_argument("--standard", action="store_true",
                   help="standard forest: same as --lambda0 1 --gamma 0")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="penforest", description=__doc__.split("\n")[0],
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=text, description=text, formatter_class=fmt)
        p.add_argument("--config", default=None, help="JSON file of option values")
        return p

    p = command("simulate", "write a simulated regression dataset and its ground truth")
    p.add_argument("--n", type=int, default=1000, help="number of rows")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--noise-sd", type=float, default=1.0, help="sd of the target noise")
    p.add_argument("--correlated-noise-sd", type=float, default=0.3,
                   help="sd of the noise added to x5 in the correlated block")
    p.add_argument("--correlated-term", choices=("x5", "block"), default="x5",
                   help="second response sum over x5 or over the correlated block")
    p.add_argument("--out", required=True, help="dataset CSV to write")
    p.add_argument("--truth-out", default=None,
                   help="ground-truth JSON (default: OUT with .truth.json appended)")

    p = command("train", "train a (penalized) forest and report importances")
    _data_flags(p)
    _forest_flags(p)
    _penalty_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="threads (used only without penalization)")
    p.add_argument("--model-out", required=True, help="model file to write")
    p.add_argument("--report-out", default=None,
                   help="importance/lambda CSV (default: MODEL_OUT with .importance.csv appended)")

    p = command("predict", "predict with a saved model")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", required=True, help="CSV holding the model's feature columns")
    p.add_argument("--out", default=None, help="predictions CSV (default: standard output)")

    p = command("select", "list the features with positive importance")
    p.add_argument("--model", default=None, help="model file; otherwise train from the flags below")
    _data_flags(p, required=False)
    _forest_flags(p)
    _penalty_flags(p)
    p.add_argument("--out", default=None, help="output file, one feature per line (default: stdout)")

    p = command("grid", "run an experiment grid described by a JSON file")
    p.add_argument("grid", help="grid JSON file")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--manifest", default=None,
                   help="run manifest (default: OUT with .manifest.json appended)")
    p.add_argument("--jobs", type=int, default=1, help="cells evaluated concurrently")
    p.add_argument("--resume", action="store_true",
                   help="keep completed cells of an interrupted run with the same grid")

    p = command("refit", "select with a penalized forest, score a standard forest on the selection")
    _data_flags(p)
    _forest_flags(p)
    _penalty_flags(p)
    p.set_defaults(mtry="sqrt,0.15,0.4,0.75,0.95", ntree=100)
    p.add_argument("--resamples", type=int, default=50, help="random train/test splits")
    p.add_argument("--train-fraction", type=float, default=2 / 3, help="training share")
    p.add_argument("--refit-ntree", type=int, default=100, help="trees of the stage-two forest")
    p.add_argument("--refit-mtry", default="sqrt", help="stage-two mtry rule on the selected features")
    p.add_argument("--truth", default=None, help="ground-truth JSON for feature percentages")
    p.add_argument("--no-standardize", action="store_true",
                   help="keep the regression target on its original scale")
    p.add_argument("--out", required=True, help="per-resample results CSV")
    p.add_argument("--summary-out", default=None,
                   help="summary JSON (default: OUT with .summary.json appended)")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def _config_defaults(sub: argparse.ArgumentParser, path: str) -> dict:
    """Translate a JSON config into parser defaults (keys are long option names)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path}: expected a JSON object")
    by_flag = {}
    for action in sub._actions:  # noqa: SLF001
        for opt in action.option_strings:
            if opt.startswith("--") and opt not in ("--config", "--help"):
                by_flag[opt[2:]] = action
    unknown = sorted(set(doc) - set(by_flag))
    if unknown:
        raise UsageError(f"config {path}: unknown keys {unknown}")
    out = {}
    for key, value in doc.items():
        action = by_flag[key]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            if not isinstance(value, bool):
                raise UsageError(f"config {path}: {key!r} must be true or false")
        elif value is not None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            try:
                value = action.type(str(value)) if action.type else str(value)
            except (TypeError, ValueError):
                raise UsageError(f"config {path}: bad value for {key!r}: {value!r}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config {path}: {key!r} must be one of {list(action.choices)}")
        out[action.dest] = value
    return out


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in argv if not a.startswith("-")), None)
        try:
            sub = _subparser(parser, command)
        except KeyError:
            parser.error("--config needs a command")
        sub.set_defaults(**_config_defaults(sub, known.config))
        # options required on the command line may come from the file instead
        for action in sub._actions:  # noqa: SLF001
            if action.required and sub.get_default(action.dest) is not None:
                action.required = False
    return parser.parse_args(argv)


# ------------------------------------------------------------ helpers

def _penalty(args) -> PenaltySpec:
    lambda0, gamma = (1.0, 0.0) if args.standard else (args.lambda0, args.gamma)
    try:
        spec = PenaltySpec(lambda0=lambda0, gamma=gamma, g=args.g, correlation=args.correlation,
                           bins=args.bins, epsilon=args.epsilon, depth_penalty=args.depth_penalty,
                           guide_ntree=args.guide_ntree, guide_mtry=args.guide_mtry)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if spec.needs_external and spec.uses_g and not args.importance_file:
        raise UsageError(f"--g {spec.g} needs --importance-file")
    return spec


def _grow(args, task: str, p: int, mtry_text: str | None = None) -> GrowConfig:
    try:
        rule = parse_mtry_rule(mtry_text or args.mtry)
    except ExperimentError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(rule, int) and rule > p:
        raise UsageError(f"--mtry {rule} exceeds the {p} available features")
    kw = dict(max_depth=args.max_depth, depth_penalty=args.depth_penalty,
              regression_cost=args.regression_cost)
    if args.min_node_size is not None:
        kw["min_node_size"] = args.min_node_size
    try:
        return GrowConfig.default(task, resolve_mtry(rule, p), **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_positive(**values) -> None:
    for name, v in values.items():
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")


def _fit(args):
    """Load data, compute lambdas and train; shared by train and select."""
    if not args.data:
        raise UsageError("--data is required to train a model")
    _check_positive(ntree=args.ntree, min_node_size=args.min_node_size,
                    max_depth=args.max_depth, guide_ntree=args.guide_ntree)
    spec = _penalty(args)
    d = load_csv(args.data, args.target, args.task)
    grow = _grow(args, d.task, d.p)
    importances = None
    if args.importance_file and (spec.needs_external or spec.needs_guide_forest):
        importances = load_importances(args.importance_file, d.feature_names)
    lambdas = compute_lambdas(spec, d, importances, seed=args.seed)
    config = ForestConfig(args.ntree, grow, not args.no_bootstrap, args.seed)
    forest = train_forest(d, config, lambdas, n_jobs=getattr(args, "jobs", 1))
    return d, forest


def _write_lines(lines, out: str | None) -> None:
    text = "".join(f"{line}\n" for line in lines)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------ commands

def cmd_simulate(args) -> None:
    _check_positive(n=args.n)
    try:
        spec = SimSpec(n=args.n, seed=args.seed, noise_sd=args.noise_sd,
                       correlated_noise_sd=args.correlated_noise_sd,
                       correlated_term=args.correlated_term)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    d, truth = simulate(spec)
    write_csv(d, args.out)
    write_ground_truth(truth, args.truth_out or args.out + ".truth.json")


def cmd_train(args) -> None:
    d, forest = _fit(args)
    save_forest(forest, args.model_out)
    imp = forest_importance(forest)
    report = args.report_out or args.model_out + ".importance.csv"
    with open(report, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "importance", "lambda", "selected"])
        for i, name in enumerate(d.feature_names):
            w.writerow([name, repr(float(imp[i])), repr(float(forest.lambdas[i])),
                        int(imp[i] > 0)])
    log.info("trained %d trees; %d of %d features selected", len(forest.trees),
             int(np.sum(imp > 0)), d.p)


def cmd_predict(args) -> None:
    forest = load_forest(args.model)
    X = read_features(args.data, forest.feature_names)
    pred = predict_forest(forest, X)
    if forest.task == CLASSIFICATION:
        cells = [forest.classes[int(c)] for c in pred]
    else:
        cells = [repr(float(v)) for v in pred]
    _write_lines(["prediction", *cells], args.out)


def cmd_select(args) -> None:
    if args.model:
        forest = load_forest(args.model)
    else:
        _, forest = _fit(args)
    _write_lines([forest.feature_names[i] for i in sorted(selected_features(forest))], args.out)


def cmd_grid(args) -> None:
    _check_positive(jobs=args.jobs)
    try:
        grid = GridConfig.load(args.grid)
    except OSError as exc:
        raise UsageError(f"cannot read grid {args.grid}: {exc.strerror}") from None
    except (ExperimentError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    data, _ = load_grid_data(grid)
    try:
        validate_grid(grid, data)
    except ExperimentError as exc:
        raise UsageError(str(exc)) from None
    run_grid(grid, args.out, args.manifest, jobs=args.jobs, resume=args.resume)


def cmd_refit(args) -> None:
    _check_positive(ntree=args.ntree, refit_ntree=args.refit_ntree, resamples=args.resamples,
                    min_node_size=args.min_node_size, max_depth=args.max_depth)
    if not 0.0 < args.train_fraction < 1.0:
        raise UsageError("--train-fraction must lie in (0, 1)")
    spec = _penalty(args)
    try:
        rules = [parse_mtry_rule(r) for r in str(args.mtry).split(",") if r.strip()]
        refit_rule = parse_mtry_rule(args.refit_mtry)
    except ExperimentError as exc:
        raise UsageError(str(exc)) from None
    if not rules:
        raise UsageError("--mtry needs at least one rule")
    d = load_csv(args.data, args.target, args.task)
    too_big = [r for r in rules if isinstance(r, int) and r > d.p]
    if too_big:
        raise UsageError(f"--mtry {too_big} exceeds the {d.p} available features")
    truth = read_ground_truth(args.truth) if args.truth else None
    importances = None
    if args.importance_file and (spec.needs_external or spec.needs_guide_forest):
        importances = load_importances(args.importance_file, d.feature_names)
    grow_kw = {"max_depth": args.max_depth, "regression_cost": args.regression_cost}
    if args.min_node_size is not None:
        grow_kw["min_node_size"] = args.min_node_size
    refit = RefitConfig(ntree=args.refit_ntree, mtry=refit_rule,
                        min_node_size=args.min_node_size)
    records = run_refit(d, spec, rules, args.resamples, args.train_fraction, args.ntree, refit,
                        args.seed, truth, not args.no_standardize, importances, grow_kw)
    write_records(records, args.out, REFIT_COLUMNS)
    summary = args.summary_out or args.out + ".summary.json"
    Path(summary).write_text(json.dumps(summarize_refit(records), indent=1) + "\n",
                             encoding="utf-8")


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "predict": cmd_predict,
            "select": cmd_select, "grid": cmd_grid, "refit": cmd_refit}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"penforest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help/--version exit 0, errors exit 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"penforest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PenaltyError, ExperimentError, OSError, ValueError) as exc:
        print(f"penforest: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
