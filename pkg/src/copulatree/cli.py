"""Command-line surface: fit / predict / simulate / flu.

CSV in, JSON/TSV out, everything deterministic given (inputs, flags,
seed).  Exit codes: 0 ok, 2 schema error, 3 fit failure, 4 configuration
error.  Failures print a single machine-parsable line to stderr:
``error: <code>: <message>``.

Flags may be seeded from a key=value config file via --config; explicit
flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import simulation as sim
from .compositional import aggregate_counts, ilr_forward, read_weekly_csv, write_ilr_csv
from .copulas import spec_for
from .data import CATEGORICAL, NUMERIC, Column, Dataset, categorical_column, numeric_column
from .errors import (
    ConfigError,
    CopulaTreeError,
    DomainError,
    FitError,
    IngestionError,
    InsufficientDataError,
    RegressionError,
    ScenarioError,
    SchemaError,
)
from .margins import (
    MarginTreeConfig,
    pseudo_discrete,
    pseudo_empirical,
    pseudo_kernel,
    pseudo_margin_tree,
    pseudo_parametric_normal,
)
from .pruning import fit_pruned_tree
from .serialize import (
    read_tree_json,
    write_cv_report_json,
    write_cv_report_tsv,
    write_predictions_csv,
    write_prune_path_tsv,
    write_tree_json,
)
from .tree import StoppingConfig

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_FIT = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# CSV input for fit/predict


def read_fit_csv(path) -> Dataset:
    """Header convention: responses ``y_*``; covariates ``x_<name>:num`` or
    ``x_<name>:cat``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    y_cols, x_cols = [], []
    for i, name in enumerate(header):
        if name.startswith("y_"):
            y_cols.append(i)
        elif name.startswith("x_"):
            body = name[2:]
            if ":" not in body:
                raise SchemaError(f"{path}: covariate column {name!r} needs a :num or :cat suffix")
            colname, kind = body.rsplit(":", 1)
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"{path}: column {name!r} has unknown kind {kind!r}")
            x_cols.append((i, colname, kind))
    if len(y_cols) != 2:
        raise SchemaError(f"{path}: expected exactly 2 y_ columns, found {len(y_cols)}")

    try:
        y = np.array([[float(row[i]) for i in y_cols] for row in rows])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: bad response value ({exc})") from None
    covs = []
    for i, colname, kind in x_cols:
        try:
            raw = [row[i] for row in rows]
        except IndexError:
            raise SchemaError(f"{path}: short row") from None
        if kind == NUMERIC:
            try:
                covs.append(numeric_column(colname, [float(v) for v in raw]))
            except ValueError as exc:
                raise SchemaError(f"{path}: column {colname}: {exc}") from None
        else:
            covs.append(categorical_column(colname, raw))
    return Dataset(y, tuple(covs))


def _covariates_for_tree(path, tree) -> Dataset:
    """Covariate CSV matched against a fitted tree's schema.

    Accepts either the fit header convention (x_<name>:kind) or plain
    column names.  Unseen categorical labels extend the level table past
    the training codes, which routes them right at every categorical rule.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    def matches(col_header, want):
        if col_header == want:
            return True
        return col_header.startswith("x_") and col_header[2:].rsplit(":", 1)[0] == want

    covs = []
    for sch in tree.schema:
        idx = next((i for i, h in enumerate(header) if matches(h, sch.name)), None)
        if idx is None:
            raise SchemaError(f"{path}: missing covariate column {sch.name!r}")
        raw = [row[idx] for row in rows]
        if sch.kind == NUMERIC:
            try:
                covs.append(numeric_column(sch.name, [float(v) for v in raw]))
            except ValueError as exc:
                raise SchemaError(f"{path}: column {sch.name}: {exc}") from None
        else:
            levels = list(sch.levels)
            extra = sorted(set(raw) - set(levels))
            table = tuple(levels + extra)
            index = {lab: i for i, lab in enumerate(table)}
            codes = np.array([index[v] for v in raw], dtype=np.int64)
            covs.append(Column(sch.name, CATEGORICAL, codes, table))
    n = len(rows)
    return Dataset(np.zeros((n, 2)), tuple(covs))


# ---------------------------------------------------------------------------
# subcommands


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required (flag or config file)")


def _stopping_from_args(args) -> StoppingConfig:
    return StoppingConfig(
        min_leaf=args.min_leaf,
        min_gain=args.min_gain,
        max_leaves=args.max_leaves,
        max_candidates=args.max_candidates,
    )


def _make_pseudo(args, data: Dataset):
    method = args.pseudo
    if method == "empirical":
        return pseudo_empirical(data), ()
    if method == "kernel":
        if args.bandwidth is None:
            raise ConfigError("--bandwidth is required for the kernel method")
        return pseudo_kernel(data, h=args.bandwidth), ()
    if method == "normal":
        design = None
        if args.design:
            names = [c.name for c in data.covariates]
            design = []
            for want in args.design.split(","):
                if want not in names:
                    raise SchemaError(f"design column {want!r} not in covariates {names}")
                design.append(names.index(want))
        return pseudo_parametric_normal(data, design), ()
    if method == "margin-tree":
        pseudo, trees = pseudo_margin_tree(
            data, MarginTreeConfig(min_leaf=args.margin_min_leaf, seed=args.seed)
        )
        return pseudo, trees
    if method == "discrete":
        return pseudo_discrete(data), ()
    raise ConfigError(f"unknown pseudo method {method!r}")


def cmd_fit(args) -> int:
    _require(args, "input", "out", "family", "seed")
    data = read_fit_csv(args.input)
    spec = spec_for(args.family)
    pseudo, _ = _make_pseudo(args, data)
    stopping = _stopping_from_args(args)
    maximal, path, report, subtree = fit_pruned_tree(
        spec, pseudo, data,
        stopping=stopping,
        folds=args.folds,
        repeats=args.repeats,
        seed=args.seed,
        rule=args.rule,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tree_json(subtree, out / "tree.json")
    write_prune_path_tsv(path, out / "prune_path.tsv")
    write_cv_report_tsv(report, out / "cv_report.tsv")
    write_cv_report_json(report, out / "cv_report.json")
    theta, tau, leaf_ids = subtree.predict(data)
    write_predictions_csv(out / "predictions.csv", range(data.n), leaf_ids, theta, tau)
    print(
        f"fit: {subtree.n_leaves} leaves (maximal {maximal.n_leaves}), "
        f"train loglik {path.entry_for_k(report.chosen_k).train_loglik:.3f}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    _require(args, "tree", "input", "out")
    tree = read_tree_json(args.tree)
    data = _covariates_for_tree(args.input, tree)
    theta, tau, leaf_ids = tree.predict(data)
    write_predictions_csv(args.out, range(data.n), leaf_ids, theta, tau)
    print(f"predict: {data.n} rows -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    _require(args, "out", "seed")
    families = args.families.split(",") if args.families != "all" else [f.value for f in sim.Family]
    surfaces = args.surfaces.split(",") if args.surfaces != "all" else list(sim.SURFACES)
    for f in families:
        spec_for(f)
    for s in surfaces:
        if s not in sim.SURFACES:
            raise ConfigError(f"unknown surface {s!r}")
    reps = args.reps if args.reps is not None else (500 if args.scale == "paper" else 50)
    n = args.n if args.n is not None else 1000
    config = sim.PipelineConfig(
        sources=tuple(args.sources.split(",")),
        stopping=_stopping_from_args(args),
        cv_folds=args.folds,
        cv_repeats=args.repeats,
        cv_rule=args.rule,
        kernel_h=args.bandwidth,
    )
    cells = [(f, s) for f in families for s in surfaces]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_echo = {
        "scale": args.scale,
        "n_reps": reps,
        "n": n,
        "seed": args.seed,
        "cells": [list(c) for c in cells],
        "sources": list(config.sources),
    }
    if args.dry_run:
        summary = {"format_version": 1, "cells": [], "config": config_echo}
    else:
        records = sim.run_study(cells, reps, n, args.seed, config, n_jobs=args.jobs)
        sim.write_records_tsv(records, out / "records.tsv")
        summary = sim.summarize(records)
        summary["config"] = config_echo
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"simulate: {len(cells)} cells x {reps} reps -> {out}")
    return EXIT_OK


def cmd_flu(args) -> int:
    _require(args, "input", "out", "seed")
    records = read_weekly_csv(args.input)
    unit_years = aggregate_counts(records, min_total=args.min_cases)
    if not unit_years:
        raise SchemaError("no data: every unit-year fell below the minimum case count")

    points = [ilr_forward(uy.composition) for uy in unit_years]
    y = np.array([[p.y1, p.y2] for p in points])
    seasons = [uy.season for uy in unit_years]
    covs = [categorical_column("season", seasons)]
    if any(uy.itz for uy in unit_years):
        covs.append(categorical_column("itz", [uy.itz or "?" for uy in unit_years]))
    data = Dataset(y, tuple(covs))

    pseudo, margin_trees = pseudo_margin_tree(
        data, MarginTreeConfig(min_leaf=args.margin_min_leaf, seed=args.seed)
    )
    spec = spec_for(args.family)
    stopping = _stopping_from_args(args)
    maximal, path, report, subtree = fit_pruned_tree(
        spec, pseudo, data,
        stopping=stopping, folds=args.folds, repeats=args.repeats,
        seed=args.seed, rule=args.rule,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ilr_csv(unit_years, out / "ilr.csv")
    write_tree_json(subtree, out / "tree.json")
    write_prune_path_tsv(path, out / "prune_path.tsv")
    write_cv_report_tsv(report, out / "cv_report.tsv")
    write_cv_report_json(report, out / "cv_report.json")
    _write_leaf_report(subtree, out / "leaf_report.tsv")

    root_ll = path.entries[-1].train_loglik
    cond_ll = path.entry_for_k(report.chosen_k).train_loglik
    print(
        f"flu: {len(unit_years)} unit-seasons, {subtree.n_leaves} leaves, "
        f"loglik {root_ll:.3f} -> {cond_ll:.3f}"
    )
    return EXIT_OK


def _rule_text(tree, node, going_left) -> str:
    rule = node.rule
    sch = tree.schema[rule.feature]
    if rule.is_numeric:
        op = "<=" if going_left else ">"
        return f"{sch.name} {op} {rule.threshold:g}"
    names = sorted(sch.levels[c] for c in rule.left_levels)
    if going_left:
        return f"{sch.name} in {{{', '.join(names)}}}"
    return f"{sch.name} not in {{{', '.join(names)}}}"


def _write_leaf_report(tree, path) -> None:
    rows = []

    def walk(node, conds):
        if node.is_leaf:
            rows.append(
                (node.id, node.fit.n_obs, node.fit.tau_hat, node.fit.theta_hat,
                 node.fit.loglik, " & ".join(conds) or "(root)")
            )
            return
        walk(node.left, conds + [_rule_text(tree, node, True)])
        walk(node.right, conds + [_rule_text(tree, node, False)])

    walk(tree.root, [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["format_version", 1])
        writer.writerow(["leaf_id", "n", "tau", "theta", "loglik", "rules"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4]), row[5]])


# ---------------------------------------------------------------------------
# argument wiring


def _add_stopping_flags(p):
    p.add_argument("--min-leaf", type=int, default=50)
    p.add_argument("--min-gain", type=float, default=0.0)
    p.add_argument("--max-leaves", type=int, default=32)
    p.add_argument("--max-candidates", type=int, default=None)


def _add_cv_flags(p, repeats_default=10):
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--repeats", type=int, default=repeats_default)
    p.add_argument("--rule", choices=["MaxMean", "OneSE"], default="OneSE")


def build_parser() -> _Parser:
    parser = _Parser(prog="copulatree", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit a conditional copula tree to a CSV dataset")
    p.add_argument("--input", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--family", default=None)
    p.add_argument("--pseudo", default="empirical",
                   choices=["empirical", "kernel", "normal", "margin-tree", "discrete"])
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--design", default=None, help="comma-separated design columns for --pseudo normal")
    p.add_argument("--margin-min-leaf", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    _add_stopping_flags(p)
    _add_cv_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="apply a fitted tree JSON to covariates")
    p.add_argument("--tree", default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", parents=[common], help="run the scenario study")
    p.add_argument("--families", default="all")
    p.add_argument("--surfaces", default="all")
    p.add_argument("--sources", default="U,V,W")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--dry-run", action="store_true", help="echo the resolved config without running")
    _add_stopping_flags(p)
    p.set_defaults(max_candidates=16)
    _add_cv_flags(p, repeats_default=5)
    p.set_defaults(rule="MaxMean", func=cmd_simulate)

    p = sub.add_parser("flu", parents=[common], help="end-to-end compositional pipeline")
    p.add_argument("--input", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--family", default="frank")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-cases", type=int, default=50)
    p.add_argument("--margin-min-leaf", type=int, default=20)
    _add_stopping_flags(p)
    _add_cv_flags(p, repeats_default=50)
    p.set_defaults(func=cmd_flu)

    return parser


def _load_config_file(path) -> dict:
    values = {}
    try:
        with open(path) as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path} line {i + 1}: expected key=value")
                key, val = line.split("=", 1)
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return values


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            # config values fill in for flags not given on the command line
            given = {a.lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
            for key, val in _load_config_file(args.config).items():
                if not hasattr(args, key):
                    raise ConfigError(f"unknown config key {key!r}")
                if key not in given:
                    setattr(args, key, _coerce(val))
        return args.func(args)
    except (SchemaError, IngestionError, OSError) as exc:
        print(f"error: schema: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConfigError, DomainError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, InsufficientDataError, RegressionError, ScenarioError) as exc:
        print(f"error: fit: {exc}", file=sys.stderr)
        return EXIT_FIT
    except CopulaTreeError as exc:
        print(f"error: internal: {exc}", file=sys.stderr)
        return EXIT_FIT


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
