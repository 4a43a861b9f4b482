"""Machine-readable artifact formats (all schema-versioned).

Tree JSON:  {format_version, family, nodes: [{id, n, theta, tau, loglik,
rule?, left?, right?}], covariates: [{name, kind, levels?}]}.
Categorical rules store level *names*; numeric rules the threshold.
Round trips through :func:`tree_from_json` are stable.
"""

from __future__ import annotations

import csv
import json
import math

from .copulas import FitResult, spec_for
from .errors import SchemaError
from .pruning import CvReport, PrunePath, lambda_intervals
from .tree import ColumnSchema, CopulaTree, SplitRule, StoppingConfig, TreeNode

FORMAT_VERSION = 1


def tree_to_doc(tree: CopulaTree) -> dict:
    nodes = []
    for node in tree.nodes():
        entry = {
            "id": node.id,
            "n": node.fit.n_obs,
            "theta": node.fit.theta_hat,
            "tau": node.fit.tau_hat,
            "loglik": node.fit.loglik,
        }
        if not node.is_leaf:
            rule = node.rule
            if rule.is_numeric:
                entry["rule"] = {"feature": rule.feature, "kind": "num", "threshold": rule.threshold}
            else:
                levels = tree.schema[rule.feature].levels
                entry["rule"] = {
                    "feature": rule.feature,
                    "kind": "cat",
                    "left_levels": sorted(levels[c] for c in rule.left_levels),
                }
            entry["left"] = node.left.id
            entry["right"] = node.right.id
        nodes.append(entry)
    covariates = []
    for col in tree.schema:
        cov = {"name": col.name, "kind": col.kind}
        if col.levels is not None:
            cov["levels"] = list(col.levels)
        covariates.append(cov)
    return {
        "format_version": FORMAT_VERSION,
        "family": tree.spec.family.value,
        "nodes": nodes,
        "covariates": covariates,
    }


def tree_from_doc(doc: dict) -> CopulaTree:
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported tree format_version {doc.get('format_version')!r}")
    spec = spec_for(doc["family"])
    schema = tuple(
        ColumnSchema(c["name"], c["kind"], tuple(c["levels"]) if "levels" in c else None)
        for c in doc["covariates"]
    )
    raw = {e["id"]: e for e in doc["nodes"]}

    def build(node_id: int, depth: int) -> TreeNode:
        e = raw[node_id]
        fit = FitResult(e["theta"], e["tau"], e["loglik"], e["n"], True)
        node = TreeNode(node_id, fit, depth)
        if "rule" in e:
            r = e["rule"]
            if r["kind"] == "num":
                node.rule = SplitRule(r["feature"], threshold=float(r["threshold"]))
            else:
                levels = schema[r["feature"]].levels
                index = {name: i for i, name in enumerate(levels)}
                node.rule = SplitRule(
                    r["feature"], left_levels=frozenset(index[name] for name in r["left_levels"])
                )
            node.left = build(e["left"], depth + 1)
            node.right = build(e["right"], depth + 1)
        return node

    root_id = min(raw)
    return CopulaTree(spec, build(root_id, 0), schema, StoppingConfig())


def write_tree_json(tree: CopulaTree, path) -> None:
    with open(path, "w") as fh:
        json.dump(tree_to_doc(tree), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_tree_json(path) -> CopulaTree:
    with open(path) as fh:
        return tree_from_doc(json.load(fh))


def write_prune_path_tsv(path_obj: PrunePath, path) -> None:
    intervals = lambda_intervals(path_obj)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["format_version", FORMAT_VERSION])
        writer.writerow(["K", "train_loglik", "lambda_lo", "lambda_hi"])
        for entry in path_obj.entries:
            lo, hi = intervals.get(entry.k, (math.nan, math.nan))
            writer.writerow([entry.k, repr(entry.train_loglik), repr(lo), repr(hi)])


def write_cv_report_tsv(report: CvReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["format_version", FORMAT_VERSION])
        writer.writerow(["K", "mean_val_loglik", "se", "n_folds"])
        for k in report.k_values:
            writer.writerow([k, repr(report.mean_loglik[k]), repr(report.se_loglik[k]), report.n_scores])


def cv_report_to_doc(report: CvReport) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "chosen_k": report.chosen_k,
        "rule": report.rule,
        "folds": report.folds,
        "repeats": report.repeats,
        "seed": report.seed,
        "lambda_interval": list(report.lambda_interval),
        "per_k": {
            str(k): {"mean": report.mean_loglik[k], "se": report.se_loglik[k]}
            for k in report.k_values
        },
        "notes": list(report.notes),
    }


def write_cv_report_json(report: CvReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(cv_report_to_doc(report), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_predictions_csv(path, row_ids, leaf_ids, thetas, taus) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "leaf_id", "theta", "tau"])
        for rid, lid, th, ta in zip(row_ids, leaf_ids, thetas, taus):
            writer.writerow([rid, lid, repr(float(th)), repr(float(ta))])


def _read_versioned_tsv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        head = next(reader)
        if head[0] != "format_version" or int(head[1]) != FORMAT_VERSION:
            raise SchemaError(f"{path}: unsupported format_version {head[1:]}")
        cols = next(reader)
        return [dict(zip(cols, row)) for row in reader]


def read_prune_path_tsv(path) -> list[dict]:
    """Rows with K, train_loglik and the lambda interval, floats parsed."""
    rows = _read_versioned_tsv(path)
    return [
        {
            "K": int(r["K"]),
            "train_loglik": float(r["train_loglik"]),
            "lambda_lo": float(r["lambda_lo"]),
            "lambda_hi": float(r["lambda_hi"]),
        }
        for r in rows
    ]


def read_cv_report_tsv(path) -> list[dict]:
    rows = _read_versioned_tsv(path)
    return [
        {
            "K": int(r["K"]),
            "mean_val_loglik": float(r["mean_val_loglik"]),
            "se": float(r["se"]),
            "n_folds": int(r["n_folds"]),
        }
        for r in rows
    ]


def read_predictions_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "row_id": int(r["row_id"]),
            "leaf_id": int(r["leaf_id"]),
            "theta": float(r["theta"]),
            "tau": float(r["tau"]),
        }
        for r in rows
    ]
