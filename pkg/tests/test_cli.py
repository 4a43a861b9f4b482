"""End-to-end tests of the command-line surface (in-process)."""

import csv
import json
import os

import numpy as np
import pytest
from scipy.special import ndtri

from copulatree import copulas as cp
from copulatree.cli import EXIT_CONFIG, EXIT_OK, EXIT_SCHEMA, main
from copulatree.fludata import write_flu_fixture_csv


@pytest.fixture(scope="module")
def fit_csv(tmp_path_factory):
    """Two-group Clayton dataset in the fit CSV schema."""
    path = tmp_path_factory.mktemp("data") / "input.csv"
    rng = np.random.default_rng(11)
    n = 400
    grp = rng.integers(0, 2, n)
    tau = np.where(grp == 0, 0.2, 0.7)
    theta = 2 * tau / (1 - tau)
    u = np.clip(rng.random(n), 1e-9, 1 - 1e-9)
    v = cp.conditional_quantile(cp.spec_for("clayton"), theta, u, rng.random(n))
    y = ndtri(np.column_stack([u, v]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y_a", "y_b", "x_g:cat", "x_z:num"])
        for i in range(n):
            w.writerow([y[i, 0], y[i, 1], "ab"[grp[i]], rng.random()])
    return path


def run_fit(fit_csv, out, extra=()):
    return main(
        [
            "fit", "--input", str(fit_csv), "--out", str(out),
            "--family", "clayton", "--pseudo", "empirical",
            "--seed", "5", "--repeats", "3", "--min-leaf", "50",
            "--max-candidates", "16",
        ]
        + list(extra)
    )


class TestFit:
    def test_artifacts_and_roundtrip(self, fit_csv, tmp_path):
        out = tmp_path / "fit"
        assert run_fit(fit_csv, out) == EXIT_OK
        for name in ("tree.json", "prune_path.tsv", "cv_report.tsv", "cv_report.json", "predictions.csv"):
            assert (out / name).exists()
        doc = json.loads((out / "tree.json").read_text())
        assert doc["format_version"] == 1
        assert doc["family"] == "clayton"

        pred_out = tmp_path / "pred.csv"
        rc = main(["predict", "--tree", str(out / "tree.json"), "--input", str(fit_csv), "--out", str(pred_out)])
        assert rc == EXIT_OK
        fit_rows = list(csv.DictReader(open(out / "predictions.csv")))
        pred_rows = list(csv.DictReader(open(pred_out)))
        assert fit_rows == pred_rows

        # leaf assignment counts match stored n per node
        leaf_n = {str(e["id"]): e["n"] for e in doc["nodes"] if "rule" not in e}
        counts = {}
        for row in pred_rows:
            counts[row["leaf_id"]] = counts.get(row["leaf_id"], 0) + 1
        assert counts == leaf_n

    def test_artifacts_roundtrip_through_readers(self, fit_csv, tmp_path):
        from copulatree.serialize import (
            read_cv_report_tsv,
            read_predictions_csv,
            read_prune_path_tsv,
            read_tree_json,
        )

        out = tmp_path / "fit"
        assert run_fit(fit_csv, out) == EXIT_OK
        tree = read_tree_json(out / "tree.json")
        path_rows = read_prune_path_tsv(out / "prune_path.tsv")
        cv_rows = read_cv_report_tsv(out / "cv_report.tsv")
        preds = read_predictions_csv(out / "predictions.csv")
        assert any(r["K"] == tree.n_leaves for r in path_rows)  # selected K on the path
        assert all(r["se"] >= 0 for r in cv_rows)
        assert len(preds) == len(list(csv.reader(open(fit_csv)))) - 1
        assert {p["leaf_id"] for p in preds} == {l.id for l in tree.leaves()}

    def test_byte_identical_artifacts(self, fit_csv, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_fit(fit_csv, out1) == EXIT_OK
        assert run_fit(fit_csv, out2) == EXIT_OK
        for name in os.listdir(out1):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_column_schema_exit(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("y_a,x_g:cat\n1.0,a\n")
        rc = main(["fit", "--input", str(bad), "--out", str(tmp_path / "o"),
                   "--family", "clayton", "--seed", "1"])
        assert rc == EXIT_SCHEMA

    def test_bad_family_config_exit(self, fit_csv, tmp_path):
        rc = main(["fit", "--input", str(fit_csv), "--out", str(tmp_path / "o"),
                   "--family", "gauss", "--seed", "1"])
        assert rc == EXIT_CONFIG

    def test_kernel_requires_bandwidth(self, fit_csv, tmp_path):
        rc = main(["fit", "--input", str(fit_csv), "--out", str(tmp_path / "o"),
                   "--family", "clayton", "--pseudo", "kernel", "--seed", "1"])
        assert rc == EXIT_CONFIG

    def test_config_file_defaults(self, fit_csv, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("seed=77\nfamily=clayton\nrepeats=2\n")
        out = tmp_path / "cfgfit"
        rc = main(["fit", "--input", str(fit_csv), "--out", str(out), "--config", str(cfg)])
        assert rc == EXIT_OK
        doc = json.loads((out / "cv_report.json").read_text())
        assert doc["seed"] == 77 and doc["repeats"] == 2

    def test_flag_beats_config(self, fit_csv, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("seed=77\nfamily=clayton\nrepeats=2\n")
        out = tmp_path / "cfgfit2"
        rc = main(["fit", "--input", str(fit_csv), "--out", str(out),
                   "--config", str(cfg), "--seed", "5"])
        assert rc == EXIT_OK
        assert json.loads((out / "cv_report.json").read_text())["seed"] == 5


class TestPredict:
    def test_single_leaf_constant_tau(self, tmp_path):
        doc = {
            "format_version": 1,
            "family": "clayton",
            "nodes": [{"id": 0, "n": 100, "theta": 2.0, "tau": 0.5, "loglik": 10.0}],
            "covariates": [{"name": "g", "kind": "cat", "levels": ["a", "b"]}],
        }
        tree_path = tmp_path / "tree.json"
        tree_path.write_text(json.dumps(doc))
        cov = tmp_path / "cov.csv"
        cov.write_text("g\na\nb\nzzz\n")  # includes an unseen level
        out = tmp_path / "pred.csv"
        assert main(["predict", "--tree", str(tree_path), "--input", str(cov), "--out", str(out)]) == EXIT_OK
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 3
        assert {r["tau"] for r in rows} == {"0.5"}

    def test_unseen_level_routes_right(self, fit_csv, tmp_path):
        out = tmp_path / "fit"
        assert run_fit(fit_csv, out) == EXIT_OK
        doc = json.loads((out / "tree.json").read_text())
        if "rule" not in doc["nodes"][0]:
            pytest.skip("single-leaf tree at this seed")
        cov = tmp_path / "cov.csv"
        cov.write_text("x_g:cat,x_z:num\nnever-seen,0.5\n")
        pred = tmp_path / "p.csv"
        assert main(["predict", "--tree", str(out / "tree.json"), "--input", str(cov), "--out", str(pred)]) == EXIT_OK
        row = list(csv.DictReader(open(pred)))[0]
        right_id = doc["nodes"][0]["right"]
        by_id = {e["id"]: e for e in doc["nodes"]}
        node = by_id[right_id]
        while "rule" in node:
            node = by_id[node["right"]] if node["rule"]["kind"] == "cat" else by_id[node["left"]]
        assert int(row["leaf_id"]) in {e["id"] for e in doc["nodes"] if "rule" not in e}

    def test_missing_covariate_schema_exit(self, fit_csv, tmp_path):
        out = tmp_path / "fit"
        assert run_fit(fit_csv, out) == EXIT_OK
        cov = tmp_path / "cov.csv"
        cov.write_text("x_other:num\n1.0\n")
        rc = main(["predict", "--tree", str(out / "tree.json"), "--input", str(cov), "--out", str(tmp_path / "p.csv")])
        assert rc == EXIT_SCHEMA


class TestSimulate:
    def test_smoke_and_summary_columns(self, tmp_path):
        out = tmp_path / "sim"
        rc = main(["simulate", "--families", "clayton", "--surfaces", "step",
                   "--sources", "U", "--reps", "2", "--n", "400", "--seed", "9",
                   "--repeats", "1", "--out", str(out)])
        assert rc == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        cell = summary["cells"][0]
        assert {"mse_tau", "mse_copula", "loglik", "n_splits"} <= set(cell)
        rows = list(csv.reader(open(out / "records.tsv"), delimiter="\t"))
        assert rows[0] == ["format_version", "1"]

    def test_paper_preset_config_echo(self, tmp_path):
        out = tmp_path / "paper"
        rc = main(["simulate", "--scale", "paper", "--seed", "1", "--out", str(out), "--dry-run"])
        assert rc == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["n_reps"] == 500
        assert summary["config"]["n"] == 1000

    def test_invalid_family_exit(self, tmp_path):
        rc = main(["simulate", "--families", "gauss", "--seed", "1", "--out", str(tmp_path / "x")])
        assert rc == EXIT_CONFIG


@pytest.fixture(scope="module")
def fixture_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("flu") / "weekly.csv"
    write_flu_fixture_csv(path, seed=7, n_units=30, n_seasons=6, shift_season=3)
    return path


class TestFlu:
    def test_pipeline_and_determinism(self, fixture_csv, tmp_path):
        out1, out2 = tmp_path / "f1", tmp_path / "f2"
        args = ["flu", "--input", str(fixture_csv), "--seed", "3", "--repeats", "5",
                "--min-leaf", "25"]
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert main(args + ["--out", str(out2)]) == EXIT_OK
        for name in os.listdir(out1):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        report = (out1 / "leaf_report.tsv").read_text().splitlines()
        assert report[1].split("\t") == ["leaf_id", "n", "tau", "theta", "loglik", "rules"]

    def test_conditional_beats_single_copula(self, fixture_csv, tmp_path):
        out = tmp_path / "f"
        assert main(["flu", "--input", str(fixture_csv), "--seed", "3",
                     "--repeats", "5", "--min-leaf", "25", "--out", str(out)]) == EXIT_OK
        rows = list(csv.reader(open(out / "prune_path.tsv"), delimiter="\t"))[2:]
        lls = {int(r[0]): float(r[1]) for r in rows}
        assert max(lls.values()) >= lls[1]

    def test_empty_after_filter(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text(
            "unit_id,iso_week,count_h1,count_h3,count_b\n"
            "u1,2015-W20,3,4,5\n"
        )
        rc = main(["flu", "--input", str(path), "--seed", "1", "--out", str(tmp_path / "o")])
        assert rc == EXIT_SCHEMA

    def test_malformed_week_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "unit_id,iso_week,count_h1,count_h3,count_b\n"
            "u1,2015/20,30,30,30\n"
        )
        rc = main(["flu", "--input", str(path), "--seed", "1", "--out", str(tmp_path / "o")])
        assert rc == EXIT_SCHEMA
