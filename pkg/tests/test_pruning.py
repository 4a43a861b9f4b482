"""Tests for weakest-link pruning and cross-validated selection."""

import numpy as np
import pytest

from copulatree import copulas as cp
from copulatree import pruning as pr
from copulatree import tree as tr
from copulatree.data import Dataset, PseudoObservations, numeric_column
from copulatree.errors import ConfigError, InsufficientDataError

CLAYTON = cp.spec_for("clayton")
STOP16 = tr.StoppingConfig(min_leaf=50, max_candidates=16)


def step_tree(n=1000, seed=0, stopping=STOP16):
    from copulatree import simulation as sim

    ds = sim.generate(sim.ScenarioSpec("clayton", "step", n, seed))
    data = Dataset(
        np.zeros((n, 2)),
        (numeric_column("x1", ds.x[:, 0]), numeric_column("x2", ds.x[:, 1])),
    )
    pseudo = PseudoObservations(ds.u, "t")
    return tr.build_maximal_tree(CLAYTON, pseudo, data, stopping), pseudo, data


def null_dataset(n, seed):
    # covariates and responses from independent streams: no signal at all
    ss_uv, ss_x = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(ss_x)
    uv = cp.sample(CLAYTON, cp.tau_to_theta(CLAYTON, 0.45), n, ss_uv)
    data = Dataset(
        np.zeros((n, 2)),
        (numeric_column("x1", rng.random(n)), numeric_column("x2", rng.random(n))),
    )
    return PseudoObservations(uv, "t"), data


def enumerate_best_per_k(tree):
    """Brute force: best summed leaf loglik over ALL pruned subtrees per K."""
    by_id = {nd.id: nd for nd in tree.nodes()}

    def subtrees(node):
        if node.is_leaf:
            return [frozenset([node.id])]
        out = [frozenset([node.id])]
        for l in subtrees(node.left):
            for r in subtrees(node.right):
                out.append(l | r)
        return out

    best = {}
    for leafset in subtrees(tree.root):
        k = len(leafset)
        ll = sum(by_id[i].fit.loglik for i in sorted(leafset))
        if k not in best or ll > best[k]:
            best[k] = ll
    return best


class TestPrunePath:
    def test_single_leaf_tree(self):
        uv = cp.sample(CLAYTON, 2.0, 80, 1)
        data = Dataset(np.zeros((80, 2)), (numeric_column("x", np.linspace(0, 1, 80)),))
        tree = tr.build_maximal_tree(CLAYTON, PseudoObservations(uv, "t"), data, tr.StoppingConfig(min_leaf=50))
        path = pr.prune_path(tree)
        assert len(path.entries) == 1 and path.entries[0].k == 1

    def test_k_strictly_decreasing_and_root_terminal(self):
        tree, _, _ = step_tree(seed=11)
        path = pr.prune_path(tree)
        ks = path.k_values
        assert all(a > b for a, b in zip(ks, ks[1:]))
        assert ks[-1] == 1
        assert path.entries[-1].train_loglik == pytest.approx(tree.root.fit.loglik)

    def test_nesting_by_node_ids(self):
        tree, _, _ = step_tree(seed=12)
        path = pr.prune_path(tree)
        id_sets = [set(nd.id for nd in e.tree.nodes()) for e in path.entries]
        assert all(later <= earlier for earlier, later in zip(id_sets, id_sets[1:]))

    def test_per_k_optimal_vs_enumeration(self):
        for seed in range(5):
            tree, _, _ = step_tree(
                n=600, seed=100 + seed,
                stopping=tr.StoppingConfig(min_leaf=60, max_leaves=9, max_candidates=10),
            )
            if tree.n_leaves > 10:
                continue
            best = enumerate_best_per_k(tree)
            path = pr.prune_path(tree)
            for entry in path.entries:
                assert entry.train_loglik == pytest.approx(best[entry.k], abs=1e-9)

    def test_train_loglik_monotone_in_k(self):
        tree, _, _ = step_tree(seed=13)
        path = pr.prune_path(tree)
        lls = [e.train_loglik for e in path.entries]
        assert all(a >= b for a, b in zip(lls, lls[1:]))


class TestSelectPenalized:
    def test_endpoints(self):
        tree, _, _ = step_tree(seed=21)
        path = pr.prune_path(tree)
        assert pr.select_penalized(path, 0.0).k == max(path.k_values)
        span = (max(e.train_loglik for e in path.entries) - path.entries[-1].train_loglik) / path.n
        assert pr.select_penalized(path, span + 1e-9).k == 1

    def test_interval_midpoint_returns_that_k(self):
        tree, _, _ = step_tree(seed=22)
        path = pr.prune_path(tree)
        intervals = pr.lambda_intervals(path)
        assert 4 in intervals  # the four-cell step structure is on the envelope
        lo, hi = intervals[4]
        assert pr.select_penalized(path, 0.5 * (lo + hi)).k == 4

    def test_monotone_in_lambda(self):
        tree, _, _ = step_tree(seed=23)
        path = pr.prune_path(tree)
        ks = [pr.select_penalized(path, lam).k for lam in np.linspace(0, 0.2, 41)]
        assert all(a >= b for a, b in zip(ks, ks[1:]))

    def test_negative_lambda_rejected(self):
        tree, _, _ = step_tree(seed=24)
        path = pr.prune_path(tree)
        with pytest.raises(ConfigError):
            pr.select_penalized(path, -0.1)

    def test_lambda_intervals_terminate_on_degenerate_paths(self):
        # collinear and tied log-likelihoods give coincident crossings;
        # the envelope walk must still strictly descend in K
        from copulatree.copulas import FitResult
        from copulatree.tree import CopulaTree, StoppingConfig, TreeNode

        def entry(k, ll):
            fit = FitResult(1.0, 1 / 3, ll, 100, True)
            tree = CopulaTree(CLAYTON, TreeNode(0, fit), (), StoppingConfig())
            return pr.PathEntry(tree, k, ll)

        for lls in ([5.0, 4.0, 3.0, 2.0], [5.0, 5.0, 5.0, 1.0], [5.0, 4.999999999, 3.0, 0.0]):
            path = pr.PrunePath(tuple(entry(k, ll) for k, ll in zip([7, 5, 3, 1], lls)), 100)
            intervals = pr.lambda_intervals(path)
            assert 1 in intervals and intervals[1][1] == np.inf
            ks = list(intervals)
            assert all(a > b for a, b in zip(ks, ks[1:]))
            lo_hi = list(intervals.values())
            assert all(lo < hi for lo, hi in lo_hi)


class TestCrossValidate:
    def test_determinism(self):
        _, pseudo, data = step_tree(seed=31)
        a = pr.cross_validate(CLAYTON, pseudo, data, folds=3, repeats=2, seed=5, stopping=STOP16)
        b = pr.cross_validate(CLAYTON, pseudo, data, folds=3, repeats=2, seed=5, stopping=STOP16)
        assert a == b

    def test_chosen_k_in_path_and_finite_ses(self):
        tree, pseudo, data = step_tree(seed=32)
        path = pr.prune_path(tree)
        rep = pr.cross_validate(
            CLAYTON, pseudo, data, folds=3, repeats=1, seed=6, stopping=STOP16, path=path
        )
        assert rep.chosen_k in path.k_values
        assert all(se >= 0 and np.isfinite(se) for se in rep.se_loglik.values())

    def test_null_data_one_se_picks_root(self):
        picks = []
        for seed in range(3):
            pseudo, data = null_dataset(600, 40 + seed)
            rep = pr.cross_validate(
                CLAYTON, pseudo, data, folds=3, repeats=10, seed=seed,
                rule="OneSE", stopping=tr.StoppingConfig(min_leaf=50, max_candidates=8),
            )
            picks.append(rep.chosen_k)
        assert picks.count(1) >= 2

    def test_scenario_recovers_four_to_six_leaves(self):
        hits = 0
        for seed in range(5):
            _, pseudo, data = step_tree(seed=500 + seed)
            rep = pr.cross_validate(
                CLAYTON, pseudo, data, folds=3, repeats=10, seed=seed,
                rule="MaxMean", stopping=STOP16,
            )
            if rep.chosen_k in (4, 5, 6):
                hits += 1
        assert hits >= 4

    def test_insufficient_data(self):
        pseudo, data = null_dataset(200, 50)
        with pytest.raises(InsufficientDataError):
            pr.cross_validate(CLAYTON, pseudo, data, folds=3, repeats=1, seed=0, stopping=STOP16)

    def test_bad_rule_and_folds(self):
        pseudo, data = null_dataset(600, 51)
        with pytest.raises(ConfigError):
            pr.cross_validate(CLAYTON, pseudo, data, folds=1, repeats=1, seed=0)
        with pytest.raises(ConfigError):
            pr.cross_validate(CLAYTON, pseudo, data, rule="Wat", seed=0)


class TestFitPrunedTree:
    def test_pipeline_returns_selected_subtree(self):
        _, pseudo, data = step_tree(seed=61)
        maximal, path, report, subtree = pr.fit_pruned_tree(
            CLAYTON, pseudo, data, stopping=STOP16, folds=3, repeats=2, seed=9, rule="MaxMean"
        )
        assert subtree.n_leaves == report.chosen_k
        assert subtree.n_leaves <= maximal.n_leaves
        assert tr.tree_loglik(subtree, pseudo, data) >= path.entries[-1].train_loglik - 1e-9
