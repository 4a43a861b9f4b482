"""Weakest-link pruning and cross-validated subtree selection.

The penalised criterion (average training log-likelihood minus lambda
times the leaf count) is maximised over a *nested* path of subtrees: at
each step the internal node with the smallest per-extra-leaf
log-likelihood gain collapses, exactly the Breiman error-complexity
construction transposed to log-likelihood units.  The path realises the
property that the best K-leaf subtree is contained in the best
(K+1)-leaf subtree, so the penalised optimum never requires enumerating
all subtrees.

Lambda itself is not chosen directly: repeated k-fold cross-validation
scores every path size by held-out log-likelihood and either the mean
maximiser (MaxMean) or the one-standard-error rule (OneSE, Breiman's
rule) picks the leaf count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .copulas import CopulaSpec
from .data import Dataset, PseudoObservations
from .errors import ConfigError, InsufficientDataError
from .tree import (
    CopulaTree,
    StoppingConfig,
    TreeNode,
    build_maximal_tree,
    tree_loglik,
)

__all__ = [
    "PathEntry",
    "PrunePath",
    "CvReport",
    "prune_path",
    "select_penalized",
    "cross_validate",
    "fit_pruned_tree",
    "lambda_intervals",
]


@dataclass(frozen=True)
class PathEntry:
    tree: CopulaTree
    k: int
    train_loglik: float


@dataclass(frozen=True)
class PrunePath:
    """Nested subtrees with strictly decreasing leaf counts down to 1."""

    entries: tuple[PathEntry, ...]
    n: int

    def entry_for_k(self, k: int) -> PathEntry:
        """Entry with the largest leaf count <= k."""
        ok = [e for e in self.entries if e.k <= k]
        if not ok:
            return self.entries[-1]
        return max(ok, key=lambda e: e.k)

    @property
    def k_values(self) -> list[int]:
        return [e.k for e in self.entries]


def _walk(node: TreeNode):
    stack = [node]
    while stack:
        nd = stack.pop()
        yield nd
        if not nd.is_leaf:
            stack.extend([nd.right, nd.left])


def _copy_pruned(node: TreeNode, leafset: frozenset[int]) -> TreeNode:
    if node.id in leafset or node.is_leaf:
        return TreeNode(node.id, node.fit, node.depth)
    new = TreeNode(node.id, node.fit, node.depth, node.rule)
    new.left = _copy_pruned(node.left, leafset)
    new.right = _copy_pruned(node.right, leafset)
    return new


def prune_path(tree: CopulaTree, pseudo=None, data=None) -> PrunePath:
    """Iterative weakest-link collapse recording every distinct leaf count.

    At each step the internal node minimising

        g(t) = (loglik(subtree at t) - loglik(t as leaf)) / (leaves(t) - 1)

    collapses; ties collapse the deepest node first, then the lowest id.
    Training log-likelihoods come from the fits stored at build time.
    """
    by_id = {nd.id: nd for nd in _walk(tree.root)}
    leafset = frozenset(nd.id for nd in _walk(tree.root) if nd.is_leaf)

    def leaves_under(node):
        if node.id in leafset or node.is_leaf:
            return [node.id]
        return leaves_under(node.left) + leaves_under(node.right)

    def snapshot():
        return PathEntry(
            CopulaTree(tree.spec, _copy_pruned(tree.root, leafset), tree.schema, tree.stopping),
            len(leafset),
            sum(by_id[i].fit.loglik for i in sorted(leafset)),
        )

    entries = [snapshot()]
    n = tree.root.fit.n_obs
    while len(leafset) > 1:
        candidates = []
        for nd in _walk(tree.root):
            if nd.is_leaf or nd.id in leafset:
                continue
            under = leaves_under(nd)
            if not all(i in leafset for i in under):
                continue
            gain = sum(by_id[i].fit.loglik for i in sorted(under)) - nd.fit.loglik
            g = gain / (len(under) - 1)
            candidates.append((g, -nd.depth, nd.id, under))
        g, _, nid, under = min(candidates)
        leafset = (leafset - set(under)) | {nid}
        entries.append(snapshot())
    return PrunePath(tuple(entries), n)


def select_penalized(path: PrunePath, lam: float, n: int | None = None) -> PathEntry:
    """Path entry maximising train_loglik/n - lam * K; ties favour smaller K."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    n = path.n if n is None else n
    best = None
    for entry in sorted(path.entries, key=lambda e: e.k):
        score = entry.train_loglik / n - lam * entry.k
        if best is None or score > best[0]:
            best = (score, entry)
    return best[1]


def lambda_intervals(path: PrunePath, n: int | None = None) -> dict[int, tuple[float, float]]:
    """For each K on the penalised-selection envelope, the lambda interval
    over which that entry is the maximiser (half-open, increasing lambda).

    Each entry defines the line loglik/n - K * lambda; the intervals are
    the upper-envelope segments, walked structurally from K_max down to 1
    so every step strictly decreases K (no fixed-point hazards).
    """
    n = path.n if n is None else n
    entries = sorted(path.entries, key=lambda e: e.k, reverse=True)
    out: dict[int, tuple[float, float]] = {}
    lam = 0.0
    cur = select_penalized(path, 0.0, n)
    while True:
        smaller = [e for e in entries if e.k < cur.k]
        if not smaller:
            out[cur.k] = (lam, math.inf)
            return out
        crossings = [
            ((cur.train_loglik - e.train_loglik) / (n * (cur.k - e.k)), e)
            for e in smaller
        ]
        crit = min(c for c, _ in crossings)
        # beyond a shared crossing the smallest-K line wins (flattest slope)
        nxt = min((e for c, e in crossings if c == crit), key=lambda e: e.k)
        crit = max(crit, lam)
        if crit > lam:
            out[cur.k] = (lam, crit)
        lam = crit
        cur = nxt


@dataclass(frozen=True)
class CvReport:
    """Per-leaf-count validation log-likelihood across folds x repeats."""

    k_values: tuple[int, ...]
    mean_loglik: dict[int, float]
    se_loglik: dict[int, float]
    n_scores: int
    chosen_k: int
    lambda_interval: tuple[float, float]
    rule: str
    folds: int
    repeats: int
    seed: int
    notes: tuple[str, ...] = field(default=())


def cross_validate(
    spec: CopulaSpec,
    pseudo: PseudoObservations,
    data: Dataset,
    folds: int = 3,
    repeats: int = 10,
    seed: int = 0,
    rule: str = "OneSE",
    stopping: StoppingConfig = StoppingConfig(),
    path: PrunePath | None = None,
) -> CvReport:
    """Repeated k-fold choice of the pruned size; deterministic given seed.

    Every fold grows its own maximal tree and prune path on the training
    portion and scores each path subtree by held-out log-likelihood.
    Leaf counts absent from a fold's path contribute that path's nearest
    smaller entry.  ``rule`` is MaxMean or OneSE; the chosen K is snapped
    to the full-data path (built here unless supplied).
    """
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if rule not in ("MaxMean", "OneSE"):
        raise ConfigError(f"unknown CV rule {rule!r}")
    n = data.n
    if n < folds * 2 * stopping.min_leaf:
        raise InsufficientDataError(
            f"need at least folds * 2 * min_leaf = {folds * 2 * stopping.min_leaf} rows, got {n}"
        )
    if path is None:
        full_tree = build_maximal_tree(spec, pseudo, data, stopping)
        path = prune_path(full_tree)

    scores: list[dict[int, float]] = []
    for rep in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))
        perm = rng.permutation(n)
        chunks = np.array_split(perm, folds)
        for f in range(folds):
            val_idx = np.sort(chunks[f])
            train_idx = np.sort(np.concatenate([chunks[g] for g in range(folds) if g != f]))
            train_pseudo = PseudoObservations(pseudo.values[train_idx], pseudo.method)
            train_data = data.subset(train_idx)
            fold_tree = build_maximal_tree(spec, train_pseudo, train_data, stopping)
            fold_path = prune_path(fold_tree)
            val_pseudo = PseudoObservations(pseudo.values[val_idx], pseudo.method)
            val_data = data.subset(val_idx)
            scores.append(
                {e.k: tree_loglik(e.tree, val_pseudo, val_data) for e in fold_path.entries}
            )

    ks = sorted({k for sc in scores for k in sc} | set(path.k_values))
    mean, se = {}, {}
    for k in ks:
        vals = []
        for sc in scores:
            avail = [kk for kk in sc if kk <= k]
            vals.append(sc[max(avail)] if avail else sc[min(sc)])
        arr = np.asarray(vals)
        mean[k] = float(arr.mean())
        se[k] = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0

    k_best = min(ks, key=lambda k: (-mean[k], k))
    if rule == "MaxMean":
        chosen = k_best
    else:
        floor = mean[k_best] - se[k_best]
        chosen = min(k for k in ks if mean[k] >= floor)
    chosen = path.entry_for_k(chosen).k

    intervals = lambda_intervals(path)
    lam_int = intervals.get(chosen, (math.nan, math.nan))
    notes = () if chosen in intervals else ("chosen_k_off_envelope",)
    return CvReport(
        k_values=tuple(ks),
        mean_loglik=mean,
        se_loglik=se,
        n_scores=len(scores),
        chosen_k=chosen,
        lambda_interval=lam_int,
        rule=rule,
        folds=folds,
        repeats=repeats,
        seed=seed,
        notes=notes,
    )


def fit_pruned_tree(
    spec: CopulaSpec,
    pseudo: PseudoObservations,
    data: Dataset,
    stopping: StoppingConfig = StoppingConfig(),
    folds: int = 3,
    repeats: int = 10,
    seed: int = 0,
    rule: str = "OneSE",
) -> tuple[CopulaTree, PrunePath, CvReport, CopulaTree]:
    """Maximal tree, its prune path, the CV report and the selected subtree."""
    maximal = build_maximal_tree(spec, pseudo, data, stopping)
    path = prune_path(maximal)
    report = cross_validate(
        spec, pseudo, data, folds, repeats, seed, rule, stopping, path=path
    )
    return maximal, path, report, path.entry_for_k(report.chosen_k).tree
