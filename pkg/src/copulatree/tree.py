"""Conditional copula estimation by log-likelihood regression trees.

The covariate space is partitioned by recursive binary splits; every node
carries the maximum-likelihood copula fit of the pseudo-observations
routed to it.  A split's gain is the summed child log-likelihood minus
the parent log-likelihood, and the maximal tree is grown breadth first
from a work list until the stopping rules bite.

Numeric features test midpoints between consecutive distinct observed
values (optionally capped to an evenly spaced subset for large nodes).
Categorical features are ordered by the per-level fitted parameter and
only the contiguous cuts of that ordering are tested; levels too sparse
to fit are first merged into the level with the closest response-rank
mean.  Ties are broken by (feature index, threshold / shortest left set),
so the search result does not depend on row or evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .copulas import CopulaSpec, FitResult, fit_mle
from .copulas import log_density as _log_density
from .data import CATEGORICAL, NUMERIC, Column, Dataset, PseudoObservations
from .errors import ConfigError, SchemaError

__all__ = [
    "SplitRule",
    "TreeNode",
    "CopulaTree",
    "StoppingConfig",
    "ColumnSchema",
    "node_fit",
    "order_modalities",
    "find_optimal_split",
    "build_maximal_tree",
    "tree_loglik",
    "calibrate_min_gain",
]


@dataclass(frozen=True)
class StoppingConfig:
    """Growth limits for the maximal tree.

    ``max_candidates`` optionally caps the number of numeric thresholds
    examined per node (evenly spaced over the admissible midpoints); the
    search stays exhaustive whenever the node has no more distinct values
    than the cap.
    """

    min_leaf: int = 50
    min_gain: float = 0.0
    max_leaves: int = 32
    min_fit_n: int = 10
    max_candidates: int | None = None

    def __post_init__(self):
        if self.min_leaf < self.min_fit_n:
            raise ConfigError("min_leaf must be >= min_fit_n")
        if self.min_gain < 0 and not math.isinf(self.min_gain):
            raise ConfigError("min_gain must be >= 0")
        if self.max_leaves < 1:
            raise ConfigError("max_leaves must be >= 1")


@dataclass(frozen=True)
class SplitRule:
    """Routing rule of an internal node.

    Numeric: rows with value <= threshold go left.  Categorical: rows
    whose level code is in ``left_levels`` go left; anything else,
    including levels unseen at fit time, goes right.
    """

    feature: int
    threshold: float | None = None
    left_levels: frozenset[int] | None = None

    @property
    def is_numeric(self) -> bool:
        return self.threshold is not None


@dataclass
class TreeNode:
    id: int
    fit: FitResult
    depth: int = 0
    rule: SplitRule | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    levels: tuple[str, ...] | None = None


def schema_of(data: Dataset) -> tuple[ColumnSchema, ...]:
    return tuple(ColumnSchema(c.name, c.kind, c.levels) for c in data.covariates)


@dataclass
class CopulaTree:
    spec: CopulaSpec
    root: TreeNode
    schema: tuple[ColumnSchema, ...]
    stopping: StoppingConfig

    def nodes(self) -> list[TreeNode]:
        """All nodes in id order."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.extend([node.right, node.left])
        return sorted(out, key=lambda n: n.id)

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes() if n.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def predict_row(self, x) -> tuple[float, float, int]:
        """(theta, tau, leaf id) for a single covariate vector.

        ``x`` holds one entry per schema column: a float for numeric
        columns, an integer level code for categorical ones (use -1 for
        levels absent from the level table).
        """
        if len(x) != len(self.schema):
            raise SchemaError(f"expected {len(self.schema)} covariates, got {len(x)}")
        node = self.root
        while not node.is_leaf:
            rule = node.rule
            val = x[rule.feature]
            if rule.is_numeric:
                node = node.left if float(val) <= rule.threshold else node.right
            else:
                node = node.left if int(val) in rule.left_levels else node.right
        return node.fit.theta_hat, node.fit.tau_hat, node.id

    def assign(self, data: Dataset) -> np.ndarray:
        """Vectorised leaf-id assignment for every row of ``data``."""
        _check_schema(self, data)
        n = data.n
        out = np.empty(n, dtype=np.int64)
        stack = [(self.root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.id
                continue
            rule = node.rule
            col = data.covariates[rule.feature]
            vals = col.values[idx]
            if rule.is_numeric:
                go_left = vals <= rule.threshold
            else:
                go_left = np.isin(vals, list(rule.left_levels))
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(theta, tau, leaf id) arrays for every row of ``data``."""
        leaf_ids = self.assign(data)
        by_id = {n.id: n for n in self.leaves()}
        theta = np.array([by_id[i].fit.theta_hat for i in leaf_ids])
        tau = np.array([by_id[i].fit.tau_hat for i in leaf_ids])
        return theta, tau, leaf_ids


def _check_schema(tree: CopulaTree, data: Dataset) -> None:
    if len(data.covariates) != len(tree.schema):
        raise SchemaError(
            f"dataset has {len(data.covariates)} covariates, tree expects {len(tree.schema)}"
        )
    for col, sch in zip(data.covariates, tree.schema):
        if col.kind != sch.kind:
            raise SchemaError(f"column {col.name}: kind {col.kind} != schema {sch.kind}")


# ---------------------------------------------------------------------------
# node-level operations


def node_fit(spec: CopulaSpec, pseudo: PseudoObservations, rows=None, min_fit_n: int = 10) -> FitResult:
    """MLE fit of the rows at a node (delegates to copulas.fit_mle)."""
    uv = pseudo.values if rows is None else pseudo.values[rows]
    return fit_mle(spec, uv, min_fit_n=min_fit_n)


def order_modalities(
    spec: CopulaSpec,
    pseudo: PseudoObservations,
    data: Dataset,
    feature: int,
    rows=None,
    min_fit_n: int = 10,
) -> list[tuple[int, ...]]:
    """Order the observed levels of a categorical feature by fitted theta.

    Levels with fewer than ``min_fit_n`` rows are merged into the level
    group with the closest within-node response-rank mean before fitting.
    Returns level-code groups sorted ascending by the group theta_hat
    (ties by the lowest level code in the group).
    """
    col = data.covariates[feature]
    if col.kind != CATEGORICAL:
        raise ConfigError(f"feature {feature} ({col.name}) is not categorical")
    idx = np.arange(data.n) if rows is None else np.asarray(rows)
    codes = col.values[idx]
    uv = pseudo.values[idx]
    # merge key: mean over both response columns of the within-node ranks
    rank_mean = (rankdata(uv[:, 0]) + rankdata(uv[:, 1])) / (2.0 * (len(idx) + 1))

    groups: list[list[int]] = [[int(c)] for c in np.unique(codes)]

    def group_stats(group):
        mask = np.isin(codes, group)
        return int(mask.sum()), float(rank_mean[mask].mean())

    while len(groups) > 1:
        stats = [group_stats(g) for g in groups]
        sparse = [i for i, (cnt, _) in enumerate(stats) if cnt < min_fit_n]
        if not sparse:
            break
        i = min(sparse, key=lambda i: (stats[i][0], groups[i][0]))
        others = [j for j in range(len(groups)) if j != i]
        j = min(others, key=lambda j: (abs(stats[j][1] - stats[i][1]), groups[j][0]))
        merged = sorted(groups[i] + groups[j])
        groups = [g for k, g in enumerate(groups) if k not in (i, j)] + [merged]
        groups.sort(key=lambda g: g[0])

    fitted = []
    for g in groups:
        mask = np.isin(codes, g)
        if mask.sum() >= min_fit_n:
            theta = fit_mle(spec, uv[mask], min_fit_n=min_fit_n).theta_hat
        else:  # single under-sized group left: order degenerates
            theta = 0.0
        fitted.append((theta, g[0], tuple(g)))
    fitted.sort(key=lambda t: (t[0], t[1]))
    return [g for _, _, g in fitted]


@dataclass(frozen=True)
class _Candidate:
    rule: SplitRule
    gain: float
    left_fit: FitResult
    right_fit: FitResult
    left_rows: np.ndarray = field(repr=False)
    right_rows: np.ndarray = field(repr=False)


def _numeric_split_positions(xs: np.ndarray, min_leaf: int, cap: int | None):
    """Admissible cut positions (split after sorted index p) and thresholds."""
    n = len(xs)
    boundary = np.nonzero(xs[:-1] < xs[1:])[0]  # xs sorted ascending
    ok = boundary[(boundary + 1 >= min_leaf) & (n - boundary - 1 >= min_leaf)]
    if cap is not None and len(ok) > cap:
        pick = np.unique(np.round(np.linspace(0, len(ok) - 1, cap)).astype(int))
        ok = ok[pick]
    return ok, 0.5 * (xs[ok] + xs[ok + 1])


def find_optimal_split(
    spec: CopulaSpec,
    pseudo: PseudoObservations,
    data: Dataset,
    stopping: StoppingConfig,
    rows=None,
    parent_fit: FitResult | None = None,
) -> _Candidate | None:
    """Best admissible split of a node, or None when nothing improves.

    The candidate maximising gain = loglik(left) + loglik(right) -
    loglik(parent) is returned only if gain > stopping.min_gain.
    """
    idx = np.arange(data.n) if rows is None else np.asarray(rows)
    if len(idx) < 2 * stopping.min_leaf:
        return None
    if parent_fit is None:
        parent_fit = node_fit(spec, pseudo, idx, stopping.min_fit_n)

    best: _Candidate | None = None

    def consider(rule, left_rows, right_rows):
        nonlocal best
        lf = fit_mle(spec, pseudo.values[left_rows], min_fit_n=stopping.min_fit_n)
        rf = fit_mle(spec, pseudo.values[right_rows], min_fit_n=stopping.min_fit_n)
        gain = lf.loglik + rf.loglik - parent_fit.loglik
        if best is None or gain > best.gain:
            best = _Candidate(rule, gain, lf, rf, left_rows, right_rows)

    for j, col in enumerate(data.covariates):
        if col.kind == NUMERIC:
            x = col.values[idx]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            positions, thresholds = _numeric_split_positions(
                xs, stopping.min_leaf, stopping.max_candidates
            )
            for p, s in zip(positions, thresholds):
                consider(
                    SplitRule(j, threshold=float(s)),
                    idx[order[: p + 1]],
                    idx[order[p + 1 :]],
                )
        else:
            groups = order_modalities(spec, pseudo, data, j, idx, stopping.min_fit_n)
            if len(groups) < 2:
                continue
            codes = col.values[idx]
            for cut in range(1, len(groups)):
                left_set = frozenset(c for g in groups[:cut] for c in g)
                mask = np.isin(codes, list(left_set))
                n_left = int(mask.sum())
                if n_left < stopping.min_leaf or len(idx) - n_left < stopping.min_leaf:
                    continue
                consider(SplitRule(j, left_levels=left_set), idx[mask], idx[~mask])

    if best is None or not best.gain > stopping.min_gain:
        return None
    return best


def build_maximal_tree(
    spec: CopulaSpec,
    pseudo: PseudoObservations,
    data: Dataset,
    stopping: StoppingConfig = StoppingConfig(),
) -> CopulaTree:
    """Grow the maximal tree breadth first from a FIFO work list."""
    if pseudo.values.shape[0] != data.n:
        raise SchemaError("pseudo-observations and dataset are not row aligned")
    root = TreeNode(0, node_fit(spec, pseudo, None, stopping.min_fit_n))
    queue: list[tuple[TreeNode, np.ndarray]] = [(root, np.arange(data.n))]
    n_terminal = 1
    next_id = 1
    while queue:
        node, idx = queue.pop(0)
        if n_terminal >= stopping.max_leaves:
            continue
        cand = find_optimal_split(spec, pseudo, data, stopping, idx, node.fit)
        if cand is None:
            continue
        node.rule = cand.rule
        node.left = TreeNode(next_id, cand.left_fit, node.depth + 1)
        node.right = TreeNode(next_id + 1, cand.right_fit, node.depth + 1)
        next_id += 2
        n_terminal += 1
        queue.append((node.left, cand.left_rows))
        queue.append((node.right, cand.right_rows))
    return CopulaTree(spec, root, schema_of(data), stopping)


def tree_loglik(tree: CopulaTree, pseudo: PseudoObservations, data: Dataset) -> float:
    """Summed log-density of rows under their leaf parameters."""
    leaf_ids = tree.assign(data)
    total = 0.0
    for leaf in tree.leaves():
        mask = leaf_ids == leaf.id
        if not mask.any():
            continue
        uv = pseudo.values[mask]
        total += float(np.sum(_log_density(tree.spec, leaf.fit.theta_hat, uv[:, 0], uv[:, 1])))
    return total


def calibrate_min_gain(
    spec: CopulaSpec,
    pseudo: PseudoObservations,
    data: Dataset,
    stopping: StoppingConfig,
    n_permutations: int = 40,
    alpha: float = 0.05,
    seed=0,
) -> float:
    """Permutation-null calibration of min_gain.

    Permuting the pseudo-observation rows against the covariates destroys
    any covariate effect; the (1 - alpha) quantile of the best root gain
    over those permutations is a noise floor for accepting splits.
    """
    rng = np.random.default_rng(seed)
    null_stopping = StoppingConfig(
        min_leaf=stopping.min_leaf,
        min_gain=-math.inf,
        max_leaves=stopping.max_leaves,
        min_fit_n=stopping.min_fit_n,
        max_candidates=stopping.max_candidates,
    )
    gains = []
    for _ in range(n_permutations):
        perm = rng.permutation(data.n)
        shuffled = PseudoObservations(pseudo.values[perm], pseudo.method)
        cand = find_optimal_split(spec, shuffled, data, null_stopping)
        gains.append(0.0 if cand is None else max(cand.gain, 0.0))
    # conservative empirical quantile: next order statistic up, never interpolated
    return float(np.quantile(np.asarray(gains), 1.0 - alpha, method="higher"))
