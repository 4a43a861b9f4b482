"""Pseudo-observation estimators: the once-and-for-all margin step.

Four ways to turn responses into estimated probability-integral
transforms, all clamped strictly inside (0, 1):

* ``pseudo_empirical``    -- global average ranks / (n + 1)
* ``pseudo_kernel``       -- covariate-weighted ECDF (product Gaussian kernel)
* ``pseudo_parametric_normal`` -- OLS mean, unit variance, normal CDF of residuals
* ``pseudo_discrete``     -- within-class average ranks for categorical covariates
* ``pseudo_margin_tree``  -- mixture of per-leaf ECDFs from a least-squares
  regression tree per response column, pruned by cross-validation

Ties always take average ranks; the rank denominator is (count + 1).
Nothing here is random except the margin-tree CV fold assignment, which
takes an explicit seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .data import CATEGORICAL, NUMERIC, Dataset, PseudoObservations
from .errors import ConfigError, RegressionError
from .tree import ColumnSchema, SplitRule, schema_of

__all__ = [
    "pseudo_empirical",
    "pseudo_kernel",
    "pseudo_parametric_normal",
    "pseudo_discrete",
    "pseudo_margin_tree",
    "MarginTree",
    "MarginTreeConfig",
]


def _column_ranks(y: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [rankdata(y[:, j], method="average") for j in range(y.shape[1])]
    )


def pseudo_empirical(data: Dataset) -> PseudoObservations:
    """Covariate-free baseline: per-column average ranks over (n + 1)."""
    vals = _column_ranks(data.responses) / (data.n + 1)
    return PseudoObservations(vals, "empirical")


def pseudo_kernel(data: Dataset, h: float, clamp_eps: float | None = None) -> PseudoObservations:
    """Kernel-weighted conditional ECDF with a product Gaussian kernel.

    The self term is included, so the weight denominator is never zero;
    the result is clamped to [clamp_eps, 1 - clamp_eps] (default 1/(2n)).
    """
    if h <= 0:
        raise ConfigError(f"bandwidth must be > 0, got {h}")
    if any(c.kind != NUMERIC for c in data.covariates):
        raise ConfigError("pseudo_kernel requires all covariates to be numeric")
    n = data.n
    eps = 1.0 / (2.0 * n) if clamp_eps is None else float(clamp_eps)
    x = np.column_stack([c.values for c in data.covariates]) if data.covariates else np.zeros((n, 1))
    diff = (x[:, None, :] - x[None, :, :]) / h
    logw = -0.5 * np.sum(diff * diff, axis=2)  # (i, l): log kernel up to const
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    denom = w.sum(axis=1)
    out = np.empty_like(data.responses)
    for j in range(data.k):
        yj = data.responses[:, j]
        below = yj[None, :] <= yj[:, None]  # (i, l) = 1{Y_l <= Y_i}
        out[:, j] = (w * below).sum(axis=1) / denom
    return PseudoObservations(np.clip(out, eps, 1.0 - eps), f"kernel(h={h})")


def pseudo_parametric_normal(data: Dataset, design=None) -> PseudoObservations:
    """Normal margins with OLS mean and variance fixed at one.

    ``design`` lists the covariate indices entering the linear mean
    (default: every numeric covariate).  The pseudo-observation is the
    standard normal CDF of the fitted residual.
    """
    if design is None:
        design = [i for i, c in enumerate(data.covariates) if c.kind == NUMERIC]
    cols = []
    for i in design:
        c = data.covariates[i]
        if c.kind != NUMERIC:
            raise ConfigError(f"design column {c.name} is not numeric")
        cols.append(c.values)
    xmat = np.column_stack([np.ones(data.n)] + cols)
    if data.n <= xmat.shape[1]:
        raise RegressionError(f"need more than {xmat.shape[1]} rows for the regression")
    if np.linalg.matrix_rank(xmat) < xmat.shape[1]:
        raise RegressionError("rank-deficient regression design")
    beta, *_ = np.linalg.lstsq(xmat, data.responses, rcond=None)
    resid = data.responses - xmat @ beta
    eps = 1.0 / (2.0 * data.n)
    return PseudoObservations(np.clip(ndtr(resid), eps, 1.0 - eps), "parametric_normal")


def pseudo_discrete(data: Dataset, grouping: dict | None = None) -> PseudoObservations:
    """Within-class average ranks for purely categorical covariates.

    Classes are groups of covariate-level combinations; ``grouping`` maps
    each observed combination (a tuple of level codes, or a bare code for
    a single covariate) to a class label.  Default: one class per
    observed combination.  Combinations missing from the map are a
    configuration error.
    """
    if not data.covariates or any(c.kind != CATEGORICAL for c in data.covariates):
        raise ConfigError("pseudo_discrete requires categorical covariates only")
    combos = list(zip(*[c.values.tolist() for c in data.covariates]))
    if grouping is None:
        labels = combos
    else:
        labels = []
        for combo in combos:
            key = combo if len(combo) > 1 else combo[0]
            if key not in grouping:
                raise ConfigError(f"grouping does not cover observed combination {key!r}")
            labels.append(grouping[key])
    class_index: dict = {}
    labels = np.array([class_index.setdefault(l, len(class_index)) for l in labels])
    out = np.empty_like(data.responses)
    for lab in np.unique(labels):
        mask = labels == lab
        block = data.responses[mask]
        out[mask] = _column_ranks(block) / (block.shape[0] + 1)
    return PseudoObservations(out, "discrete")


# ---------------------------------------------------------------------------
# least-squares margin trees


@dataclass(frozen=True)
class MarginTreeConfig:
    min_leaf: int = 20
    max_leaves: int = 32
    cv_folds: int = 5
    seed: int = 0


@dataclass
class _LsNode:
    id: int
    n: int
    mean: float
    sse: float
    depth: int = 0
    rule: SplitRule | None = None
    left: "_LsNode | None" = None
    right: "_LsNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


def _ls_find_split(y, data, idx, min_leaf):
    """Best SSE-reducing split; categorical levels ordered by mean response."""
    best = None  # (gain, rule, left_idx, right_idx, stats...)
    yv = y[idx]
    n = len(idx)
    sse_parent = float(np.sum((yv - yv.mean()) ** 2))

    def consider(rule, mask):
        nonlocal best
        n_left = int(mask.sum())
        if n_left < min_leaf or n - n_left < min_leaf:
            return
        yl, yr = yv[mask], yv[~mask]
        gain = sse_parent - float(np.sum((yl - yl.mean()) ** 2)) - float(np.sum((yr - yr.mean()) ** 2))
        if best is None or gain > best[0]:
            best = (gain, rule, idx[mask], idx[~mask])

    for j, col in enumerate(data.covariates):
        x = col.values[idx]
        if col.kind == NUMERIC:
            for s in _ls_thresholds(x, min_leaf):
                consider(SplitRule(j, threshold=s), x <= s)
        else:
            codes = np.unique(x)
            if len(codes) < 2:
                continue
            means = [float(yv[x == c].mean()) for c in codes]
            order = [int(c) for _, c in sorted(zip(means, codes))]
            for cut in range(1, len(order)):
                left = frozenset(order[:cut])
                consider(SplitRule(j, left_levels=left), np.isin(x, list(left)))

    if best is None or best[0] <= 0.0:
        return None
    return best


def _ls_thresholds(x, min_leaf):
    xs = np.sort(x)
    boundary = np.nonzero(xs[:-1] < xs[1:])[0]
    ok = boundary[(boundary + 1 >= min_leaf) & (len(xs) - boundary - 1 >= min_leaf)]
    return 0.5 * (xs[ok] + xs[ok + 1])


def _ls_grow(y, data, idx, config):
    yv = y[idx]
    root = _LsNode(0, len(idx), float(yv.mean()), float(np.sum((yv - yv.mean()) ** 2)))
    queue = [(root, idx)]
    n_terminal, next_id = 1, 1
    while queue:
        node, rows = queue.pop(0)
        if n_terminal >= config.max_leaves or len(rows) < 2 * config.min_leaf:
            continue
        found = _ls_find_split(y, data, rows, config.min_leaf)
        if found is None:
            continue
        _, rule, li, ri = found
        node.rule = rule
        for rows_child, attr in ((li, "left"), (ri, "right")):
            yc = y[rows_child]
            child = _LsNode(
                next_id, len(rows_child), float(yc.mean()),
                float(np.sum((yc - yc.mean()) ** 2)), node.depth + 1,
            )
            setattr(node, attr, child)
            next_id += 1
        n_terminal += 1
        queue.append((node.left, li))
        queue.append((node.right, ri))
    return root


def _ls_nodes(root):
    out, stack = [], [root]
    while stack:
        n = stack.pop()
        out.append(n)
        if not n.is_leaf:
            stack.extend([n.right, n.left])
    return out


def _ls_prune_path(root):
    """Weakest-link collapse on SSE; returns [(leaf_id_set, K, train_sse)]."""
    leafset = {n.id for n in _ls_nodes(root) if n.is_leaf}
    by_id = {n.id: n for n in _ls_nodes(root)}

    def leaves_under(node):
        if node.id in leafset or node.is_leaf:
            return [node.id]
        return leaves_under(node.left) + leaves_under(node.right)

    def record():
        return (frozenset(leafset), len(leafset), sum(by_id[i].sse for i in sorted(leafset)))

    path = [record()]
    while len(leafset) > 1:
        candidates = []
        for node in _ls_nodes(root):
            if node.is_leaf or node.id in leafset:
                continue
            under = leaves_under(node)
            if not all(i in leafset for i in under):
                continue
            g = (node.sse - sum(by_id[i].sse for i in under)) / (len(under) - 1)
            candidates.append((g, -node.depth, node.id, under))
        g, _, nid, under = min(candidates)
        leafset = (leafset - set(under)) | {nid}
        path.append(record())
    return path


def _ls_route_paths(root, data, idx):
    """Per-row list of node ids visited from root to maximal-tree leaf."""
    paths = [[] for _ in range(len(idx))]
    stack = [(root, np.arange(len(idx)))]
    while stack:
        node, rows = stack.pop()
        for r in rows:
            paths[r].append(node.id)
        if node.is_leaf:
            continue
        col = data.covariates[node.rule.feature]
        vals = col.values[idx[rows]]
        if node.rule.is_numeric:
            go_left = vals <= node.rule.threshold
        else:
            go_left = np.isin(vals, list(node.rule.left_levels))
        stack.append((node.left, rows[go_left]))
        stack.append((node.right, rows[~go_left]))
    return paths


def _ls_cv_choose_k(y, data, config):
    """Repeated-fold validation SSE per leaf count; one-SE smallest K."""
    n = data.n
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, config.cv_folds)
    per_fold = []  # list of dict K -> val sse
    for f in range(config.cv_folds):
        val_idx = folds[f]
        train_idx = np.concatenate([folds[g] for g in range(config.cv_folds) if g != f])
        root = _ls_grow(y, data, train_idx, config)
        path = _ls_prune_path(root)
        by_id = {nd.id: nd for nd in _ls_nodes(root)}
        routes = _ls_route_paths(root, data, val_idx)
        scores = {}
        for leafset, k, _ in path:
            sse = 0.0
            for r, row in enumerate(val_idx):
                leaf = next(i for i in routes[r] if i in leafset)
                sse += (y[row] - by_id[leaf].mean) ** 2
            scores[k] = sse
        per_fold.append(scores)

    ks = sorted({k for sc in per_fold for k in sc})
    means, ses = {}, {}
    for k in ks:
        vals = []
        for sc in per_fold:
            smaller = [kk for kk in sc if kk <= k]
            vals.append(sc[max(smaller)] if smaller else sc[min(sc)])
        vals = np.asarray(vals)
        means[k] = float(vals.mean())
        ses[k] = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    k_best = min(ks, key=lambda k: (means[k], k))
    limit = means[k_best] + ses[k_best]
    return min(k for k in ks if means[k] <= limit)


@dataclass
class MarginTree:
    """Pruned least-squares tree for one response column.

    Leaves hold the sorted training responses so the conditional CDF can
    be evaluated as a within-leaf ECDF (rank over count + 1).
    """

    root: _LsNode
    schema: tuple[ColumnSchema, ...]
    leaf_values: dict[int, np.ndarray]
    n_leaves: int

    def leaf_of_row(self, data: Dataset, row: int) -> int:
        node = self.root
        while not node.is_leaf:
            col = data.covariates[node.rule.feature]
            val = col.values[row]
            if node.rule.is_numeric:
                node = node.left if val <= node.rule.threshold else node.right
            else:
                node = node.left if int(val) in node.rule.left_levels else node.right
        return node.id

    def assign(self, data: Dataset) -> np.ndarray:
        out = np.empty(data.n, dtype=np.int64)
        stack = [(self.root, np.arange(data.n))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf:
                out[rows] = node.id
                continue
            col = data.covariates[node.rule.feature]
            vals = col.values[rows]
            if node.rule.is_numeric:
                go_left = vals <= node.rule.threshold
            else:
                go_left = np.isin(vals, list(node.rule.left_levels))
            stack.append((node.left, rows[go_left]))
            stack.append((node.right, rows[~go_left]))
        return out

    def cdf(self, t: float, data: Dataset, row: int) -> float:
        leaf = self.leaf_of_row(data, row)
        vals = self.leaf_values[leaf]
        r = float(np.searchsorted(vals, t, side="right"))
        return min(max(r / (len(vals) + 1.0), 1.0 / (len(vals) + 1.0)), len(vals) / (len(vals) + 1.0))


def _prune_to_leafset(node, leafset):
    if node.id in leafset or node.is_leaf:
        return _LsNode(node.id, node.n, node.mean, node.sse, node.depth)
    new = _LsNode(node.id, node.n, node.mean, node.sse, node.depth, node.rule)
    new.left = _prune_to_leafset(node.left, leafset)
    new.right = _prune_to_leafset(node.right, leafset)
    return new


def pseudo_margin_tree(
    data: Dataset, config: MarginTreeConfig = MarginTreeConfig()
) -> tuple[PseudoObservations, tuple[MarginTree, ...]]:
    """Margin-tree pseudo-observations: within-leaf average ranks.

    One least-squares tree per response column, grown with the same split
    enumeration as the copula tree (squared-error criterion, categorical
    levels ordered by mean response), pruned to the cross-validated
    one-SE leaf count.  Falls back to the empirical estimator when the
    sample cannot support a split.
    """
    if data.n < 2 * config.min_leaf:
        warnings.warn("too few rows for margin trees; falling back to empirical ranks")
        emp = pseudo_empirical(data)
        return replace(emp, method="margin_tree", notes=("fallback_empirical",)), ()

    out = np.empty_like(data.responses)
    trees = []
    all_idx = np.arange(data.n)
    for j in range(data.k):
        y = data.responses[:, j]
        root = _ls_grow(y, data, all_idx, config)
        path = _ls_prune_path(root)
        if len(path) > 1:
            k_star = _ls_cv_choose_k(y, data, replace(config, seed=config.seed + j))
            leafset = next(ls for ls, k, _ in path if k <= k_star)
        else:
            leafset = path[0][0]
        pruned = _prune_to_leafset(root, leafset)
        tree = MarginTree(pruned, schema_of(data), {}, len(leafset))
        leaf_ids = tree.assign(data)
        for leaf in np.unique(leaf_ids):
            mask = leaf_ids == leaf
            block = y[mask]
            out[mask, j] = rankdata(block, method="average") / (block.size + 1)
            tree.leaf_values[int(leaf)] = np.sort(block)
        trees.append(tree)
    return PseudoObservations(out, "margin_tree"), tuple(trees)
