"""CART decision tree (Gini criterion, midpoint thresholds, pre-pruning) and random forest.

The split search and the pruning rule live here so that the vertical federated
protocol can reuse them verbatim on client-local feature subsets: a federated
tree built from the same seeds must route samples exactly like a centralized one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import Dataset
from .errors import ConfigError, ContractError, RoutingError


@dataclass(frozen=True)
class GiniReport:
    feature: str
    threshold: float
    weighted_gini: float
    needs_pruning: bool = False


@dataclass(frozen=True)
class Leaf:
    label: int
    class_counts: tuple[int, int]
    sample_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class Split:
    feature: str
    threshold: float
    left: "Leaf | Split"
    right: "Leaf | Split"
    sample_ids: tuple[int, ...] = ()


TreeNode = Leaf | Split


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 10
    min_samples_leaf: int = 1
    max_candidates: int | None = None

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ConfigError("max_depth must be >= 0 and min_samples_leaf >= 1")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 10
    feature_fraction: float = 1.0
    sample_fraction: float = 1.0
    seed: int = 0
    tree: TreeConfig = field(default_factory=TreeConfig)

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        for frac in (self.feature_fraction, self.sample_fraction):
            if not 0.0 < frac <= 1.0:
                raise ConfigError("subsample fractions must be in (0, 1]")


@dataclass(frozen=True)
class Forest:
    trees: tuple[TreeNode, ...]
    tree_meta: tuple[dict, ...]
    feature_names: tuple[str, ...]


def gini_impurity(labels: np.ndarray) -> float:
    n = len(labels)
    if n == 0:
        return 0.0
    p1 = int(np.sum(labels))
    p0 = n - p1
    return 1.0 - (p0 / n) ** 2 - (p1 / n) ** 2


def majority_label(labels: np.ndarray) -> int:
    """Majority class; ties predict 0 (the qualified class)."""
    pos = int(np.sum(labels))
    return 1 if pos > len(labels) - pos else 0


def best_split(data: Dataset, features: list[str] | tuple[str, ...],
               min_samples_leaf: int = 1,
               max_candidates: int | None = None) -> GiniReport | None:
    """Minimum-weighted-Gini split over midpoint thresholds.

    Ties break toward the lexicographically lower feature name, then the lower
    threshold. Returns None when no candidate strictly reduces impurity.
    """
    if data.n_samples == 0:
        raise ContractError("best_split requires non-empty data")
    if not features:
        raise ContractError("best_split requires a non-empty feature set")
    y = data.labels
    n = len(y)
    pos_total = int(np.sum(y))
    neg_total = n - pos_total
    # selection runs on exact integers: a candidate's weighted Gini is
    # (n - S/D)/n with S = (lp^2+ln^2)*rn_ + (rp^2+rn^2)*ln_ and D = ln_*rn_,
    # so "smaller Gini" is "S/D larger", decided by cross-multiplication
    parent_sq = pos_total * pos_total + neg_total * neg_total
    best: tuple[int, int, float, str, float] | None = None  # (S, D, gini, name, thr)
    col_of = {f: i for i, f in enumerate(data.feature_names)}
    for name in sorted(features):
        if name not in col_of:
            raise LookupError(f"unknown feature name {name!r}")
        col = data.features[:, col_of[name]]
        order = np.argsort(col, kind="stable")
        vals = col[order]
        labs = y[order]
        boundary = np.nonzero(vals[1:] > vals[:-1])[0]  # split after index i
        if len(boundary) == 0:
            continue
        left_n = boundary + 1
        right_n = n - left_n
        keep = (left_n >= min_samples_leaf) & (right_n >= min_samples_leaf)
        boundary, left_n, right_n = boundary[keep], left_n[keep], right_n[keep]
        if len(boundary) == 0:
            continue
        if max_candidates is not None and len(boundary) > max_candidates:
            pick = np.unique(np.linspace(0, len(boundary) - 1, max_candidates).round().astype(int))
            boundary, left_n, right_n = boundary[pick], left_n[pick], right_n[pick]
        left_pos = np.cumsum(labs)[boundary]
        left_neg = left_n - left_pos
        right_pos = pos_total - left_pos
        right_neg = right_n - right_pos
        wg = (left_n * (1.0 - (left_pos / left_n) ** 2 - (left_neg / left_n) ** 2)
              + right_n * (1.0 - (right_pos / right_n) ** 2 - (right_neg / right_n) ** 2)) / n
        thresholds = (vals[boundary] + vals[boundary + 1]) / 2.0
        # features iterate in sorted name order and thresholds ascending, so
        # keeping the first strict improvement realizes the tie-break rule;
        # Python ints keep the comparison exact at any sample count
        for g, thr, lp, ln_, rp, rn_ in zip(wg, thresholds, left_pos, left_n,
                                            right_pos, right_n):
            lp, ln_, rp, rn_ = int(lp), int(ln_), int(rp), int(rn_)
            s = (lp * lp + (ln_ - lp) ** 2) * rn_ + (rp * rp + (rn_ - rp) ** 2) * ln_
            d = ln_ * rn_
            if best is None or s * best[1] > best[0] * d:
                best = (s, d, float(g), name, float(thr))
    # improvement over the parent: wg < parent gini iff n*S > D*(p0^2+p1^2)
    if best is None or n * best[0] <= best[1] * parent_sq:
        return None
    return GiniReport(feature=best[3], threshold=best[4], weighted_gini=best[2])


def split_improves_accuracy(data: Dataset, report: GiniReport,
                            test: Dataset | None) -> bool:
    """Pre-pruning rule: does the split strictly improve majority-vote accuracy
    on the held-out samples routed to this node? Empty held-out set means no.
    """
    if test is None:
        return True  # pruning disabled
    if test.n_samples == 0:
        return False
    col = data.feature_names.index(report.feature)
    left_mask = data.features[:, col] <= report.threshold
    node_label = majority_label(data.labels)
    left_label = majority_label(data.labels[left_mask])
    right_label = majority_label(data.labels[~left_mask])
    tcol = test.feature_names.index(report.feature)
    t_left = test.features[:, tcol] <= report.threshold
    base_correct = int(np.sum(test.labels == node_label))
    split_correct = int(np.sum(test.labels[t_left] == left_label)) \
        + int(np.sum(test.labels[~t_left] == right_label))
    return split_correct > base_correct


def build_tree(data: Dataset, features: list[str] | tuple[str, ...],
               test: Dataset | None, cfg: TreeConfig,
               record_ids: bool = False) -> TreeNode:
    """Recursive CART with pre-pruning against the routed held-out samples.

    Pass test=None (or an empty test set at forest level with sample_fraction
    1.0) to build an unpruned tree.
    """
    if data.n_samples == 0:
        raise ContractError("build_tree requires non-empty data")
    if test is not None and test.n_samples == 0:
        test = None
    features = tuple(sorted(features))

    def recurse(d: Dataset, t: Dataset | None, depth: int) -> TreeNode:
        labels = d.labels
        ids = tuple(int(i) for i in d.ids) if record_ids else ()
        pos = int(np.sum(labels))
        counts = (len(labels) - pos, pos)

        def leaf() -> Leaf:
            return Leaf(majority_label(labels), counts, ids)

        if pos in (0, len(labels)) or depth >= cfg.max_depth \
                or len(labels) < 2 * cfg.min_samples_leaf:
            return leaf()
        report = best_split(d, features, cfg.min_samples_leaf, cfg.max_candidates)
        if report is None:
            return leaf()
        if t is not None and not split_improves_accuracy(d, report, t):
            return leaf()
        col = d.feature_names.index(report.feature)
        mask = d.features[:, col] <= report.threshold
        if t is not None:
            tcol = t.feature_names.index(report.feature)
            tmask = t.features[:, tcol] <= report.threshold
            t_left, t_right = t.take(np.nonzero(tmask)[0]), t.take(np.nonzero(~tmask)[0])
        else:
            t_left = t_right = None
        left = recurse(d.take(np.nonzero(mask)[0]), t_left, depth + 1)
        right = recurse(d.take(np.nonzero(~mask)[0]), t_right, depth + 1)
        return Split(report.feature, report.threshold, left, right, ids)

    return recurse(data, test, 0)


def draw_round_subsets(seed: int, tree_index: int, feature_names: tuple[str, ...],
                       n_samples: int, feature_fraction: float,
                       sample_fraction: float) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Seeded per-tree draw of the feature subset F', sample rows D' and held-out rows T.

    Shared by the centralized forest and the federated protocol so both make
    identical draws for identical seeds. Subsets are without replacement and
    T is the complement of D'.
    """
    rng = np.random.default_rng([seed, tree_index])
    n_feat = int(round(feature_fraction * len(feature_names)))
    if n_feat < 1:
        raise ConfigError("feature subset would be empty")
    feat_idx = np.sort(rng.choice(len(feature_names), size=n_feat, replace=False))
    n_rows = int(round(sample_fraction * n_samples))
    if n_rows < 1:
        raise ConfigError("sample subset would be empty")
    rows = np.sort(rng.choice(n_samples, size=n_rows, replace=False))
    mask = np.ones(n_samples, dtype=bool)
    mask[rows] = False
    test_rows = np.nonzero(mask)[0]
    return tuple(feature_names[i] for i in feat_idx), rows, test_rows


def build_forest(data: Dataset, cfg: ForestConfig, record_ids: bool = False) -> Forest:
    trees = []
    meta = []
    for t in range(cfg.n_trees):
        feats, rows, test_rows = draw_round_subsets(
            cfg.seed, t, data.feature_names, data.n_samples,
            cfg.feature_fraction, cfg.sample_fraction)
        test = data.take(test_rows) if len(test_rows) else None
        trees.append(build_tree(data.take(rows), feats, test, cfg.tree, record_ids))
        meta.append({"tree_index": t, "feature_subset": list(feats),
                     "n_train": len(rows), "n_test": len(test_rows)})
    return Forest(tuple(trees), tuple(meta), data.feature_names)


def tree_predict(node: TreeNode, row: dict[str, float]) -> int:
    while isinstance(node, Split):
        if node.feature not in row:
            raise RoutingError(f"feature {node.feature!r} missing from input row")
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.label


def tree_predict_dataset(node: TreeNode, data: Dataset) -> np.ndarray:
    out = np.empty(data.n_samples, dtype=np.int64)
    col_of = {f: i for i, f in enumerate(data.feature_names)}

    def walk(nd: TreeNode, rows: np.ndarray):
        if isinstance(nd, Leaf):
            out[rows] = nd.label
            return
        if nd.feature not in col_of:
            raise RoutingError(f"feature {nd.feature!r} missing from dataset")
        mask = data.features[rows, col_of[nd.feature]] <= nd.threshold
        walk(nd.left, rows[mask])
        walk(nd.right, rows[~mask])

    walk(node, np.arange(data.n_samples))
    return out


def forest_votes(f: Forest, data: Dataset) -> np.ndarray:
    """Fraction of trees voting positive per sample (the forest's score)."""
    votes = np.zeros(data.n_samples)
    for tree in f.trees:
        votes += tree_predict_dataset(tree, data)
    return votes / len(f.trees)


def forest_predict(f: Forest, data: Dataset) -> np.ndarray:
    # strict majority; exact tie predicts 0
    return (forest_votes(f, data) > 0.5).astype(np.int64)


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": True, "label": node.label, "class_counts": list(node.class_counts)}
    return {"leaf": False, "feature": node.feature, "threshold": node.threshold,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> TreeNode:
    if d["leaf"]:
        return Leaf(d["label"], tuple(d["class_counts"]))
    return Split(d["feature"], d["threshold"],
                 _node_from_dict(d["left"]), _node_from_dict(d["right"]))


def save_forest(f: Forest, path: str | Path) -> None:
    record = {"feature_names": list(f.feature_names),
              "tree_meta": list(f.tree_meta),
              "trees": [_node_to_dict(t) for t in f.trees]}
    Path(path).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def load_forest(path: str | Path) -> Forest:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    return Forest(tuple(_node_from_dict(t) for t in record["trees"]),
                  tuple(record["tree_meta"]), tuple(record["feature_names"]))
