"""Vertical federated random forest: server-coordinated tree building over
clients holding disjoint feature columns of the same samples.

Per node, every client proposes its best local split (Gini value only); the
server picks the winner, the winning client partitions the sample IDs by its
retained threshold, and the server relays the ID sets. Thresholds and raw
feature values never cross the wire. Prediction intersects per-leaf candidate
sets computed independently by each client.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cart import (ForestConfig, GiniReport, best_split, draw_round_subsets,
                   majority_label, split_improves_accuracy)
from .dataio import Dataset, VerticalPartition
from .errors import ContractError, ProtocolError

SERVER = "server"


@dataclass(frozen=True)
class FedLeaf:
    path: str
    label: int
    train_ids: tuple[int, ...]


@dataclass(frozen=True)
class FedSplit:
    path: str
    owner_client: int
    feature: str  # known to the server and the owner, never serialized or sent
    left: "FedLeaf | FedSplit"
    right: "FedLeaf | FedSplit"
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]


FedTreeNode = FedLeaf | FedSplit


@dataclass(frozen=True)
class VflMessage:
    tree: int
    node_path: str
    sender: str  # "server" or "client:<i>"
    kind: str  # InitSubsets | LocalBest | GlobalDecision | LeafClose
    payload: dict


@dataclass(frozen=True)
class FedRfResult:
    trees: tuple[FedTreeNode, ...]
    client_thresholds: tuple[dict, ...]  # per client: {(tree, path): (feature, threshold)}
    client_features: tuple[tuple[str, ...], ...]
    feature_names: tuple[str, ...]
    transcript: tuple[VflMessage, ...]


def client_local_best(client_data: Dataset, features: tuple[str, ...],
                      rows: np.ndarray, test_rows: np.ndarray,
                      pruning_enabled: bool, min_samples_leaf: int = 1,
                      max_candidates: int | None = None) -> GiniReport | None:
    """Best split over this client's share of F' at one node; labels are shared.

    The returned threshold is retained locally by the caller and must not be
    put on the wire; needs_pruning reflects the held-out accuracy check.
    """
    if len(rows) == 0:
        raise ProtocolError("client_local_best called with empty sample subset")
    view = client_data.take(rows)
    report = best_split(view, features, min_samples_leaf, max_candidates)
    if report is None:
        return None
    if pruning_enabled:
        test_view = client_data.take(test_rows)
        needs = not split_improves_accuracy(view, report, test_view)
    else:
        needs = False
    return GiniReport(report.feature, report.threshold, report.weighted_gini, needs)


def server_select_global(reports: list[GiniReport | None]) -> int | None:
    """Winner = client with the smallest weighted Gini (ties to the lower index);
    None means prune (no split exists, or the winner needs pruning)."""
    winner = None
    for i, rep in enumerate(reports):
        if rep is None:
            continue
        if winner is None or rep.weighted_gini < reports[winner].weighted_gini:
            winner = i
    if winner is None or reports[winner].needs_pruning:
        return None
    return winner


def winner_split_and_relay(client_data: Dataset, report: GiniReport,
                           rows: np.ndarray, test_rows: np.ndarray,
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Partition D' and T row positions by the winner's retained threshold."""
    col = client_data.feature_names.index(report.feature)
    mask = client_data.features[rows, col] <= report.threshold
    tmask = client_data.features[test_rows, col] <= report.threshold
    return rows[mask], rows[~mask], test_rows[tmask], test_rows[~tmask]


def run_fedrf(vpartition: VerticalPartition, cfg: ForestConfig) -> FedRfResult:
    """Execute the full protocol for cfg.n_trees trees; deterministic per seed.

    The global feature universe is the concatenation of the client feature sets
    in client order, and subset draws use the same seeded scheme as the
    centralized forest, so a degenerate single-client run reproduces it exactly.
    """
    k = vpartition.k
    all_names: tuple[str, ...] = tuple(f for c in vpartition.clients for f in c.feature_names)
    ids = vpartition.ids
    labels = vpartition.labels
    n = len(ids)
    owner_of = {}
    for i, c in enumerate(vpartition.clients):
        for f in c.feature_names:
            owner_of[f] = i
    transcript: list[VflMessage] = []
    thresholds: list[dict] = [{} for _ in range(k)]
    client_feats_per_tree: list[list[tuple[str, ...]]] = [[] for _ in range(k)]
    trees: list[FedTreeNode] = []

    for t in range(cfg.n_trees):
        f_prime, rows, test_rows = draw_round_subsets(
            cfg.seed, t, all_names, n, cfg.feature_fraction, cfg.sample_fraction)
        pruning_enabled = len(test_rows) > 0
        client_feats = []
        for i, c in enumerate(vpartition.clients):
            mine = tuple(f for f in c.feature_names if f in set(f_prime))
            client_feats.append(mine)
            client_feats_per_tree[i].append(mine)
            transcript.append(VflMessage(t, "", SERVER, "InitSubsets", {
                "client": i,
                "feature_ordinals": [c.feature_names.index(f) for f in mine],
                "train_ids": [int(v) for v in ids[rows]],
                "test_ids": [int(v) for v in ids[test_rows]],
            }))

        def build(rows: np.ndarray, trows: np.ndarray, depth: int, path: str) -> FedTreeNode:
            node_labels = labels[rows]
            train_ids = tuple(int(v) for v in ids[rows])
            pos = int(np.sum(node_labels))

            def close_leaf() -> FedLeaf:
                transcript.append(VflMessage(t, path, SERVER, "LeafClose",
                                             {"label": majority_label(node_labels)}))
                return FedLeaf(path, majority_label(node_labels), train_ids)

            if pos in (0, len(node_labels)) or depth >= cfg.tree.max_depth \
                    or len(node_labels) < 2 * cfg.tree.min_samples_leaf:
                return close_leaf()
            reports: list[GiniReport | None] = []
            for i, c in enumerate(vpartition.clients):
                if client_feats[i]:
                    rep = client_local_best(c, client_feats[i], rows, trows,
                                            pruning_enabled, cfg.tree.min_samples_leaf,
                                            cfg.tree.max_candidates)
                else:
                    rep = None
                reports.append(rep)
                payload = {"client": i, "no_split": rep is None}
                if rep is not None:
                    payload.update({
                        "feature_ordinal": c.feature_names.index(rep.feature),
                        "weighted_gini": rep.weighted_gini,
                        "needs_pruning": rep.needs_pruning,
                    })
                transcript.append(VflMessage(t, path, f"client:{i}", "LocalBest", payload))
            winner = server_select_global(reports)
            if winner is None:
                transcript.append(VflMessage(t, path, SERVER, "GlobalDecision",
                                             {"decision": "Prune"}))
                return close_leaf()
            transcript.append(VflMessage(t, path, SERVER, "GlobalDecision",
                                         {"decision": "Success", "winner": winner}))
            rep = reports[winner]
            thresholds[winner][(t, path)] = (rep.feature, rep.threshold)
            l_rows, r_rows, l_trows, r_trows = winner_split_and_relay(
                vpartition.clients[winner], rep, rows, trows)
            transcript.append(VflMessage(t, path, SERVER, "GlobalDecision", {
                "decision": "Relay",
                "left_ids": [int(v) for v in ids[l_rows]],
                "right_ids": [int(v) for v in ids[r_rows]],
                "left_test_ids": [int(v) for v in ids[l_trows]],
                "right_test_ids": [int(v) for v in ids[r_trows]],
            }))
            left = build(l_rows, l_trows, depth + 1, path + "L")
            right = build(r_rows, r_trows, depth + 1, path + "R")
            return FedSplit(path, winner, rep.feature, left, right,
                            train_ids, tuple(int(v) for v in ids[trows]))

        trees.append(build(rows, test_rows, 0, "."))

    return FedRfResult(tuple(trees), tuple(thresholds),
                       tuple(tuple(c.feature_names) for c in vpartition.clients),
                       all_names, tuple(transcript))


def _client_leaf_sets(tree_index: int, root: FedTreeNode, client_id: int,
                      table: dict, data: Dataset) -> dict[str, np.ndarray]:
    """Route every sample down the partial tree: both ways at unknown-owner
    splits, by the retained threshold at owned ones."""
    out: dict[str, np.ndarray] = {}

    def walk(node: FedTreeNode, rows: np.ndarray):
        if isinstance(node, FedLeaf):
            out[node.path] = rows
            return
        if node.owner_client == client_id:
            feature, threshold = table[(tree_index, node.path)]
            col = data.feature_names.index(feature)
            mask = data.features[rows, col] <= threshold
            walk(node.left, rows[mask])
            walk(node.right, rows[~mask])
        else:
            walk(node.left, rows)
            walk(node.right, rows)

    walk(root, np.arange(data.n_samples))
    return out


def fedrf_votes(result: FedRfResult, client_data: list[Dataset]) -> np.ndarray:
    """Per-sample positive-vote fraction via leaf-intersection routing."""
    if len(client_data) != len(result.client_thresholds):
        raise ContractError("one dataset per client required")
    n = client_data[0].n_samples
    for d in client_data[1:]:
        if d.n_samples != n or not np.array_equal(d.ids, client_data[0].ids):
            raise ContractError("client datasets must be aligned by id")
    votes = np.zeros(n)
    for t, root in enumerate(result.trees):
        leaf_sets = [
            _client_leaf_sets(t, root, i, result.client_thresholds[i], client_data[i])
            for i in range(len(client_data))
        ]
        assigned = np.full(n, -1, dtype=np.int64)
        labels_of: dict[str, int] = {}

        def collect(node: FedTreeNode):
            if isinstance(node, FedLeaf):
                labels_of[node.path] = node.label
            else:
                collect(node.left)
                collect(node.right)

        collect(root)
        for path, label in labels_of.items():
            members = leaf_sets[0].get(path, np.array([], dtype=np.int64))
            member_set = set(int(v) for v in members)
            for ls in leaf_sets[1:]:
                member_set &= set(int(v) for v in ls.get(path, np.array([], dtype=np.int64)))
            for row in member_set:
                if assigned[row] != -1:
                    raise ProtocolError(f"sample row {row} lands in more than one leaf of tree {t}")
                assigned[row] = label
        if np.any(assigned == -1):
            raise ProtocolError(f"some samples land in no leaf of tree {t}")
        votes += assigned
    return votes / len(result.trees)


def fedrf_predict(result: FedRfResult, client_data: list[Dataset]) -> np.ndarray:
    return (fedrf_votes(result, client_data) > 0.5).astype(np.int64)


def message_record(msg: VflMessage, run_id: str) -> dict:
    return {"run_id": run_id, "round": msg.tree, "node_path": msg.node_path,
            "sender": msg.sender, "kind": msg.kind, "payload": msg.payload}


def write_transcript(messages, run_id: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for msg in messages:
            fh.write(json.dumps(message_record(msg, run_id), sort_keys=True) + "\n")


_ALLOWED_PAYLOAD_KEYS = {
    "InitSubsets": {"client", "feature_ordinals", "train_ids", "test_ids"},
    "LocalBest": {"client", "no_split", "feature_ordinal", "weighted_gini", "needs_pruning"},
    "GlobalDecision": {"decision", "winner", "left_ids", "right_ids",
                       "left_test_ids", "right_test_ids"},
    "LeafClose": {"label"},
}


def audit_transcript(messages) -> None:
    """Raise if any payload carries anything beyond sample IDs, Gini values,
    client-local feature ordinals and prune flags (no thresholds, no values)."""
    for msg in messages:
        allowed = _ALLOWED_PAYLOAD_KEYS.get(msg.kind)
        if allowed is None:
            raise ProtocolError(f"unknown message kind {msg.kind!r}")
        extra = set(msg.payload) - allowed
        if extra:
            raise ProtocolError(f"{msg.kind} payload carries forbidden keys {sorted(extra)}")
        if "threshold" in {k.lower() for k in msg.payload}:
            raise ProtocolError("threshold leaked into transcript")


def _node_to_dict(node: FedTreeNode) -> dict:
    if isinstance(node, FedLeaf):
        return {"leaf": True, "path": node.path, "label": node.label}
    return {"leaf": False, "path": node.path, "owner_client": node.owner_client,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def save_fed_forest(result: FedRfResult, path: str | Path) -> None:
    """Server-side forest record: structure and owners, never thresholds."""
    record = {"trees": [_node_to_dict(t) for t in result.trees]}
    Path(path).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
