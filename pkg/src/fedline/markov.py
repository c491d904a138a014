"""Markov prediction-error models and the heterogeneity analysis.

Prediction errors become a three-state sequence (hit / miss / mistake), fitted
into k-step transition matrices by maximum-likelihood n-gram counting. For
heterogeneity, ground-truth label sequences of random time-contiguous groups
are fitted the same way and the flattened parameter vectors are clustered with
DBSCAN under angular (degree) distance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from itertools import product

import numpy as np

from .dataio import Dataset
from .errors import ContractError

ERROR_STATES = ("hit", "miss", "mistake")
GT_STATES = ("S0", "S1")


@dataclass(frozen=True)
class TransitionMatrix:
    order: int
    states: tuple[str, ...]
    probs: np.ndarray  # |S|^k x |S|, row-stochastic
    counts: np.ndarray | None  # same shape, raw n-gram counts
    uniform_rows: np.ndarray  # rows with zero prefix count, defaulted to uniform

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))
        object.__setattr__(self, "uniform_rows", np.asarray(self.uniform_rows, dtype=bool))
        m = len(self.states) ** self.order
        if self.probs.shape != (m, len(self.states)):
            raise ContractError("probability matrix shape mismatch")

    @property
    def row_states(self) -> tuple[tuple[str, ...], ...]:
        return tuple(product(self.states, repeat=self.order))

    def flatten(self) -> np.ndarray:
        return self.probs.reshape(-1)


def matrix_from_probs(probs, states: tuple[str, ...], order: int = 1) -> TransitionMatrix:
    """Wrap published or hand-made parameters (no counts available)."""
    probs = np.asarray(probs, dtype=np.float64)
    m = len(states) ** order
    return TransitionMatrix(order, states, probs, None, np.zeros(m, dtype=bool))


def load_matrix_fixture(name: str) -> TransitionMatrix:
    """Load a shipped transition-matrix fixture, e.g. 'hfl_error_model_fl'."""
    text = resources.files("fedline.fixtures").joinpath(f"{name}.json").read_text("utf-8")
    record = json.loads(text)
    return matrix_from_probs(record["probs"], tuple(record["states"]), record["order"])


def error_state(gt: int, pred: int) -> str:
    if gt == pred:
        return "hit"
    return "miss" if gt == 1 else "mistake"


def build_error_sequence(gt, pred) -> list[str]:
    """Map one prediction table column to hit/miss/mistake states, order preserved."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if len(gt) != len(pred):
        raise ContractError("gt and pred must have equal length")
    return [error_state(int(g), int(p)) for g, p in zip(gt, pred)]


def fit_markov(seq, order: int, states: tuple[str, ...] | None = None) -> TransitionMatrix:
    """Maximum-likelihood k-step fit by (k+1)-gram counting.

    Rows whose k-gram prefix never occurs become uniform and are flagged.
    """
    seq = list(seq)
    if order < 1:
        raise ContractError("order must be >= 1")
    if len(seq) < order + 1:
        raise ContractError(f"sequence of length {len(seq)} too short for order {order}")
    if states is None:
        states = tuple(sorted(set(seq)))
    index = {s: i for i, s in enumerate(states)}
    s = len(states)
    m = s ** order
    counts = np.zeros((m, s), dtype=np.int64)
    enc = [index[x] for x in seq]
    for i in range(len(enc) - order):
        row = 0
        for j in range(order):
            row = row * s + enc[i + j]
        counts[row, enc[i + order]] += 1
    totals = counts.sum(axis=1)
    uniform = totals == 0
    probs = np.empty((m, s), dtype=np.float64)
    probs[uniform] = 1.0 / s
    nz = ~uniform
    probs[nz] = counts[nz] / totals[nz, None]
    return TransitionMatrix(order, states, probs, counts, uniform)


def compare_matrices(a: TransitionMatrix, b: TransitionMatrix, delta: float) -> dict:
    """Elementwise |a - b| with mean/max statistics and a within-delta verdict.

    Rows uniform-flagged in both matrices describe states neither model
    observed; they are excluded from mean/max so unobserved states do not
    manufacture differences.
    """
    if a.order != b.order or a.states != b.states:
        raise ContractError("matrices must share order and state alphabet")
    diff = np.abs(a.probs - b.probs)
    excluded = a.uniform_rows & b.uniform_rows
    included = diff[~excluded]
    if included.size == 0:
        mean_diff = max_diff = 0.0
    else:
        mean_diff = float(included.mean())
        max_diff = float(included.max())
    return {"diff": diff, "mean_diff": mean_diff, "max_diff": max_diff,
            "within": max_diff <= delta, "excluded_rows": int(excluded.sum())}


def angle_degrees(u, v) -> float:
    """Angle between two parameter vectors in degrees; 0 for identical vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ContractError("angular distance undefined for zero vectors")
    cos = np.clip(float(u @ v) / (nu * nv), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def pairwise_angles(vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    cos = np.clip((x @ x.T) / np.outer(norms, norms), -1.0, 1.0)
    deg = np.degrees(np.arccos(cos))
    np.fill_diagonal(deg, 0.0)
    return deg


def dbscan(distances: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Deterministic DBSCAN on a precomputed distance matrix.

    Core-point expansion proceeds in ascending index order; returns cluster
    labels starting at 0, with -1 marking noise points.
    """
    d = np.asarray(distances)
    n = d.shape[0]
    neighbors = [np.nonzero(d[i] <= eps)[0] for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = list(neighbors[i])
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            if labels[j] == -1:
                labels[j] = cluster
                if core[j]:
                    queue.extend(neighbors[j])
        cluster += 1
    return labels


def silhouette(distances: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over non-noise points using the given distance matrix;
    0.0 when fewer than two clusters exist."""
    d = np.asarray(distances)
    labels = np.asarray(labels)
    clusters = sorted(set(labels[labels >= 0]))
    if len(clusters) < 2:
        return 0.0
    scores = []
    for i in range(len(labels)):
        c = labels[i]
        if c < 0:
            continue
        own = np.nonzero(labels == c)[0]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a_i = float(d[i, own[own != i]].mean())
        b_i = min(float(d[i, labels == other].mean()) for other in clusters if other != c)
        scores.append((b_i - a_i) / max(a_i, b_i))
    return float(np.mean(scores))


def sample_groups(d: Dataset, n_groups: int, len_range: tuple[int, int],
                  seed: int) -> list[tuple[int, int]]:
    """Random (start, length) ranges over the time-sorted row order; groups may
    overlap. Length is uniform on [lo, hi], start uniform on [0, n - L]."""
    lo, hi = len_range
    n = d.n_samples
    if lo < 2:
        raise ContractError("group length lower bound must be >= 2")
    if hi < lo or hi > n:
        raise ContractError(f"len_range [{lo}, {hi}] infeasible for n={n}")
    rng = np.random.default_rng(seed)
    groups = []
    for _ in range(n_groups):
        length = int(rng.integers(lo, hi + 1))
        start = int(rng.integers(0, n - length + 1))
        groups.append((start, length))
    return groups


@dataclass(frozen=True)
class HeterogeneityReport:
    order: int
    groups: tuple[tuple[int, int], ...]
    vectors: np.ndarray
    cluster_labels: np.ndarray
    n_clusters: int
    cluster_sizes: tuple[int, ...]
    n_outliers: int
    silhouette: float
    eps_degrees: float
    min_pts: int

    @property
    def strong_heterogeneity(self) -> bool:
        return self.n_clusters >= 2


def heterogeneity(d: Dataset, n_groups: int = 100,
                  len_range: tuple[int, int] = (300, 1000),
                  k_orders: tuple[int, ...] = (1, 2),
                  eps_degrees: dict[int, float] | None = None,
                  min_pts: int = 3, seed: int = 0,
                  groups: list[tuple[int, int]] | None = None,
                  ) -> dict[int, HeterogeneityReport]:
    """Fit per-group ground-truth label Markov models and cluster their
    parameter vectors under angular distance, for each requested order."""
    eps_by_k = {1: 5.0, 2: 8.0}
    if eps_degrees:
        eps_by_k.update(eps_degrees)
    order_idx = d.time_order()
    labels_sorted = d.labels[order_idx]
    if groups is None:
        groups = sample_groups(d, n_groups, len_range, seed)
    reports = {}
    for k in k_orders:
        vectors = []
        for start, length in groups:
            seq = ["S1" if v else "S0" for v in labels_sorted[start:start + length]]
            tm = fit_markov(seq, k, states=GT_STATES)
            vectors.append(tm.flatten())
        vec = np.array(vectors)
        dist = pairwise_angles(vec)
        eps = eps_by_k[k]
        cl = dbscan(dist, eps, min_pts)
        clusters = sorted(set(cl[cl >= 0]))
        sizes = tuple(int(np.sum(cl == c)) for c in clusters)
        reports[k] = HeterogeneityReport(
            order=k, groups=tuple(groups), vectors=vec, cluster_labels=cl,
            n_clusters=len(clusters), cluster_sizes=sizes,
            n_outliers=int(np.sum(cl == -1)),
            silhouette=silhouette(dist, cl), eps_degrees=eps, min_pts=min_pts)
    return reports
