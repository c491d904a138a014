"""Dataset representation, CSV ingestion, synthetic generation, partitioning and PCA.

The in-memory missing marker is NaN; CSV empties map to it on load and back to
empty cells on write, so sparse data survives a round trip losslessly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, IntegrityError, ParseError, PartitionError, SpecError

MISSING = np.nan


@dataclass(frozen=True)
class Dataset:
    """Row-major sample table: ids, timestamps, feature matrix, binary labels.

    Label 0 = qualified product, 1 = faulty. Timestamps are abstract
    non-decreasing reals; only their ordering is used downstream.
    """

    ids: np.ndarray
    timestamps: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.float64))
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        n = len(self.ids)
        if not (len(self.timestamps) == n and self.features.shape[0] == n and len(self.labels) == n):
            raise IntegrityError("ids/timestamps/features/labels must have equal length")
        if self.features.ndim != 2 or self.features.shape[1] != len(self.feature_names):
            raise IntegrityError("feature matrix width must match feature_names")
        if len(np.unique(self.ids)) != n:
            srt = np.sort(self.ids)
            dup = int(srt[np.nonzero(np.diff(srt) == 0)[0][0]])
            raise IntegrityError(f"duplicate sample id {dup}")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise IntegrityError("labels must be binary {0, 1}")
        for arr in (self.ids, self.timestamps, self.features, self.labels):
            arr.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def take(self, index: np.ndarray) -> "Dataset":
        """Row-subset view preserving the given order."""
        index = np.asarray(index)
        return Dataset(self.ids[index], self.timestamps[index],
                       self.features[index], self.labels[index], self.feature_names)

    def select_features(self, names: list[str] | tuple[str, ...]) -> "Dataset":
        """Column-subset view in the given name order."""
        pos = {f: i for i, f in enumerate(self.feature_names)}
        try:
            cols = [pos[f] for f in names]
        except KeyError as exc:
            raise LookupError(f"unknown feature name {exc.args[0]!r}") from None
        return Dataset(self.ids, self.timestamps, self.features[:, cols], self.labels, tuple(names))

    def time_order(self) -> np.ndarray:
        """Stable permutation sorting rows by timestamp."""
        return np.argsort(self.timestamps, kind="stable")


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a Bosch-like synthetic dataset: imbalanced, sparse, timestamped."""

    n_samples: int
    n_features: int
    positive_fraction: float
    sparsity: float = 0.0
    class_separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise SpecError("n_samples must be >= 2")
        if not 0.0 < self.positive_fraction < 1.0:
            raise SpecError("positive_fraction must be in (0, 1)")
        if not 0.0 <= self.sparsity <= 1.0:
            raise SpecError("sparsity must be in [0, 1]")
        if self.class_separation < 0:
            raise SpecError("class_separation must be >= 0")
        n_pos = int(self.n_samples * self.positive_fraction + 0.5)
        if n_pos < 1 or self.n_samples - n_pos < 1:
            raise SpecError("spec must yield at least one sample of each class")


@dataclass(frozen=True)
class HorizontalPartition:
    """Per-client sample shards sharing one feature space (HFL layout)."""

    clients: tuple[Dataset, ...]

    @property
    def k(self) -> int:
        return len(self.clients)


@dataclass(frozen=True)
class VerticalPartition:
    """Per-client feature shards sharing one sample space (VFL layout)."""

    clients: tuple[Dataset, ...]

    @property
    def k(self) -> int:
        return len(self.clients)

    @property
    def ids(self) -> np.ndarray:
        return self.clients[0].ids

    @property
    def labels(self) -> np.ndarray:
        return self.clients[0].labels


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    feature_names: tuple[str, ...] = field(default=())


def load_csv(path: str | Path) -> Dataset:
    """Read the canonical `Id,ts,<features...>,Response` CSV into a Dataset."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise IntegrityError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "Id" or header[1] != "ts" or header[-1] != "Response":
        raise ParseError(f"{path}: header must be Id,ts,<features...>,Response")
    names = tuple(header[2:-1])
    ids, ts, labels = [], [], []
    feats = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(f"{path}: line {lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            ids.append(int(cells[0]))
            ts.append(float(cells[1]))
            row = [float(c) if c != "" else MISSING for c in cells[2:-1]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        lab = cells[-1]
        if lab not in ("0", "1", ""):
            raise ParseError(f"{path}: line {lineno}: Response must be 0, 1 or empty")
        labels.append(int(lab) if lab else 0)
        feats.append(row)
    if not ids:
        raise IntegrityError(f"{path}: no data rows")
    seen = set()
    for i in ids:
        if i in seen:
            raise IntegrityError(f"{path}: duplicate id {i}")
        seen.add(i)
    return Dataset(ids, ts, np.array(feats, dtype=np.float64), labels, names)


def _fmt(x: float) -> str:
    if np.isnan(x):
        return ""
    return repr(float(x))


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write the canonical CSV; shortest round-trip decimal representation."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["Id", "ts"] + list(d.feature_names) + ["Response"]) + "\n")
        for i in range(d.n_samples):
            cells = [str(int(d.ids[i])), _fmt(d.timestamps[i])]
            cells += [_fmt(v) for v in d.features[i]]
            cells.append(str(int(d.labels[i])))
            fh.write(",".join(cells) + "\n")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic Bosch-like generator: exact label counts, NaN sparsity.

    Positive-class feature means sit at +sep/2 and negatives at -sep/2 per
    feature, so any single feature separates the classes when sep is large.
    """
    rng = np.random.default_rng(spec.seed)
    n, p = spec.n_samples, spec.n_features
    n_pos = int(n * spec.positive_fraction + 0.5)
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[:n_pos]] = 1
    x = rng.standard_normal((n, p))
    shift = spec.class_separation / 2.0
    x[labels == 1] += shift
    x[labels == 0] -= shift
    if spec.sparsity > 0:
        x[rng.random((n, p)) < spec.sparsity] = MISSING
    names = tuple(f"F{j + 1}" for j in range(p))
    return Dataset(np.arange(n), np.arange(n, dtype=np.float64), x, labels, names)


def partition_horizontal(d: Dataset, k: int, seed: int, stratified: bool = True) -> HorizontalPartition:
    """Split samples across k clients; stratified dealing keeps per-class counts within 1."""
    if k < 1:
        raise PartitionError("k must be >= 1")
    if k > d.n_samples:
        raise PartitionError(f"k={k} exceeds sample count {d.n_samples}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    if stratified:
        classes = [np.nonzero(d.labels == c)[0] for c in (1, 0)]
    else:
        classes = [np.arange(d.n_samples)]
    for idx in classes:
        perm = rng.permutation(idx)
        for j, row in enumerate(perm):
            buckets[(offset + j) % k].append(int(row))
        offset = (offset + len(perm)) % k
    clients = tuple(d.take(np.sort(np.array(b, dtype=np.int64))) for b in buckets)
    return HorizontalPartition(clients)


def partition_vertical(d: Dataset, feature_groups: list[list[str]]) -> VerticalPartition:
    """Split feature columns across clients; ids/labels are shared and identically ordered."""
    seen: set[str] = set()
    for group in feature_groups:
        for f in group:
            if f in seen:
                raise PartitionError(f"feature {f!r} appears in more than one group")
            seen.add(f)
    clients = tuple(d.select_features(group) for group in feature_groups)
    return VerticalPartition(clients)


def fit_pca(d: Dataset, n_components: int | None = None,
            variance_threshold: float | None = None) -> PcaModel:
    """Centered PCA via SVD; choose q directly or by cumulative variance ratio."""
    if np.isnan(d.features).any():
        raise ContractError("fit_pca requires no missing values; impute first")
    if d.n_samples < 2:
        raise ContractError("fit_pca requires n >= 2")
    if (n_components is None) == (variance_threshold is None):
        raise ContractError("specify exactly one of n_components / variance_threshold")
    x = d.features
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    eig = (s ** 2) / (d.n_samples - 1)
    total = eig.sum()
    ratios = eig / total if total > 0 else np.zeros_like(eig)
    if n_components is not None:
        q = int(n_components)
        if not 1 <= q <= len(eig):
            raise ContractError(f"n_components must be in [1, {len(eig)}]")
    else:
        cum = np.cumsum(ratios)
        q = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
        q = min(q, len(eig))
    return PcaModel(mean, vt[:q].copy(), ratios[:q].copy(), d.feature_names)


def pca_transform(m: PcaModel, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x) - m.mean) @ m.components.T


def pca_inverse(m: PcaModel, z: np.ndarray) -> np.ndarray:
    return np.asarray(z) @ m.components + m.mean


def pca_apply(m: PcaModel, d: Dataset) -> Dataset:
    """Project a dataset onto the PCA components, renaming features to PC1..PCq."""
    z = pca_transform(m, d.features)
    names = tuple(f"PC{j + 1}" for j in range(z.shape[1]))
    return Dataset(d.ids, d.timestamps, z, d.labels, names)


class ImputationWarning(UserWarning):
    pass


def impute_missing(d: Dataset, strategy: str = "column-mean") -> Dataset:
    """Fill missing cells; an all-missing column under column-mean falls back to zero."""
    if strategy not in ("zero", "column-mean"):
        raise ContractError(f"unknown imputation strategy {strategy!r}")
    x = d.features.copy()
    mask = np.isnan(x)
    if not mask.any():
        return d
    if strategy == "zero":
        x[mask] = 0.0
    else:
        for j in range(x.shape[1]):
            col_mask = mask[:, j]
            if not col_mask.any():
                continue
            if col_mask.all():
                warnings.warn(f"column {d.feature_names[j]!r} entirely missing; imputed with zero",
                              ImputationWarning)
                x[col_mask, j] = 0.0
            else:
                x[col_mask, j] = x[~col_mask, j].mean()
    return Dataset(d.ids, d.timestamps, x, d.labels, d.feature_names)


def train_test_split(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split; the test side keeps the original (time) row order."""
    if not 0.0 < train_fraction < 1.0:
        raise ContractError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_mask = np.zeros(d.n_samples, dtype=bool)
    for c in (0, 1):
        idx = np.nonzero(d.labels == c)[0]
        n_train = int(len(idx) * train_fraction + 0.5)
        chosen = rng.permutation(idx)[:n_train]
        train_mask[chosen] = True
    return d.take(np.nonzero(train_mask)[0]), d.take(np.nonzero(~train_mask)[0])
