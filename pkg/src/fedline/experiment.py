"""End-to-end experiment pipeline: scenario construction, RQ1-RQ4 sections.

The centralized SVM baseline is the federated run with a single client holding
all training data, so the algorithm kernel is identical on both sides of every
comparison; the centralized forest shares its seeds with the federated one.
All sections are computed from a prediction table (id, ts, gt, both models'
predictions and scores), which also makes replay from stored predictions exact.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cart, dataio, fedrf, fedsvm, markov, metrics, svm
from .errors import ConfigError

_SEED_FIELDS = ("seed_data", "seed_split", "seed_partition", "seed_model",
                "seed_rq2_groups", "seed_rq4_groups")


@dataclass
class ExperimentConfig:
    scenario: str = "hfl"
    csv_path: str | None = None
    synthetic_n_samples: int = 6000
    synthetic_n_features: int = 20
    synthetic_positive_fraction: float = 0.6667
    synthetic_sparsity: float = 0.0
    synthetic_class_separation: float = 2.5
    imputation: str = "column-mean"
    pca_components: int | None = None
    train_fraction: float = 0.7
    n_clients: int = 4
    feature_groups: list[list[str]] | None = None
    rounds: int = 10
    param_delta_tol: float | None = None
    svm_C: float = 1.0
    svm_eta0: float = 0.05
    svm_decay: float = 1e-4
    svm_epochs_per_call: int = 2
    svm_class_weight_neg: float = 1.0
    svm_class_weight_pos: float = 1.0
    n_trees: int = 15
    feature_fraction: float = 0.8
    sample_fraction: float = 0.7
    max_depth: int = 8
    min_samples_leaf: int = 2
    max_candidates: int | None = 64
    delta: float = 0.1
    delta_mcc_auc: float = 0.2
    rq1: bool = True
    rq2: bool = True
    rq3: bool = True
    rq4: bool = True
    rq2_n_groups: int = 100
    rq2_len_lo: int = 300
    rq2_len_hi: int = 1000
    rq4_n_groups: int = 100
    rq4_len_lo: int = 300
    rq4_len_hi: int = 1000
    rq4_eps_k1: float = 5.0
    rq4_eps_k2: float = 8.0
    rq4_min_pts: int = 3
    stability_groups: int = 10
    seed_data: int = 1
    seed_split: int = 2
    seed_partition: int = 3
    seed_model: int = 4
    seed_rq2_groups: int = 5
    seed_rq4_groups: int = 6
    out_dir: str = "out"
    log_payloads: bool = False

    def __post_init__(self):
        if self.scenario not in ("hfl", "vfl"):
            raise ConfigError(f"scenario must be 'hfl' or 'vfl', got {self.scenario!r}")
        if self.delta <= 0 or self.delta_mcc_auc <= 0:
            raise ConfigError("delta thresholds must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a flat object")
        return cls.from_dict(data)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_master_seed(self, seed: int) -> "ExperimentConfig":
        """Derive all component seeds from one master seed."""
        updates = {name: seed + i for i, name in enumerate(_SEED_FIELDS)}
        return dataclasses.replace(self, **updates)

    def svm_config(self) -> svm.SvmConfig:
        return svm.SvmConfig(C=self.svm_C, eta0=self.svm_eta0, decay=self.svm_decay,
                             epochs_per_call=self.svm_epochs_per_call, seed=self.seed_model,
                             class_weights=(self.svm_class_weight_neg, self.svm_class_weight_pos))

    def forest_config(self) -> cart.ForestConfig:
        tree = cart.TreeConfig(max_depth=self.max_depth,
                               min_samples_leaf=self.min_samples_leaf,
                               max_candidates=self.max_candidates)
        return cart.ForestConfig(n_trees=self.n_trees,
                                 feature_fraction=self.feature_fraction,
                                 sample_fraction=self.sample_fraction,
                                 seed=self.seed_model, tree=tree)


@dataclass
class PredictionTable:
    """Test-split predictions of both models, sorted by timestamp."""

    ids: np.ndarray
    timestamps: np.ndarray
    gt: np.ndarray
    pred_cl: np.ndarray
    pred_fl: np.ndarray
    score_cl: np.ndarray
    score_fl: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.timestamps, kind="stable")
        for name in ("ids", "timestamps", "gt", "pred_cl", "pred_fl", "score_cl", "score_fl"):
            setattr(self, name, np.asarray(getattr(self, name))[order])

    @property
    def n(self) -> int:
        return len(self.ids)

    def model(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        if which == "cl":
            return self.pred_cl, self.score_cl
        if which == "fl":
            return self.pred_fl, self.score_fl
        raise ConfigError(f"which must be 'cl' or 'fl', got {which!r}")


@dataclass
class TrainedScenario:
    cfg: ExperimentConfig
    table: PredictionTable
    fl_transcript: list = field(default_factory=list)
    cl_transcript: list = field(default_factory=list)


def _vertical_groups(cfg: ExperimentConfig, names: tuple[str, ...]) -> list[list[str]]:
    if cfg.feature_groups is not None:
        return cfg.feature_groups
    k = cfg.n_clients
    if k < 1 or k > len(names):
        raise ConfigError(f"n_clients={k} infeasible for {len(names)} features")
    bounds = np.linspace(0, len(names), k + 1).astype(int)
    return [list(names[bounds[i]:bounds[i + 1]]) for i in range(k)]


def prepare_data(cfg: ExperimentConfig) -> dataio.Dataset:
    if cfg.csv_path is not None:
        data = dataio.load_csv(cfg.csv_path)
    else:
        spec = dataio.SyntheticSpec(cfg.synthetic_n_samples, cfg.synthetic_n_features,
                                    cfg.synthetic_positive_fraction, cfg.synthetic_sparsity,
                                    cfg.synthetic_class_separation, cfg.seed_data)
        data = dataio.generate_synthetic(spec)
    data = dataio.impute_missing(data, cfg.imputation)
    if cfg.pca_components is not None:
        model = dataio.fit_pca(data, n_components=cfg.pca_components)
        data = dataio.pca_apply(model, data)
    return data


def train_scenario(cfg: ExperimentConfig) -> TrainedScenario:
    """Train FL and CL models on an identical train split; predict the test split."""
    data = prepare_data(cfg)
    train, test = dataio.train_test_split(data, cfg.train_fraction, cfg.seed_split)
    if cfg.scenario == "hfl":
        svm_cfg = cfg.svm_config()
        partition = dataio.partition_horizontal(train, cfg.n_clients, cfg.seed_partition)
        fl_model, fl_tr = fedsvm.run_fedsvm(partition, svm_cfg, cfg.rounds, cfg.param_delta_tol)
        single = dataio.HorizontalPartition((train,))
        cl_model, cl_tr = fedsvm.run_fedsvm(single, svm_cfg, cfg.rounds, cfg.param_delta_tol)
        score_fl = svm.svm_scores(fl_model, test)
        score_cl = svm.svm_scores(cl_model, test)
        table = PredictionTable(test.ids, test.timestamps, test.labels,
                                (score_cl > 0).astype(np.int64),
                                (score_fl > 0).astype(np.int64),
                                score_cl, score_fl)
        return TrainedScenario(cfg, table, fl_tr, cl_tr)
    forest_cfg = cfg.forest_config()
    groups = _vertical_groups(cfg, train.feature_names)
    ordered = [f for g in groups for f in g]
    train_ordered = train.select_features(ordered)
    test_ordered = test.select_features(ordered)
    vpart = dataio.partition_vertical(train_ordered, groups)
    result = fedrf.run_fedrf(vpart, forest_cfg)
    test_vpart = dataio.partition_vertical(test_ordered, groups)
    score_fl = fedrf.fedrf_votes(result, list(test_vpart.clients))
    forest = cart.build_forest(train_ordered, forest_cfg)
    score_cl = cart.forest_votes(forest, test_ordered)
    table = PredictionTable(test.ids, test.timestamps, test.labels,
                            (score_cl > 0.5).astype(np.int64),
                            (score_fl > 0.5).astype(np.int64),
                            score_cl, score_fl)
    return TrainedScenario(cfg, table, list(result.transcript), [])


def _deltas(cfg: ExperimentConfig) -> dict[str, float]:
    return {"mcc": cfg.delta_mcc_auc, "auc": cfg.delta_mcc_auc}


def run_rq1(cfg: ExperimentConfig, table: PredictionTable) -> dict:
    """Whole-test-split metric comparison at the delta thresholds."""
    reports = {}
    for which in ("fl", "cl"):
        pred, score = table.model(which)
        reports[which] = metrics.evaluate(table.gt, pred, score, table.timestamps,
                                          cfg.stability_groups)
    comparison = metrics.compare_reports(reports["fl"], reports["cl"], cfg.delta, _deltas(cfg))
    return {"fl": reports["fl"].as_dict(), "cl": reports["cl"].as_dict(),
            "comparison": {k: v for k, v in comparison.items() if k != "all_within"},
            "within": comparison["all_within"]}


_RQ2_METRICS = ("acc", "pre", "f1", "mcc", "auc")


def run_rq2(cfg: ExperimentConfig, table: PredictionTable) -> dict:
    """Per-group comparison on random time-contiguous partial test data.

    Verdict per metric: at least 95% of the groups where the metric is defined
    fall within its threshold. Histogram bins are 0.05 wide.
    """
    d = dataio.Dataset(table.ids, table.timestamps,
                       np.zeros((table.n, 0)), table.gt, ())
    groups = markov.sample_groups(d, cfg.rq2_n_groups,
                                  (cfg.rq2_len_lo, cfg.rq2_len_hi), cfg.seed_rq2_groups)
    rows = []
    for start, length in groups:
        sl = slice(start, start + length)
        rec = {"start": start, "length": length}
        for which in ("fl", "cl"):
            pred, score = table.model(which)
            gm = metrics.group_metrics(table.gt[sl], pred[sl], score[sl])
            rec[which] = gm
        rec["diff"] = {m: (None if rec["cl"][m] is None or rec["fl"][m] is None
                           else rec["cl"][m] - rec["fl"][m]) for m in _RQ2_METRICS}
        rows.append(rec)
    thresholds = {m: _deltas(cfg).get(m, cfg.delta) for m in _RQ2_METRICS}
    summary = {}
    for m in _RQ2_METRICS:
        diffs = [r["diff"][m] for r in rows if r["diff"][m] is not None]
        within = [abs(v) < thresholds[m] for v in diffs]
        hist = _histogram(diffs, 0.05)
        entry = {"n_defined": len(diffs), "n_within": int(np.sum(within)),
                 "threshold": thresholds[m], "histogram": hist,
                 "fraction_within": float(np.mean(within)) if diffs else None,
                 "within": bool(diffs) and float(np.mean(within)) >= 0.95}
        if len(diffs) >= 2 and float(np.std(diffs)) > 0:
            entry["t_test"] = metrics.threshold_t_test(np.abs(diffs), thresholds[m])
        summary[m] = entry
    return {"groups": rows, "summary": summary,
            "within": all(summary[m]["within"] for m in _RQ2_METRICS)}


def _histogram(values, width: float) -> dict:
    if not values:
        return {"bin_edges": [], "counts": []}
    values = np.asarray(values, dtype=np.float64)
    lo = float(np.floor(values.min() / width) * width)
    hi = float(np.ceil(values.max() / width) * width)
    n_bins = max(1, int(round((hi - lo) / width)))
    counts, edges = np.histogram(values, bins=n_bins, range=(lo, lo + n_bins * width))
    return {"bin_edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def run_rq3(cfg: ExperimentConfig, table: PredictionTable) -> dict:
    """Prediction-error Markov model comparison at delta."""
    matrices = {}
    for which in ("fl", "cl"):
        pred, _ = table.model(which)
        seq = markov.build_error_sequence(table.gt, pred)
        matrices[which] = markov.fit_markov(seq, 1, states=markov.ERROR_STATES)
    cmp = markov.compare_matrices(matrices["fl"], matrices["cl"], cfg.delta)
    return {
        "fl_probs": matrices["fl"].probs.tolist(),
        "cl_probs": matrices["cl"].probs.tolist(),
        "diff": cmp["diff"].tolist(),
        "mean_diff": cmp["mean_diff"],
        "max_diff": cmp["max_diff"],
        "within": cmp["within"],
    }


_VERDICTS = {
    (True, True): "strong heterogeneity and no significant FL/CL difference: "
                  "the equivalence conclusion is strengthened; FL can replace CL",
    (True, False): "strong heterogeneity with a significant FL/CL difference: "
                   "heterogeneity may be one cause of the disagreement",
    (False, True): "weak heterogeneity and no significant FL/CL difference: "
                   "FL can replace CL under data homogeneity",
    (False, False): "weak heterogeneity with a significant FL/CL difference: "
                    "FL cannot replace CL even on homogeneous data",
}


def run_rq4(cfg: ExperimentConfig, table: PredictionTable,
            rq_answers: dict[str, bool]) -> dict:
    """Ground-truth label heterogeneity (k=1 and k=2) plus the four-way verdict."""
    d = dataio.Dataset(table.ids, table.timestamps,
                       np.zeros((table.n, 0)), table.gt, ())
    reports = markov.heterogeneity(
        d, n_groups=cfg.rq4_n_groups, len_range=(cfg.rq4_len_lo, cfg.rq4_len_hi),
        k_orders=(1, 2), eps_degrees={1: cfg.rq4_eps_k1, 2: cfg.rq4_eps_k2},
        min_pts=cfg.rq4_min_pts, seed=cfg.seed_rq4_groups)
    out = {}
    strong = False
    for k, rep in reports.items():
        strong = strong or rep.strong_heterogeneity
        out[f"k{k}"] = {
            "n_clusters": rep.n_clusters,
            "cluster_sizes": list(rep.cluster_sizes),
            "n_outliers": rep.n_outliers,
            "silhouette": rep.silhouette,
            "eps_degrees": rep.eps_degrees,
            "min_pts": rep.min_pts,
            "cluster_labels": rep.cluster_labels.tolist(),
        }
    answers_positive = all(rq_answers.values()) if rq_answers else True
    out["strong_heterogeneity"] = strong
    out["rq_answers"] = rq_answers
    out["verdict"] = _VERDICTS[(strong, answers_positive)]
    return out


def run_sections(cfg: ExperimentConfig, table: PredictionTable) -> dict:
    """Compute every enabled RQ section from a prediction table."""
    enabled = [name for name, on in
               (("rq1", cfg.rq1), ("rq2", cfg.rq2), ("rq3", cfg.rq3), ("rq4", cfg.rq4)) if on]
    if not enabled:
        raise ConfigError("no RQ enabled")
    sections: dict = {}
    answers: dict[str, bool] = {}
    if cfg.rq1:
        sections["rq1"] = run_rq1(cfg, table)
        answers["rq1"] = sections["rq1"]["within"]
    if cfg.rq2:
        sections["rq2"] = run_rq2(cfg, table)
        answers["rq2"] = sections["rq2"]["within"]
    if cfg.rq3:
        sections["rq3"] = run_rq3(cfg, table)
        answers["rq3"] = sections["rq3"]["within"]
    if cfg.rq4:
        sections["rq4"] = run_rq4(cfg, table, answers)
    sections["verdicts"] = {name: answers[name] for name in answers}
    sections["all_within"] = all(answers.values()) if answers else True
    return sections
