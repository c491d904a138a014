"""Run-report emission: deterministic JSON + CSV outputs, transcripts, and
optional matplotlib figures rendered alongside the delimited files.

Wall-clock data lives in metadata.json so report.json is byte-identical for
identical configs.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import fedrf, fedsvm
from .errors import ConfigError
from .experiment import ExperimentConfig, PredictionTable, TrainedScenario, run_sections


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_predictions(table: PredictionTable, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,ts,gt,pred_cl,pred_fl,score_cl,score_fl\n")
        for i in range(table.n):
            fh.write(f"{int(table.ids[i])},{float(table.timestamps[i])!r},{int(table.gt[i])},"
                     f"{int(table.pred_cl[i])},{int(table.pred_fl[i])},"
                     f"{float(table.score_cl[i])!r},{float(table.score_fl[i])!r}\n")


def read_predictions(path: Path) -> PredictionTable:
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    if lines[0] != "id,ts,gt,pred_cl,pred_fl,score_cl,score_fl":
        raise ConfigError(f"{path}: unexpected predictions header")
    cols = [line.split(",") for line in lines[1:]]
    arr = np.array(cols, dtype=np.float64)
    return PredictionTable(arr[:, 0].astype(np.int64), arr[:, 1],
                           arr[:, 2].astype(np.int64), arr[:, 3].astype(np.int64),
                           arr[:, 4].astype(np.int64), arr[:, 5], arr[:, 6])


def _write_rq2_csv(section: dict, path: Path) -> None:
    names = ("acc", "pre", "f1", "mcc", "auc")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = ["group", "start", "length"]
        for m in names:
            header += [f"fl_{m}", f"cl_{m}", f"diff_{m}"]
        fh.write(",".join(header) + "\n")
        for g, row in enumerate(section["groups"]):
            cells = [str(g), str(row["start"]), str(row["length"])]
            for m in names:
                for v in (row["fl"][m], row["cl"][m], row["diff"][m]):
                    cells.append("" if v is None else repr(float(v)))
            fh.write(",".join(cells) + "\n")


def _write_rq4_csv(section: dict, path: Path, k: int) -> None:
    data = section[f"k{k}"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("group,cluster\n")
        for g, c in enumerate(data["cluster_labels"]):
            fh.write(f"{g},{c}\n")


def _write_stability_csv(section: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("group,fl_accuracy,cl_accuracy\n")
        for g, (a, b) in enumerate(zip(section["fl"]["stability_series"],
                                       section["cl"]["stability_series"])):
            fh.write(f"{g},{a!r},{b!r}\n")


def render_figures(sections: dict, fig_dir: Path) -> list[Path]:
    """Render per-section figures as PNG files next to the CSV output."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if "rq1" in sections:
        fig, ax = plt.subplots(figsize=(6, 4))
        fl = sections["rq1"]["fl"]["stability_series"]
        cl = sections["rq1"]["cl"]["stability_series"]
        groups = np.arange(1, len(fl) + 1)
        ax.plot(groups, fl, "b-", marker="o", label="FL")
        ax.plot(groups, cl, "r-.", marker="s", label="CL")
        ax.set_xlabel("time group")
        ax.set_ylabel("accuracy")
        ax.set_title("Stability: per-time-group accuracy")
        ax.legend()
        out = fig_dir / "rq1_stability.png"
        fig.savefig(out, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(out)

    if "rq2" in sections:
        names = ("acc", "pre", "f1", "mcc", "auc")
        fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 3.2))
        for ax, m in zip(axes, names):
            hist = sections["rq2"]["summary"][m]["histogram"]
            edges = hist["bin_edges"]
            counts = hist["counts"]
            if counts:
                ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
                       edgecolor="black")
            ax.set_title(f"{m.upper()} diff (CL - FL)")
            ax.set_xlabel("difference")
        axes[0].set_ylabel("groups")
        out = fig_dir / "rq2_diff_histograms.png"
        fig.savefig(out, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(out)

    if "rq3" in sections:
        fig, ax = plt.subplots(figsize=(4.5, 4))
        diff = np.array(sections["rq3"]["diff"])
        im = ax.imshow(diff, cmap="viridis")
        states = ("hit", "miss", "mistake")
        ax.set_xticks(range(3), states)
        ax.set_yticks(range(3), states)
        for i in range(3):
            for j in range(3):
                ax.text(j, i, f"{diff[i, j]:.3f}", ha="center", va="center", color="white")
        fig.colorbar(im, ax=ax)
        ax.set_title("|FL - CL| error-model parameters")
        out = fig_dir / "rq3_matrix_diff.png"
        fig.savefig(out, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(out)

    if "rq4" in sections:
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for ax, k in zip(axes, (1, 2)):
            data = sections["rq4"][f"k{k}"]
            sizes = data["cluster_sizes"] + [data["n_outliers"]]
            labels = [f"cluster {i}" for i in range(len(data["cluster_sizes"]))] + ["outliers"]
            ax.bar(labels, sizes, color=["C0"] * len(data["cluster_sizes"]) + ["C3"])
            ax.set_title(f"k={k}: {data['n_clusters']} clusters, "
                         f"silhouette {data['silhouette']:.3f}")
            ax.set_ylabel("groups")
        out = fig_dir / "rq4_clusters.png"
        fig.savefig(out, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(out)

    return written


def write_run_outputs(scenario: TrainedScenario, sections: dict, out_dir: str | Path,
                      run_id: str = "run", figures: bool = False) -> int:
    """Materialize the full run report; returns the process exit code
    (0 iff every enabled verdict is within its threshold)."""
    cfg = scenario.cfg
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    _write_json(cfg.as_dict(), out / "config.json")
    _write_json(sections, out / "report.json")
    _write_json({"wall_clock_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                 "run_id": run_id}, out / "metadata.json")
    write_predictions(scenario.table, out / "predictions.csv")
    if scenario.fl_transcript:
        if cfg.scenario == "hfl":
            fedsvm.write_transcript(scenario.fl_transcript, run_id,
                                    out / "transcript_fl.jsonl", cfg.log_payloads)
            fedsvm.write_transcript(scenario.cl_transcript, run_id,
                                    out / "transcript_cl.jsonl", cfg.log_payloads)
        else:
            fedrf.write_transcript(scenario.fl_transcript, run_id, out / "transcript_fl.jsonl")
    if "rq1" in sections:
        _write_stability_csv(sections["rq1"], out / "rq1_stability.csv")
    if "rq2" in sections:
        _write_rq2_csv(sections["rq2"], out / "rq2_groups.csv")
    if "rq4" in sections:
        for k in (1, 2):
            _write_rq4_csv(sections["rq4"], out / f"rq4_clusters_k{k}.csv", k)
    if figures:
        render_figures(sections, out / "figures")
    return 0 if sections["all_within"] else 1


def replay(out_dir: str | Path, figures: bool = False) -> int:
    """Recompute all sections from the stored config and predictions."""
    out = Path(out_dir)
    cfg = ExperimentConfig.from_dict(json.loads((out / "config.json").read_text("utf-8")))
    table = read_predictions(out / "predictions.csv")
    sections = run_sections(cfg, table)
    _write_json(sections, out / "report_replay.json")
    if figures:
        render_figures(sections, out / "figures")
    return 0 if sections["all_within"] else 1
