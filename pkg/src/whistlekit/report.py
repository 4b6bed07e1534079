"""Evaluation report bundle and its file emitters (JSON, CSV, SVG figures)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import ConfusionMatrix, RocCurve  # noqa: E402

# fixed hash salt so SVG element ids do not change between runs
matplotlib.rcParams["svg.hashsalt"] = "whistlekit"


@dataclass
class EvalReport:
    accuracy: float | None
    precision: float | None
    recall: float | None
    tpr: float | None
    fpr: float | None
    confusion: ConfusionMatrix
    roc: RocCurve | None = None
    per_fold: list = field(default_factory=list)
    config_fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "confusion": self.confusion.to_dict(),
            "roc": None if self.roc is None else {
                "points": [list(p) for p in self.roc.points],
                "auc": self.roc.auc,
            },
            "per_fold": self.per_fold,
            "config_fingerprint": self.config_fingerprint,
        }

    @classmethod
    def from_metrics(cls, metrics: dict, roc: RocCurve | None = None,
                     per_fold: list = (), config_fingerprint: str = "") -> "EvalReport":
        return cls(
            accuracy=metrics["accuracy"], precision=metrics["precision"],
            recall=metrics["recall"], tpr=metrics["tpr"], fpr=metrics["fpr"],
            confusion=metrics["confusion"], roc=roc,
            per_fold=list(per_fold), config_fingerprint=config_fingerprint,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        roc = None
        if d.get("roc"):
            roc = RocCurve(points=[tuple(p) for p in d["roc"]["points"]],
                           auc=d["roc"]["auc"])
        return cls(
            accuracy=d["accuracy"], precision=d["precision"], recall=d["recall"],
            tpr=d["tpr"], fpr=d["fpr"],
            confusion=ConfusionMatrix(**d["confusion"]), roc=roc,
            per_fold=d.get("per_fold", []),
            config_fingerprint=d.get("config_fingerprint", ""),
        )


def _fmt(value) -> str:
    return "undefined" if value is None else repr(float(value))


def _save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_roc(roc: RocCurve, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    xs = [p[0] for p in roc.points]
    ys = [p[1] for p in roc.points]
    ax.plot(xs, ys, color="tab:blue")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(f"AUC = {roc.auc:.3f}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    _save_svg(fig, path)


def plot_confusion(cm: ConfusionMatrix, path) -> None:
    grid = [[cm.tn, cm.fp], [cm.fn, cm.tp]]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(grid, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center")
    ax.set_xticks([0, 1], ["noise", "whistle"])
    ax.set_yticks([0, 1], ["noise", "whistle"])
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    ax.set_title("Confusion matrix")
    _save_svg(fig, path)


def emit_report(report: EvalReport, out_dir, formats=("json", "csv", "svg")) -> list:
    """Write report.json / metrics.csv / roc.csv / roc.svg / confusion.svg.

    Output bytes are deterministic for a given report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if "json" in formats:
        path = out_dir / "report.json"
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        written.append(path)

    if "csv" in formats:
        path = out_dir / "metrics.csv"
        with open(path, "w", newline="") as fh:
            fh.write("metric,value\n")
            for name in ("accuracy", "precision", "recall", "tpr", "fpr"):
                fh.write(f"{name},{_fmt(getattr(report, name))}\n")
            for name, value in report.confusion.to_dict().items():
                fh.write(f"{name},{value}\n")
            if report.roc is not None:
                fh.write(f"auc,{_fmt(report.roc.auc)}\n")
        written.append(path)

        if report.roc is not None:
            path = out_dir / "roc.csv"
            with open(path, "w", newline="") as fh:
                fh.write("fpr,tpr\n")
                for x, y in report.roc.points:
                    fh.write(f"{x!r},{y!r}\n")
            written.append(path)

    if "svg" in formats:
        if report.roc is not None:
            plot_roc(report.roc, out_dir / "roc.svg")
            written.append(out_dir / "roc.svg")
        plot_confusion(report.confusion, out_dir / "confusion.svg")
        written.append(out_dir / "confusion.svg")

    return written
