"""Report rendering: aligned text tables, delimited files, ROC figures.

The evaluation CLI writes, side by side in the report directory: a text
table in the published column order, a machine-readable CSV, the ROC points
as two-column text, and a rendered ROC curve figure.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import EvalReport

HEADLINE_COLUMNS = ("Precision", "Recall", "F-measure", "AUC", "Accuracy")


def render_table(report: EvalReport, name: str = "model") -> str:
    """Aligned text table: headline row, then per-class details for CT."""
    row = report.metric_row()
    widths = [max(len(c), 9) for c in HEADLINE_COLUMNS]
    lines = [
        "  ".join(["Method".ljust(24)] + [c.rjust(w) for c, w in
                                          zip(HEADLINE_COLUMNS, widths)]),
        "  ".join([name.ljust(24)] + [f"{row[c]:.3f}".rjust(w)
                                      for c, w in zip(HEADLINE_COLUMNS, widths)]),
    ]
    if report.confusion_matrix is not None:
        lines.append("")
        lines.append(f"argmax accuracy: {report.argmax_accuracy:.3f}")
        lines.append("confusion matrix (rows = truth, cols = predicted):")
        class_names = list(report.per_class or {})
        header = " " * 18 + "  ".join(n.rjust(16) for n in class_names)
        lines.append(header)
        for name_i, counts in zip(class_names, report.confusion_matrix):
            lines.append(name_i.ljust(18) + "  ".join(str(c).rjust(16)
                                                      for c in counts))
        lines.append("")
        lines.append("per-class (one-vs-rest by argmax):")
        for cls, stats in (report.per_class or {}).items():
            lines.append(f"  {cls:18s} precision {stats['precision']:.3f}  "
                         f"recall {stats['recall']:.3f}  "
                         f"f-measure {stats['f_measure']:.3f}")
        macro = report.macro or {}
        lines.append(f"  {'macro':18s} precision {macro.get('precision', 0):.3f}  "
                     f"recall {macro.get('recall', 0):.3f}  "
                     f"f-measure {macro.get('f_measure', 0):.3f}")
    for key, value in report.subgroups.items():
        lines.append(f"{key}: {value:.3f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric", "value"])
    for column, value in report.metric_row().items():
        writer.writerow([column.lower(), f"{value:.6f}"])
    for key, value in (("tp", report.tp), ("fp", report.fp),
                       ("tn", report.tn), ("fn", report.fn), ("n", report.n)):
        writer.writerow([key, value])
    if report.argmax_accuracy is not None:
        writer.writerow(["argmax_accuracy", f"{report.argmax_accuracy:.6f}"])
    for key, value in report.subgroups.items():
        writer.writerow([key, f"{value:.6f}"])
    return out.getvalue()


def roc_points_text(points: Sequence[tuple[float, float]]) -> str:
    """Two-column (FPR TPR) text, one point per line."""
    return "".join(f"{fpr:.9f} {tpr:.9f}\n" for fpr, tpr in points)


def plot_roc(points: Sequence[tuple[float, float]], auc: float,
             path: str | Path, label: str = "model") -> None:
    """Render one ROC curve to an image file."""
    fig, ax = plt.subplots(figsize=(5, 5))
    fpr = [p[0] for p in points]
    tpr = [p[1] for p in points]
    ax.plot(fpr, tpr, lw=2, label=f"{label} (AUC = {auc:.3f})")
    ax.plot([0, 1], [0, 1], ls="--", lw=1, color="grey")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report_files(report: EvalReport, out_dir: str | Path,
                       name: str = "model") -> dict[str, Path]:
    """Emit report.txt, report.csv, roc_points.txt and roc_curve.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": out_dir / "report.txt",
        "csv": out_dir / "report.csv",
        "roc_points": out_dir / "roc_points.txt",
        "roc_figure": out_dir / "roc_curve.png",
    }
    paths["table"].write_text(render_table(report, name), encoding="utf-8")
    paths["csv"].write_text(report_csv(report), encoding="utf-8")
    paths["roc_points"].write_text(roc_points_text(report.roc_points),
                                   encoding="utf-8")
    plot_roc(report.roc_points, report.auc, paths["roc_figure"], name)
    return paths
