"""Report figures. Every function renders to a PNG path and returns it."""

import contextlib
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
    "legend.frameon": False,
}


@contextlib.contextmanager
def _figure(path, ncols=1):
    with plt.rc_context(STYLE):
        width = STYLE["figure.figsize"][0] * ncols
        fig, axes = plt.subplots(1, ncols, figsize=(width, STYLE["figure.figsize"][1]), squeeze=False)
        try:
            yield fig, axes[0]
            tmp = f"{path}.tmp.png"
            fig.savefig(tmp)
            os.replace(tmp, path)
        finally:
            plt.close(fig)


def png_path(csv_path):
    """``out/x.csv`` -> ``out/x.png``."""
    root, _ = os.path.splitext(str(csv_path))
    return root + ".png"


def plot_sweep(rows, claim_only_f1, path):
    """Macro-F1 and mean selected count against the budget K."""
    ks = [r[0] for r in rows]
    with _figure(path, ncols=2) as (fig, (ax_f1, ax_sel)):
        ax_f1.plot(ks, [r[1] for r in rows], "o-", label="verdict macro-F1")
        ax_f1.plot(ks, [r[2] for r in rows], "s--", label="evidence F1")
        ax_f1.axhline(claim_only_f1, color="0.5", ls=":", label="claim only")
        ax_f1.set_xlabel("budget K")
        ax_f1.set_ylabel("F1")
        ax_f1.legend()
        ax_sel.plot(ks, [r[3] for r in rows], "o-", label="selected")
        ax_sel.plot(ks, [r[4] for r in rows], "s--", label="runs")
        ax_sel.set_xlabel("budget K")
        ax_sel.set_ylabel("per instance")
        ax_sel.legend()
    return path


def plot_training(report, path):
    """Loss curves and dev F1 per epoch, from a TrainReport."""
    epochs = list(range(1, len(report.train_loss) + 1))
    with _figure(path, ncols=2) as (fig, (ax_loss, ax_f1)):
        ax_loss.plot(epochs, report.train_loss, "o-", label="train")
        ax_loss.plot(epochs, report.dev_loss, "s--", label="dev")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("NLL")
        ax_loss.legend()
        ax_f1.plot(epochs, report.dev_macro_f1, "o-", label="dev macro-F1")
        ax_f1.plot(epochs, report.dev_evidence_f1, "s--", label="dev evidence F1")
        ax_f1.set_xlabel("epoch")
        ax_f1.set_ylim(0, 1)
        ax_f1.legend()
    return path


def plot_metrics(report, path):
    """Per-label F1 bars for one MetricsReport."""
    from .corpus import LABELS

    with _figure(path) as (fig, (ax,)):
        ax.bar(range(len(LABELS)), report.per_label_f1, color="C0", alpha=0.8)
        ax.axhline(report.macro_f1, color="C3", ls="--", label=f"macro-F1 {report.macro_f1:.3f}")
        ax.set_xticks(range(len(LABELS)))
        ax.set_xticklabels(LABELS, rotation=35, ha="right")
        ax.set_ylim(0, 1)
        ax.set_ylabel("F1")
        ax.set_title(f"{report.extractor} / {report.verifier}, evidence F1 {report.evidence_f1:.3f}")
        ax.legend()
    return path
