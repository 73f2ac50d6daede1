import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

CURVE_PANELS = (
    ("loss", ("loss_ps", "loss_pt")),
    ("F1", ("clip_f1", "event_f1", "segment_f1")),
    ("lr", ("lr",)),
    ("a", ("a",)),
)


def plot_class_f1(reports, path, title=None):
    """
    Class-wise F1 bars, one bar group per class and one bar per report.
    :param reports: (List[ScoreReport]) reports over the same classes.
    :param path: (str) output image path.
    """
    classes = reports[0].classes
    x = np.arange(len(classes))
    width = 0.8 / len(reports)
    fig, ax = plt.subplots(figsize=(max(6, len(classes) * 0.9), 4))
    for i, report in enumerate(reports):
        ax.bar(x + i * width - 0.4 + width / 2, report.f1 * 100, width,
               label=f"{report.variant} (macro {report.macro_f1 * 100:.2f}%)")
    ax.set_xticks(x)
    ax.set_xticklabels(classes, rotation=45, ha="right")
    ax.set_ylabel("F1 (%)")
    ax.set_ylim(0, 100)
    ax.legend(loc="upper right", fontsize="small")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(history: pd.DataFrame, path, title=None):
    fig, axes = plt.subplots(1, len(CURVE_PANELS), figsize=(4 * len(CURVE_PANELS), 3.2))
    for ax, (name, columns) in zip(axes, CURVE_PANELS):
        for column in columns:
            if column in history:
                ax.plot(history["epoch"], history[column], label=column)
        ax.set_xlabel("epoch")
        ax.set_title(name)
        if len(columns) > 1:
            ax.legend(fontsize="small")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_duration_stats(stats: pd.DataFrame, path):
    """Total duration, number of events and average duration per class, as three bar panels."""
    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    panels = (("total_duration", "total duration (s)"), ("count", "number of events"),
              ("avg_duration", "average duration (s)"))
    for ax, (column, label) in zip(axes, panels):
        ax.bar(stats["event_label"], stats[column])
        ax.set_title(label)
        ax.tick_params(axis="x", labelrotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
