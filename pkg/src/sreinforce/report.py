"""Cross-seed summaries and learning-curve plots."""

from __future__ import annotations

import io

import numpy as np

from .trainer import moving_average


def last_window_mean(returns, window: int = 50) -> float:
    r = np.asarray(returns, dtype=float)
    return float(r[-window:].mean())


def summary_line(per_seed: list[float], label: str = "reward") -> str:
    """``reward 198.1 ± 2.2`` (mean and population std across seeds)."""
    x = np.asarray(per_seed, dtype=float)
    return f"{label} {x.mean():.1f} ± {x.std():.1f}"


def band(curves: list, window: int = 50):
    """Mean and std across seeds of each seed's moving-average return.

    Curves of unequal length are truncated to the shortest.
    """
    n = min(len(c) for c in curves)
    ma = np.array([moving_average(np.asarray(c, dtype=float)[:n], window) for c in curves])
    # statistics of offsets from the first curve, so identical curves give exactly zero width
    dev = ma - ma[0]
    return np.arange(1, n + 1), ma[0] + dev.mean(axis=0), dev.std(axis=0)


def plot_svg(groups: dict[str, list], window: int = 50, title: str = "") -> str:
    """SVG line chart: one mean curve with a ±1 std band per group.

    ``groups`` maps a legend label to a list of per-seed return series.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sreinforce"
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, curves in groups.items():
        x, mean, std = band(curves, window)
        (line,) = ax.plot(x, mean, label=label)
        ax.fill_between(x, mean - std, mean + std, color=line.get_color(), alpha=0.25, linewidth=0)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"return (moving average, {window})")
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
