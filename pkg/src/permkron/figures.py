"""Figure rendering for the report paths.

Every subcommand that writes delimited output can also drop a PNG next to
it. Figures are derived artifacts: the byte-identity guarantee applies to
records and tables, not to the images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def sizing_curve_figure(curve_rows, optimum, path):
    """Effective width m against channel count C, with the analytic optimum marked."""
    cs = [row[0] for row in curve_rows]
    ms = [row[2] for row in curve_rows]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(cs, ms, lw=1.5)
    c_star, _, m_max = optimum
    ax.axvline(c_star, color="crimson", ls="--", lw=1, label=f"C* = {c_star:.1f}")
    ax.axhline(m_max, color="gray", ls=":", lw=1)
    ax.set_xlabel("channels C")
    ax.set_ylabel("effective width m = S*C")
    ax.legend()
    return _save(fig, path)


def spectrum_histogram(values, path, title=""):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.hist(values, bins=60, density=True, color="steelblue")
    ax.set_xlabel("normalized singular value")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def a_sweep_figure(rows, path):
    """Largest normalized singular value per sparsity exponent, mean over trials."""
    by_a: dict = {}
    for row in rows:
        by_a.setdefault(row["a"], []).append(row["largest"])
    xs = sorted(by_a)
    means = [sum(by_a[a]) / len(by_a[a]) for a in xs]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(xs, means, marker="o")
    for a in xs:
        ax.scatter([a] * len(by_a[a]), by_a[a], s=8, alpha=0.35, color="gray")
    ax.set_xlabel("sparsity exponent a")
    ax.set_ylabel("largest normalized singular value")
    return _save(fig, path)


def training_curves_figure(history, path):
    epochs = [row["epoch"] for row in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.2))
    ax1.plot(epochs, [row["train_loss"] for row in history], label="train")
    ax1.plot(epochs, [row["test_loss"] for row in history], label="test")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax2.plot(epochs, [row["train_acc"] for row in history], label="train")
    ax2.plot(epochs, [row["test_acc"] for row in history], label="test")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.legend()
    return _save(fig, path)


def sweep_figure(cells, path):
    """Median best test accuracy against effective width, one line per mode."""
    by_mode: dict = {}
    for cell in cells:
        if cell.get("failed"):
            continue
        key = (cell["mode"], cell["tokens"] * cell["channels"])
        by_mode.setdefault(key, []).append(cell["best_test_acc"])
    modes = sorted({mode for mode, _ in by_mode})
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for mode in modes:
        widths = sorted(m for md, m in by_mode if md == mode)
        medians = []
        for m in widths:
            vals = sorted(by_mode[(mode, m)])
            medians.append(vals[len(vals) // 2])
        ax.plot(widths, medians, marker="o", label=mode)
    ax.set_xscale("log")
    ax.set_xlabel("effective width m = S*C")
    ax.set_ylabel("median best test accuracy")
    ax.legend()
    return _save(fig, path)
