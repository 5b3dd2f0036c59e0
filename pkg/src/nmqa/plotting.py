"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}
COLORS = {"nmqa": "tab:purple", "naive": "tab:gray"}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_scoreboard(scoreboard, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        for strategy in scoreboard.strategies():
            entries = [e for e in scoreboard if e.strategy == strategy]
            T = [e.T for e in entries]
            ax.errorbar(
                T, [e.avg_ssim for e in entries], yerr=[e.sem for e in entries],
                marker="o", ms=3, capsize=2, label=strategy, color=COLORS.get(strategy),
            )
        ax.set_xscale("log")
        ax.set_xlabel("measurement budget T")
        ax.set_ylabel("Avg. SSIM")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_ratio(pairs, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        if pairs:
            x, y = zip(*pairs)
            ax.plot(x, y, "-", color=COLORS["nmqa"])
        ax.axhline(1.0, color="k", lw=0.5, ls=":")
        ax.set_xlabel("target Avg. SSIM")
        ax.set_ylabel("naive / NMQA measurements")
        return _save(fig, path)


def _grid(values, array):
    return np.asarray(values, dtype=float).reshape(array.rows, array.cols)


def plot_maps(array, truth, records, path) -> Path:
    """True map beside single-run reconstructions; NMQA panels show the control path."""
    panels = [("true", truth.values, None)] + [
        (f"{r.strategy} T={r.T}", r.final_map, r) for r in records
    ]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(2.2 * len(panels), 2.4), squeeze=False)
        for ax, (title, values, rec) in zip(axes[0], panels):
            im = ax.imshow(_grid(values, array), vmin=0, vmax=np.pi, cmap="viridis", origin="upper")
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
            if rec is not None and rec.strategy == "nmqa" and len(rec.trajectory) > 1:
                rr, cc = np.divmod(np.asarray(rec.trajectory), array.cols)
                ax.plot(cc, rr, "-", color="w", lw=0.6, alpha=0.8)
                ax.plot(cc[0], rr[0], "o", color="w", ms=3)
        fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8, label="phase (rad)")
        return _save(fig, path)


def plot_tuning(result, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 3.0))
        l1 = [c.lambda1 for c in result.candidates]
        l2 = [c.lambda2 for c in result.candidates]
        score = [c.avg_ssim for c in result.candidates]
        ax.scatter(l1, l2, s=4, c="k")
        imp = result.improved
        if imp:
            sc = ax.scatter(
                [c.lambda1 for c in imp], [c.lambda2 for c in imp],
                c=[c.avg_ssim for c in imp], s=30, alpha=0.6, cmap="viridis",
                vmin=min(score), vmax=max(score),
            )
            fig.colorbar(sc, ax=ax, label="Avg. SSIM")
        ax.plot(result.best.lambda1, result.best.lambda2, "*", color="tab:green", ms=12)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel(r"$\lambda_1$")
        ax.set_ylabel(r"$\lambda_2$")
        ax.set_title(f"T={result.T}")
        return _save(fig, path)
