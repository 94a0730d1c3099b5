"""Matplotlib figures written next to the text/JSONL reports."""

from __future__ import annotations

import math
import os
from collections import defaultdict
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
    # fixed metadata keeps PNG bytes reproducible
    "svg.hashsalt": "driftbench",
}
SUBTYPE_COLORS = {
    "non_drift": "#1b9e77",
    "hard_negative": "#66a61e",
    "abrupt_drift": "#d95f02",
    "smooth_morph": "#7570b3",
}


def _save(fig, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_min_similarity(min_sims: Mapping[str, float], subtypes: Mapping[str, str],
                        path: str | os.PathLike, tau: float | None = None) -> Path:
    """Strip plot of min(sim_12, sim_23) per subtype."""
    groups = defaultdict(list)
    for sid, v in min_sims.items():
        groups[subtypes.get(sid, "unknown")].append(v)
    names = [n for n in SUBTYPE_COLORS if n in groups] + sorted(set(groups) - set(SUBTYPE_COLORS))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        rng = np.random.default_rng(0)
        for i, name in enumerate(names):
            v = np.asarray(groups[name])
            ax.scatter(i + rng.uniform(-0.15, 0.15, v.size), v, s=12, alpha=0.8,
                       color=SUBTYPE_COLORS.get(name, "gray"))
            ax.hlines(np.median(v), i - 0.25, i + 0.25, color="black", lw=1)
        if tau is not None:
            ax.axhline(tau, ls="--", color="firebrick", lw=1, label=f"tau = {tau:g}")
            ax.legend(loc="lower left")
        ax.set_xticks(range(len(names)), names)
        ax.set_ylabel("min adjacent cosine")
        return _save(fig, path)


def plot_threshold_sweep(taus: Sequence[float], f1: Sequence[float], accuracy: Sequence[float],
                         path: str | os.PathLike, best_tau: float | None = None,
                         fixed_tau: float | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(taus, f1, label="F1 (drift positive)")
        ax.plot(taus, accuracy, label="accuracy", alpha=0.8)
        if best_tau is not None:
            ax.axvline(best_tau, color="black", lw=0.8, ls=":", label=f"best tau = {best_tau:g}")
        if fixed_tau is not None:
            ax.axvline(fixed_tau, color="firebrick", lw=0.8, ls="--", label=f"fixed tau = {fixed_tau:g}")
        ax.set_xlabel("threshold tau")
        ax.set_ylim(0, 1.02)
        ax.legend()
        return _save(fig, path)


def plot_bound_sweep(reports, path: str | os.PathLike) -> Path:
    """Empirical total error against the 4 exp(-delta^2 / 2 sigma^2) bound, one series per sigma."""
    by_sigma = defaultdict(list)
    for r in reports:
        by_sigma[r.config.sigma].append(r)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for i, (sigma, rs) in enumerate(sorted(by_sigma.items())):
            rs = sorted(rs, key=lambda r: r.delta)
            c = colors[i % len(colors)]
            x = [r.delta ** 2 for r in rs]
            floor = 0.5 / (rs[0].trials + 1)
            ax.plot(x, [min(r.total_bound, 4.0) for r in rs], color=c, ls="--", lw=1)
            ax.plot(x, [max(r.total_empirical, floor) for r in rs], "o", color=c, ms=4,
                    label=f"sigma = {sigma:g}")
        ax.set_yscale("log")
        ax.set_xlabel("delta^2")
        ax.set_ylabel("total error (points) / bound (dashed)")
        ax.legend()
        return _save(fig, path)


def plot_comparison(rows, path: str | os.PathLike) -> Path:
    labels = [f"{r.run}\n{r.input_type}" for r in rows]
    x = np.arange(len(rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(6.4, 1.2 * len(rows)), 4.0))
        ax.bar(x - 0.2, [r.accuracy for r in rows], 0.4, label="accuracy")
        ax.bar(x + 0.2, [r.f1 for r in rows], 0.4, label="F1")
        ax.set_xticks(x, labels, fontsize=7)
        ax.set_ylim(0, 1)
        ax.legend()
        return _save(fig, path)


def plot_morph(samples: np.ndarray, sample_rate: int, window: tuple[float, float],
               path: str | os.PathLike) -> Path:
    t = np.arange(len(samples)) / sample_rate
    step = max(1, int(math.ceil(len(samples) / 20000)))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 2.8))
        ax.plot(t[::step], samples[::step], lw=0.4, color="#444444")
        ax.axvspan(*window, color="#7570b3", alpha=0.2, label="cross-fade")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("amplitude")
        ax.legend(loc="upper right")
        return _save(fig, path)
