"""Figures for the report path: prediction error bars and objective traces.

Rendering uses the non-interactive Agg backend so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, ax, path):
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    # a fixed metadata dict keeps the PNG bytes stable between reruns
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_predictions(x, mean, sd, path, actual=None, xlabel="x1", title=None):
    """Predicted rate with one-sd error bars against a covariate.

    Rows are sorted by ``x``; ``actual`` (true rate or observed count) is
    drawn as open markers when given.
    """
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.errorbar(x[order], np.asarray(mean)[order], yerr=np.asarray(sd)[order], fmt="o",
                ms=2.5, lw=0.6, capsize=1.5, color="black", label="predicted +/- 1 sd")
    if actual is not None:
        ax.plot(x[order], np.asarray(actual)[order], "o", mfc="none", ms=3.5, mew=0.6,
                color="tab:red", label="actual")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("rate")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    _finish(fig, ax, path)


def plot_traces(traces, path, title=None):
    """Overlay the regularized-error trace of every chain."""
    traces = np.atleast_2d(np.asarray(traces, dtype=float))
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    for k, tr in enumerate(traces):
        ax.plot(np.arange(tr.size), tr, lw=0.6, label=f"chain {k}")
    ax.set_xlabel("retained sample")
    ax.set_ylabel("S(w)")
    if title:
        ax.set_title(title, fontsize=9)
    if traces.shape[0] <= 10:
        ax.legend(frameon=False, fontsize=7)
    _finish(fig, ax, path)
