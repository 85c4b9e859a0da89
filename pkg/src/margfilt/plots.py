"""Report figures rendered next to the delimited outputs.

All functions take plain arrays plus an output path and write a PNG; nothing
here feeds back into the numerics.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def render_estimates(path, state_names, steps, truth, means, variances, title):
    """Truth vs estimate with a two-sigma band, one panel per state."""
    n = truth.shape[1]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), squeeze=False, sharex=True)
        for i in range(n):
            ax = axes[i, 0]
            sig = np.sqrt(np.maximum(variances[:, i], 0.0))
            ax.plot(steps, truth[:, i], "k-", lw=1.0, label="truth")
            ax.plot(steps, means[:, i], "C0-", lw=1.2, label="estimate")
            ax.fill_between(
                steps, means[:, i] - 2 * sig, means[:, i] + 2 * sig,
                color="C0", alpha=0.2, label="±2σ",
            )
            ax.set_ylabel(state_names[i])
            if i == 0:
                ax.legend(loc="best")
        axes[-1, 0].set_xlabel("step")
        fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_nees(path, steps, nees_by_variant, bounds, dof_note):
    """Per-step NEES curves with the chi-square consistency band."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        for name, values in nees_by_variant.items():
            ax.plot(steps, values, lw=1.1, label=name)
        ax.axhspan(bounds[0], bounds[1], color="0.8", alpha=0.5, label="95% band (per step)")
        ax.set_xlabel("step")
        ax.set_ylabel("NEES")
        ax.set_title(f"Normalized estimation error squared ({dof_note})")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_differences(path, steps, diffs_by_pair):
    """Max-abs per-step mean differences between variant pairs, log scale."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        for label, values in diffs_by_pair.items():
            ax.semilogy(steps, np.maximum(values, 1e-18), lw=1.1, label=label)
        ax.set_xlabel("step")
        ax.set_ylabel("max |mean difference|")
        ax.set_title("Pairwise estimate differences")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
