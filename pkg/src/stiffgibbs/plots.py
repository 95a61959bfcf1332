"""Figure rendering for the CLI report paths.

Figures are a convenience layer next to the CSV outputs (which remain the
data contract): stiffness trace plots for chain diagnostics and damage
probability curves for assessments.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402


def plot_theta_trace(chain, path, burn_in: int | None = None):
    """Markov-chain traces of the stiffness scaling parameters."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for j, lab in enumerate(chain.labels):
        ax.plot(chain.theta[:, j], lw=0.7, label=lab)
    if burn_in is not None and 0 < burn_in < len(chain):
        ax.axvline(burn_in, color="k", ls="--", lw=1, label=f"burn-in = {burn_in}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("stiffness scaling")
    ax.set_title(f"{chain.algorithm} sampler, seed {chain.seed}")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)


def plot_damage_curves(curves, path):
    """Damage probability versus stiffness-loss fraction, one line per
    substructure."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for j, lab in enumerate(curves.labels):
        ax.plot(curves.fractions, curves.probabilities[j], lw=1.2, label=lab)
    ax.axhline(0.5, color="k", ls=":", lw=0.8)
    ax.set_xlabel("stiffness loss fraction")
    ax.set_ylabel("damage probability")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)


def plot_rhat(report, path):
    """Per-parameter split R-hat bar chart from a multi-chain run."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(report.labels))
    ax.bar(x, report.r_hat, color="#4878a8")
    ax.axhline(1.05, color="r", ls="--", lw=1, label="1.05")
    ax.set_xticks(x, report.labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("split R-hat")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)
