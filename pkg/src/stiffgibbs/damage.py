"""Two-stage calibration/monitoring workflow and damage probability curves.

The calibration stage updates the model on data from the intact structure.
The monitoring stage reruns the sampler on new data with sparsity imposed on
the change relative to calibration: each monitoring iteration receives one
resampled calibration draw as its pseudo-datum, so the paired samples carry
the calibration-stage posterior uncertainty into the damage estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .engine import Chain, GibbsConfig, detect_burn_in, run_chain
from .errors import InputError
from .model import ModalDataset, StructuralModel

DEFAULT_FRACTIONS = np.linspace(-0.5, 1.0, 101)


@dataclass(frozen=True)
class PairedSamples:
    """Row-paired posterior draws: theta_u[n] is the calibration draw injected
    while theta_d[n] was generated."""

    theta_u: np.ndarray   # (N, n_theta)
    theta_d: np.ndarray   # (N, n_theta)
    labels: tuple[str, ...]

    def __post_init__(self):
        theta_u = np.asarray(self.theta_u, dtype=float)
        theta_d = np.asarray(self.theta_d, dtype=float)
        object.__setattr__(self, "theta_u", theta_u)
        object.__setattr__(self, "theta_d", theta_d)
        if theta_u.shape != theta_d.shape or theta_u.ndim != 2 or theta_u.shape[0] == 0:
            raise InputError("theta_u and theta_d must be nonempty arrays of equal shape")
        if len(self.labels) != theta_u.shape[1]:
            raise InputError("labels must match the number of substructures")


@dataclass(frozen=True)
class DamageCurves:
    """Per-substructure probability of exceeding each stiffness-loss fraction."""

    fractions: np.ndarray       # (F,) grid of loss fractions
    probabilities: np.ndarray   # (n_theta, F)
    labels: tuple[str, ...]

    def median_loss(self) -> np.ndarray:
        """Loss fraction at probability 0.5 per substructure, linearly
        interpolated on the grid; clamped to the grid ends when the curve
        never crosses 0.5."""
        out = np.empty(len(self.labels))
        f = self.fractions
        for j, p in enumerate(self.probabilities):
            if p[0] < 0.5:
                out[j] = f[0]
                continue
            below = np.nonzero(p < 0.5)[0]
            if below.size == 0:
                out[j] = f[-1]
                continue
            k = below[0]
            p_hi, p_lo = p[k - 1], p[k]
            if p_hi == p_lo:
                out[j] = f[k]
            else:
                out[j] = f[k - 1] + (p_hi - 0.5) * (f[k] - f[k - 1]) / (p_hi - p_lo)
        return out


def calibrate(data_u: ModalDataset, model: StructuralModel, config: GibbsConfig) -> Chain:
    """Run the chosen sampler on calibration-stage data.

    Sparseness is off by default at this stage; turning it on requires a prior
    calibration value on the dataset (e.g. from a finite-element model).
    """
    if config.sparse_mode and data_u.theta_hat is None:
        raise InputError("sparse calibration requires dataset theta_hat (a prior "
                         "calibration value); default calibration runs non-sparse")
    return run_chain(data_u, model, config)


def monitor(data_d: ModalDataset, model: StructuralModel, calib_chain: Chain,
            config: GibbsConfig, *, calib_burn_in: int | str = "auto",
            burn_in: int | None = None, inject_during_burnin: bool = False,
            laplace: bool = False) -> PairedSamples:
    """Run the monitoring-stage sampler and pair its draws with calibration draws.

    Calibration draws are resampled with replacement from the post-burn-in
    calibration chain; draw n is injected as the pseudo-datum of monitoring
    iteration n.  Burn-in iterations of the monitoring chain use the fixed
    calibration posterior mean instead (pool consumption starts after burn-in)
    unless inject_during_burnin is set.  With laplace=True the posterior mean
    is used throughout (the fast point-estimate shortcut) and the pairs carry
    that constant calibration value.
    """
    n = config.n_samples
    if calib_burn_in == "auto":
        result = detect_burn_in(calib_chain)
        cb = result.index if result.stationary else len(calib_chain) // 2
    else:
        cb = int(calib_burn_in)
        if cb < 0 or cb >= len(calib_chain):
            raise InputError("calib_burn_in out of range")
    pool = calib_chain.theta[cb:]
    if pool.shape[0] < n:
        raise InputError(f"calibration pool has {pool.shape[0]} post-burn-in samples; "
                         f"need at least n_samples={n}")
    mb = burn_in if burn_in is not None else n // 5
    if mb < 0:
        raise InputError("burn_in must be nonnegative")

    seq = np.random.SeedSequence(config.seed).spawn(2)
    resample_rng = np.random.default_rng(seq[0])
    chain_rng = np.random.default_rng(seq[1])

    theta_point = pool.mean(axis=0)
    total = mb + n
    if laplace:
        theta_u = np.tile(theta_point, (n, 1))
        schedule = np.tile(theta_point, (total, 1))
    elif inject_during_burnin:
        draws = pool[resample_rng.integers(0, pool.shape[0], size=total)]
        schedule = draws
        theta_u = draws[mb:]
    else:
        theta_u = pool[resample_rng.integers(0, pool.shape[0], size=n)]
        schedule = np.vstack([np.tile(theta_point, (mb, 1)), theta_u])

    cfg = replace(config, sparse_mode=True, n_samples=total,
                  theta_init=config.theta_init if config.theta_init is not None else theta_point)
    chain = run_chain(data_d, model, cfg, chain_rng, theta_hat_schedule=schedule)
    return PairedSamples(theta_u=theta_u, theta_d=chain.theta[mb:],
                         labels=calib_chain.labels)


def damage_probability(pairs: PairedSamples, fractions=None) -> DamageCurves:
    """Empirical probability that each substructure lost more than a fraction
    f of its calibration stiffness: the indicator average of
    theta_d < (1 - f) * theta_u over the sample pairs, per f on the grid.

    The inequality is strict, so ties count as not damaged.
    """
    f = DEFAULT_FRACTIONS.copy() if fractions is None else np.asarray(fractions, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise InputError("fractions must be a nonempty 1-D grid")
    # indicator[n, j, k] = theta_d[n, j] < (1 - f[k]) * theta_u[n, j]
    thresholds = pairs.theta_u[:, :, None] * (1.0 - f[None, None, :])
    probs = (pairs.theta_d[:, :, None] < thresholds).mean(axis=0)
    return DamageCurves(fractions=f, probabilities=probs, labels=pairs.labels)
