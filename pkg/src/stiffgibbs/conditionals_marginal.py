"""Full conditional posteriors for the sampler that integrates the
equation-error precision out analytically.

Each conditional becomes a multivariate Student-t: the Gaussian conditional of
the non-marginalized sampler mixed over the Gamma posterior of beta.  The
noise hyperparameters are reparameterized as products with beta (tau for the
mode-shape variance, v for the frequency variance, gamma per stiffness
component) and fixed at their MAP values by the same accelerated cycling
scheme as the Gaussian conditionals.  Draws use the Gamma-then-Gaussian
composition, which is exactly the mixture being integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .conditionals_exact import (FixedPoint, MAX_POSITIVITY_REDRAWS,
                                 alpha_floor, data_var_floor, default_eta, default_rho)
from .distributions import GammaSpec, GaussianSpec, StudentTSpec, chol_precision, \
    sample_gamma, sample_gaussian
from .errors import ConvergenceError, InputError, NumericalError
from .fixed_point import fixed_point_solve
from .model import ModalDataset, StructuralModel, build_F, build_G_c, build_H_b

RATE_FLOOR = 1e-300
# On exactly consistent data the data-misfit residuals are pure rounding
# noise, yet they couple to the rate so that the update drifts geometrically.
# Misfits below squared float quantization of the data are snapped to exact
# zero (the true MAP is then the floor), and the beta-scaled variances are
# capped symmetrically to the floor as a second line of defense.
SNAP_REL = 1e-25
VAR_CAP_REL = 1e25


def data_var_cap(values: np.ndarray) -> float:
    return VAR_CAP_REL * max(float(np.mean(values ** 2)), 1e-300)


def _snap_small(value: float, scale: float) -> float:
    return value if value > SNAP_REL * scale else 0.0


def _state_rate_floor(shape: float, state_residual: float | None, n_eq: int) -> float:
    """Rate floor capping the implied equation-error precision at the level
    the incoming sampled state satisfies the eigen-equations (shape/rate <=
    n_eq/state_residual).  Zero when no state residual is supplied."""
    if state_residual is None or state_residual <= 0.0:
        return 0.0
    return shape * state_residual / n_eq


@dataclass
class HyperStateMarginal:
    """MAP values of the beta-scaled hyperparameters, warm-started per iteration."""

    tau: float | None = None
    v: float | None = None
    gamma: np.ndarray | None = None
    b0_phi: float | None = None
    b0_w: float | None = None
    b0_theta: float | None = None
    sparse_mode: bool = False


@dataclass(frozen=True)
class StudentTConditional:
    sample: np.ndarray
    spec: StudentTSpec
    mean: np.ndarray
    lam: np.ndarray          # precision-shape matrix Lambda (beta-free)
    shape: float             # Gamma shape of the integrated-out beta posterior
    rate: float              # Gamma rate of the same
    b0: float                # MAP of the exponential-prior rate hyperparameter
    hyper: float | np.ndarray   # converged tau / v / gamma
    iterations: int
    pruned: np.ndarray | None = None


def _draw(mean, lam, shape, rate, rng) -> np.ndarray:
    beta = sample_gamma(GammaSpec(shape, rate), rng)
    return sample_gaussian(GaussianSpec(mean, beta * lam), rng)


def _spec(mean, lam, shape, rate) -> StudentTSpec:
    return StudentTSpec(mean=mean, scale_precision=(shape / rate) * lam, dof=2.0 * shape)


def cond_phi_marginal(data: ModalDataset, model: StructuralModel, omega_sq, theta,
                      rng: np.random.Generator, *, tau_init: float | None = None,
                      state_residual: float | None = None,
                      fixed_point: FixedPoint = FixedPoint()) -> StudentTConditional:
    """Sample the system mode shapes with beta integrated out."""
    n_data = data.n_obs * data.n_segments * data.n_modes
    gamma_sel = data.selector(model.n_dof)
    gtg = gamma_sel.T @ gamma_sel
    gty = gamma_sel.T @ data.mode_shapes
    f = build_F(model, omega_sq, theta)
    ftf = f.T @ f
    shape = 0.5 * n_data + 1.0
    floor = data_var_floor(data.mode_shapes)
    rate_floor = _state_rate_floor(shape, state_residual, model.n_dof * data.n_modes)

    y2 = float(data.mode_shapes @ data.mode_shapes)

    def parts(tau):
        mu, lam, lam_inv = _marginal_moments(ftf, gtg, gty / tau, tau)
        resid2 = _snap_small(float(np.sum((data.mode_shapes - gamma_sel @ mu) ** 2)), y2)
        fmu2 = float(np.sum((f @ mu) ** 2))
        b0 = (resid2 / tau + fmu2) / n_data
        rate = max(resid2 / (2.0 * tau) + 0.5 * fmu2 + b0, rate_floor, RATE_FLOOR)
        return mu, lam, lam_inv, resid2, b0, rate

    def step(tau_vec):
        tau = tau_vec[0]
        _, _, lam_inv, resid2, _, rate = parts(tau)
        return np.array([(float(np.sum(lam_inv * gtg)) + shape * resid2 / rate) / n_data])

    start = tau_init if (tau_init is not None and tau_init > 0.0) else default_eta(data)
    try:
        tau_vec, evals = fixed_point_solve(step, [start], floor,
                                           fixed_point.tol, fixed_point.max_iter,
                                           ceil=data_var_cap(data.mode_shapes))
    except ConvergenceError as exc:
        raise ConvergenceError(f"phi conditional: {exc}", last_iterate=exc.last_iterate,
                               iterations=exc.iterations) from exc
    tau = float(tau_vec[0])
    mu, lam, _, _, b0, rate = parts(tau)
    sample = _draw(mu, lam, shape, rate, rng)
    return StudentTConditional(sample=sample, spec=_spec(mu, lam, shape, rate),
                               mean=mu, lam=lam, shape=shape, rate=rate, b0=b0,
                               hyper=tau, iterations=evals)


def _marginal_moments(ete, ptp, rhs, scale):
    lam = ptp / scale + ete
    low = chol_precision(lam)
    lam_inv = cho_solve((low, True), np.eye(lam.shape[0]))
    mu = lam_inv @ rhs
    return mu, lam, lam_inv


def cond_omega2_marginal(data: ModalDataset, model: StructuralModel, phi, theta,
                         rng: np.random.Generator, *, v_init: float | None = None,
                         state_residual: float | None = None,
                         fixed_point: FixedPoint = FixedPoint()) -> StudentTConditional:
    """Sample the system frequencies-squared with beta integrated out."""
    nd, nm, ns = model.n_dof, data.n_modes, data.n_segments
    n_freq = ns * nm
    t = data.segment_map()
    ttt = t.T @ t
    tty = t.T @ data.freq_sq
    g, c = build_G_c(model, phi, theta)
    gtg = g.T @ g
    rhs_fixed = g.T @ c
    # Dimension bookkeeping from the generic Gamma posterior: data size
    # K = Ns*Nm, unknown size M = Nm, so the shape uses Nd*Nm + Ns*Nm - Nm.
    denom = nd * nm + n_freq - nm
    shape = 0.5 * denom + 1.0
    floor = data_var_floor(data.freq_sq)
    rate_floor = _state_rate_floor(shape, state_residual, nd * nm)

    y2 = float(data.freq_sq @ data.freq_sq)

    def parts(v):
        mu, lam, lam_inv = _marginal_moments(gtg, ttt, rhs_fixed + tty / v, v)
        resid2 = _snap_small(float(np.sum((data.freq_sq - t @ mu) ** 2)), y2)
        gc2 = float(np.sum((g @ mu - c) ** 2))
        b0 = (resid2 / v + gc2) / denom
        rate = max(resid2 / (2.0 * v) + 0.5 * gc2 + b0, rate_floor, RATE_FLOOR)
        return mu, lam, lam_inv, resid2, b0, rate

    def step(v_vec):
        v = v_vec[0]
        _, _, lam_inv, resid2, _, rate = parts(v)
        return np.array([(float(np.sum(lam_inv * ttt)) + shape * resid2 / rate) / n_freq])

    start = v_init if (v_init is not None and v_init > 0.0) else default_rho(data)
    try:
        v_vec, evals = fixed_point_solve(step, [start], floor,
                                         fixed_point.tol, fixed_point.max_iter,
                                         ceil=data_var_cap(data.freq_sq))
    except ConvergenceError as exc:
        raise ConvergenceError(f"omega_sq conditional: {exc}", last_iterate=exc.last_iterate,
                               iterations=exc.iterations) from exc
    v = float(v_vec[0])
    mu, lam, _, _, b0, rate = parts(v)
    sample = _positive_t_draw(mu, lam, shape, rate, rng)
    return StudentTConditional(sample=sample, spec=_spec(mu, lam, shape, rate),
                               mean=mu, lam=lam, shape=shape, rate=rate, b0=b0,
                               hyper=v, iterations=evals)


def _positive_t_draw(mean, lam, shape, rate, rng) -> np.ndarray:
    for _ in range(MAX_POSITIVITY_REDRAWS):
        draw = _draw(mean, lam, shape, rate, rng)
        if np.all(draw > 0.0):
            return draw
    raise NumericalError(
        f"omega^2 conditional produced non-positive draws {MAX_POSITIVITY_REDRAWS} times in a row")


def cond_theta_marginal(data: ModalDataset, model: StructuralModel, phi, omega_sq,
                        rng: np.random.Generator, *, sparse_mode: bool = False,
                        theta_hat: np.ndarray | None = None,
                        gamma_init: np.ndarray | None = None,
                        state_residual: float | None = None,
                        fixed_point: FixedPoint = FixedPoint()) -> StudentTConditional:
    """Sample the stiffness scaling parameters with beta integrated out.

    Sparse mode learns per-component gamma = beta * alpha by evidence
    maximization; the pseudo-data quadratic enters both the rate and the b0
    update.  Non-sparse mode drops the pseudo-data (its size K becomes zero),
    which shifts both the Gamma shape and the b0 denominator by n_theta.
    """
    nd, nm = model.n_dof, data.n_modes
    n_eq = nd * nm
    h, b = build_H_b(model, phi, omega_sq)
    hth = h.T @ h
    htb = h.T @ b

    if not sparse_mode:
        if n_eq <= model.n_theta:
            raise InputError("non-sparse theta conditional needs n_dof*n_modes > n_theta")
        denom = n_eq - model.n_theta
        shape = 0.5 * denom + 1.0
        rate_floor = _state_rate_floor(shape, state_residual, n_eq)
        low = chol_precision(hth)
        mu = cho_solve((low, True), htb)
        hb2 = float(np.sum((h @ mu - b) ** 2))
        b0 = hb2 / denom
        rate = max(0.5 * hb2 + b0, rate_floor, RATE_FLOOR)
        sample = _draw(mu, hth, shape, rate, rng)
        return StudentTConditional(sample=sample, spec=_spec(mu, hth, shape, rate),
                                   mean=mu, lam=hth, shape=shape, rate=rate, b0=b0,
                                   hyper=np.full(model.n_theta, np.inf), iterations=0)

    if theta_hat is None:
        raise InputError("sparse_mode requires a calibration value theta_hat")
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (model.n_theta,):
        raise InputError("theta_hat must have length n_theta")
    floor = alpha_floor(theta_hat)
    shape = 0.5 * n_eq + 1.0
    rate_floor = _state_rate_floor(shape, state_residual, n_eq)

    dev_scale = max(float(np.mean(theta_hat ** 2)), 1e-300)

    def parts(gamma):
        lam = hth + np.diag(1.0 / gamma)
        low = chol_precision(lam)
        lam_inv = cho_solve((low, True), np.eye(lam.shape[0]))
        mu = lam_inv @ (htb + theta_hat / gamma)
        dev2 = (theta_hat - mu) ** 2
        dev2 = np.where(dev2 > SNAP_REL * dev_scale, dev2, 0.0)
        quad = float(np.sum(dev2 / gamma))
        hb2 = float(np.sum((h @ mu - b) ** 2))
        b0 = (quad + hb2) / n_eq
        rate = max(0.5 * quad + 0.5 * hb2 + b0, rate_floor, RATE_FLOOR)
        return mu, lam, lam_inv, dev2, b0, rate

    def step(gamma):
        _, _, lam_inv, dev2, _, rate = parts(gamma)
        return np.diag(lam_inv) + shape * dev2 / rate

    start = np.full(model.n_theta, 1.0) if gamma_init is None else np.asarray(gamma_init, float)
    try:
        gamma, evals = fixed_point_solve(step, start, floor,
                                         fixed_point.tol, fixed_point.max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(f"theta conditional: {exc}", last_iterate=exc.last_iterate,
                               iterations=exc.iterations) from exc
    mu, lam, _, _, b0, rate = parts(gamma)
    sample = _draw(mu, lam, shape, rate, rng)
    return StudentTConditional(sample=sample, spec=_spec(mu, lam, shape, rate),
                               mean=mu, lam=lam, shape=shape, rate=rate, b0=b0,
                               hyper=gamma, iterations=evals,
                               pruned=gamma <= floor)
