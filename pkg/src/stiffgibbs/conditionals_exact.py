"""Full conditional posteriors for the sampler that keeps the equation-error
precision beta as a sampled variable.

Each conditional is Gaussian (Gamma for beta) once its nuisance hyperparameter
is fixed at the MAP value of its evidence; the MAP value solves a closed-form
update cycled to convergence (with Aitken acceleration, see fixed_point).
Hyperparameters are warm-started from the previous Gibbs iteration by the
engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .distributions import GammaSpec, GaussianSpec, chol_precision, sample_gamma, sample_gaussian
from .errors import ConvergenceError, InputError, NumericalError
from .fixed_point import fixed_point_solve
from .model import ModalDataset, StructuralModel, build_F, build_G_c, build_H_b, stacked_residual

# Numerical floors. Exact synthetic data drives residual-based variances and
# rates toward underflow; flooring keeps precisions and Gamma rates finite.
VAR_FLOOR = 1e-300
RESIDUAL_FLOOR = 1e-300
# Noise variances below ~squared float quantization of the data are
# meaningless; on exact data the MAP variance is genuinely zero and the
# update would otherwise decay forever without converging.
VAR_FLOOR_REL = 1e-25
MAX_POSITIVITY_REDRAWS = 100


def data_var_floor(values: np.ndarray) -> float:
    return max(VAR_FLOOR_REL * float(np.mean(values ** 2)), VAR_FLOOR)


@dataclass(frozen=True)
class FixedPoint:
    """Convergence policy for the hyperparameter fixed points.

    max_iter caps update-map evaluations; tol applies to the relative
    defining-equation residual of the hyperparameter.
    """

    tol: float = 1e-8
    max_iter: int = 200


@dataclass
class HyperStateExact:
    """MAP hyperparameter values carried across Gibbs iterations (warm starts)."""

    eta: float | None = None
    rho: float | None = None
    alpha: np.ndarray | None = None
    b0: float | None = None
    sparse_mode: bool = False


@dataclass(frozen=True)
class GaussianConditional:
    sample: np.ndarray
    mean: np.ndarray
    precision: np.ndarray
    hyper: float | np.ndarray   # converged eta / rho / alpha
    iterations: int
    pruned: np.ndarray | None = None   # sparse theta conditional only


@dataclass(frozen=True)
class BetaConditional:
    sample: float
    spec: GammaSpec
    b0: float


def default_eta(data: ModalDataset) -> float:
    """Start value for the mode-shape noise variance: across-segment variance
    of the shape components (falls back to a small fraction of their scale)."""
    blocks = data.mode_shapes.reshape(data.n_segments, -1)
    var = float(blocks.var(axis=0).mean()) if data.n_segments > 1 else 0.0
    scale = float(np.mean(data.mode_shapes ** 2))
    return max(var, 1e-8 * scale, VAR_FLOOR)


def default_rho(data: ModalDataset) -> float:
    """Start value for the frequency-squared noise variance, same idea."""
    blocks = data.freq_sq_by_segment()
    var = float(blocks.var(axis=0).mean()) if data.n_segments > 1 else 0.0
    scale = float(np.mean(data.freq_sq ** 2))
    return max(var, 1e-8 * scale, VAR_FLOOR)


def alpha_floor(theta_hat: np.ndarray) -> float:
    """Lower bound for the per-component pseudo-likelihood variances, relative
    to the calibration value's squared scale; floored values count as pruned."""
    return max(1e-12 * float(np.mean(theta_hat ** 2)), VAR_FLOOR)


def cond_phi(data: ModalDataset, model: StructuralModel, omega_sq, theta, beta: float,
             rng: np.random.Generator, *, eta_init: float | None = None,
             fixed_point: FixedPoint = FixedPoint()) -> GaussianConditional:
    """Sample the system mode shapes given everything else.

    Runs the mean/covariance/variance-update cycle until the MAP noise
    variance eta is stationary, then draws phi from the resulting Gaussian.
    """
    if beta <= 0.0:
        raise InputError("beta must be positive")
    n_data = data.n_obs * data.n_segments * data.n_modes
    gamma = data.selector(model.n_dof)
    gtg = gamma.T @ gamma
    gty = gamma.T @ data.mode_shapes
    f = build_F(model, omega_sq, theta)
    beta_ftf = beta * (f.T @ f)
    floor = data_var_floor(data.mode_shapes)

    def step(eta_vec):
        mu, cov = _phi_moments(beta_ftf, gtg, gty, eta_vec[0])
        resid = data.mode_shapes - gamma @ mu
        return np.array([(float(np.sum(cov * gtg)) + float(resid @ resid)) / n_data])

    start = eta_init if (eta_init is not None and eta_init > 0.0) else default_eta(data)
    try:
        eta_vec, evals = fixed_point_solve(step, [start], floor,
                                           fixed_point.tol, fixed_point.max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(f"phi conditional: {exc}", last_iterate=exc.last_iterate,
                               iterations=exc.iterations) from exc
    eta = float(eta_vec[0])
    mu, _ = _phi_moments(beta_ftf, gtg, gty, eta)
    precision = beta_ftf + gtg / eta
    sample = sample_gaussian(GaussianSpec(mu, precision), rng)
    return GaussianConditional(sample=sample, mean=mu, precision=precision,
                               hyper=eta, iterations=evals)


def _phi_moments(beta_ftf, gtg, gty, eta):
    precision = beta_ftf + gtg / eta
    low = chol_precision(precision)
    cov = cho_solve((low, True), np.eye(precision.shape[0]))
    mu = cov @ (gty / eta)
    return mu, cov


def cond_omega2(data: ModalDataset, model: StructuralModel, phi, theta, beta: float,
                rng: np.random.Generator, *, rho_init: float | None = None,
                fixed_point: FixedPoint = FixedPoint()) -> GaussianConditional:
    """Sample the system frequencies-squared given everything else."""
    if beta <= 0.0:
        raise InputError("beta must be positive")
    n_data = data.n_segments * data.n_modes
    t = data.segment_map()
    ttt = t.T @ t
    tty = t.T @ data.freq_sq
    g, c = build_G_c(model, phi, theta)
    gtg = g.T @ g
    gtc = g.T @ c
    floor = data_var_floor(data.freq_sq)

    def step(rho_vec):
        mu, cov = _omega_moments(beta, gtg, gtc, ttt, tty, rho_vec[0])
        resid = data.freq_sq - t @ mu
        return np.array([(float(np.sum(cov * ttt)) + float(resid @ resid)) / n_data])

    start = rho_init if (rho_init is not None and rho_init > 0.0) else default_rho(data)
    try:
        rho_vec, evals = fixed_point_solve(step, [start], floor,
                                           fixed_point.tol, fixed_point.max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(f"omega_sq conditional: {exc}", last_iterate=exc.last_iterate,
                               iterations=exc.iterations) from exc
    rho = float(rho_vec[0])
    mu, _ = _omega_moments(beta, gtg, gtc, ttt, tty, rho)
    precision = ttt / rho + beta * gtg
    sample = _positive_gaussian_draw(GaussianSpec(mu, precision), rng)
    return GaussianConditional(sample=sample, mean=mu, precision=precision,
                               hyper=rho, iterations=evals)


def _omega_moments(beta, gtg, gtc, ttt, tty, rho):
    precision = ttt / rho + beta * gtg
    low = chol_precision(precision)
    cov = cho_solve((low, True), np.eye(precision.shape[0]))
    mu = cov @ (beta * gtc + tty / rho)
    return mu, cov


def _positive_gaussian_draw(spec: GaussianSpec, rng) -> np.ndarray:
    # Frequencies-squared live on the positive half-space; redraw the rare
    # non-positive excursion instead of returning an unphysical state.
    for _ in range(MAX_POSITIVITY_REDRAWS):
        draw = sample_gaussian(spec, rng)
        if np.all(draw > 0.0):
            return draw
    raise NumericalError(
        f"omega^2 conditional produced non-positive draws {MAX_POSITIVITY_REDRAWS} times in a row")


def cond_theta(data: ModalDataset, model: StructuralModel, phi, omega_sq, beta: float,
               rng: np.random.Generator, *, sparse_mode: bool = False,
               theta_hat: np.ndarray | None = None,
               alpha_init: np.ndarray | None = None,
               fixed_point: FixedPoint = FixedPoint()) -> GaussianConditional:
    """Sample the stiffness scaling parameters given everything else.

    With sparse_mode the calibration value theta_hat acts as pseudo-data with
    per-component variances alpha learned by evidence maximization; components
    whose alpha hits the floor are reported as pruned.  Without sparse_mode the
    pseudo-data terms are dropped entirely (alpha -> infinity).
    """
    if beta <= 0.0:
        raise InputError("beta must be positive")
    h, b = build_H_b(model, phi, omega_sq)
    hth = h.T @ h
    htb = h.T @ b

    if not sparse_mode:
        precision = beta * hth
        low = chol_precision(precision)
        mu = cho_solve((low, True), beta * htb)
        sample = sample_gaussian(GaussianSpec(mu, precision), rng)
        return GaussianConditional(sample=sample, mean=mu, precision=precision,
                                   hyper=np.full(model.n_theta, np.inf), iterations=0)

    if theta_hat is None:
        raise InputError("sparse_mode requires a calibration value theta_hat")
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (model.n_theta,):
        raise InputError("theta_hat must have length n_theta")
    floor = alpha_floor(theta_hat)

    def step(alpha):
        mu, cov = _theta_moments(beta, hth, htb, alpha, theta_hat)
        return np.diag(cov) + (theta_hat - mu) ** 2

    start = np.full(model.n_theta, 1.0) if alpha_init is None else np.asarray(alpha_init, float)
    try:
        alpha, evals = fixed_point_solve(step, start, floor,
                                         fixed_point.tol, fixed_point.max_iter)
    except ConvergenceError as exc:
        raise ConvergenceError(f"theta conditional: {exc}", last_iterate=exc.last_iterate,
                               iterations=exc.iterations) from exc
    mu, _ = _theta_moments(beta, hth, htb, alpha, theta_hat)
    precision = beta * hth + np.diag(1.0 / alpha)
    sample = sample_gaussian(GaussianSpec(mu, precision), rng)
    return GaussianConditional(sample=sample, mean=mu, precision=precision,
                               hyper=alpha, iterations=evals,
                               pruned=alpha <= floor)


def _theta_moments(beta, hth, htb, alpha, theta_hat):
    precision = beta * hth + np.diag(1.0 / alpha)
    low = chol_precision(precision)
    cov = cho_solve((low, True), np.eye(precision.shape[0]))
    mu = cov @ (beta * htb + theta_hat / alpha)
    return mu, cov


def cond_beta(model: StructuralModel, phi, omega_sq, theta,
              rng: np.random.Generator) -> BetaConditional:
    """Sample the equation-error precision.

    The rate hyperparameter b0 has a closed-form MAP value (mean squared
    residual per equation entry), so no iteration is needed.
    """
    resid = stacked_residual(model, phi, omega_sq, theta)
    total = max(float(resid @ resid), RESIDUAL_FLOOR)
    n_eq = model.n_dof * len(np.atleast_1d(omega_sq))
    b0 = total / n_eq
    spec = GammaSpec(shape=1.0 + 0.5 * n_eq, rate=b0 + 0.5 * total)
    return BetaConditional(sample=sample_gamma(spec, rng), spec=spec, b0=b0)
