"""Sampling and log-densities for the three families the conditionals need.

Everything is parameterized the way the conditional posteriors produce it:
Gaussians by their precision matrix, Gammas by shape and rate, and the
multivariate Student-t by its precision-form scale matrix and degrees of
freedom.  The Student-t is sampled through its defining Gamma-Gaussian scale
mixture so draws agree with the marginalization that produces it.

RNG: all samplers take a ``numpy.random.Generator`` (PCG64 seeded through
``SeedSequence``; per-chain streams are spawned, never shared).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln

from .errors import InputError, NumericalError

# Relative jitter ladder for nearly singular precisions; needed because the
# eigen-equation block matrix loses rank when an omega^2 draw lands on an
# eigenvalue of the current (K, M) pencil.
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        precision = np.atleast_2d(np.asarray(self.precision, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", precision)
        if precision.shape != (mean.size, mean.size):
            raise InputError("precision must be square and match the mean length")


@dataclass(frozen=True)
class GammaSpec:
    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0.0 or self.rate <= 0.0:
            raise InputError("Gamma shape and rate must be positive")


@dataclass(frozen=True)
class StudentTSpec:
    """Multivariate Student-t with precision-form scale matrix.

    ``scale_precision`` plays the role of (shape/rate) * Lambda in the
    Gamma-Gaussian mixture; covariance is dof/(dof-2) * scale_precision^-1.
    """

    mean: np.ndarray
    scale_precision: np.ndarray
    dof: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        prec = np.atleast_2d(np.asarray(self.scale_precision, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale_precision", prec)
        if prec.shape != (mean.size, mean.size):
            raise InputError("scale_precision must be square and match the mean length")
        if self.dof <= 0.0:
            raise InputError("dof must be positive")


def chol_precision(precision: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a precision matrix, with escalating jitter.

    Adds eps * mean(diag) * I for eps in the ladder before giving up.
    """
    diag_scale = float(np.mean(np.diag(precision)))
    if not np.isfinite(diag_scale) or diag_scale <= 0.0:
        diag_scale = 1.0
    eye = np.eye(precision.shape[0])
    for eps in JITTER_LADDER:
        try:
            return np.linalg.cholesky(precision + (eps * diag_scale) * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        "precision matrix is not positive definite after jitter up to "
        f"{JITTER_LADDER[-1]:.0e} * mean(diag)")


def sample_gaussian(spec: GaussianSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw x = mean + L^-T z with L L^T = precision and z standard normal."""
    low = chol_precision(spec.precision)
    z = rng.standard_normal(spec.mean.size)
    return spec.mean + solve_triangular(low.T, z, lower=False)


def sample_gamma(spec: GammaSpec, rng: np.random.Generator) -> float:
    return float(rng.gamma(spec.shape, 1.0 / spec.rate))


def sample_student_t(spec: StudentTSpec, rng: np.random.Generator) -> np.ndarray:
    """Gamma-Gaussian composite draw.

    w ~ Gamma(dof/2, rate=dof/2), then x ~ N(mean, (w * scale_precision)^-1);
    marginally x is the Student-t with the spec's parameters.
    """
    half = 0.5 * spec.dof
    w = rng.gamma(half, 1.0 / half)
    return sample_gaussian(GaussianSpec(spec.mean, w * spec.scale_precision), rng)


def _half_logdet(precision: np.ndarray) -> float:
    return float(np.sum(np.log(np.diag(chol_precision(precision)))))


def logpdf_gaussian(spec: GaussianSpec, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    low = chol_precision(spec.precision)
    quad = float(np.sum((low.T @ (x - spec.mean)) ** 2))
    n = spec.mean.size
    return -0.5 * n * np.log(2.0 * np.pi) + float(np.sum(np.log(np.diag(low)))) - 0.5 * quad


def logpdf_gamma(spec: GammaSpec, x: float) -> float:
    if x <= 0.0:
        return -np.inf
    return float(spec.shape * np.log(spec.rate) - gammaln(spec.shape)
                 + (spec.shape - 1.0) * np.log(x) - spec.rate * x)


def logpdf_student_t(spec: StudentTSpec, x) -> float:
    """Exact log-density including the normalization constant."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = spec.mean.size
    nu = spec.dof
    low = chol_precision(spec.scale_precision)
    quad = float(np.sum((low.T @ (x - spec.mean)) ** 2))
    return float(gammaln(0.5 * (nu + n)) - gammaln(0.5 * nu)
                 - 0.5 * n * (np.log(nu) + np.log(np.pi))
                 + np.sum(np.log(np.diag(low)))
                 - 0.5 * (nu + n) * np.log1p(quad / nu))


def solve_spd(precision: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve precision @ x = rhs through the jittered Cholesky factor."""
    low = chol_precision(precision)
    return cho_solve((low, True), rhs)


def invert_spd(precision: np.ndarray) -> np.ndarray:
    low = chol_precision(precision)
    return cho_solve((low, True), np.eye(precision.shape[0]))
