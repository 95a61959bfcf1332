"""Structural model, modal data containers, and the eigen-equation matrices.

Conventions used throughout the package (and in the file formats):

* System mode shapes are stacked mode-major: ``phi = [phi_1; ...; phi_Nm]``,
  each block of length ``n_dof``.
* Identified modal data are stacked segment-major: segment r outer, mode i
  inner, so ``freq_sq = [w2_{1,1}, ..., w2_{1,Nm}, w2_{2,1}, ...]`` and
  ``mode_shapes`` holds one length-``n_obs`` block per (segment, mode) in the
  same order.
* ``observed_dofs`` are 1-based DOF labels, matching the JSON file schema;
  they are converted to 0-based indices internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError

_SYM_RTOL = 1e-10


def _symmetric(a: np.ndarray) -> bool:
    scale = np.abs(a).max()
    return np.allclose(a, a.T, rtol=0.0, atol=_SYM_RTOL * max(scale, 1.0))


def _frozen_array(obj, name: str, value) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=float)
    arr.flags.writeable = False
    object.__setattr__(obj, name, arr)
    return arr


@dataclass(frozen=True)
class StructuralModel:
    """Known mass matrix plus a stiffness decomposed into substructure parts.

    The physical stiffness for a scaling vector ``theta`` is
    ``K(theta) = k0 + sum_j theta[j] * substructures[j]``.
    """

    mass: np.ndarray            # (n_dof, n_dof), symmetric positive definite
    k0: np.ndarray              # (n_dof, n_dof), symmetric
    substructures: np.ndarray   # (n_theta, n_dof, n_dof), each symmetric
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        mass = _frozen_array(self, "mass", self.mass)
        k0 = _frozen_array(self, "k0", self.k0)
        subs = _frozen_array(self, "substructures", self.substructures)
        n = mass.shape[0]
        if mass.shape != (n, n) or k0.shape != (n, n):
            raise InputError("mass and k0 must be square matrices of equal size")
        if subs.ndim != 3 or subs.shape[1:] != (n, n):
            raise InputError("substructures must have shape (n_theta, n_dof, n_dof)")
        if not _symmetric(mass):
            raise InputError("mass matrix is not symmetric")
        if not _symmetric(k0):
            raise InputError("k0 is not symmetric")
        for j, kj in enumerate(subs):
            if not _symmetric(kj):
                raise InputError(f"substructure matrix {j} is not symmetric")
        try:
            np.linalg.cholesky(mass)
        except np.linalg.LinAlgError:
            raise InputError("mass matrix is not positive definite") from None
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != subs.shape[0]:
                raise InputError("labels length must equal number of substructures")
            object.__setattr__(self, "labels", labels)

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]

    @property
    def n_theta(self) -> int:
        return self.substructures.shape[0]

    def substructure_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(f"theta_{j + 1}" for j in range(self.n_theta))


@dataclass(frozen=True)
class ModalDataset:
    """Identified frequencies-squared and partial mode shapes over segments."""

    n_modes: int
    n_segments: int
    freq_sq: np.ndarray       # (n_segments * n_modes,)
    mode_shapes: np.ndarray   # (n_obs * n_segments * n_modes,)
    observed_dofs: tuple[int, ...]   # 1-based DOF indices
    theta_hat: np.ndarray | None = None   # optional calibration pseudo-datum

    def __post_init__(self):
        if self.n_modes < 1 or self.n_segments < 1:
            raise InputError("n_modes and n_segments must be positive")
        freq_sq = _frozen_array(self, "freq_sq", self.freq_sq)
        shapes = _frozen_array(self, "mode_shapes", self.mode_shapes)
        dofs = tuple(int(d) for d in self.observed_dofs)
        object.__setattr__(self, "observed_dofs", dofs)
        if len(set(dofs)) != len(dofs):
            raise InputError("observed_dofs contains duplicates")
        if any(d < 1 for d in dofs):
            raise InputError("observed_dofs are 1-based and must be >= 1")
        if freq_sq.shape != (self.n_segments * self.n_modes,):
            raise InputError("freq_sq must have length n_segments * n_modes")
        if np.any(freq_sq <= 0.0):
            raise InputError("all freq_sq entries must be strictly positive")
        if shapes.shape != (len(dofs) * self.n_segments * self.n_modes,):
            raise InputError("mode_shapes must have length n_obs * n_segments * n_modes")
        if self.theta_hat is not None:
            _frozen_array(self, "theta_hat", self.theta_hat)

    @property
    def n_obs(self) -> int:
        return len(self.observed_dofs)

    def selector(self, n_dof: int) -> np.ndarray:
        """Dense 0/1 matrix picking observed mode-shape components from phi.

        Shape (n_obs * n_segments * n_modes, n_dof * n_modes); one unit entry
        per row.
        """
        if any(d > n_dof for d in self.observed_dofs):
            raise InputError(f"observed_dofs exceed model n_dof={n_dof}")
        pick = np.zeros((self.n_obs, n_dof))
        for row, dof in enumerate(self.observed_dofs):
            pick[row, dof - 1] = 1.0
        one_segment = scipy.linalg.block_diag(*([pick] * self.n_modes))
        return np.vstack([one_segment] * self.n_segments)

    def segment_map(self) -> np.ndarray:
        """Matrix stacking n_segments identity blocks: maps system frequencies
        to the segment-major data layout."""
        return np.tile(np.eye(self.n_modes), (self.n_segments, 1))

    def freq_sq_by_segment(self) -> np.ndarray:
        return self.freq_sq.reshape(self.n_segments, self.n_modes)

    def mean_freq_sq(self) -> np.ndarray:
        """Per-mode average of the identified frequencies-squared over segments."""
        return self.freq_sq_by_segment().mean(axis=0)

    def shapes_by_segment(self) -> np.ndarray:
        return self.mode_shapes.reshape(self.n_segments, self.n_modes, self.n_obs)


@dataclass(frozen=True)
class SystemState:
    """One Gibbs iterate: system modal parameters, stiffness scalings, and
    (for the non-marginalized sampler) the equation-error precision."""

    phi: np.ndarray        # (n_dof * n_modes,)
    omega_sq: np.ndarray   # (n_modes,)
    theta: np.ndarray      # (n_theta,)
    beta: float | None = None

    def __post_init__(self):
        _frozen_array(self, "phi", self.phi)
        omega_sq = _frozen_array(self, "omega_sq", self.omega_sq)
        _frozen_array(self, "theta", self.theta)
        if self.beta is not None:
            if self.beta <= 0.0:
                raise InputError("beta must be positive")
            object.__setattr__(self, "beta", float(self.beta))
        if np.any(omega_sq <= 0.0):
            raise InputError("omega_sq entries must be strictly positive")


def _check_theta(model: StructuralModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_theta,):
        raise InputError(f"theta must have length {model.n_theta}, got shape {theta.shape}")
    return theta


def _check_phi(model: StructuralModel, phi, n_modes: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (model.n_dof * n_modes,):
        raise InputError(
            f"phi must have length n_dof*n_modes={model.n_dof * n_modes}, got shape {phi.shape}")
    return phi


def assemble_stiffness(model: StructuralModel, theta) -> np.ndarray:
    """K(theta) = k0 + sum_j theta[j] * K_j."""
    theta = _check_theta(model, theta)
    return model.k0 + np.tensordot(theta, model.substructures, axes=1)


def build_H_b(model: StructuralModel, phi, omega_sq) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient matrix and offset of the eigen-equation residual seen as a
    linear function of theta.

    Row-block i of H holds the columns ``K_j phi_i``; block i of b is
    ``(omega_sq[i] * M - k0) phi_i``, so that ``H theta - b`` stacks the
    per-mode residuals ``(K(theta) - omega_i^2 M) phi_i``.
    """
    omega_sq = np.asarray(omega_sq, dtype=float)
    nm = omega_sq.shape[0]
    phi = _check_phi(model, phi, nm)
    modes = phi.reshape(nm, model.n_dof)
    h = np.einsum("jkl,il->ikj", model.substructures, modes)
    h = h.reshape(nm * model.n_dof, model.n_theta)
    b = omega_sq[:, None] * (modes @ model.mass) - modes @ model.k0
    return h, b.reshape(-1)


def build_G_c(model: StructuralModel, phi, theta) -> tuple[np.ndarray, np.ndarray]:
    """Residual as a linear function of omega_sq: block-diagonal G of M phi_i
    columns, and c stacking K(theta) phi_i, so ``G omega_sq - c`` is minus the
    stacked residual."""
    theta = _check_theta(model, theta)
    phi = np.asarray(phi, dtype=float)
    if phi.size % model.n_dof != 0:
        raise InputError("phi length must be a multiple of n_dof")
    nm = phi.size // model.n_dof
    modes = phi.reshape(nm, model.n_dof)
    g = np.zeros((nm * model.n_dof, nm))
    mphi = modes @ model.mass
    for i in range(nm):
        g[i * model.n_dof:(i + 1) * model.n_dof, i] = mphi[i]
    k = assemble_stiffness(model, theta)
    c = (modes @ k).reshape(-1)
    return g, c


def build_F(model: StructuralModel, omega_sq, theta) -> np.ndarray:
    """Block-diagonal matrix with blocks ``K(theta) - omega_i^2 M``; applied to
    phi it stacks the per-mode eigen-equation residuals."""
    omega_sq = np.asarray(omega_sq, dtype=float)
    theta = _check_theta(model, theta)
    k = assemble_stiffness(model, theta)
    return scipy.linalg.block_diag(*[k - w2 * model.mass for w2 in omega_sq])


def stacked_residual(model: StructuralModel, phi, omega_sq, theta) -> np.ndarray:
    """The stacked residuals ``(K(theta) - omega_i^2 M) phi_i`` for all modes."""
    omega_sq = np.asarray(omega_sq, dtype=float)
    theta = _check_theta(model, theta)
    nm = omega_sq.shape[0]
    phi = _check_phi(model, phi, nm)
    modes = phi.reshape(nm, model.n_dof)
    k = assemble_stiffness(model, theta)
    res = modes @ k - omega_sq[:, None] * (modes @ model.mass)
    return res.reshape(-1)


def equation_error(model: StructuralModel, state: SystemState) -> float:
    """Sum of squared eigen-equation residuals over all modes."""
    r = stacked_residual(model, state.phi, state.omega_sq, state.theta)
    return float(r @ r)


def eigen_solve(model: StructuralModel, theta) -> tuple[np.ndarray, np.ndarray]:
    """Generalized eigenpairs of (K(theta), M): ascending eigenvalues and
    mass-normalized eigenvectors (columns), phi.T @ M @ phi = I.

    Used by the synthetic benchmark and by test oracles only; the samplers
    never solve an eigenproblem.
    """
    k = assemble_stiffness(model, theta)
    try:
        w, v = scipy.linalg.eigh(k, model.mass)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(
            f"generalized eigensolve failed ({exc}); cond(M)={np.linalg.cond(model.mass):.3e}, "
            f"cond(K)={np.linalg.cond(k):.3e}") from exc
    return w, v
