"""Synthetic shear-building benchmarks with exact modal ground truth.

Replaces the time-history + modal-identification pipeline by perturbing exact
modal quantities directly: frequencies-squared get multiplicative Gaussian
noise, observed mode-shape components get additive Gaussian noise scaled to
the observed block norm, then each block is renormalized to unit norm with
the sign fixed by its largest-magnitude component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .model import ModalDataset, StructuralModel, eigen_solve

SUBSTRUCTURINGS = ("per_story", "per_face", "custom")
FACES = ("+x", "-x", "+y", "-y")


@dataclass(frozen=True)
class BenchmarkSpec:
    """Recipe for a planar shear-building model and its simulated modal data."""

    n_stories: int
    story_mass: float | tuple[float, ...] = 1.0
    story_stiffness: float | tuple[float, ...] = 1.0
    substructuring: str = "per_story"
    custom_substructures: np.ndarray | None = None   # used when substructuring == "custom"
    observed_dofs: tuple[int, ...] | None = None     # 1-based; default: all DOF
    n_segments: int = 1
    n_modes: int | None = None                       # default: all n_stories modes
    freq_cov: float = 0.0    # fractional std of the identified frequency-squared
    shape_cov: float = 0.0   # fractional std per observed mode-shape component
    seed: int = 0

    def __post_init__(self):
        if self.n_stories < 1:
            raise InputError("n_stories must be positive")
        if self.substructuring not in SUBSTRUCTURINGS:
            raise InputError(f"substructuring must be one of {SUBSTRUCTURINGS}")
        if self.substructuring == "custom" and self.custom_substructures is None:
            raise InputError("custom substructuring requires custom_substructures")
        if self.n_segments < 1:
            raise InputError("n_segments must be positive")
        if self.freq_cov < 0.0 or self.shape_cov < 0.0:
            raise InputError("noise levels must be nonnegative")

    def masses(self) -> np.ndarray:
        return _per_story(self.story_mass, self.n_stories, "story_mass")

    def stiffnesses(self) -> np.ndarray:
        return _per_story(self.story_stiffness, self.n_stories, "story_stiffness")

    def modes(self) -> int:
        nm = self.n_stories if self.n_modes is None else self.n_modes
        if nm < 1 or nm > self.n_stories:
            raise InputError("n_modes must be in [1, n_stories]")
        return nm

    def dofs_observed(self) -> tuple[int, ...]:
        if self.observed_dofs is None:
            return tuple(range(1, self.n_stories + 1))
        return tuple(int(d) for d in self.observed_dofs)


@dataclass(frozen=True)
class GroundTruth:
    """Exact modal quantities of the generating model, for oracles only."""

    theta_true: np.ndarray
    omega_sq: np.ndarray    # the n_modes lowest eigenvalues of (K(theta_true), M)
    mode_shapes: np.ndarray  # (n_dof, n_modes) mass-normalized eigenvectors

    def __post_init__(self):
        object.__setattr__(self, "theta_true", np.asarray(self.theta_true, dtype=float))
        object.__setattr__(self, "omega_sq", np.asarray(self.omega_sq, dtype=float))
        object.__setattr__(self, "mode_shapes", np.asarray(self.mode_shapes, dtype=float))


def _per_story(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise InputError(f"{name} must be a scalar or have length n_stories")
    if np.any(arr <= 0.0):
        raise InputError(f"{name} values must be positive")
    return arr


def _story_topology(n: int, story: int) -> np.ndarray:
    """Unit-stiffness contribution of one story of a chain (story is 1-based;
    story j couples floor j to floor j-1, floor 0 being the ground)."""
    e = np.zeros((n, n))
    i = story - 1
    e[i, i] = 1.0
    if story >= 2:
        e[i - 1, i - 1] += 1.0
        e[i - 1, i] -= 1.0
        e[i, i - 1] -= 1.0
    return e


def build_shear_building(spec: BenchmarkSpec) -> tuple[StructuralModel, tuple[str, ...]]:
    """Chain-topology model with nominal scaling theta = 1 per substructure."""
    n = spec.n_stories
    mass = np.diag(spec.masses())
    k = spec.stiffnesses()
    if spec.substructuring == "per_story":
        subs = np.stack([k[s - 1] * _story_topology(n, s) for s in range(1, n + 1)])
        labels = tuple(f"story{s}" for s in range(1, n + 1))
    elif spec.substructuring == "per_face":
        # Four equal substructures per story, mirroring a per-face split of the
        # story stiffness; damage to one face removes a quarter-share.
        subs = np.stack([
            0.25 * k[s - 1] * _story_topology(n, s)
            for s in range(1, n + 1) for _ in FACES])
        labels = tuple(f"story{s}_{f}" for s in range(1, n + 1) for f in FACES)
    else:
        subs = np.asarray(spec.custom_substructures, dtype=float)
        labels = tuple(f"theta_{j + 1}" for j in range(subs.shape[0]))
    model = StructuralModel(mass=mass, k0=np.zeros((n, n)), substructures=subs, labels=labels)
    return model, labels


def apply_damage(theta, pattern) -> np.ndarray:
    """Scale selected components: theta[j] *= (1 - fraction) for (j, fraction)
    pairs with 0-based indices and fractions in (-1, 1)."""
    theta = np.array(theta, dtype=float)
    for index, fraction in pattern:
        if not -1.0 < fraction < 1.0:
            raise InputError(f"damage fraction must be in (-1, 1), got {fraction}")
        if not 0 <= index < theta.size:
            raise InputError(f"damage index {index} out of range")
        theta[index] *= 1.0 - fraction
    return theta


def fix_sign_and_normalize(vec: np.ndarray) -> np.ndarray:
    """Unit norm with the largest-magnitude component positive. Idempotent."""
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec.copy()
    out = vec / norm
    if out[np.argmax(np.abs(out))] < 0.0:
        out = -out
    return out


def simulate_modal_data(model: StructuralModel, theta_true, spec: BenchmarkSpec,
                        rng: np.random.Generator) -> tuple[ModalDataset, GroundTruth]:
    """Noisy incomplete modal dataset plus the exact modal ground truth.

    Draw order is fixed (per segment: one frequency-noise vector, then one
    shape-noise vector per mode) so datasets are bit-reproducible per seed.
    """
    nm = spec.modes()
    if nm > model.n_dof:
        raise InputError("requested more modes than model DOF")
    w_all, v_all = eigen_solve(model, theta_true)
    if not np.all(np.diff(w_all) > 0.0):
        raise InputError("eigenvalues are not strictly ascending; mode matching "
                         "by index is unsafe for this model")
    omega_sq = w_all[:nm]
    modes = v_all[:, :nm]

    observed = spec.dofs_observed()
    if any(d < 1 or d > model.n_dof for d in observed):
        raise InputError("observed_dofs out of range for the model")
    obs_idx = np.array([d - 1 for d in observed])
    n_obs = len(observed)

    freq_rows = []
    shape_rows = []
    for _ in range(spec.n_segments):
        eps = rng.normal(0.0, spec.freq_cov, size=nm) if spec.freq_cov > 0 else np.zeros(nm)
        freq_rows.append(omega_sq * (1.0 + eps))
        for i in range(nm):
            psi = modes[obs_idx, i]
            if spec.shape_cov > 0:
                noise_std = spec.shape_cov * np.linalg.norm(psi) / np.sqrt(n_obs)
                psi = psi + rng.normal(0.0, noise_std, size=n_obs)
            shape_rows.append(fix_sign_and_normalize(psi))
    freq_sq = np.concatenate(freq_rows)
    if np.any(freq_sq <= 0.0):
        raise InputError("frequency noise produced non-positive freq_sq; lower freq_cov")

    data = ModalDataset(
        n_modes=nm,
        n_segments=spec.n_segments,
        freq_sq=freq_sq,
        mode_shapes=np.concatenate(shape_rows),
        observed_dofs=observed,
    )
    truth = GroundTruth(theta_true=np.asarray(theta_true, dtype=float),
                        omega_sq=omega_sq, mode_shapes=modes)
    return data, truth
