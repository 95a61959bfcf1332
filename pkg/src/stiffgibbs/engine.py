"""Chain orchestration for the two Gibbs samplers, plus burn-in and
multi-chain ergodicity diagnostics.

Update order within an iteration is part of the algorithm definition:
mode shapes, then frequencies-squared, then (sampler 1 only) the equation
error precision, then the stiffness scalings, each conditioned on the newest
values of the others.

RNG policy: one ``numpy.random.Generator`` per chain, seeded from a 64-bit
seed; parallel-chain seeds are derived from the base seed through
``SeedSequence`` so (seed, config, data) reproduces every chain bit-exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import conditionals_exact as ce
from . import conditionals_marginal as cm
from .conditionals_exact import FixedPoint, HyperStateExact
from .conditionals_marginal import HyperStateMarginal
from .errors import ConvergenceError, InputError, NumericalError
from .model import ModalDataset, StructuralModel, SystemState, stacked_residual

ALGORITHMS = ("exact", "marginal")
CLAMPABLE = ("phi", "omega_sq", "beta")


@dataclass(frozen=True)
class GibbsConfig:
    """Everything needed to reproduce a chain, apart from the data files."""

    algorithm: str = "marginal"
    n_samples: int = 1000
    seed: int = 0
    n_chains: int = 1
    sparse_mode: bool = False
    beta_init: float = 100.0
    theta_init: np.ndarray | None = None
    omega_sq_init: np.ndarray | None = None
    phi_init: np.ndarray | None = None
    fixed_point: FixedPoint = FixedPoint()
    store_phi: bool = True
    start_jitter: float = 0.0   # multi-start: relative perturbation of theta_init per chain
    clamp: tuple[str, ...] = ()  # testing hook: hold listed groups at their initial values
    # Marginal sampler only: floor each conditional's Gamma rate at the level
    # implied by the chain's own sampled-state equation residual.  Without it,
    # data that the model class can interpolate exactly drive the mean-based
    # rates to zero across iterations and the chain freezes.
    stabilize_rates: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InputError(f"algorithm must be one of {ALGORITHMS}")
        if self.n_samples < 1:
            raise InputError("n_samples must be >= 1")
        if self.n_chains < 1:
            raise InputError("n_chains must be >= 1")
        if self.beta_init <= 0.0:
            raise InputError("beta_init must be positive")
        for name in self.clamp:
            if name not in CLAMPABLE:
                raise InputError(f"clamp entries must be among {CLAMPABLE}")
        for name in ("theta_init", "omega_sq_init", "phi_init"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=float))


@dataclass
class Chain:
    """Columnar storage of one chain: one row per Gibbs iteration."""

    algorithm: str
    theta: np.ndarray            # (N, n_theta)
    omega_sq: np.ndarray         # (N, n_modes)
    beta: np.ndarray | None      # (N,) for the exact sampler, else None
    phi: np.ndarray | None       # (N, n_dof*n_modes) when stored
    hyper: dict[str, np.ndarray]
    config: GibbsConfig
    seed: int
    labels: tuple[str, ...]
    runtime_s: float = 0.0

    def __len__(self) -> int:
        return self.theta.shape[0]

    def state(self, n: int) -> SystemState:
        if self.phi is None:
            raise InputError("chain was stored without phi; cannot rebuild full states")
        return SystemState(phi=self.phi[n], omega_sq=self.omega_sq[n], theta=self.theta[n],
                           beta=None if self.beta is None else float(self.beta[n]))


def _reraise_with_context(exc: Exception, iteration: int, group: str):
    message = f"gibbs iteration {iteration}, {group} conditional: {exc}"
    if isinstance(exc, ConvergenceError):
        err = ConvergenceError(message, last_iterate=exc.last_iterate,
                               iterations=exc.iterations)
    else:
        err = type(exc)(message)
    err.iteration = iteration
    raise err from exc


def _initial_state(data: ModalDataset, config: GibbsConfig,
                   theta_hat_schedule: np.ndarray | None,
                   n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    omega_sq = config.omega_sq_init if config.omega_sq_init is not None \
        else data.mean_freq_sq()
    if config.theta_init is not None:
        theta = config.theta_init
    elif data.theta_hat is not None:
        theta = data.theta_hat
    elif theta_hat_schedule is not None:
        theta = theta_hat_schedule[0]
    else:
        # Calibration stage: no calibration value exists yet, start at the
        # nominal scaling (1.0 per substructure).
        theta = np.ones(n_theta)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_theta,):
        raise InputError(f"theta_init must have length {n_theta}")
    return np.array(omega_sq, dtype=float), theta.copy()


def _check_sparse_inputs(data, config, theta_hat_schedule, n_theta, n_samples):
    if theta_hat_schedule is not None:
        theta_hat_schedule = np.asarray(theta_hat_schedule, dtype=float)
        if theta_hat_schedule.shape != (n_samples, n_theta):
            raise InputError("theta_hat_schedule must have shape (n_samples, n_theta)")
        return theta_hat_schedule
    if config.sparse_mode and data.theta_hat is None:
        raise InputError("sparse_mode requires a calibration value: set dataset theta_hat "
                         "or pass a theta_hat_schedule")
    return None


def run_algorithm1(data: ModalDataset, model: StructuralModel, config: GibbsConfig,
                   rng: np.random.Generator | None = None,
                   theta_hat_schedule: np.ndarray | None = None) -> Chain:
    """Gibbs sampler keeping the equation-error precision as a variable.

    Per iteration, samples mode shapes, frequencies-squared, the precision,
    then the stiffness scalings, in that order.
    """
    if config.algorithm != "exact":
        raise InputError("run_algorithm1 requires config.algorithm == 'exact'")
    return _run(data, model, config, rng, theta_hat_schedule)


def run_algorithm2(data: ModalDataset, model: StructuralModel, config: GibbsConfig,
                   rng: np.random.Generator | None = None,
                   theta_hat_schedule: np.ndarray | None = None) -> Chain:
    """Gibbs sampler with the equation-error precision integrated out."""
    if config.algorithm != "marginal":
        raise InputError("run_algorithm2 requires config.algorithm == 'marginal'")
    return _run(data, model, config, rng, theta_hat_schedule)


def run_chain(data: ModalDataset, model: StructuralModel, config: GibbsConfig,
              rng: np.random.Generator | None = None,
              theta_hat_schedule: np.ndarray | None = None) -> Chain:
    if config.algorithm == "exact":
        return run_algorithm1(data, model, config, rng, theta_hat_schedule)
    return run_algorithm2(data, model, config, rng, theta_hat_schedule)


def _run(data, model, config, rng, theta_hat_schedule) -> Chain:
    start = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    exact = config.algorithm == "exact"
    n = config.n_samples
    n_theta = model.n_theta
    schedule = _check_sparse_inputs(data, config, theta_hat_schedule, n_theta, n)
    clamp = frozenset(config.clamp)
    if "phi" in clamp and config.phi_init is None:
        raise InputError("clamping phi requires phi_init")
    if "beta" in clamp and not exact:
        raise InputError("the marginal sampler has no beta to clamp")
    omega_sq, theta = _initial_state(data, config, schedule, n_theta)
    phi = None if config.phi_init is None else config.phi_init.copy()
    beta = config.beta_init
    fp = config.fixed_point

    theta_trace = np.empty((n, n_theta))
    omega_trace = np.empty((n, data.n_modes))
    beta_trace = np.empty(n) if exact else None
    phi_trace = np.empty((n, model.n_dof * data.n_modes)) if config.store_phi else None
    if exact:
        hyper_state = HyperStateExact(sparse_mode=config.sparse_mode)
        hyper_trace = {"eta": np.full(n, np.nan), "rho": np.full(n, np.nan),
                       "b0": np.full(n, np.nan), "alpha": np.full((n, n_theta), np.inf)}
    else:
        hyper_state = HyperStateMarginal(sparse_mode=config.sparse_mode)
        hyper_trace = {"tau": np.full(n, np.nan), "v": np.full(n, np.nan),
                       "b0_phi": np.full(n, np.nan), "b0_w": np.full(n, np.nan),
                       "b0_theta": np.full(n, np.nan),
                       "gamma": np.full((n, n_theta), np.inf)}

    def residual_sq(phi_state, omega_state, theta_state) -> float | None:
        if not config.stabilize_rates or phi_state is None:
            return None
        r = stacked_residual(model, phi_state, omega_state, theta_state)
        return float(r @ r)

    for it in range(n):
        if "phi" not in clamp:
            try:
                if exact:
                    res = ce.cond_phi(data, model, omega_sq, theta, beta, rng,
                                      eta_init=hyper_state.eta, fixed_point=fp)
                    hyper_state.eta = res.hyper
                    hyper_trace["eta"][it] = res.hyper
                else:
                    res = cm.cond_phi_marginal(data, model, omega_sq, theta, rng,
                                               tau_init=hyper_state.tau,
                                               state_residual=residual_sq(phi, omega_sq, theta),
                                               fixed_point=fp)
                    hyper_state.tau = res.hyper
                    hyper_trace["tau"][it] = res.hyper
                    hyper_trace["b0_phi"][it] = res.b0
                phi = res.sample
            except (NumericalError, ConvergenceError, InputError) as exc:
                _reraise_with_context(exc, it, "phi")

        if "omega_sq" not in clamp:
            try:
                if exact:
                    res = ce.cond_omega2(data, model, phi, theta, beta, rng,
                                         rho_init=hyper_state.rho, fixed_point=fp)
                    hyper_state.rho = res.hyper
                    hyper_trace["rho"][it] = res.hyper
                else:
                    res = cm.cond_omega2_marginal(data, model, phi, theta, rng,
                                                  v_init=hyper_state.v,
                                                  state_residual=residual_sq(phi, omega_sq, theta),
                                                  fixed_point=fp)
                    hyper_state.v = res.hyper
                    hyper_trace["v"][it] = res.hyper
                    hyper_trace["b0_w"][it] = res.b0
                omega_sq = res.sample
            except (NumericalError, ConvergenceError, InputError) as exc:
                _reraise_with_context(exc, it, "omega_sq")

        if exact and "beta" not in clamp:
            try:
                res = ce.cond_beta(model, phi, omega_sq, theta, rng)
                beta = res.sample
                hyper_state.b0 = res.b0
                hyper_trace["b0"][it] = res.b0
            except (NumericalError, InputError) as exc:
                _reraise_with_context(exc, it, "beta")

        theta_hat = schedule[it] if schedule is not None else data.theta_hat
        try:
            if exact:
                res = ce.cond_theta(data, model, phi, omega_sq, beta, rng,
                                    sparse_mode=config.sparse_mode, theta_hat=theta_hat,
                                    alpha_init=hyper_state.alpha if config.sparse_mode else None,
                                    fixed_point=fp)
                if config.sparse_mode:
                    hyper_state.alpha = res.hyper
                    hyper_trace["alpha"][it] = res.hyper
            else:
                res = cm.cond_theta_marginal(data, model, phi, omega_sq, rng,
                                             sparse_mode=config.sparse_mode,
                                             theta_hat=theta_hat,
                                             gamma_init=hyper_state.gamma if config.sparse_mode else None,
                                             state_residual=residual_sq(phi, omega_sq, theta),
                                             fixed_point=fp)
                hyper_trace["b0_theta"][it] = res.b0
                if config.sparse_mode:
                    hyper_state.gamma = res.hyper
                    hyper_trace["gamma"][it] = res.hyper
            theta = res.sample
        except (NumericalError, ConvergenceError, InputError) as exc:
            _reraise_with_context(exc, it, "theta")

        theta_trace[it] = theta
        omega_trace[it] = omega_sq
        if beta_trace is not None:
            beta_trace[it] = beta
        if phi_trace is not None:
            phi_trace[it] = phi

    return Chain(algorithm=config.algorithm, theta=theta_trace, omega_sq=omega_trace,
                 beta=beta_trace, phi=phi_trace, hyper=hyper_trace, config=config,
                 seed=config.seed, labels=model.substructure_labels(),
                 runtime_s=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BurnInResult:
    index: int
    stationary: bool          # False: never stationary, index == chain length
    window: int
    z_threshold: float
    candidates: np.ndarray    # candidate start indices scanned
    z_max: np.ndarray         # per candidate, max |z| over components

    def __int__(self) -> int:
        return self.index


def detect_burn_in(chain, window: int | None = None, z_threshold: float = 2.0) -> BurnInResult:
    """First index where an early window agrees with the final window.

    Geweke-style mean comparison per stiffness component: z-score between the
    window starting at the candidate index and the final window of the chain;
    stationary once max |z| over components falls below the threshold.
    """
    theta = chain.theta if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None]
    n = theta.shape[0]
    w = window if window is not None else max(1, n // 10)
    if w < 1:
        raise InputError("window must be >= 1")
    if n <= 2 * w:
        raise InputError(f"chain length {n} must exceed twice the window {w}")

    ref = theta[n - w:]
    ref_mean = ref.mean(axis=0)
    ref_var = ref.var(axis=0, ddof=1) if w > 1 else np.zeros(theta.shape[1])

    n_cand = n - 2 * w + 1
    csum = np.vstack([np.zeros(theta.shape[1]), np.cumsum(theta, axis=0)])
    csum2 = np.vstack([np.zeros(theta.shape[1]), np.cumsum(theta * theta, axis=0)])
    idx = np.arange(n_cand)
    win_sum = csum[idx + w] - csum[idx]
    win_mean = win_sum / w
    if w > 1:
        win_var = (csum2[idx + w] - csum2[idx] - w * win_mean ** 2) / (w - 1)
        win_var = np.maximum(win_var, 0.0)
    else:
        win_var = np.zeros_like(win_mean)

    diff = np.abs(win_mean - ref_mean)
    denom = np.sqrt((win_var + ref_var) / w)
    scale = np.maximum(np.abs(ref_mean), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / denom
    # Degenerate windows (zero variance): equal means pass, unequal fail.
    z = np.where(denom > 0.0, z, np.where(diff <= 1e-12 * scale, 0.0, np.inf))
    z_max = z.max(axis=1)
    hits = np.nonzero(z_max < z_threshold)[0]
    if hits.size:
        return BurnInResult(index=int(hits[0]), stationary=True, window=w,
                            z_threshold=z_threshold, candidates=idx, z_max=z_max)
    return BurnInResult(index=n, stationary=False, window=w,
                        z_threshold=z_threshold, candidates=idx, z_max=z_max)


def split_r_hat(samples: list[np.ndarray]) -> np.ndarray:
    """Split potential-scale-reduction factor per parameter.

    Takes post-burn-in sample blocks (n_i, p), truncates to a common length,
    splits each into halves, and compares between- to within-half variance.
    Returns NaN where the within-half variance vanishes (degenerate chains).
    """
    if len(samples) < 2:
        raise InputError("split_r_hat needs at least two chains")
    length = min(s.shape[0] for s in samples)
    half = length // 2
    if half < 2:
        raise InputError("chains too short for split R-hat")
    halves = []
    for s in samples:
        s = s[:2 * half]
        halves.append(s[:half])
        halves.append(s[half:])
    stack = np.stack(halves)                      # (2C, half, p)
    means = stack.mean(axis=1)                    # (2C, p)
    variances = stack.var(axis=1, ddof=1)         # (2C, p)
    w = variances.mean(axis=0)
    b = half * means.var(axis=0, ddof=1)
    var_plus = (half - 1) / half * w + b / half
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_plus / w)
    return np.where(w > 0.0, r, np.nan)


def mc_standard_error(samples: np.ndarray, n_batches: int = 20) -> np.ndarray:
    """Batch-means Monte-Carlo standard error of the sample mean, robust to
    chain autocorrelation."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    n_batches = min(n_batches, n)
    size = n // n_batches
    if size < 1:
        raise InputError("not enough samples for batch means")
    batches = samples[:n_batches * size].reshape(n_batches, size, -1).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


@dataclass(frozen=True)
class ErgodicityReport:
    r_hat: np.ndarray            # split R-hat per stiffness component
    chain_means: np.ndarray      # (n_chains, n_theta) post-burn-in means
    chain_se: np.ndarray         # (n_chains, n_theta) batch-means standard errors
    burn_in: tuple[int, ...]     # detected per chain
    stationary: tuple[bool, ...]
    degenerate: bool             # identical chains detected; R-hat is NaN there
    labels: tuple[str, ...]


def run_parallel_chains(data: ModalDataset, model: StructuralModel, config: GibbsConfig,
                        theta_hat_schedule: np.ndarray | None = None,
                        chain_seeds: tuple[int, ...] | None = None,
                        ) -> tuple[list[Chain], ErgodicityReport]:
    """Run n_chains independent chains and report ergodicity diagnostics.

    Seeds derive from the base seed unless explicit per-chain seeds are given;
    chains are executed sequentially so results never depend on scheduling.
    """
    if config.n_chains < 2:
        raise InputError("run_parallel_chains needs n_chains >= 2")
    if chain_seeds is not None:
        if len(chain_seeds) != config.n_chains:
            raise InputError("chain_seeds length must equal n_chains")
        seeds = [int(s) for s in chain_seeds]
    else:
        seeds = [int(s) for s in
                 np.random.SeedSequence(config.seed).generate_state(config.n_chains, dtype=np.uint64)]

    chains = []
    for seed in seeds:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        cfg = replace(config, seed=seed)
        if config.start_jitter > 0.0:
            base = cfg.theta_init if cfg.theta_init is not None else np.ones(model.n_theta)
            jittered = base * (1.0 + config.start_jitter * rng.standard_normal(model.n_theta))
            cfg = replace(cfg, theta_init=jittered)
        chains.append(run_chain(data, model, cfg, rng, theta_hat_schedule))

    burn = [detect_burn_in(c) for c in chains]
    kept = [c.theta[b.index:] if b.stationary else c.theta[len(c) // 2:]
            for c, b in zip(chains, burn)]
    degenerate = any(np.array_equal(chains[i].theta, chains[j].theta)
                     for i in range(len(chains)) for j in range(i + 1, len(chains)))
    r_hat = split_r_hat(kept)
    means = np.stack([k.mean(axis=0) for k in kept])
    ses = np.stack([mc_standard_error(k) for k in kept])
    report = ErgodicityReport(r_hat=r_hat, chain_means=means, chain_se=ses,
                              burn_in=tuple(b.index for b in burn),
                              stationary=tuple(b.stationary for b in burn),
                              degenerate=degenerate,
                              labels=model.substructure_labels())
    return chains, report
