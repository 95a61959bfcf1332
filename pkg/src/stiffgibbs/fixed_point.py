"""Fixed-point drivers for the hyperparameter MAP updates.

The evidence updates are Picard maps whose plain iteration can contract
arbitrarily slowly (weakly identified optimum), decay harmonically (pruning
path toward the floor), or climb with ratio barely above one toward a distant
optimum.  Scalar hyperparameters are therefore solved by bracketing the
root of update(x) - x in log steps and polishing with Brent's method, which
is insensitive to the contraction rate.  Vector hyperparameters use Picard
cycles with a geometric-sum extrapolation along the step direction (handles
strongly coupled, slowly contracting valleys) plus a floor proposal for
components on a pruning path, whose only limit point is the floor.

Convergence means a small defining-equation residual,
|update(x) - x| <= tol * max(x, floor), elementwise -- except inside the
pruning band (within PRUNE_BAND of the floor), where the criterion is loosened
to a coarse relative test: there the update's own floating-point evaluation
noise exceeds any strict tolerance (the precision matrix carries condition
numbers of 1/floor) and the value is semantically "pruned" anyway.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError

_BRACKET_FACTOR = 16.0
PRUNE_BAND = 1e3      # multiples of the floor that count as pruned
_BAND_TOL = 0.1       # coarse relative tolerance inside the pruning band


def fixed_point_solve(update, x0, floor: float, tol: float, max_evals: int,
                      ceil: float = np.inf):
    """Solve x = clip(update(x), floor, ceil); returns (solution, n_evaluations)."""
    x = np.clip(np.atleast_1d(np.asarray(x0, dtype=float)), floor, min(ceil, 1e300))
    if x.size == 1:
        return _solve_scalar(update, float(x[0]), floor, ceil, tol, max_evals)
    return _solve_vector(update, x, floor, ceil, tol, max_evals)


def _settled(x, f, tol, floor):
    """Elementwise defining-equation residual test with the pruning band."""
    in_band = (x <= PRUNE_BAND * floor) & (f <= PRUNE_BAND * floor)
    allowed = np.where(in_band, _BAND_TOL, tol) * np.maximum(x, floor)
    return np.all(np.abs(f - x) <= allowed)


def _solve_scalar(update, x0, floor, ceil, tol, max_evals):
    evals = 0
    hi_bound = min(ceil, 1e300)

    def residual(x):
        nonlocal evals
        if evals >= max_evals:
            raise ConvergenceError(
                f"hyperparameter fixed point did not converge within {max_evals} evaluations",
                last_iterate=x, iterations=evals)
        evals += 1
        return float(update(np.array([x]))[0]) - x

    def done(x, g):
        band = _BAND_TOL if (x <= PRUNE_BAND * floor and x + g <= PRUNE_BAND * floor) else tol
        return abs(g) <= band * max(x, floor)

    x = x0
    g = residual(x)
    if done(x, g):
        return np.array([min(max(x + g, floor), hi_bound)]), evals

    grow = g > 0.0
    lo, g_lo = x, g
    hi, g_hi = x, g
    while True:
        if grow:
            lo, g_lo = hi, g_hi
            hi = min(hi * _BRACKET_FACTOR, hi_bound)
            g_hi = residual(hi)
            if done(hi, g_hi) or (hi >= hi_bound and g_hi > 0.0):
                # capped solution: the update still sits above the diagonal
                return np.array([hi]), evals
            if g_hi < 0.0:
                break
        else:
            hi, g_hi = lo, g_lo
            lo = max(lo / _BRACKET_FACTOR, floor)
            g_lo = residual(lo)
            if done(lo, g_lo) or (lo <= floor and g_lo < 0.0):
                # floored solution: the update stays below the diagonal
                return np.array([lo]), evals
            if g_lo > 0.0:
                break

    root = brentq(residual, lo, hi, xtol=floor, rtol=4.0 * np.finfo(float).eps,
                  maxiter=max_evals)
    return np.array([min(max(root, floor), hi_bound)]), evals


def _solve_vector(update, x, floor, ceil, tol, max_evals):
    evals = 0
    while evals < max_evals:
        f0 = np.clip(update(x), floor, ceil)
        evals += 1
        if _settled(x, f0, tol, floor):
            return f0, evals
        if evals >= max_evals:
            x = f0
            break
        f1 = np.clip(update(f0), floor, ceil)
        evals += 1
        if _settled(f0, f1, tol, floor):
            return f1, evals
        d0 = f0 - x
        d1 = f1 - f0
        norm0 = float(d0 @ d0)
        ratio = float(d1 @ d0) / norm0 if norm0 > 0.0 else 0.0
        if -0.5 < ratio < 1.0 - 1e-6:
            # geometric-sum extrapolation along the current step direction
            x = np.clip(f1 + d1 * (ratio / (1.0 - ratio)), floor, ceil)
        else:
            x = f1
        # Components decaying with a per-component step ratio near one are on
        # a pruning path whose only limit is the floor (harmonic decay never
        # gets there).  Propose the floor outright; the next map evaluation
        # either confirms it or pulls the component back up.
        with np.errstate(invalid="ignore", divide="ignore"):
            step_ratio = np.abs(d1) / np.where(np.abs(d0) > 0.0, np.abs(d0), 1.0)
        pruning = (d0 < 0.0) & (d1 < 0.0) & (step_ratio > 0.9)
        if pruning.any():
            x = x.copy()
            x[pruning] = floor
    raise ConvergenceError(
        f"hyperparameter fixed point did not converge within {max_evals} evaluations",
        last_iterate=x, iterations=evals)
