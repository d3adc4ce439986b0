"""Independent verification of stationary profiles.

Nothing here feeds the learning loop: an extragradient solver computes
reference equilibria of monotone games from their stacked own-cost
gradients, the stationarity checker measures how far a profile is from
reproducing itself through the live reaction oracles, and a brute-force
grid scan certifies presence or absence of fixed points on tiny boxes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .profiles import CollectiveProfile, Partition, Polytope, contains, project


class OracleNotConverged(RuntimeError):
    """Iteration budget exhausted; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class PseudoGradientGame:
    """Stacked own-cost gradient field over a feasible polytope."""

    gradient: object  # callable profile -> stacked per-agent gradients
    omega: Polytope
    lipschitz: float | None = None


def extragradient(
    game: PseudoGradientGame,
    x0,
    step: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 200000,
) -> np.ndarray:
    """Two-projection iteration toward a zero of the natural residual.

    Per sweep: y = project(x - s F(x)), x+ = project(x - s F(y)). The step
    is 0.9 / lipschitz when an estimate is available, otherwise it adapts:
    whenever s ||F(x) - F(y)|| > 0.9 ||x - y|| the step halves and the sweep
    repeats. Returns the first x whose natural residual is at most tol;
    raises OracleNotConverged (best iterate attached) on budget exhaustion.
    """
    omega = game.omega
    F = game.gradient
    x = project(omega, np.asarray(x0, dtype=float).ravel())
    if step is not None:
        s = float(step)
        adaptive = False
    elif game.lipschitz is not None:
        s = 0.9 / float(game.lipschitz)
        adaptive = False
    else:
        s = 1.0
        adaptive = True
    for _ in range(max_iter):
        fx = F(x)
        if not np.all(np.isfinite(fx)):
            raise ValueError("non-finite gradient")
        xt = project(omega, x - s * fx)
        if float(np.linalg.norm(x - xt)) <= tol:
            return x
        if adaptive:
            while True:
                fy = F(xt)
                if not np.all(np.isfinite(fy)):
                    raise ValueError("non-finite gradient")
                if s * float(np.linalg.norm(fx - fy)) <= 0.9 * float(
                    np.linalg.norm(x - xt)
                ) or s < 1e-12:
                    break
                s *= 0.5
                xt = project(omega, x - s * fx)
        else:
            fy = F(xt)
            if not np.all(np.isfinite(fy)):
                raise ValueError("non-finite gradient")
        x = project(omega, x - s * fy)
    raise OracleNotConverged("not converged", x)


def natural_residual(game: PseudoGradientGame, x, step: float) -> float:
    """||x - project(x - step F(x))|| at the given step size."""
    x = np.asarray(x, dtype=float).ravel()
    return float(np.linalg.norm(x - project(game.omega, x - step * game.gradient(x))))


def stationarity_residual(profile: CollectiveProfile, oracles) -> float:
    """Sum of squared gaps between each block and the agent's live reaction.

    Zero exactly when every agent reproduces its own block of the profile.
    """
    total = 0.0
    for i, oracle in enumerate(oracles):
        gap = profile.block(i) - np.asarray(oracle.react(profile.others(i)), dtype=float).ravel()
        total += float(gap @ gap)
    return total


def brute_force_fixed_points(
    oracles,
    omega: Polytope,
    grid_resolution: float,
    threshold: float | None = None,
) -> list[np.ndarray]:
    """Exhaustive grid scan for approximate fixed points on a tiny box.

    Collects every grid point whose stationarity residual is at most the
    threshold (default 0.5 * grid_resolution^2: tight enough to reject the
    one-step neighbors of an on-grid fixed point, loose enough to keep
    exact ones). An empty list certifies absence at this resolution.
    """
    if omega.dim > 3:
        raise ValueError("oracle scale exceeded")
    if not omega.is_box:
        raise ValueError("grid scan supports box sets only")
    res = float(grid_resolution)
    if res <= 0:
        raise ValueError("grid resolution must be positive")
    if threshold is None:
        threshold = 0.5 * res * res
    sizes = tuple(int(getattr(o, "n_out", 1)) for o in oracles)
    partition = Partition(sizes)
    if partition.total != omega.dim:
        raise ValueError("oracle outputs do not match the box dimension")
    axes = []
    for j in range(omega.dim):
        lo, hi = float(omega.lower[j]), float(omega.upper[j])
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("grid scan needs finite bounds")
        count = int(round((hi - lo) / res)) + 1
        axes.append(np.linspace(lo, hi, count))
    hits = []
    for point in itertools.product(*axes):
        x = np.array(point)
        profile = CollectiveProfile(partition=partition, values=x)
        if stationarity_residual(profile, oracles) <= threshold:
            hits.append(x)
    return hits
