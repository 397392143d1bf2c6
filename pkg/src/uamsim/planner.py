"""Position planner that keeps the reflect-path phases on the quantizer grid.

Quantized surface phases only align perfectly when the element steering term
u_l * (cos_in - cos_out) sits on the resolution grid for every element row.
The planner searches the next-window positions of the relaying (low) and
served (high) aircraft for a geometry whose residuals vanish, with a small
particle swarm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ris import steering_indices


@dataclass(frozen=True)
class PsoParams:
    swarm_size: int = 30
    iterations: int = 100
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    velocity_clamp_frac: float = 0.2

    def __post_init__(self) -> None:
        if self.swarm_size < 2 or self.iterations < 1:
            raise ValueError("swarm size and iterations must be meaningful")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("inertia must lie in (0, 1)")
        if self.cognitive <= 0.0 or self.social <= 0.0:
            raise ValueError("acceleration coefficients must be positive")
        if not 0.0 < self.velocity_clamp_frac <= 1.0:
            raise ValueError("velocity clamp must be a fraction of the box")


@dataclass(frozen=True)
class PlanningQuery:
    """One planning window for a (low, high) pair served through the surface.

    Positions are current; the search box runs from each aircraft's current x
    forward by its reachable horizon.  Altitudes stay at the layer levels.
    """

    bs_pos: tuple[float, float]
    low_pos: tuple[float, float]
    high_pos: tuple[float, float]
    horizon_m: tuple[float, float]
    num_elements: int
    resolution: float

    def __post_init__(self) -> None:
        if self.horizon_m[0] <= 0.0 or self.horizon_m[1] <= 0.0:
            raise ValueError("planning horizons must be positive")
        root = math.isqrt(self.num_elements)
        if root * root != self.num_elements or self.num_elements == 0:
            raise ValueError("element count must be a positive perfect square")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")


def cosine_mismatch(
    x_low: np.ndarray | float,
    x_high: np.ndarray | float,
    query: PlanningQuery,
) -> np.ndarray | float:
    """cos(BS->low) - cos(low->high) at the candidate x positions."""
    bx, bh = query.bs_pos
    h_low = query.low_pos[1]
    h_high = query.high_pos[1]
    d1 = np.sqrt((x_low - bx) ** 2 + (h_low - bh) ** 2)
    d2 = np.sqrt((x_high - x_low) ** 2 + (h_high - h_low) ** 2)
    return (x_low - bx) / d1 - (x_high - x_low) / d2


def p4_fitness(candidate: tuple[float, float], query: PlanningQuery) -> float:
    """Mean squared distance of the element alignment terms from the grid.

    For each element the steering term u_l * mismatch must land on an integer
    multiple of the resolution for the quantizer to cancel it exactly.
    Candidates outside the forward search box are infeasible.
    """
    x_low, x_high = candidate
    lo_min, lo_max = query.low_pos[0], query.low_pos[0] + query.horizon_m[0]
    hi_min, hi_max = query.high_pos[0], query.high_pos[0] + query.horizon_m[1]
    if not (lo_min < x_low <= lo_max and hi_min < x_high <= hi_max):
        return math.inf
    mism = cosine_mismatch(x_low, x_high, query)
    u = steering_indices(query.num_elements)
    terms = u * mism
    residual = terms - np.round(terms / query.resolution) * query.resolution
    return float(np.mean(residual**2))


def _swarm_fitness(xs: np.ndarray, query: PlanningQuery) -> np.ndarray:
    """Vectorized p4_fitness over an (n, 2) candidate array (all in-box).

    The steering index cycles through 0..sqrt(L)-1 with equal multiplicity,
    so averaging over the distinct values equals averaging over all elements
    at a fraction of the cost.
    """
    mism = cosine_mismatch(xs[:, 0], xs[:, 1], query)
    u = np.arange(math.isqrt(query.num_elements), dtype=float)[None, :]
    terms = u * np.asarray(mism)[:, None]
    residual = terms - np.round(terms / query.resolution) * query.resolution
    return np.mean(residual**2, axis=1)


def pso_minimize(
    fn,
    lower: np.ndarray,
    upper: np.ndarray,
    params: PsoParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Minimize ``fn`` over a box with a canonical inertial particle swarm.

    fn takes an (n, dim) array and returns n fitness values.  Particles are
    clipped to the box, velocities clamped to a fraction of the box width.
    The best position ever seen is returned, so the result never regresses.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = len(lower)
    span = upper - lower
    if np.any(span <= 0.0):
        raise ValueError("upper bounds must exceed lower bounds")
    n = params.swarm_size
    pos = lower + rng.random((n, dim)) * span
    vmax = params.velocity_clamp_frac * span
    vel = (rng.random((n, dim)) * 2.0 - 1.0) * vmax
    fit = np.asarray(fn(pos), dtype=float)
    best_pos = pos.copy()
    best_fit = fit.copy()
    g_idx = int(np.argmin(best_fit))
    g_pos = best_pos[g_idx].copy()
    g_fit = float(best_fit[g_idx])
    for _ in range(params.iterations):
        r1 = rng.random((n, dim))
        r2 = rng.random((n, dim))
        vel = (
            params.inertia * vel
            + params.cognitive * r1 * (best_pos - pos)
            + params.social * r2 * (g_pos[None, :] - pos)
        )
        vel = np.clip(vel, -vmax, vmax)
        pos = np.clip(pos + vel, lower, upper)
        fit = np.asarray(fn(pos), dtype=float)
        improved = fit < best_fit
        best_pos[improved] = pos[improved]
        best_fit[improved] = fit[improved]
        g_idx = int(np.argmin(best_fit))
        if best_fit[g_idx] < g_fit:
            g_fit = float(best_fit[g_idx])
            g_pos = best_pos[g_idx].copy()
    return g_pos, g_fit


def pso_optimize(
    query: PlanningQuery,
    params: PsoParams,
    rng: np.random.Generator,
) -> tuple[tuple[float, float], float]:
    """Best next-window (x_low, x_high) for the pair, with its fitness.

    The search box is half-open at the current positions; the swarm runs on
    a closed box shrunk by a hair so every candidate stays strictly ahead.
    """
    eps_lo = 1e-9 * max(1.0, abs(query.low_pos[0]))
    eps_hi = 1e-9 * max(1.0, abs(query.high_pos[0]))
    lower = np.array([query.low_pos[0] + eps_lo, query.high_pos[0] + eps_hi])
    upper = np.array(
        [
            query.low_pos[0] + query.horizon_m[0],
            query.high_pos[0] + query.horizon_m[1],
        ]
    )
    best, fit = pso_minimize(
        lambda xs: _swarm_fitness(xs, query), lower, upper, params, rng
    )
    return (float(best[0]), float(best[1])), float(fit)
