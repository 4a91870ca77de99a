"""Deterministic flow approximation of the uncharged-car count.

The scaled uncharged count follows ``z' = inflow - nu*z - mu*min(z, M)``
with ``inflow = min(lam, nu*K)``.  Each side of ``z = M`` is linear, so
trajectories are glued exponentials and the fixed point has a two-branch
closed form.  Swapping the capped inflow for the loss-system throughput
``lam*(1 - B(lam/nu, K))`` gives the sharper modified fixed point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .closed_form import erlang_b
from .model import ModelParams, ValidationError


class Regime(enum.Enum):
    """Position of the fixed point relative to the power capacity."""

    BELOW_M = "below_M"
    ABOVE_M = "above_M"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class FluidResult:
    """Fixed point of the flow equation.

    ``lambda_eff`` echoes the effective arrival rate the fixed point was
    computed with: the capped inflow for the plain model, the
    loss-system throughput for the modified one.
    """

    z_star: float
    regime: Regime
    lambda_eff: float

    def __post_init__(self):
        if self.z_star < 0:
            raise ValidationError(f"fixed point must be nonnegative, got {self.z_star}")


def _fixed_point(inflow: float, params: ModelParams) -> FluidResult:
    z1 = inflow / (params.nu + params.mu)
    if z1 < params.M:
        return FluidResult(z1, Regime.BELOW_M, inflow)
    if z1 == params.M:
        return FluidResult(z1, Regime.BOUNDARY, inflow)
    return FluidResult((inflow - params.mu * params.M) / params.nu, Regime.ABOVE_M, inflow)


def fluid_fixed_point(params: ModelParams) -> FluidResult:
    """Invariant point of the flow equation with the capped inflow.

    The point sits at ``inflow/(nu+mu)`` when that load fits under the
    power capacity and at ``(inflow - mu*M)/nu`` otherwise; exactly one
    branch applies, or both coincide at ``z* = M``.
    """
    inflow = params.lam if params.unbounded else min(params.lam, params.nu * params.K)
    return _fixed_point(inflow, params)


def modified_fluid_fixed_point(params: ModelParams) -> FluidResult:
    """Fixed point with the loss-system throughput as effective inflow."""
    if params.unbounded:
        raise ValidationError("the modified fixed point needs a finite K")
    lam_eff = params.lam * (1.0 - erlang_b(params.lam / params.nu, params.K))
    return _fixed_point(lam_eff, params)


def fluid_success_prob(result: FluidResult, params: ModelParams) -> float:
    """Fraction of cars that finish charging, under the flow model.

    Below the capacity every car charges at full rate and wins with
    probability ``mu/(nu+mu)``; above it the lot completes ``mu*M``
    charges per unit time out of ``lambda_eff`` admissions.
    """
    if result.regime is Regime.ABOVE_M:
        if result.lambda_eff <= 0:
            raise ValidationError("the overloaded branch needs a positive effective inflow")
        return params.mu * params.M / result.lambda_eff
    return params.mu / (params.nu + params.mu)


def full_lot_fluid(params: ModelParams) -> float:
    """Flow fixed point of a lot that never has a free space.

    Solves ``mu*min(z, M) = nu*(K - z)``: replacements of departing
    cars balance completed charges.
    """
    if params.unbounded:
        raise ValidationError("the full-lot flow point needs a finite K")
    balanced = params.nu * params.K / (params.nu + params.mu)
    if balanced <= params.M:
        return balanced
    return (params.nu * params.K - params.mu * params.M) / params.nu


def fluid_trajectory(params: ModelParams, z0: float, t_grid) -> np.ndarray:
    """Exact flow trajectory from ``z0`` sampled at ``t_grid``.

    Each region of ``z = M`` has a linear equation solved by an
    exponential relaxation toward its own equilibrium; the single
    region-crossing time, when there is one, is computed analytically
    and the two branches are glued there.
    """
    cap = math.inf if params.unbounded else float(params.K)
    if not 0.0 <= z0 <= cap:
        raise ValidationError(f"z0 must lie in [0, K], got {z0}")
    t = np.asarray(t_grid, dtype=float)
    if t.size and t.min() < 0:
        raise ValidationError("t_grid must be nonnegative")

    inflow = params.lam if params.unbounded else min(params.lam, params.nu * params.K)
    nu, mu, M = params.nu, params.mu, params.M
    z_low = inflow / (nu + mu)  # equilibrium of the uncapped-power region
    z_high = (inflow - mu * M) / nu  # equilibrium of the power-capped region

    def relax(target: float, start: float, rate: float, tt: np.ndarray) -> np.ndarray:
        return target + (start - target) * np.exp(-rate * tt)

    if z0 < M or (z0 == M and z_low < M):
        # Start below the capacity; leave only if the equilibrium is above it.
        if z_low <= M:
            z = relax(z_low, z0, nu + mu, t)
        else:
            t_cross = math.log((z_low - z0) / (z_low - M)) / (nu + mu)
            z = np.where(
                t <= t_cross,
                relax(z_low, z0, nu + mu, t),
                relax(z_high, M, nu, np.maximum(t - t_cross, 0.0)),
            )
    elif z0 > M or (z0 == M and z_high > M):
        if z_high >= M:
            z = relax(z_high, z0, nu, t)
        else:
            t_cross = math.log((z0 - z_high) / (M - z_high)) / nu
            z = np.where(
                t <= t_cross,
                relax(z_high, z0, nu, t),
                relax(z_low, M, nu + mu, np.maximum(t - t_cross, 0.0)),
            )
    else:
        # z0 == M with neither region pulling away: M is the fixed point.
        z = np.full_like(t, float(M))
    return np.clip(z, 0.0, cap)


def rk4_trajectory(params: ModelParams, z0: float, t_grid, dt: float | None = None) -> np.ndarray:
    """Runge-Kutta cross-check of :func:`fluid_trajectory`.

    Integrates the flow equation with a fixed step (default
    ``1e-3/min(nu, mu)``) and interpolates onto ``t_grid``.
    """
    cap = math.inf if params.unbounded else float(params.K)
    if not 0.0 <= z0 <= cap:
        raise ValidationError(f"z0 must lie in [0, K], got {z0}")
    if dt is None:
        dt = 1e-3 / min(params.nu, params.mu)
    t = np.asarray(t_grid, dtype=float)
    inflow = params.lam if params.unbounded else min(params.lam, params.nu * params.K)

    def f(z: float) -> float:
        return inflow - params.nu * z - params.mu * min(z, params.M)

    t_end = float(t.max()) if t.size else 0.0
    n_steps = int(math.ceil(t_end / dt)) if t_end > 0 else 0
    zs = np.empty(n_steps + 1)
    zs[0] = z0
    z = z0
    for i in range(n_steps):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        zs[i + 1] = z
    return np.interp(t, np.arange(n_steps + 1) * dt, zs)
