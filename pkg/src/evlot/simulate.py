"""Event-driven Monte Carlo simulation of the charging lot.

Exact competing-clocks sampling of the joint chain and of the full-lot
birth-death chain, plus the scaled-family experiments that check the
flow and Gaussian limits empirically.  The event loops are compiled
with numba; replications run on independent, documented seed streams
so results are bit-reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import diffusion, fluid
from .model import ModelParams, ValidationError

_Z_CI = 1.96  # two-sided 95% normal quantile


class SimMode(enum.Enum):
    """Which stochastic model the simulator runs."""

    FULL_MODEL = "full_model"
    FULL_LOT = "full_lot"


class ScalingRegime(enum.Enum):
    """Parameter-scaling families for the convergence experiments."""

    FLUID = "fluid"
    HW = "hw"
    OVERLOADED = "overloaded"
    SMALLNU = "smallnu"


@dataclass(frozen=True)
class SimConfig:
    """Run lengths, replication count and master seed for a simulation."""

    horizon: float
    burn_in: float = 0.0
    n_reps: int = 1
    seed: int = 0
    mode: SimMode = SimMode.FULL_MODEL

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.burn_in < self.horizon:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < horizon")
        if self.n_reps < 1:
            raise ValidationError(f"need at least one replication, got {self.n_reps}")
        if not isinstance(self.mode, SimMode):
            raise ValidationError(f"mode must be a SimMode, got {self.mode!r}")


@dataclass(frozen=True)
class SimEstimate:
    """Point estimates with 95% replication half-widths.

    ``p_success`` is ``None`` when no replication saw a departure;
    ``p_block`` is ``None`` for full-lot runs, where blocking has no
    meaning.  ``half_widths`` is keyed by metric name and omits
    undefined metrics.
    """

    e_q: float
    e_z: float
    p_success: float | None
    p_block: float | None
    half_widths: dict[str, float]
    reps_used: int

    def __post_init__(self):
        if any(h < 0 for h in self.half_widths.values()):
            raise ValidationError("half-widths must be nonnegative")


def rep_seeds(master: int, n_reps: int) -> np.ndarray:
    """Per-replication seeds: words of the stream spawned from ``master``.

    Replication ``i`` seeds its generator with the ``i``-th word, so any
    subset of replications can be reproduced independently.
    """
    return np.random.SeedSequence(master).generate_state(n_reps, np.uint32)


@njit(cache=True)
def _model_rep(lam, mu, nu, K, M, horizon, burn_in, seed):
    """One replication of the joint chain; returns time averages and counts."""
    np.random.seed(seed)
    q = 0
    z = 0
    t = 0.0
    area_q = 0.0
    area_z = 0.0
    area_q2 = 0.0
    area_z2 = 0.0
    area_block = 0.0
    n_dep = 0
    n_full = 0
    while True:
        r_arrival = lam if q < K else 0.0
        r_depart = nu * q
        r_charge = mu * min(z, M)
        total = r_arrival + r_depart + r_charge
        if total <= 0.0:
            t_next = horizon
        else:
            t_next = t + np.random.exponential(1.0 / total)
        lo = t if t > burn_in else burn_in
        hi = t_next if t_next < horizon else horizon
        if hi > lo:
            width = hi - lo
            area_q += q * width
            area_z += z * width
            area_q2 += q * q * width
            area_z2 += z * z * width
            if q == K:
                area_block += width
        if t_next >= horizon:
            break
        t = t_next
        u = np.random.random() * total
        if u < r_arrival:
            q += 1
            z += 1
        elif u < r_arrival + r_depart:
            uncharged = np.random.random() * q < z
            if uncharged:
                z -= 1
            q -= 1
            if t >= burn_in:
                n_dep += 1
                if not uncharged:
                    n_full += 1
        else:
            z -= 1
    span = horizon - burn_in
    return (
        area_q / span,
        area_z / span,
        area_q2 / span,
        area_z2 / span,
        area_block / span,
        n_dep,
        n_full,
    )


@njit(cache=True)
def _full_lot_rep(nu, mu, K, M, horizon, burn_in, seed):
    """One replication of the full-lot birth-death chain, started all uncharged."""
    np.random.seed(seed)
    z = int(K)
    t = 0.0
    area_z = 0.0
    area_z2 = 0.0
    while True:
        r_birth = nu * (K - z)
        r_death = mu * min(z, M)
        total = r_birth + r_death
        if total <= 0.0:
            t_next = horizon
        else:
            t_next = t + np.random.exponential(1.0 / total)
        lo = t if t > burn_in else burn_in
        hi = t_next if t_next < horizon else horizon
        if hi > lo:
            width = hi - lo
            area_z += z * width
            area_z2 += z * z * width
        if t_next >= horizon:
            break
        t = t_next
        if np.random.random() * total < r_birth:
            z += 1
        else:
            z -= 1
    span = horizon - burn_in
    return area_z / span, area_z2 / span


@njit(cache=True)
def _transient_rep(lam, mu, nu, K, M, t_grid, seed):
    """One path of the joint chain from empty, sampling z at the grid times."""
    np.random.seed(seed)
    q = 0
    z = 0
    t = 0.0
    out = np.empty(t_grid.shape[0])
    next_idx = 0
    horizon = t_grid[-1]
    while next_idx < t_grid.shape[0]:
        r_arrival = lam if q < K else 0.0
        r_depart = nu * q
        r_charge = mu * min(z, M)
        total = r_arrival + r_depart + r_charge
        if total <= 0.0:
            t_next = horizon + 1.0
        else:
            t_next = t + np.random.exponential(1.0 / total)
        while next_idx < t_grid.shape[0] and t_grid[next_idx] < t_next:
            out[next_idx] = z
            next_idx += 1
        if next_idx >= t_grid.shape[0]:
            break
        t = t_next
        u = np.random.random() * total
        if u < r_arrival:
            q += 1
            z += 1
        elif u < r_arrival + r_depart:
            if np.random.random() * q < z:
                z -= 1
            q -= 1
        else:
            z -= 1
    return out


def _mean_hw(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(_Z_CI * values.std(ddof=1) / math.sqrt(values.size))


def _model_rows(params: ModelParams, config: SimConfig, seed_offset: int = 0) -> np.ndarray:
    seeds = rep_seeds(config.seed + seed_offset, config.n_reps)
    return np.array(
        [
            _model_rep(
                params.lam,
                params.mu,
                params.nu,
                params.K,
                float(params.M),
                config.horizon,
                config.burn_in,
                s,
            )
            for s in seeds
        ]
    )


def simulate_model(params: ModelParams, config: SimConfig) -> SimEstimate:
    """Replicated event simulation of the joint chain.

    Competing exponential clocks: arrivals at ``lam`` while space
    remains, departures at ``nu*q`` with the leaving car uncharged with
    probability ``z/q``, completions at ``mu*min(z, M)``.  Success is
    the fraction of admitted departures that left fully charged, and
    blocking is the time fraction the lot spends full.
    """
    if params.unbounded:
        raise ValidationError("simulation needs a finite K")
    if config.mode is not SimMode.FULL_MODEL:
        raise ValidationError("config.mode must be FULL_MODEL for simulate_model")
    rows = _model_rows(params, config)
    e_q, hw_q = _mean_hw(rows[:, 0])
    e_z, hw_z = _mean_hw(rows[:, 1])
    p_block, hw_b = _mean_hw(rows[:, 4])
    half_widths = {"e_q": hw_q, "e_z": hw_z, "p_block": hw_b}
    departures = rows[:, 5]
    with_deps = departures > 0
    if with_deps.any():
        success = rows[with_deps, 6] / departures[with_deps]
        p_success, hw_s = _mean_hw(success)
        half_widths["p_success"] = hw_s
    else:
        p_success = None
    return SimEstimate(
        e_q=e_q,
        e_z=e_z,
        p_success=p_success,
        p_block=p_block,
        half_widths=half_widths,
        reps_used=config.n_reps,
    )


def simulate_full_lot(params: ModelParams, config: SimConfig) -> SimEstimate:
    """Replicated event simulation of the always-full lot.

    Births (replacements of departing cars) at ``nu*(K - z)``, deaths
    (completed charges) at ``mu*min(z, M)``.  Estimates the mean
    uncharged count; the total count is pinned at ``K``.
    """
    if params.unbounded:
        raise ValidationError("simulation needs a finite K")
    seeds = rep_seeds(config.seed, config.n_reps)
    rows = np.array(
        [
            _full_lot_rep(
                params.nu, params.mu, params.K, float(params.M), config.horizon, config.burn_in, s
            )
            for s in seeds
        ]
    )
    e_z, hw_z = _mean_hw(rows[:, 0])
    return SimEstimate(
        e_q=float(params.K),
        e_z=e_z,
        p_success=None,
        p_block=None,
        half_widths={"e_z": hw_z},
        reps_used=config.n_reps,
    )


def convergence_experiment(
    base_params: ModelParams,
    scaling: ScalingRegime,
    n_list,
    config: SimConfig,
) -> list[dict]:
    """Distance between scaled simulations and their analytic limits.

    For each ``n`` the parameters are scaled per ``scaling`` and the
    simulated statistic is compared with its limit:

    * ``FLUID``: rates and capacities multiplied by ``n``; mean path of
      ``Z/n`` from empty versus the flow trajectory, sup over a
      10-point time grid.
    * ``HW``: balanced many-server scaling read off the base
      parameters; variance of the centered, root-scaled total count
      versus ``(nu+mu)/nu`` (spaces kept ample so the cap stays idle).
    * ``OVERLOADED``: full-lot capacity multiplied by ``n`` with the
      charger excess held at root scale; centered, root-scaled mean
      uncharged count versus the glued-normal mean.
    * ``SMALLNU``: parking rate divided by ``n``; variance of the
      uncharged count over ``lam/nu`` versus 1.

    Returns one row per ``n`` with the statistic, its limit and their
    absolute distance.
    """
    if not isinstance(scaling, ScalingRegime):
        raise ValidationError(f"unknown scaling {scaling!r}")
    n_list = [int(n) for n in n_list]
    if any(n < 1 for n in n_list) or sorted(n_list) != n_list:
        raise ValidationError("n_list must be increasing positive integers")
    if base_params.unbounded:
        raise ValidationError("convergence experiments need a finite base K")

    rows = []
    for n in n_list:
        if scaling is ScalingRegime.FLUID:
            statistic, limit = _fluid_distance(base_params, n, config)
        elif scaling is ScalingRegime.HW:
            statistic, limit = _hw_statistic(base_params, n, config)
        elif scaling is ScalingRegime.OVERLOADED:
            statistic, limit = _overloaded_statistic(base_params, n, config)
        else:
            statistic, limit = _smallnu_statistic(base_params, n, config)
        rows.append(
            {"n": n, "statistic": statistic, "limit": limit, "error": abs(statistic - limit)}
        )
    return rows


def _fluid_distance(base: ModelParams, n: int, config: SimConfig) -> tuple[float, float]:
    t_grid = np.linspace(0.0, 5.0 / min(base.nu, base.mu), 10)
    reference = fluid.fluid_trajectory(base, 0.0, t_grid)
    seeds = rep_seeds(config.seed + n, config.n_reps)
    acc = np.zeros_like(t_grid)
    for s in seeds:
        acc += _transient_rep(
            n * base.lam, base.mu, base.nu, n * base.K, float(n * base.M), t_grid, s
        )
    scaled = acc / (config.n_reps * n)
    # Reported so that statistic - limit is the sup-norm path error.
    return float(np.abs(scaled - reference).max()), 0.0


def _hw_statistic(base: ModelParams, n: int, config: SimConfig) -> tuple[float, float]:
    nu, mu = base.nu, base.mu
    n0 = base.lam / (nu + mu)
    if n0 <= 0:
        raise ValidationError("the balanced scaling needs lam > 0")
    beta = (base.M - n0) / math.sqrt(n0)
    lam_n = n * (nu + mu)
    center = lam_n / nu
    # Spaces well beyond the occupancy spread keep the cap idle, so the
    # limit variance is the uncapped one.
    K_n = int(math.ceil(center + 12.0 * math.sqrt(center)))
    M_n = min(max(n + beta * math.sqrt(n), 1e-9), K_n)
    scaled = ModelParams(lam=lam_n, mu=mu, nu=nu, K=K_n, M=M_n)
    rows = _model_rows(scaled, config, seed_offset=n)
    var_q = rows[:, 2] - rows[:, 0] ** 2
    statistic = float(var_q.mean() / n)
    return statistic, (nu + mu) / nu


def _overloaded_statistic(base: ModelParams, n: int, config: SimConfig) -> tuple[float, float]:
    nu, mu = base.nu, base.mu
    balanced_frac = nu * base.K / (nu + mu)
    beta = (base.M - balanced_frac) / math.sqrt(base.K)
    K_n = base.K * n
    M_n = nu * K_n / (nu + mu) + beta * math.sqrt(n)
    if not 0 < M_n <= K_n:
        raise ValidationError("scaled charger count left (0, K]; adjust base M")
    center = nu * K_n / (nu + mu)
    seeds = rep_seeds(config.seed + n, config.n_reps)
    rows = np.array(
        [
            _full_lot_rep(nu, mu, K_n, M_n, config.horizon, config.burn_in, s)
            for s in seeds
        ]
    )
    statistic = float((rows[:, 0].mean() - center) / math.sqrt(n))
    limit = diffusion.overloaded_density(nu, mu, float(base.K), beta).mean()
    return statistic, float(limit)


def _smallnu_statistic(base: ModelParams, n: int, config: SimConfig) -> tuple[float, float]:
    if base.lam <= base.mu * base.M:
        raise ValidationError("the slow-parking regime needs lam > mu*M")
    nu_n = base.nu / n
    K_n = int(math.ceil(1.5 * base.lam / nu_n))
    scaled = ModelParams(lam=base.lam, mu=base.mu, nu=nu_n, K=K_n, M=base.M)
    rows = _model_rows(scaled, config, seed_offset=n)
    var_z = rows[:, 3] - rows[:, 1] ** 2
    statistic = float(var_z.mean() * nu_n / base.lam)
    return statistic, 1.0
