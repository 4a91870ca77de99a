"""Generator assembly and stationary solve for the joint (Q, Z) chain.

This is the ground truth the rest of the package is scored against:
the chain over states ``(q, z)`` is solved numerically and its
stationary distribution turned into performance metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (
    JointDist,
    Metrics,
    ModelParams,
    NumericalError,
    ValidationError,
    allocation,
    state_arrays,
    state_count,
    state_index,
)

# Largest K solved by a direct sparse factorization; larger lots use
# power iteration on the uniformized chain.
_DIRECT_LIMIT = 200
_RESIDUAL_TOL = 1e-10
_POWER_TOL = 1e-12
_MAX_POWER_ITERS = 2_000_000


@dataclass(frozen=True)
class Generator:
    """Sparse transition-rate matrix in the canonical state ordering."""

    dimension: int
    entries: sp.csr_matrix

    def __post_init__(self):
        if self.entries.shape != (self.dimension, self.dimension):
            raise ValidationError("generator shape does not match its dimension")
        row_sums = np.asarray(self.entries.sum(axis=1)).ravel()
        if np.abs(row_sums).max() > 1e-12:
            raise ValidationError(f"generator rows must sum to 0, worst {np.abs(row_sums).max()}")


def build_generator(params: ModelParams) -> Generator:
    """Assemble the transition-rate matrix of the joint chain.

    From state ``(q, z)``: arrivals go to ``(q+1, z+1)`` at rate ``lam``
    while ``q < K``; departures of uncharged cars go to ``(q-1, z-1)``
    at rate ``nu*z`` and of charged cars to ``(q-1, z)`` at rate
    ``nu*(q-z)``; charging completions go to ``(q, z-1)`` at rate
    ``mu*min(z, M)``.  The diagonal is minus the row sum.
    """
    if params.unbounded:
        raise ValidationError("generator assembly needs a finite K")
    K, lam, mu, nu, M = params.K, params.lam, params.mu, params.nu, params.M
    rows: list[int] = []
    cols: list[int] = []
    rates: list[float] = []

    def add(i: int, j: int, rate: float) -> None:
        if rate > 0.0:
            rows.append(i)
            cols.append(j)
            rates.append(rate)

    for q in range(K + 1):
        for z in range(q + 1):
            i = state_index(q, z)
            if q < K:
                add(i, state_index(q + 1, z + 1), lam)
            if z > 0:
                add(i, state_index(q - 1, z - 1), nu * z)
            if q > z:
                add(i, state_index(q - 1, z), nu * (q - z))
            if z > 0:
                add(i, state_index(q, z - 1), mu * allocation(z, M))

    n = state_count(K)
    off = sp.coo_matrix((rates, (rows, cols)), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return Generator(n, (off + sp.diags(diag)).tocsr())


def _dimension_to_K(n: int) -> int:
    K = int(round((math.sqrt(8 * n + 1) - 3) / 2))
    if state_count(K) != n:
        raise ValidationError(f"dimension {n} is not a triangular state count")
    return K


def _solve_direct(G: sp.csr_matrix) -> np.ndarray:
    # Transpose so columns become balance equations, then swap the last
    # equation for the normalization row.
    n = G.shape[0]
    A = sp.vstack([G.T.tocsr()[:-1], sp.csr_matrix(np.ones((1, n)))]).tocsc()
    b = np.zeros(n)
    b[-1] = 1.0
    return spla.spsolve(A, b)


def _solve_power(G: sp.csr_matrix, tol: float) -> np.ndarray:
    out_rate = -G.diagonal()
    uniform = out_rate.max() + 1.0
    PT = (sp.eye(G.shape[0], format="csr") + G / uniform).T.tocsr()
    # A successive change of c implies a rate-matrix residual below
    # c * uniform, so tighten the stop rule accordingly.
    stop = min(tol, 0.5 * _RESIDUAL_TOL / uniform)
    pi = np.full(G.shape[0], 1.0 / G.shape[0])
    for _ in range(_MAX_POWER_ITERS):
        new = PT @ pi
        new /= new.sum()
        delta = np.abs(new - pi).max()
        pi = new
        if delta <= stop:
            return pi
    raise NumericalError(
        f"power iteration did not converge below {stop} in {_MAX_POWER_ITERS} iterations",
        residual=float(delta * uniform),
    )


def stationary_distribution(gen: Generator, method: str = "auto") -> JointDist:
    """Solve ``pi G = 0`` with ``sum(pi) = 1``.

    ``method`` is ``"direct"`` (sparse factorization, the default up to
    K=200), ``"power"`` (uniformized power iteration), or ``"auto"``.
    The returned distribution satisfies the max-norm residual bound
    ``||pi G||_inf <= 1e-10``; a solve that cannot reach it raises
    :class:`NumericalError` with the residual attached.
    """
    K = _dimension_to_K(gen.dimension)
    G = gen.entries

    # An absorbing empty state (no arrivals) short-circuits to a point mass.
    if G[0].count_nonzero() == 0 or G[0].max() <= 0.0:
        probs = np.zeros(gen.dimension)
        probs[0] = 1.0
        return JointDist(K, probs)

    if method == "auto":
        method = "direct" if K <= _DIRECT_LIMIT else "power"
    if method == "direct":
        pi = _solve_direct(G)
    elif method == "power":
        pi = _solve_power(G, _POWER_TOL)
    else:
        raise ValidationError(f"unknown solve method {method!r}")

    # Tiny negative entries are factorization noise; anything larger is real.
    if pi.min() < -1e-12:
        raise NumericalError(f"solve produced negative mass {pi.min()}", residual=float(-pi.min()))
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(pi @ G).max())
    if residual > _RESIDUAL_TOL:
        raise NumericalError(
            f"stationary residual {residual} exceeds {_RESIDUAL_TOL}", residual=residual
        )
    return JointDist(K, pi)


def metrics(dist: JointDist, params: ModelParams) -> Metrics:
    """Stationary performance measures of a solved distribution."""
    q, z = state_arrays(dist.K)
    p = dist.probs
    e_q = float(p @ q)
    e_z = float(p @ z)
    p_block = float(p[q == dist.K].sum())
    p_success = None if e_q <= 0.0 else 1.0 - e_z / e_q
    return Metrics(e_q=e_q, e_z=e_z, e_c=e_q - e_z, p_success=p_success, p_block=p_block)


def relative_error(exact: float, approx: float) -> float:
    """Absolute relative error of ``approx`` against ``exact``, in percent."""
    if exact <= 0:
        raise ValidationError(f"relative error needs a positive reference, got {exact}")
    return abs(exact - approx) / exact * 100.0


@lru_cache(maxsize=8192)
def exact_metrics(params: ModelParams) -> Metrics:
    """Metrics of the exact stationary solve, cached per parameter set."""
    return metrics(stationary_distribution(build_generator(params)), params)
