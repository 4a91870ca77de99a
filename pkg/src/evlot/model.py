"""Core domain types for the charging-lot model.

A parking lot has ``K`` spaces and a total charging power of ``M``
car-equivalents.  Cars arrive at rate ``lam``, park for an exponential
time with rate ``nu``, and carry an exponential charging requirement
with rate ``mu``.  Power is shared equally among uncharged cars, so
with ``z`` of them present the lot charges at total rate
``mu * min(z, M)``.

Every dense vector in this package is indexed by the lexicographic
state ordering of :func:`enumerate_states`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class ValidationError(ValueError):
    """A parameter or configuration violates its constraints."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its required tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class UndefinedMetricError(ValueError):
    """A requested metric is undefined for the given parameters."""


class Infinite(enum.Enum):
    """Marker for an unlimited number of parking spaces."""

    SPACES = enum.auto()


#: Pass as ``K`` to model a lot that never turns a car away.
INFINITE_SPACES = Infinite.SPACES


@dataclass(frozen=True)
class ModelParams:
    """Full parameterization of the charging lot.

    Attributes:
        lam: Arrival rate of cars.  Zero is allowed only for degenerate
            test cases.
        mu: Charging rate, the reciprocal mean charging requirement.
        nu: Parking rate, the reciprocal mean parking time.
        K: Number of parking spaces, a positive integer, or
            :data:`INFINITE_SPACES` for an unlimited lot.
        M: Power capacity in car-equivalents.  Real-valued, with
            ``0 < M <= K``.
    """

    lam: float
    mu: float
    nu: float
    K: int | Infinite
    M: float

    def __post_init__(self):
        for name in ("lam", "mu", "nu", "M"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
                raise ValidationError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.lam < 0:
            raise ValidationError(f"negative arrival rate lam={self.lam}")
        if self.mu <= 0:
            raise ValidationError(f"charging rate mu must be positive, got {self.mu}")
        if self.nu <= 0:
            raise ValidationError(f"parking rate nu must be positive, got {self.nu}")
        if self.unbounded:
            spaces = math.inf
        else:
            if isinstance(self.K, bool) or not isinstance(self.K, (int, np.integer)):
                raise ValidationError(f"K must be an integer or INFINITE_SPACES, got {self.K!r}")
            if self.K < 1:
                raise ValidationError(f"K must be a positive count, got {self.K}")
            object.__setattr__(self, "K", int(self.K))
            spaces = self.K
        if self.M <= 0:
            raise ValidationError(f"power capacity M must be positive, got {self.M}")
        if self.M > spaces:
            raise ValidationError(f"power capacity M={self.M} exceeds spaces K={spaces}")

    @property
    def unbounded(self) -> bool:
        """Whether the lot has unlimited parking spaces."""
        return isinstance(self.K, Infinite)


def validate(params: ModelParams) -> ModelParams:
    """Check ``params`` against the model invariants.

    Returns a normalized copy (rates coerced to float, ``K`` to int).
    Raises :class:`ValidationError` naming the violated rule otherwise.
    """
    return ModelParams(params.lam, params.mu, params.nu, params.K, params.M)


def allocation(z: float, m: float) -> float:
    """Total charging-rate factor with ``z`` uncharged cars present.

    The lot charges at rate ``mu * allocation(z, M)``: every uncharged
    car gets unit power until the capacity ``m`` binds.

    Args:
        z: Number of uncharged cars, nonnegative.
        m: Power capacity in car-equivalents, positive.

    Returns:
        ``min(z, m)``.
    """
    if z < 0:
        raise ValidationError(f"negative uncharged count z={z}")
    if m <= 0:
        raise ValidationError(f"power capacity must be positive, got {m}")
    return min(z, m)


@dataclass(frozen=True, order=True)
class State:
    """Joint state: ``q`` cars present, ``z`` of them still uncharged."""

    q: int
    z: int

    def __post_init__(self):
        if not 0 <= self.z <= self.q:
            raise ValidationError(f"state needs 0 <= z <= q, got q={self.q}, z={self.z}")


def state_index(q: int, z: int) -> int:
    """Position of state ``(q, z)`` in the lexicographic ordering."""
    return q * (q + 1) // 2 + z


def state_count(K: int) -> int:
    """Number of states ``(q, z)`` with ``0 <= z <= q <= K``."""
    return (K + 1) * (K + 2) // 2


def enumerate_states(K: int | Infinite) -> list[State]:
    """All states ``(q, z)`` with ``0 <= z <= q <= K``, lexicographic.

    The position of ``(q, z)`` in the returned list is
    ``state_index(q, z)``; the length is ``(K+1)(K+2)/2``.
    """
    if isinstance(K, Infinite):
        raise ValidationError("state enumeration needs a finite K")
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)):
        raise ValidationError(f"K must be an integer, got {K!r}")
    if K < 0:
        raise ValidationError(f"K must be nonnegative, got {K}")
    return [State(q, z) for q in range(K + 1) for z in range(q + 1)]


@lru_cache(maxsize=64)
def state_arrays(K: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectors of ``q`` and ``z`` aligned with the state ordering."""
    q = np.repeat(np.arange(K + 1), np.arange(1, K + 2))
    z = np.concatenate([np.arange(n + 1) for n in range(K + 1)])
    q.flags.writeable = False
    z.flags.writeable = False
    return q, z


@dataclass(frozen=True)
class JointDist:
    """Stationary probability vector over the states of a ``K``-space lot.

    ``probs`` is indexed by :func:`state_index`; use :meth:`prob` for
    named access.  Entries are nonnegative and sum to one within 1e-12.
    """

    K: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (state_count(self.K),):
            raise ValidationError(
                f"need {state_count(self.K)} entries for K={self.K}, got shape {probs.shape}"
            )
        if probs.min() < -1e-12:
            raise ValidationError(f"negative probability entry {probs.min()}")
        total = probs.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {total}, not 1")

    def prob(self, q: int, z: int) -> float:
        """Stationary probability of state ``(q, z)``."""
        if not (0 <= z <= q <= self.K):
            raise ValidationError(f"invalid state (q={q}, z={z}) for K={self.K}")
        return float(self.probs[state_index(q, z)])

    def q_marginal(self) -> np.ndarray:
        """Distribution of the total count, summed over ``z``."""
        q, _ = state_arrays(self.K)
        return np.bincount(q, weights=self.probs, minlength=self.K + 1)

    def z_marginal(self) -> np.ndarray:
        """Distribution of the uncharged count, summed over ``q``."""
        _, z = state_arrays(self.K)
        return np.bincount(z, weights=self.probs, minlength=self.K + 1)


@dataclass(frozen=True)
class Metrics:
    """Stationary performance measures of the lot.

    ``p_success`` is the fraction of admitted cars that leave fully
    charged; it is ``None`` when no car is ever present (``e_q == 0``),
    where the fraction is undefined.
    """

    e_q: float
    e_z: float
    e_c: float
    p_success: float | None
    p_block: float

    def __post_init__(self):
        if abs(self.e_c - (self.e_q - self.e_z)) > 1e-9:
            raise ValidationError("charged count must satisfy e_c = e_q - e_z")
        if not -1e-12 <= self.p_block <= 1 + 1e-12:
            raise ValidationError(f"p_block outside [0, 1]: {self.p_block}")
        if self.p_success is not None and not -1e-12 <= self.p_success <= 1 + 1e-12:
            raise ValidationError(f"p_success outside [0, 1]: {self.p_success}")
