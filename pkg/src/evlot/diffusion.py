"""Gaussian process approximations of the charging lot.

Four regimes are covered: the square-root-staffed two-dimensional
reflected process with piecewise drift and its stationarity residual
check, a glued bivariate-normal candidate law for that regime together
with its marginal mismatch, the always-full one-dimensional process
with a piecewise-normal stationary density, and the slow-parking pair
of two-dimensional processes with explicit covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit
from scipy.stats import norm, truncnorm

from .closed_form import expected_occupancy
from .model import ModelParams, UndefinedMetricError, ValidationError


@dataclass(frozen=True)
class DriftPiece:
    """One linear piece ``slope*x + intercept`` active for ``x <= threshold``."""

    threshold: float
    slope: float
    intercept: float


@dataclass(frozen=True)
class Reflection:
    """Barrier on one coordinate whose regulator shifts the listed coordinates.

    An ``upper`` barrier subtracts the overshoot of ``coord`` above
    ``level`` from every coordinate in ``pushes``; a ``lower`` barrier
    adds the shortfall instead.
    """

    coord: int
    level: float
    side: str
    pushes: tuple[int, ...]

    def __post_init__(self):
        if self.side not in ("upper", "lower"):
            raise ValidationError(f"reflection side must be 'upper' or 'lower', got {self.side!r}")
        if self.coord not in self.pushes:
            raise ValidationError("the reflected coordinate must receive its own regulator")


@dataclass(frozen=True)
class OUSpec:
    """Constant-diffusion process with piecewise-linear drift.

    ``drift[i]`` lists contiguous pieces for coordinate ``i`` as a
    function of its own value, ordered by threshold with the last
    threshold infinite.  ``diffusion`` holds per-coordinate noise
    coefficients and ``correlation`` the instantaneous correlation of
    the driving noises (two-dimensional specs only).
    """

    dim: int
    drift: tuple[tuple[DriftPiece, ...], ...]
    diffusion: tuple[float, ...]
    correlation: float = 0.0
    reflection: Reflection | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.drift) != self.dim or len(self.diffusion) != self.dim:
            raise ValidationError("drift and diffusion must have one entry per coordinate")
        for pieces in self.drift:
            thresholds = [p.threshold for p in pieces]
            if thresholds != sorted(thresholds) or thresholds[-1] != math.inf:
                raise ValidationError("drift pieces must ascend and end with an infinite threshold")
        if any(c < 0 for c in self.diffusion):
            raise ValidationError("diffusion coefficients must be nonnegative")
        if not -1.0 <= self.correlation <= 1.0:
            raise ValidationError(f"correlation outside [-1, 1]: {self.correlation}")
        if self.reflection is not None and self.reflection.coord >= self.dim:
            raise ValidationError("reflection coordinate out of range")

    def drift_at(self, x: np.ndarray) -> np.ndarray:
        """Drift vector, vectorized over leading axes of ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for i, pieces in enumerate(self.drift):
            xi = x[..., i]
            conds = [xi <= p.threshold for p in pieces]
            vals = [p.slope * xi + p.intercept for p in pieces]
            out[..., i] = np.select(conds, vals)
        return out

    def noise_cov(self) -> np.ndarray:
        """Instantaneous covariance matrix of the driving noise."""
        s = np.asarray(self.diffusion)
        if self.dim == 1:
            return np.array([[s[0] ** 2]])
        corr = np.array([[1.0, self.correlation], [self.correlation, 1.0]])
        return corr * np.outer(s, s)


@dataclass(frozen=True)
class SdeEnsemble:
    """Sampled paths of an :class:`OUSpec` process.

    ``paths`` has shape ``(n_paths, n_steps + 1, dim)``; ``regulator``
    holds the cumulative pushed amount per path and step and stays zero
    when the reflection never binds.
    """

    paths: np.ndarray
    regulator: np.ndarray
    dt: float
    seed: int


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    # Eigenvalue square root tolerates the semidefinite edge cases
    # (zero noise, perfectly correlated noise) that Cholesky rejects.
    w, v = np.linalg.eigh(cov)
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T


def simulate_ou(
    spec: OUSpec,
    x0,
    dt: float,
    horizon: float,
    n_paths: int,
    seed: int,
) -> SdeEnsemble:
    """Euler-Maruyama paths of the given process.

    Each path draws from its own stream spawned from ``seed``, so the
    ensemble is reproducible and independent of evaluation order.
    Barrier crossings are projected back onto the barrier; the
    overshoot accumulates in the regulator and is applied to every
    coordinate the reflection pushes.
    """
    if dt <= 0 or horizon <= 0:
        raise ValidationError("dt and horizon must be positive")
    if n_paths < 1:
        raise ValidationError("need at least one path")
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (spec.dim,)).copy()
    refl = spec.reflection
    if refl is not None:
        if refl.side == "upper" and x0[refl.coord] > refl.level:
            raise ValidationError(f"x0 violates the upper barrier at {refl.level}")
        if refl.side == "lower" and x0[refl.coord] < refl.level:
            raise ValidationError(f"x0 violates the lower barrier at {refl.level}")

    n_steps = int(round(horizon / dt))
    scale = _psd_sqrt(spec.noise_cov()) * math.sqrt(dt)
    streams = np.random.SeedSequence(seed).spawn(n_paths)
    shocks = np.empty((n_paths, n_steps, spec.dim))
    for p, stream in enumerate(streams):
        shocks[p] = np.random.default_rng(stream).standard_normal((n_steps, spec.dim))

    paths = np.empty((n_paths, n_steps + 1, spec.dim))
    regulator = np.zeros((n_paths, n_steps + 1))
    x = np.tile(x0, (n_paths, 1))
    paths[:, 0] = x
    for t in range(n_steps):
        x = x + spec.drift_at(x) * dt + shocks[:, t] @ scale.T
        if refl is not None:
            if refl.side == "upper":
                push = np.maximum(x[:, refl.coord] - refl.level, 0.0)
                sign = -1.0
            else:
                push = np.maximum(refl.level - x[:, refl.coord], 0.0)
                sign = 1.0
            for c in refl.pushes:
                x[:, c] += sign * push
            regulator[:, t + 1] = regulator[:, t] + push
        paths[:, t + 1] = x
    return SdeEnsemble(paths=paths, regulator=regulator, dt=dt, seed=seed)


def hw_spec(nu: float, mu: float, beta: float, kappa: float) -> OUSpec:
    """Two-dimensional limit process around square-root staffing.

    Coordinate 0 tracks the centered uncharged count with drift
    ``-mu*min(x, beta) - nu*x``; coordinate 1 tracks the centered total
    count with drift ``-nu*x``, capped at ``kappa`` by a shared
    regulator that pushes both coordinates down.
    """
    if nu <= 0 or mu <= 0:
        raise ValidationError("rates nu and mu must be positive")
    b1 = (
        DriftPiece(beta, -(nu + mu), 0.0),
        DriftPiece(math.inf, -nu, -mu * beta),
    )
    b2 = (DriftPiece(math.inf, -nu, 0.0),)
    coeff = math.sqrt(2.0 * (nu + mu))
    return OUSpec(
        dim=2,
        drift=(b1, b2),
        diffusion=(coeff, coeff),
        correlation=(2.0 * nu + mu) / (2.0 * (nu + mu)),
        reflection=Reflection(coord=1, level=kappa, side="upper", pushes=(0, 1)),
    )


def overloaded_spec(nu: float, mu: float, K: float, beta: float) -> OUSpec:
    """One-dimensional limit of the uncharged count in a full lot.

    Drift ``-(nu+mu)*x`` below ``beta`` and ``-nu*x - mu*beta`` above
    (continuous at the junction), diffusion ``sqrt(2*nu*mu*K/(nu+mu))``,
    no reflection.
    """
    if nu <= 0 or mu <= 0 or K <= 0:
        raise ValidationError("nu, mu and K must be positive")
    pieces = (
        DriftPiece(beta, -(nu + mu), 0.0),
        DriftPiece(math.inf, -nu, -mu * beta),
    )
    return OUSpec(
        dim=1,
        drift=(pieces,),
        diffusion=(math.sqrt(2.0 * nu * mu * K / (nu + mu)),),
    )


def heavy_traffic_spec(mu: float, M: float, c: float) -> OUSpec:
    """Two-dimensional limit for slow parking near critical load.

    Both coordinates drift at ``-(c*mu*M + x)`` with diffusion
    ``sqrt(2*mu*M)`` and noise correlation 1/2; coordinate 0 (the
    uncharged count) is kept nonnegative by a lower barrier whose
    regulator pushes only that coordinate.
    """
    if mu <= 0 or M <= 0:
        raise ValidationError("mu and M must be positive")
    piece = (DriftPiece(math.inf, -1.0, -c * mu * M),)
    coeff = math.sqrt(2.0 * mu * M)
    return OUSpec(
        dim=2,
        drift=(piece, piece),
        diffusion=(coeff, coeff),
        correlation=0.5,
        reflection=Reflection(coord=0, level=0.0, side="lower", pushes=(0,)),
    )


def smallnu_spec(lam: float, mu: float, M: float) -> OUSpec:
    """Two-dimensional limit for slow parking under overload.

    Both coordinates relax at unit rate; the four independent driving
    noises combine to per-coordinate coefficient ``sqrt(2*lam)`` with
    correlation ``(2*lam - mu*M)/(2*lam)``.  Requires ``lam > mu*M``.
    """
    if lam <= mu * M:
        raise ValidationError("the overloaded slow-parking limit needs lam > mu*M")
    piece = (DriftPiece(math.inf, -1.0, 0.0),)
    coeff = math.sqrt(2.0 * lam)
    return OUSpec(
        dim=2,
        drift=(piece, piece),
        diffusion=(coeff, coeff),
        correlation=(2.0 * lam - mu * M) / (2.0 * lam),
    )


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function with explicit derivatives, vectorized over samples."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


def monomial_test_functions() -> tuple[TestFunction, ...]:
    """The five quadratic monomials used for stationarity checks."""

    def make(name, value, grad, hess):
        return TestFunction(name=name, value=value, grad=grad, hess=hess)

    zeros = lambda x: np.zeros(x.shape[:-1])
    ones = lambda x: np.ones(x.shape[:-1])

    def const_hess(h):
        return lambda x: np.broadcast_to(np.asarray(h, float), x.shape[:-1] + (2, 2))

    return (
        make(
            "x1",
            lambda x: x[..., 0],
            lambda x: np.stack([ones(x), zeros(x)], axis=-1),
            const_hess([[0, 0], [0, 0]]),
        ),
        make(
            "x2",
            lambda x: x[..., 1],
            lambda x: np.stack([zeros(x), ones(x)], axis=-1),
            const_hess([[0, 0], [0, 0]]),
        ),
        make(
            "x1^2",
            lambda x: x[..., 0] ** 2,
            lambda x: np.stack([2 * x[..., 0], zeros(x)], axis=-1),
            const_hess([[2, 0], [0, 0]]),
        ),
        make(
            "x2^2",
            lambda x: x[..., 1] ** 2,
            lambda x: np.stack([zeros(x), 2 * x[..., 1]], axis=-1),
            const_hess([[0, 0], [0, 2]]),
        ),
        make(
            "x1*x2",
            lambda x: x[..., 0] * x[..., 1],
            lambda x: np.stack([x[..., 1], x[..., 0]], axis=-1),
            const_hess([[0, 1], [1, 0]]),
        ),
    )


def bar_residual(
    ensemble: SdeEnsemble,
    spec: OUSpec,
    test_fn: TestFunction,
    burn_in: float = 0.0,
) -> tuple[float, float]:
    """Stationarity residual of the ensemble for one test function.

    Works in the coordinates ``(x1, x2) = (uncharged, free spaces)``,
    where the barrier becomes a lower one at zero.  The residual is the
    time average of the generator applied to ``test_fn`` plus the
    boundary term ``(df/dx2 - df/dx1)`` weighted by regulator
    increments; for a stationary ensemble it vanishes.  Returns the
    estimate and its standard error across paths.
    """
    refl = spec.reflection
    if spec.dim != 2 or refl is None or refl.side != "upper" or refl.coord != 1:
        raise ValidationError("the residual check needs the two-dimensional capped spec")
    kappa = refl.level
    nu = -spec.drift[1][0].slope
    beta = spec.drift[0][0].threshold
    mu = -spec.drift[0][0].slope - nu
    if nu <= 0 or mu <= 0:
        raise ValidationError("could not read positive rates off the drift pieces")

    n_steps = ensemble.paths.shape[1] - 1
    skip = int(round(burn_in / ensemble.dt))
    if skip >= n_steps:
        raise ValidationError("burn-in consumes the whole horizon")

    # Flip the capped coordinate into the count of free spaces.
    x1 = ensemble.paths[:, skip:-1, 0]
    x2 = kappa - ensemble.paths[:, skip:-1, 1]
    x = np.stack([x1, x2], axis=-1)
    grad = test_fn.grad(x)
    hess = test_fn.hess(x)
    b1 = -mu * np.minimum(x1, beta) - nu * x1
    gen = (
        b1 * grad[..., 0]
        + nu * (kappa - x2) * grad[..., 1]
        + (nu + mu) * (hess[..., 0, 0] + hess[..., 1, 1])
        - (2 * nu + mu) * hess[..., 0, 1]
    )

    # Boundary term: regulator increments weight the post-push states,
    # which sit exactly on the barrier.
    increments = np.diff(ensemble.regulator[:, skip:], axis=1)
    xb1 = ensemble.paths[:, skip + 1 :, 0]
    xb2 = kappa - ensemble.paths[:, skip + 1 :, 1]
    xb = np.stack([xb1, xb2], axis=-1)
    gradb = test_fn.grad(xb)
    boundary = (gradb[..., 1] - gradb[..., 0]) * increments

    span = (n_steps - skip) * ensemble.dt
    per_path = gen.mean(axis=1) + boundary.sum(axis=1) / span
    estimate = float(per_path.mean())
    n_paths = per_path.size
    stderr = float(per_path.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.inf
    return estimate, stderr


@dataclass(frozen=True)
class PiInfinityDensity:
    """Glued bivariate-normal candidate law for the uncapped lot.

    The piece for ``x1 <= beta`` is the stationary normal of the fully
    served drift regime, the piece above of the power-capped regime;
    ``c1`` and ``c2`` normalize the glued mixture to unit mass.  The
    law is exact in one dimension but provably misses the known normal
    marginal of the second coordinate, which :meth:`marginal_gap`
    quantifies.
    """

    nu: float
    mu: float
    beta: float
    c1: float
    c2: float

    @property
    def _cov_minus(self) -> np.ndarray:
        r = (self.nu + self.mu) / self.nu
        return np.array([[1.0, 1.0], [1.0, r]])

    @property
    def _cov_plus(self) -> np.ndarray:
        r = (self.nu + self.mu) / self.nu
        s = (2.0 * self.nu + self.mu) / (2.0 * self.nu)
        return np.array([[r, s], [s, r]])

    @property
    def _mean_plus(self) -> np.ndarray:
        return np.array([-self.mu * self.beta / self.nu, 0.0])

    def pdf(self, x1, x2) -> np.ndarray:
        """Joint density, vectorized over broadcastable inputs."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        left = self.c1 * _binormal_pdf(x1, x2, np.zeros(2), self._cov_minus)
        right = self.c2 * _binormal_pdf(x1, x2, self._mean_plus, self._cov_plus)
        return np.where(x1 <= self.beta, left, right)

    def marginal_x2(self, x2) -> np.ndarray:
        """Density of the second coordinate, by conditional-normal reduction."""
        x2 = np.asarray(x2, dtype=float)
        total = np.zeros_like(x2)
        for weight, mean, cov, below in (
            (self.c1, np.zeros(2), self._cov_minus, True),
            (self.c2, self._mean_plus, self._cov_plus, False),
        ):
            sd2 = math.sqrt(cov[1, 1])
            cond_mean = mean[0] + cov[0, 1] / cov[1, 1] * (x2 - mean[1])
            cond_sd = math.sqrt(cov[0, 0] - cov[0, 1] ** 2 / cov[1, 1])
            mass = norm.cdf((self.beta - cond_mean) / cond_sd)
            if not below:
                mass = 1.0 - mass
            total += weight * norm.pdf(x2, loc=mean[1], scale=sd2) * mass
        return total

    def reference_marginal(self, x2) -> np.ndarray:
        """The known normal law of the second coordinate."""
        return norm.pdf(np.asarray(x2, dtype=float), scale=math.sqrt((self.nu + self.mu) / self.nu))

    def marginal_gap(self, x2_grid) -> float:
        """Largest pointwise gap between the two marginals on the grid."""
        grid = np.asarray(x2_grid, dtype=float)
        return float(np.abs(self.marginal_x2(grid) - self.reference_marginal(grid)).max())


def _binormal_pdf(x1, x2, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
    d1 = x1 - mean[0]
    d2 = x2 - mean[1]
    quad = (cov[1, 1] * d1**2 - 2.0 * cov[0, 1] * d1 * d2 + cov[0, 0] * d2**2) / det
    return np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))


def pi_infinity_density(nu: float, mu: float, beta: float) -> PiInfinityDensity:
    """Build the glued bivariate-normal law for the uncapped lot.

    The gluing constants come from matching the one-dimensional masses
    of the two pieces on their own sides of ``beta``.
    """
    if nu <= 0 or mu <= 0:
        raise ValidationError("rates nu and mu must be positive")
    stretch = math.sqrt((nu + mu) / nu)
    bulge = math.exp(mu * beta**2 / (2.0 * nu))
    c1 = 1.0 / (norm.cdf(beta) + stretch * bulge * (1.0 - norm.cdf(stretch * beta)))
    c2 = c1 * stretch * bulge
    return PiInfinityDensity(nu=nu, mu=mu, beta=beta, c1=c1, c2=c2)


@dataclass(frozen=True)
class NormalPiece:
    """One truncated-normal component of a glued density."""

    mean: float
    sd: float
    weight: float


@dataclass(frozen=True)
class PiecewiseNormalDensity:
    """Two one-sided truncated normals glued at a breakpoint.

    The left piece lives on ``x <= breakpoint`` and the right piece
    above it; the weights sum to one and make the density continuous
    at the junction.
    """

    breakpoint: float
    left: NormalPiece
    right: NormalPiece

    def __post_init__(self):
        if abs(self.left.weight + self.right.weight - 1.0) > 1e-12:
            raise ValidationError("piece weights must sum to 1")

    def _frozen(self):
        b = self.breakpoint
        left = truncnorm(-np.inf, (b - self.left.mean) / self.left.sd, loc=self.left.mean, scale=self.left.sd)
        right = truncnorm((b - self.right.mean) / self.right.sd, np.inf, loc=self.right.mean, scale=self.right.sd)
        return left, right

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        left, right = self._frozen()
        return np.where(
            x <= self.breakpoint,
            self.left.weight * left.pdf(x),
            self.right.weight * right.pdf(x),
        )

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        left, right = self._frozen()
        return np.where(
            x <= self.breakpoint,
            self.left.weight * left.cdf(x),
            self.left.weight + self.right.weight * right.cdf(x),
        )

    def mean(self) -> float:
        left, right = self._frozen()
        return float(self.left.weight * left.mean() + self.right.weight * right.mean())


_WEIGHT_RULES = ("flux", "variance_ratio")


def overloaded_density(
    nu: float,
    mu: float,
    K: float,
    beta: float,
    weight_rule: str = "flux",
) -> PiecewiseNormalDensity:
    """Stationary density of the full-lot limit process.

    Each drift regime contributes its own stationary normal, truncated
    to its side of ``beta``: the fully served regime is centered at 0
    with variance ``nu*mu*K/(nu+mu)^2`` and the power-capped regime at
    ``-mu*beta/nu`` with variance ``mu*K/(nu+mu)``.

    ``weight_rule`` fixes the piece weights at the junction.  ``"flux"``
    makes the glued density continuous at ``beta``: the drift is
    continuous and the diffusion coefficient constant, so the zero-flux
    stationary density has no jump.  ``"variance_ratio"`` matches the
    variance-weighted values ``d*sd^2*pdf(beta)`` instead, damping the
    left piece by ``nu/(nu+mu)``; it is the junction rule the busy-lot
    mean estimate is calibrated with.
    """
    if nu <= 0 or mu <= 0 or K <= 0:
        raise ValidationError("nu, mu and K must be positive")
    if weight_rule not in _WEIGHT_RULES:
        raise ValidationError(f"weight_rule must be one of {_WEIGHT_RULES}, got {weight_rule!r}")
    sd1 = math.sqrt(nu * mu * K) / (nu + mu)
    sd2 = math.sqrt(mu * K / (nu + mu))
    mean2 = -mu * beta / nu
    left = truncnorm(-np.inf, (beta - 0.0) / sd1, loc=0.0, scale=sd1)
    right = truncnorm((beta - mean2) / sd2, np.inf, loc=mean2, scale=sd2)
    # The junction rule fixes the weight ratio d2/d1.
    log_ratio = left.logpdf(beta) - right.logpdf(beta)
    if weight_rule == "variance_ratio":
        log_ratio += 2.0 * (math.log(sd1) - math.log(sd2))
    d1 = float(expit(-log_ratio))
    return PiecewiseNormalDensity(
        breakpoint=beta,
        left=NormalPiece(mean=0.0, sd=sd1, weight=d1),
        right=NormalPiece(mean=mean2, sd=sd2, weight=1.0 - d1),
    )


def overloaded_mean_approx(params: ModelParams, modified: bool = True) -> float:
    """Gaussian estimate of the stationary uncharged count in a busy lot.

    Centers at the balanced point ``nu*K/(nu+mu)`` and corrects by the
    mean of the glued normal law at the square-root scale, with the
    junction at ``beta = (M - nu*K/(nu+mu))/sqrt(K)`` and the
    variance-ratio junction rule.  With ``modified=True`` the capacity
    is replaced by the expected occupancy throughout.
    """
    if params.unbounded:
        raise ValidationError("this approximation needs a finite K")
    if params.lam <= 0 and modified:
        raise UndefinedMetricError("the expected occupancy needs a positive arrival rate")
    k_eff = expected_occupancy(params) if modified else float(params.K)
    if k_eff <= 0:
        raise UndefinedMetricError("effective capacity is zero; nothing to approximate")
    balanced = params.nu * k_eff / (params.nu + params.mu)
    beta = (params.M - balanced) / math.sqrt(k_eff)
    shape = overloaded_density(params.nu, params.mu, 1.0, beta, weight_rule="variance_ratio")
    return math.sqrt(k_eff) * shape.mean() + balanced


def smallnu_approx(params: ModelParams) -> tuple[float, float, np.ndarray]:
    """Mean and covariance estimates for slow parking under overload.

    Requires ``lam > mu*M``.  Returns ``(e_z, e_q, cov)`` where the
    means are ``(lam - mu*M)/nu`` and ``lam/nu`` and ``cov`` is the
    stationary covariance of the (uncharged, total) pair.
    """
    lam, mu, nu, M = params.lam, params.mu, params.nu, params.M
    if lam <= mu * M:
        raise ValidationError("the slow-parking approximation needs lam > mu*M")
    e_z = (lam - mu * M) / nu
    e_q = lam / nu
    off_diag = (2.0 * lam - mu * M) / (2.0 * nu)
    cov = np.array([[lam / nu, off_diag], [off_diag, lam / nu]])
    return e_z, e_q, cov
