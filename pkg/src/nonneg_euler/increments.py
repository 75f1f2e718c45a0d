"""Increment laws for the nonnegative Euler scheme.

Each law maps a fixed number of uniforms to one draw, which keeps sampling a
pure function of the stream counters.  Finite-support laws also expose their
atoms so moments and discrete generators can be computed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, InfeasibleCorrelationError
from .streams import SeededStream

__all__ = [
    "TwoPointLaw",
    "BivariateTwoPointLaw",
    "LinearMixLaw",
    "GaussianLaw",
    "MomentReport",
    "make_two_point",
    "make_bivariate_two_point",
    "make_linear_mix",
    "correlation_bounds",
    "sample",
    "verify_moments",
]


@dataclass(frozen=True)
class TwoPointLaw:
    """Atoms ``{0, mu + 1/mu}`` with ``P(0) = 1/(1+mu^2)``: mean ``mu``, variance 1."""

    mu: float
    p_zero: float = field(init=False)
    v: float = field(init=False)

    dim = 1
    n_uniforms = 1

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise DomainError(f"two-point law needs a positive finite mean, got {self.mu}")
        object.__setattr__(self, "p_zero", 1.0 / (1.0 + self.mu**2))
        object.__setattr__(self, "v", self.mu + 1.0 / self.mu)

    @property
    def p_v(self) -> float:
        return self.mu**2 / (1.0 + self.mu**2)

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mu])

    @property
    def cov(self) -> np.ndarray:
        return np.eye(1)

    @property
    def support_nonnegative(self) -> tuple[bool, ...]:
        return (True,)

    def atoms(self):
        return np.array([[0.0], [self.v]]), np.array([self.p_zero, self.p_v])

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return np.where(u[..., :1] < self.p_v, self.v, 0.0)


@dataclass(frozen=True)
class GaussianLaw:
    """Independent standard normal coordinates."""

    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dimension must be at least 1")

    @property
    def n_uniforms(self) -> int:
        return self.dim

    @property
    def mean(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def cov(self) -> np.ndarray:
        return np.eye(self.dim)

    @property
    def support_nonnegative(self) -> tuple[bool, ...]:
        return (False,) * self.dim

    def atoms(self):
        return None

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return ndtri(u)


def correlation_bounds(mu1: float, mu2: float) -> tuple[float, float]:
    """Exact range of correlations reachable by a joint law on ``{0,v1} x {0,v2}``.

    The lower end is ``-mu1*mu2`` whenever ``mu1*mu2 <= 1``; above that the
    ``p00 >= 0`` cell binds first and the end is ``-1/(mu1*mu2)``.
    """
    prod = mu1 * mu2
    return -min(prod, 1.0 / prod), min(mu1 / mu2, mu2 / mu1)


@dataclass(frozen=True)
class BivariateTwoPointLaw:
    """Joint two-point law with :class:`TwoPointLaw` marginals and correlation ``rho``."""

    mu1: float
    mu2: float
    rho: float
    p00: float = field(init=False)
    p01: float = field(init=False)
    p10: float = field(init=False)
    p11: float = field(init=False)

    dim = 2
    n_uniforms = 1

    def __post_init__(self):
        for name in ("mu1", "mu2"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value}")
        if -self.rho > self.mu1 * self.mu2:
            raise InfeasibleCorrelationError(
                f"rho={self.rho} violates -rho <= mu1*mu2 = {self.mu1 * self.mu2:.6g}; "
                "no nonnegative increment vector has this correlation"
            )
        lo, hi = correlation_bounds(self.mu1, self.mu2)
        if not (lo - 1e-14 <= self.rho <= hi + 1e-14):
            raise InfeasibleCorrelationError(
                f"rho={self.rho} outside the two-point range [{lo:.6g}, {hi:.6g}]"
            )
        q1, q2 = self.marginal1.p_v, self.marginal2.p_v
        v1, v2 = self.marginal1.v, self.marginal2.v
        p11 = q1 * q2 + self.rho / (v1 * v2)
        cells = np.array([1.0 - q1 - q2 + p11, q2 - p11, q1 - p11, p11])
        # boundary correlations can leave -1e-17 residue in a cell
        cells = np.where(np.abs(cells) < 1e-15, 0.0, cells)
        for name, p in zip(("p00", "p01", "p10", "p11"), cells):
            object.__setattr__(self, name, float(p))

    @property
    def marginal1(self) -> TwoPointLaw:
        return TwoPointLaw(self.mu1)

    @property
    def marginal2(self) -> TwoPointLaw:
        return TwoPointLaw(self.mu2)

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2])

    @property
    def cov(self) -> np.ndarray:
        return np.array([[1.0, self.rho], [self.rho, 1.0]])

    @property
    def support_nonnegative(self) -> tuple[bool, ...]:
        return (True, True)

    def atoms(self):
        v1, v2 = self.marginal1.v, self.marginal2.v
        values = np.array([[0.0, 0.0], [0.0, v2], [v1, 0.0], [v1, v2]])
        return values, np.array([self.p00, self.p01, self.p10, self.p11])

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        values, probs = self.atoms()
        edges = np.cumsum(probs)[:-1]
        return values[np.searchsorted(edges, u[..., 0], side="right")]


@dataclass(frozen=True)
class LinearMixLaw:
    """Pair ``(e1, rho*e1 + sqrt(1-rho^2)*e3)`` from independent unit-variance ``e1, e3``."""

    rho: float
    base1: TwoPointLaw
    base3: TwoPointLaw | GaussianLaw

    dim = 2

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho}")
        if self.base1.dim != 1 or self.base3.dim != 1:
            raise DomainError("linear mix needs scalar base laws")

    @property
    def n_uniforms(self) -> int:
        return 2

    @property
    def _c(self) -> float:
        return math.sqrt(1.0 - self.rho**2)

    @property
    def mean(self) -> np.ndarray:
        m1, m3 = self.base1.mean[0], self.base3.mean[0]
        return np.array([m1, self.rho * m1 + self._c * m3])

    @property
    def cov(self) -> np.ndarray:
        return np.array([[1.0, self.rho], [self.rho, 1.0]])

    @property
    def support_nonnegative(self) -> tuple[bool, ...]:
        return (True, self.rho >= 0 and self.base3.support_nonnegative[0])

    def atoms(self):
        a3 = self.base3.atoms()
        if a3 is None:
            return None
        v1, p1 = self.base1.atoms()
        v3, p3 = a3
        e1 = np.repeat(v1[:, 0], len(p3))
        e3 = np.tile(v3[:, 0], len(p1))
        values = np.column_stack([e1, self.rho * e1 + self._c * e3])
        return values, np.outer(p1, p3).ravel()

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        e1 = self.base1.from_uniforms(u[..., 0:1])[..., 0]
        e3 = self.base3.from_uniforms(u[..., 1:2])[..., 0]
        return np.stack([e1, self.rho * e1 + self._c * e3], axis=-1)


def make_two_point(mu: float) -> TwoPointLaw:
    return TwoPointLaw(mu)


def make_bivariate_two_point(mu1: float, mu2: float, rho: float) -> BivariateTwoPointLaw:
    """Joint law with ``p11 = q1*q2 + rho/(v1*v2)``; other cells fixed by the marginals.

    Raises :class:`InfeasibleCorrelationError` when ``rho`` is not reachable.
    """
    return BivariateTwoPointLaw(mu1, mu2, rho)


def make_linear_mix(rho: float, mu1: float, mu3: float = 1.0, base3=None) -> LinearMixLaw:
    """Correlated pair with a nonnegative first coordinate.

    ``base3`` defaults to ``TwoPointLaw(mu3)``; any unit-variance scalar law works.
    """
    if base3 is None:
        base3 = TwoPointLaw(mu3)
    return LinearMixLaw(rho, TwoPointLaw(mu1), base3)


def sample(law, stream: SeededStream, count: int) -> np.ndarray:
    """``count`` i.i.d. draws; shape ``(count,)`` for scalar laws, else ``(count, dim)``."""
    u = stream.uniforms(count * law.n_uniforms).reshape(count, law.n_uniforms)
    draws = law.from_uniforms(u)
    return draws[:, 0] if law.dim == 1 else draws


@dataclass(frozen=True)
class MomentReport:
    mean: np.ndarray
    cov: np.ndarray
    support_nonnegative: tuple[bool, ...]


def verify_moments(law) -> MomentReport:
    """Exact moments: pmf arithmetic for finite laws, closed form otherwise."""
    atoms = law.atoms()
    if atoms is None:
        return MomentReport(law.mean.copy(), law.cov.copy(), law.support_nonnegative)
    values, probs = atoms
    mean = probs @ values
    centred = values - mean
    cov = (centred * probs[:, None]).T @ centred
    nonneg = tuple(bool(np.all(values[probs > 0, j] >= 0)) for j in range(values.shape[1]))
    return MomentReport(mean, cov, nonneg)
