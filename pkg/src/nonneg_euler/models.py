"""Diffusion models and their nonnegativity windows.

A model supplies the drift ``b(t, x)``, a diagonal factor ``sigma~(t, x)`` and a
constant matrix ``Sigma`` with ``a = sigma~ Sigma sigma~^T``.  States live in
``E = R_+^m x R^(d-m)``.  Coefficients are vectorised over leading axes of
``x`` (shape ``(..., d)``); ``t`` is a scalar.

Feasibility means that ``x + b/n - sigma~ mu / sqrt(n)`` stays in ``E`` for
every state and every ``n >= n0``, so a nonnegative increment keeps the chain
inside ``E``.  Each model encodes its own sufficient conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InfeasibleError

__all__ = [
    "StateSpace",
    "FeasibilityWindow",
    "Feasibility",
    "ModelSpec",
    "CIR",
    "GBM",
    "CEV",
    "Affine",
    "TwoFactorCIR",
    "GarchSV",
    "Heston",
    "eval_coeffs",
    "feasibility_window",
    "min_n0",
    "infimum_margin",
    "check_feasible",
    "grid_infimum",
    "cir_mean_at",
]

_MAX_N = 2**40


@dataclass(frozen=True)
class StateSpace:
    d: int
    m: int

    def __post_init__(self):
        if not 0 <= self.m <= self.d:
            raise DomainError(f"need 0 <= m <= d, got m={self.m}, d={self.d}")

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x[..., : self.m] >= 0) and np.all(np.isfinite(x)))


@dataclass(frozen=True)
class FeasibilityWindow:
    """Admissible ``(n0, mu)``: any ``n >= n0`` and ``0 < mu_i <= mu_max_i``.

    With ``strict`` the upper bound itself is excluded.  Coordinates without a
    constraint carry ``inf``.
    """

    n0: int
    mu_max: tuple[float, ...]
    strict: bool = False

    def admits(self, mu) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        bound = np.asarray(self.mu_max[: len(mu)])
        inside = mu < bound if self.strict else mu <= bound
        return bool(np.all(mu > 0) and np.all(inside | np.isinf(bound)))


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _fail(reason: str) -> Feasibility:
    return Feasibility(False, reason)


_OK = Feasibility(True)


def _smallest_int_above(value: float) -> int:
    return max(1, math.floor(value) + 1)


def _first_true(pred: Callable[[int], bool], start: int) -> int:
    """Smallest ``n >= start`` with ``pred(n)``, assuming ``pred`` is monotone in ``n``."""
    lo, hi = start, start
    while not pred(hi):
        lo, hi = hi, hi * 2
        if hi > _MAX_N:
            raise InfeasibleError("no step rate up to 2**40 satisfies the window")
    if hi == start:
        return start
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


class ModelSpec:
    """Base class; concrete models fill in the coefficient and window hooks."""

    space: StateSpace
    name: str = "model"

    @property
    def d(self) -> int:
        return self.space.d

    @property
    def m(self) -> int:
        return self.space.m

    @property
    def x0(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def Sigma(self) -> np.ndarray:
        return np.eye(self.d)

    @property
    def cir_leg(self) -> tuple[float, float, float] | None:
        """``(kappa, beta, nu)`` of a square-root leg, for the Gaussian competitor schemes."""
        return None

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def factor_diag(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def factor(self, t: float, x: np.ndarray) -> np.ndarray:
        diag = self.factor_diag(t, x)
        return diag[..., :, None] * np.eye(self.d)

    def diffusion_matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        # Sigma_ij s_i s_j with the product s_i s_j formed first: exactly symmetric
        s = self.factor_diag(t, x)
        return self.Sigma * (s[..., :, None] * s[..., None, :])

    def mu_vector(self, mu) -> np.ndarray:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.size < self.m or mu.size > self.d:
            raise DomainError(f"{self.name}: mu needs between {self.m} and {self.d} entries")
        return mu

    # window hooks
    def default_n0(self) -> int:
        return 1

    def window(self, n0: int) -> FeasibilityWindow:
        raise NotImplementedError

    def min_n0(self, mu) -> int:
        raise NotImplementedError

    def margin(self, mu, n: int) -> np.ndarray:
        raise NotImplementedError

    def check(self, mu, n0: int) -> Feasibility:
        raise NotImplementedError

    def grid_scale(self) -> float:
        """State scale used by grid searches and test-function cutoffs."""
        return max(1.0, float(np.max(np.abs(self.x0[: max(self.m, 1)]))))


def _sqrt_pos(x):
    return np.sqrt(np.maximum(x, 0.0))


# --------------------------------------------------------------------------- CIR


def _cir_mu_max(kappa, beta, nu, n0):
    return (2.0 / nu) * math.sqrt(kappa * beta * (1.0 - kappa / n0))


def _cir_min_n0(kappa, beta, nu, mu):
    c = mu**2 * nu**2 / (4.0 * kappa * beta)
    if c >= 1.0:
        raise InfeasibleError(
            f"mu={mu} >= (2/nu)*sqrt(kappa*beta) = {2 * math.sqrt(kappa * beta) / nu:.6g}; "
            "no step rate admits it"
        )
    n0 = max(_smallest_int_above(kappa), math.ceil(kappa / (1.0 - c) - 1e-12))
    while mu > _cir_mu_max(kappa, beta, nu, n0):
        n0 += 1
    return n0


def _cir_check(kappa, beta, nu, mu, n0, label="mu"):
    if not n0 > kappa:
        return _fail(f"n0={n0} must exceed kappa={kappa}")
    if not mu > 0:
        return _fail(f"{label} must be positive")
    bound = _cir_mu_max(kappa, beta, nu, n0)
    if mu > bound:
        return _fail(
            f"{label}={mu} exceeds mu_max=(2/nu)*sqrt(kappa*beta*(1-kappa/n0))={bound:.6g} at n0={n0}"
        )
    return _OK


def _cir_margin(kappa, beta, nu, mu, n):
    if not n > kappa:
        raise DomainError(f"closed-form infimum undefined for n={n} <= kappa={kappa}")
    return kappa * beta / n - mu**2 * nu**2 / (4.0 * (n - kappa))


@dataclass(frozen=True)
class CIR(ModelSpec):
    """``dX = kappa (beta - X) dt + nu sqrt(X) dW``."""

    kappa: float
    beta: float
    nu: float
    x0_value: float

    name = "cir"
    space = StateSpace(1, 1)

    def __post_init__(self):
        if min(self.kappa, self.beta, self.nu) <= 0:
            raise DomainError("CIR needs kappa, beta, nu > 0")
        if self.x0_value < 0:
            raise DomainError("CIR needs x0 >= 0")

    @property
    def x0(self):
        return np.array([self.x0_value])

    @property
    def cir_leg(self):
        return self.kappa, self.beta, self.nu

    def drift(self, t, x):
        return self.kappa * (self.beta - x)

    def factor_diag(self, t, x):
        return self.nu * _sqrt_pos(x)

    def grid_scale(self):
        return max(self.beta, self.x0_value)

    def default_n0(self):
        return _smallest_int_above(self.kappa)

    def window(self, n0):
        if not n0 > self.kappa:
            raise InfeasibleError(f"n0={n0} must exceed kappa={self.kappa}")
        return FeasibilityWindow(n0, (_cir_mu_max(self.kappa, self.beta, self.nu, n0),))

    def min_n0(self, mu):
        return _cir_min_n0(self.kappa, self.beta, self.nu, float(self.mu_vector(mu)[0]))

    def margin(self, mu, n):
        mu1 = float(self.mu_vector(mu)[0])
        return np.array([_cir_margin(self.kappa, self.beta, self.nu, mu1, n)])

    def check(self, mu, n0):
        return _cir_check(self.kappa, self.beta, self.nu, float(self.mu_vector(mu)[0]), n0)


# --------------------------------------------------------------------------- GBM


def _as_time_fn(value):
    if callable(value):
        return value, False
    const = float(value)
    return (lambda t: np.full_like(np.asarray(t, dtype=float), const)), True


@dataclass(frozen=True)
class GBM(ModelSpec):
    """``dX = X beta(t) dt + X nu(t) dW``; ``beta``, ``nu`` constants or callables of ``t``.

    For callables, sup/inf over time are taken on a uniform grid of
    ``[0, t_max]`` with ``t_points`` nodes.
    """

    beta: float | Callable
    nu: float | Callable
    x0_value: float
    t_max: float = 10.0
    t_points: int = 2001

    name = "gbm"
    space = StateSpace(1, 1)

    def __post_init__(self):
        if self.x0_value <= 0:
            raise DomainError("GBM needs x0 > 0")
        if not 0 < self.nu_sup < math.inf:
            raise DomainError("GBM needs 0 < sup nu(t) < inf")
        if self.nu_inf < 0:
            raise DomainError("GBM needs nu(t) >= 0")

    @property
    def constant(self) -> bool:
        return not (callable(self.beta) or callable(self.nu))

    def _beta(self, t):
        return _as_time_fn(self.beta)[0](t)

    def _nu(self, t):
        return _as_time_fn(self.nu)[0](t)

    @property
    def _tgrid(self):
        return np.linspace(0.0, self.t_max, self.t_points)

    @property
    def beta_inf(self) -> float:
        return float(np.min(self._beta(self._tgrid)))

    @property
    def nu_sup(self) -> float:
        return float(np.max(self._nu(self._tgrid)))

    @property
    def nu_inf(self) -> float:
        return float(np.min(self._nu(self._tgrid)))

    @property
    def x0(self):
        return np.array([self.x0_value])

    def drift(self, t, x):
        return x * self._beta(t)

    def factor_diag(self, t, x):
        return x * self._nu(t)

    def grid_scale(self):
        return self.x0_value

    def default_n0(self):
        return _smallest_int_above(-2.0 * self.beta_inf)

    def default_mu(self, n0: int) -> float:
        return math.sqrt(n0) / (2.0 * self.nu_sup)

    def window(self, n0):
        if not n0 > -2.0 * self.beta_inf:
            raise InfeasibleError(f"n0={n0} must exceed -2 inf beta = {-2 * self.beta_inf:.6g}")
        return FeasibilityWindow(n0, (self.default_mu(n0),))

    def min_n0(self, mu):
        mu1 = float(self.mu_vector(mu)[0])
        return max(self.default_n0(), math.ceil(4.0 * mu1**2 * self.nu_sup**2 - 1e-12))

    def margin(self, mu, n):
        mu1 = float(self.mu_vector(mu)[0])
        t = self._tgrid
        coeff = 1.0 + self._beta(t) / n - self._nu(t) * mu1 / math.sqrt(n)
        # x * coeff over x >= 0: zero at x = 0, unbounded below if coeff < 0 anywhere
        return np.array([0.0 if np.min(coeff) >= 0 else -math.inf])

    def check(self, mu, n0):
        mu1 = float(self.mu_vector(mu)[0])
        if not n0 > -2.0 * self.beta_inf:
            return _fail(f"n0={n0} must exceed -2 inf beta = {-2 * self.beta_inf:.6g}")
        if not mu1 > 0:
            return _fail("mu must be positive")
        bound = self.default_mu(n0)
        if mu1 > bound:
            return _fail(f"mu={mu1} exceeds sqrt(n0)/(2 sup nu)={bound:.6g}")
        return _OK


# --------------------------------------------------------------------------- CEV


@dataclass(frozen=True)
class CEV(ModelSpec):
    """``dX = b(X) dt + nu X^alpha dW`` with ``b`` Lipschitz (constant ``lipschitz``), ``b(0) > 0``.

    ``b`` must accept numpy arrays.
    """

    b: Callable
    lipschitz: float
    nu: float
    alpha: float
    x0_value: float
    min_b_points: int = 513

    name = "cev"
    space = StateSpace(1, 1)

    def __post_init__(self):
        if not 0.5 <= self.alpha < 1.0:
            raise DomainError(f"alpha must lie in [1/2, 1), got {self.alpha}")
        if self.nu <= 0 or self.lipschitz < 0:
            raise DomainError("CEV needs nu > 0 and a non-negative Lipschitz constant")
        if not self.b0 > 0:
            raise DomainError(f"CEV needs b(0) > 0, got {self.b0}")
        if self.x0_value < 0:
            raise DomainError("CEV needs x0 >= 0")

    @property
    def b0(self) -> float:
        return float(self.b(np.array(0.0)))

    @property
    def x0(self):
        return np.array([self.x0_value])

    def drift(self, t, x):
        return self.b(x)

    def factor_diag(self, t, x):
        return self.nu * np.maximum(x, 0.0) ** self.alpha

    def grid_scale(self):
        return max(self.x0_value, 1e-2)

    # pieces of the three-inequality chain
    def c_n(self, x, mu, n):
        return x - self.nu * np.maximum(x, 0.0) ** self.alpha * mu / math.sqrt(n)

    def x_min_point(self, mu, n) -> float:
        """Global minimiser ``x_n`` of ``c_n``."""
        return (self.alpha * self.nu * mu / math.sqrt(n)) ** (1.0 / (1.0 - self.alpha))

    def x_upper(self, mu, n) -> float:
        """``x^(n)``: above it ``-K x / n + c_n(x) >= 0``."""
        return (self.nu * mu / math.sqrt(n) / (1.0 - self.lipschitz / n)) ** (
            1.0 / (1.0 - self.alpha)
        )

    def min_b_below(self, mu, n) -> float:
        xs = np.linspace(0.0, self.x_upper(mu, n), self.min_b_points)
        return float(np.min(self.b(xs)))

    def mu_bound(self) -> float:
        """Strict upper bound on mu for ``alpha = 1/2`` (``inf`` otherwise)."""
        if self.alpha == 0.5:
            return math.sqrt(2.0 * self.b0) / self.nu
        return math.inf

    def _conditions(self, mu, n) -> Feasibility:
        if not mu > 0:
            return _fail("mu must be positive")
        if not n > self.lipschitz:
            return _fail(f"n0={n} must exceed the Lipschitz constant K={self.lipschitz}")
        if self.alpha == 0.5:
            if not mu < self.mu_bound():
                return _fail(
                    f"mu={mu} must satisfy mu < sqrt(2 b(0))/nu = {self.mu_bound():.6g}"
                )
        else:
            ncn = abs(n * float(self.c_n(self.x_min_point(mu, n), mu, n)))
            if not ncn < self.b0 / 2:
                return _fail(f"|n c_n(x_n)| = {ncn:.6g} must be < b(0)/2 = {self.b0 / 2:.6g}")
        minb = self.min_b_below(mu, n)
        if not minb >= self.b0 / 2:
            return _fail(
                f"min of b on [0, x^(n)] = {minb:.6g} must be >= b(0)/2 = {self.b0 / 2:.6g}"
            )
        return _OK

    def check(self, mu, n0):
        return self._conditions(float(self.mu_vector(mu)[0]), n0)

    def min_n0(self, mu):
        mu1 = float(self.mu_vector(mu)[0])
        if self.alpha == 0.5 and not mu1 < self.mu_bound():
            raise InfeasibleError(
                f"mu={mu1} >= sqrt(2 b(0))/nu = {self.mu_bound():.6g}: no window exists"
            )
        return _first_true(
            lambda n: bool(self._conditions(mu1, n)), _smallest_int_above(self.lipschitz)
        )

    def default_n0(self):
        return _smallest_int_above(2.0 * self.lipschitz)

    def window(self, n0):
        """Largest mu admissible at ``n0``, found by bisection on the conditions."""
        if not n0 > self.lipschitz:
            raise InfeasibleError(f"n0={n0} must exceed K={self.lipschitz}")
        hi = self.mu_bound() if self.alpha == 0.5 else 1.0
        if self.alpha != 0.5:
            while self._conditions(hi, n0):
                hi *= 2.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid > 0 and self._conditions(mid, n0):
                lo = mid
            else:
                hi = mid
        if lo == 0.0:
            raise InfeasibleError(f"no mu > 0 is admissible at n0={n0}")
        return FeasibilityWindow(n0, (lo,))

    def margin(self, mu, n):
        mu1 = float(self.mu_vector(mu)[0])
        extra = [self.x_min_point(mu1, n)]
        if n > self.lipschitz:
            extra.append(self.x_upper(mu1, n))
        return grid_infimum(self, mu1, n, extra_points=extra)


@dataclass(frozen=True)
class Affine(CEV):
    """``dR = (k0 + k1 R) dt + sqrt(h0 + h1 R) dW`` mapped to ``X = h0 + h1 R``.

    ``X`` is a CEV process with ``alpha = 1/2``, ``b(x) = (k0 h1 - k1 h0) + k1 x``,
    ``nu = |h1|`` and ``K = |k1|``.
    """

    b: Callable = field(init=False, repr=False)
    lipschitz: float = field(init=False)
    nu: float = field(init=False)
    alpha: float = field(init=False, default=0.5)
    x0_value: float = field(init=False)
    h0: float = 0.0
    h1: float = 1.0
    k0: float = 0.0
    k1: float = 0.0
    r0: float = 0.0

    name = "affine"

    def __post_init__(self):
        if self.h1 == 0:
            raise DomainError("affine model needs h1 != 0")
        b0 = self.k0 * self.h1 - self.k1 * self.h0
        if not b0 > 0:
            raise DomainError(f"affine model needs k0 h1 - k1 h0 > 0, got {b0}")
        if self.h0 + self.h1 * self.r0 < 0:
            raise DomainError("affine model needs h0 + h1 r0 >= 0")
        k1 = self.k1
        object.__setattr__(self, "b", lambda x: b0 + k1 * np.asarray(x, dtype=float))
        object.__setattr__(self, "lipschitz", abs(k1))
        object.__setattr__(self, "nu", abs(self.h1))
        object.__setattr__(self, "x0_value", self.h0 + self.h1 * self.r0)
        super().__post_init__()

    def sufficient_n0(self, mu: float) -> int:
        """``ceil(max(2K, 8 |k1| nu^2 mu^2 / b(0)))``, at least 1 and above ``K``."""
        bound = max(2.0 * self.lipschitz, 8.0 * abs(self.k1) * self.nu**2 * mu**2 / self.b0)
        return max(_smallest_int_above(self.lipschitz), math.ceil(bound - 1e-12), 1)

    def min_n0(self, mu):
        mu1 = float(self.mu_vector(mu)[0])
        if not mu1 < self.mu_bound():
            raise InfeasibleError(
                f"mu={mu1} >= sqrt(2 b(0))/nu = {self.mu_bound():.6g}: no window exists"
            )
        return self.sufficient_n0(mu1)

    def check(self, mu, n0):
        mu1 = float(self.mu_vector(mu)[0])
        if not mu1 > 0:
            return _fail("mu must be positive")
        if not mu1 < self.mu_bound():
            return _fail(f"mu={mu1} must satisfy mu < sqrt(2 b(0))/nu = {self.mu_bound():.6g}")
        need = self.sufficient_n0(mu1)
        if n0 < need:
            return _fail(f"n0={n0} below max(2K, 8|k1| nu^2 mu^2 / b(0)) -> {need}")
        return _OK


# ------------------------------------------------------------------ two-factor CIR


@dataclass(frozen=True)
class TwoFactorCIR(ModelSpec):
    """Canonical two-factor CIR with correlation ``rho`` between the factor noises."""

    beta1: float
    beta2: float
    lam11: float
    lam12: float
    lam21: float
    lam22: float
    rho: float
    x0_value: tuple[float, float] = (0.04, 0.04)

    name = "two_factor_cir"
    space = StateSpace(2, 2)

    def __post_init__(self):
        if min(self.beta1, self.beta2, self.lam11, self.lam22) <= 0:
            raise DomainError("beta_i and lambda_ii must be positive")
        if min(self.lam12, self.lam21) < 0:
            raise DomainError("lambda_12 and lambda_21 must be non-negative")
        if not abs(self.rho) < 1:
            raise DomainError("|rho| must be < 1")
        if min(self.x0_value) < 0:
            raise DomainError("initial state must be in R_+^2")

    @property
    def x0(self):
        return np.array(self.x0_value, dtype=float)

    @property
    def Sigma(self):
        return np.array([[1.0, self.rho], [self.rho, 1.0]])

    @property
    def _betas(self):
        return (self.beta1, self.beta2)

    @property
    def _lams(self):
        return (self.lam11, self.lam22)

    def drift(self, t, x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(
            [
                self.beta1 - self.lam11 * x1 + self.lam12 * x2,
                self.beta2 + self.lam21 * x1 - self.lam22 * x2,
            ],
            axis=-1,
        )

    def factor_diag(self, t, x):
        return _sqrt_pos(x)

    def grid_scale(self):
        return max(max(self._betas), float(np.max(self.x0)))

    def mu_bounds(self, n0) -> tuple[float, float]:
        return tuple(2.0 * math.sqrt(b * (1.0 - lam / n0)) for b, lam in zip(self._betas, self._lams))

    def default_n0(self):
        return _smallest_int_above(max(self._lams))

    def window(self, n0):
        if not n0 > max(self._lams):
            raise InfeasibleError(f"n0={n0} must exceed max(lambda_11, lambda_22)")
        return FeasibilityWindow(n0, self.mu_bounds(n0), strict=True)

    def check(self, mu, n0):
        mu = self.mu_vector(mu)
        if mu.size != 2:
            return _fail("two-factor CIR needs mu = (mu1, mu2)")
        limit = 4.0 * math.sqrt(self.beta1 * self.beta2)
        if not -self.rho < limit:
            return _fail(f"-rho={-self.rho} must be < 4 sqrt(beta1 beta2) = {limit:.6g}")
        if not n0 > max(self._lams):
            return _fail(f"n0={n0} must exceed max(lambda_11, lambda_22)={max(self._lams)}")
        for i, (m_i, bound) in enumerate(zip(mu, self.mu_bounds(n0)), start=1):
            if not 0 < m_i < bound:
                return _fail(
                    f"mu{i}={m_i} must satisfy 0 < mu{i} < 2 sqrt(beta{i}(1-lambda_{i}{i}/n0))={bound:.6g}"
                )
        if -self.rho > mu[0] * mu[1]:
            return _fail(f"-rho={-self.rho} exceeds mu1*mu2={mu[0] * mu[1]:.6g}")
        return _OK

    def min_n0(self, mu):
        mu = self.mu_vector(mu)
        n0 = self.default_n0()
        for b, lam, m_i in zip(self._betas, self._lams, mu):
            c = m_i**2 / (4.0 * b)
            if c >= 1.0:
                raise InfeasibleError(f"mu={m_i} >= 2 sqrt(beta)={2 * math.sqrt(b):.6g}")
            n0 = max(n0, _smallest_int_above(lam / (1.0 - c)))
        if -self.rho > mu[0] * mu[1]:
            raise InfeasibleError(f"-rho={-self.rho} exceeds mu1*mu2={mu[0] * mu[1]:.6g}")
        return n0

    def margin(self, mu, n):
        mu = self.mu_vector(mu)
        # cross terms lambda_12 x2, lambda_21 x1 are >= 0, so each coordinate is a CIR leg
        return np.array(
            [_cir_margin(lam, b / lam, 1.0, m_i, n) for b, lam, m_i in zip(self._betas, self._lams, mu)]
        )


# ------------------------------------------------------------ stochastic volatility


@dataclass(frozen=True)
class GarchSV(ModelSpec):
    """GARCH(1,1) diffusion variance with log-price second coordinate."""

    alpha: float
    lam: float
    nu: float
    beta: float
    rho: float
    v0: float
    s0: float

    name = "garch_sv"
    space = StateSpace(2, 1)

    def __post_init__(self):
        if min(self.alpha, self.lam, self.nu) <= 0:
            raise DomainError("GARCH needs alpha, lambda, nu > 0")
        if not abs(self.rho) < 1:
            raise DomainError("|rho| must be < 1")
        if self.v0 <= 0 or self.s0 <= 0:
            raise DomainError("GARCH needs v0 > 0 and s0 > 0")

    @property
    def x0(self):
        return np.array([self.v0, math.log(self.s0)])

    @property
    def Sigma(self):
        return np.array([[1.0, self.rho], [self.rho, 1.0]])

    def drift(self, t, x):
        v = x[..., 0]
        return np.stack([self.alpha - self.lam * v, self.beta - 0.5 * v], axis=-1)

    def factor_diag(self, t, x):
        v = x[..., 0]
        return np.stack([self.nu * v, _sqrt_pos(v)], axis=-1)

    def grid_scale(self):
        return max(self.v0, self.alpha / self.lam)

    def mu_bound(self, n0) -> float:
        return math.sqrt(n0) / self.nu * (1.0 - self.lam / n0)

    def default_n0(self):
        return _smallest_int_above(self.lam)

    def window(self, n0):
        if not n0 > self.lam:
            raise InfeasibleError(f"n0={n0} must exceed lambda={self.lam}")
        return FeasibilityWindow(n0, (self.mu_bound(n0), math.inf), strict=True)

    def check(self, mu, n0):
        mu1 = float(self.mu_vector(mu)[0])
        if not n0 > self.lam:
            return _fail(f"n0={n0} must exceed lambda={self.lam}")
        bound = self.mu_bound(n0)
        if not 0 < mu1 < bound:
            return _fail(f"mu1={mu1} must satisfy 0 < mu1 < sqrt(n0)/nu (1-lambda/n0)={bound:.6g}")
        return _OK

    def min_n0(self, mu):
        mu1 = float(self.mu_vector(mu)[0])
        return _first_true(lambda n: bool(self.check(mu1, n)), self.default_n0())

    def margin(self, mu, n):
        mu1 = float(self.mu_vector(mu)[0])
        slope = 1.0 - self.lam / n - self.nu * mu1 / math.sqrt(n)
        first = self.alpha / n if slope >= 0 else -math.inf
        return np.array([first, -math.inf])


@dataclass(frozen=True)
class Heston(ModelSpec):
    """Heston model in (variance, log-price) coordinates."""

    kappa: float
    beta: float
    nu: float
    r: float
    rho: float
    v0: float
    s0: float

    name = "heston"
    space = StateSpace(2, 1)

    def __post_init__(self):
        if min(self.kappa, self.beta, self.nu) <= 0:
            raise DomainError("Heston needs kappa, beta, nu > 0")
        if not abs(self.rho) < 1:
            raise DomainError("|rho| must be < 1")
        if self.v0 < 0 or self.s0 <= 0:
            raise DomainError("Heston needs v0 >= 0 and s0 > 0")

    @property
    def x0(self):
        return np.array([self.v0, math.log(self.s0)])

    @property
    def Sigma(self):
        return np.array([[1.0, self.rho], [self.rho, 1.0]])

    @property
    def cir_leg(self):
        return self.kappa, self.beta, self.nu

    def drift(self, t, x):
        v = x[..., 0]
        return np.stack([self.kappa * (self.beta - v), self.r - 0.5 * v], axis=-1)

    def factor_diag(self, t, x):
        sv = _sqrt_pos(x[..., 0])
        return np.stack([self.nu * sv, sv], axis=-1)

    def grid_scale(self):
        return max(self.beta, self.v0)

    def default_n0(self):
        return _smallest_int_above(self.kappa)

    def window(self, n0):
        if not n0 > self.kappa:
            raise InfeasibleError(f"n0={n0} must exceed kappa={self.kappa}")
        return FeasibilityWindow(n0, (_cir_mu_max(self.kappa, self.beta, self.nu, n0), math.inf))

    def min_n0(self, mu):
        return _cir_min_n0(self.kappa, self.beta, self.nu, float(self.mu_vector(mu)[0]))

    def check(self, mu, n0):
        return _cir_check(self.kappa, self.beta, self.nu, float(self.mu_vector(mu)[0]), n0, "mu1")

    def margin(self, mu, n):
        mu1 = float(self.mu_vector(mu)[0])
        return np.array([_cir_margin(self.kappa, self.beta, self.nu, mu1, n), -math.inf])


# ------------------------------------------------------------------- module API


def eval_coeffs(model: ModelSpec, t: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Drift vector and factor matrix at ``(t, x)``; ``x`` must lie in ``E``."""
    x = np.asarray(x, dtype=float).reshape(model.d)
    if t < 0 or not model.space.contains(x):
        raise DomainError(f"{model.name}: state {x} at t={t} is outside E")
    return model.drift(t, x), model.factor(t, x)


def feasibility_window(model: ModelSpec, n0: int | None = None) -> FeasibilityWindow:
    return model.window(model.default_n0() if n0 is None else n0)


def min_n0(model: ModelSpec, mu) -> int:
    """Smallest ``n0`` admitting ``mu``; raises :class:`InfeasibleError` if none does."""
    return model.min_n0(mu)


def infimum_margin(model: ModelSpec, mu, n: int) -> np.ndarray:
    """Componentwise ``inf (x + b/n - sigma~ mu/sqrt(n))`` over ``E``.

    Unconstrained coordinates report ``-inf``, which is trivially in ``E``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    return model.margin(mu, n)


def check_feasible(model: ModelSpec, mu, n0: int) -> Feasibility:
    return model.check(mu, n0)


def grid_infimum(
    model: ModelSpec,
    mu,
    n: int,
    x_max: float | None = None,
    t_max: float = 0.0,
    points: int = 4001,
    t_points: int = 11,
    extra_points=(),
) -> np.ndarray:
    """Brute-force componentwise infimum on a compact grid.

    Nonnegative coordinates range over ``{0} U logspace(1e-14, x_max)`` plus
    ``extra_points``, with ``x_max`` defaulting to ``10 * grid_scale()``.
    Unconstrained coordinates are held at their initial value and report
    ``-inf``.  Time ranges over ``t_points`` nodes of ``[0, t_max]``.
    """
    mu = model.mu_vector(mu)
    mu_full = np.zeros(model.d)
    mu_full[: mu.size] = mu
    if x_max is None:
        x_max = 10.0 * model.grid_scale()
    axis = np.concatenate(
        [[0.0], np.logspace(-14, math.log10(x_max), points), np.asarray(extra_points, dtype=float)]
    )
    axis = np.unique(axis[(axis >= 0) & (axis <= x_max)])
    m = model.m
    if m == 1:
        mesh = axis[:, None]
    else:
        coarse = axis[:: max(1, len(axis) // 400)]
        mesh = np.stack(np.meshgrid(*([coarse] * m), indexing="ij"), axis=-1).reshape(-1, m)
    states = np.tile(model.x0, (mesh.shape[0], 1))
    states[:, :m] = mesh
    best = np.full(model.d, math.inf)
    for t in np.linspace(0.0, t_max, t_points if t_max > 0 else 1):
        value = states + model.drift(t, states) / n - model.factor_diag(t, states) * mu_full / math.sqrt(n)
        best = np.minimum(best, value.min(axis=0))
    best[m:] = -math.inf
    return best


def cir_mean_at(kappa: float, beta: float, x0: float, n: int, k: int) -> float:
    """Exact mean of the scheme's ``k``-th CIR state: ``beta + (x0 - beta)(1 - kappa/n)^k``."""
    if not n > kappa:
        raise DomainError(f"need n > kappa, got n={n}, kappa={kappa}")
    return beta + (x0 - beta) * (1.0 - kappa / n) ** k
