"""Reference prices: CIR zero-coupon bond, Heston call, Black-Scholes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import ndtr

from .errors import DomainError, NumericalError
from .models import Heston

__all__ = [
    "QuadratureConfig",
    "cir_bond_price",
    "heston_call_price",
    "heston_put_price",
    "black_scholes_call",
    "black_scholes_put",
]


def cir_bond_price(kappa: float, beta: float, nu: float, x0: float, T: float, face: float = 1.0) -> float:
    """``face * E[exp(-int_0^T X ds)]`` for ``dX = kappa(beta - X)dt + nu sqrt(X) dW``."""
    if min(kappa, beta, nu, face) <= 0 or x0 < 0 or T < 0:
        raise DomainError("need kappa, beta, nu, face > 0, x0 >= 0 and T >= 0")
    if T == 0:
        return float(face)
    g = math.sqrt(kappa**2 + 2.0 * nu**2)
    e = math.expm1(g * T)
    den = (g + kappa) * e + 2.0 * g
    log_phi = (2.0 * kappa * beta / nu**2) * (math.log(2.0 * g) + 0.5 * (kappa + g) * T - math.log(den))
    psi = 2.0 * e / den
    return face * math.exp(log_phi - psi * x0)


@dataclass(frozen=True)
class QuadratureConfig:
    """Truncation point and tolerances of the Fourier integral."""

    upper: float = 200.0
    epsabs: float = 1e-10
    epsrel: float = 1e-10
    limit: int = 400


def _heston_cf(p: Heston, phi, T: float, j: int):
    # "little trap" form: exp(-dT) keeps the log on its principal branch.
    # a - d is rewritten as nu^2 q so small nu does not cancel catastrophically.
    u, b = (0.5, p.kappa - p.rho * p.nu) if j == 1 else (-0.5, p.kappa)
    iphi = 1j * phi
    nu2 = p.nu**2
    a = b - p.rho * p.nu * iphi
    w2 = 2.0 * u * iphi - phi**2
    d = np.sqrt(a**2 - nu2 * w2)
    q = w2 / (a + d)
    g = nu2 * q / (a + d)
    edt = np.exp(-d * T)
    z = g * (1.0 - edt) / (1.0 - g)
    small = np.abs(z) < 1e-8
    ratio = np.where(small, 1.0 - 0.5 * z, np.log(1.0 + z) / np.where(small, 1.0, z))
    log_over_nu2 = q / (a + d) * (1.0 - edt) / (1.0 - g) * ratio
    C = p.r * iphi * T + p.kappa * p.beta * (q * T - 2.0 * log_over_nu2)
    D = q * (1.0 - edt) / (1.0 - g * edt)
    return np.exp(C + D * p.v0 + iphi * math.log(p.s0))


def _probability(p: Heston, K: float, T: float, j: int, quad_cfg: QuadratureConfig) -> float:
    lk = math.log(K)

    def integrand(phi):
        return (np.exp(-1j * phi * lk) * _heston_cf(p, phi, T, j) / (1j * phi)).real

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(
                integrand,
                1e-12,
                quad_cfg.upper,
                epsabs=quad_cfg.epsabs,
                epsrel=quad_cfg.epsrel,
                limit=quad_cfg.limit,
            )
        except IntegrationWarning as exc:
            raise NumericalError(f"Heston P{j} quadrature did not converge: {exc}") from exc
    if not math.isfinite(value):
        raise NumericalError(f"Heston P{j} integral is not finite")
    return 0.5 + value / math.pi


def heston_call_price(params: Heston, K: float, T: float, quad_cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """European call ``s0 P1 - K exp(-rT) P2`` with the two probabilities by Fourier inversion."""
    if K <= 0 or T <= 0:
        raise DomainError("need K > 0 and T > 0")
    p1 = _probability(params, K, T, 1, quad_cfg)
    p2 = _probability(params, K, T, 2, quad_cfg)
    return params.s0 * p1 - K * math.exp(-params.r * T) * p2


def heston_put_price(params: Heston, K: float, T: float, quad_cfg: QuadratureConfig = QuadratureConfig()) -> float:
    p1 = _probability(params, K, T, 1, quad_cfg)
    p2 = _probability(params, K, T, 2, quad_cfg)
    return K * math.exp(-params.r * T) * (1.0 - p2) - params.s0 * (1.0 - p1)


def _d12(s0, K, r, sigma, T):
    sd = sigma * math.sqrt(T)
    d1 = (math.log(s0 / K) + (r + 0.5 * sigma**2) * T) / sd
    return d1, d1 - sd


def black_scholes_call(s0: float, K: float, r: float, sigma: float, T: float) -> float:
    if min(s0, K, T) <= 0 or sigma < 0:
        raise DomainError("need s0, K, T > 0 and sigma >= 0")
    if sigma == 0:
        return max(s0 - K * math.exp(-r * T), 0.0)
    d1, d2 = _d12(s0, K, r, sigma, T)
    return s0 * ndtr(d1) - K * math.exp(-r * T) * ndtr(d2)


def black_scholes_put(s0: float, K: float, r: float, sigma: float, T: float) -> float:
    if min(s0, K, T) <= 0 or sigma < 0:
        raise DomainError("need s0, K, T > 0 and sigma >= 0")
    if sigma == 0:
        return max(K * math.exp(-r * T) - s0, 0.0)
    d1, d2 = _d12(s0, K, r, sigma, T)
    return K * math.exp(-r * T) * ndtr(-d2) - s0 * ndtr(-d1)
