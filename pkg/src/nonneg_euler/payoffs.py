"""Discounted path functionals.

A functional is evaluated on simulated grids ``(P, K+1, d)`` together with the
interpolation mode, so time integrals, running maxima and terminal values are
those of the continuous-time interpolant on ``[0, T]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DomainError
from .schemes import ContinuousPath, Interpolation, PathGrid

__all__ = [
    "PayoffKind",
    "IntegralRule",
    "PathFunctional",
    "rule_for",
    "time_integral",
    "terminal_value",
    "running_max",
    "discount_factor",
    "evaluate",
    "put_call_parity_call",
    "truncate",
    "bond",
    "euro_call",
    "euro_put",
]


class PayoffKind(str, enum.Enum):
    BOND = "bond"
    EURO_CALL = "euro_call"
    EURO_PUT = "euro_put"
    ASIAN_CALL = "asian_call"
    ASIAN_PUT = "asian_put"
    LOOKBACK_MAX = "lookback_max"
    UP_AND_OUT_CALL = "up_and_out_call"
    BINARY_BELOW = "binary_below"
    CUSTOM = "custom"


class IntegralRule(str, enum.Enum):
    TRAPEZOID = "trapezoid"
    LEFT_RIEMANN = "left_riemann"


def rule_for(mode: Interpolation) -> IntegralRule:
    """The rule that integrates the interpolant of ``mode`` exactly."""
    if Interpolation(mode) is Interpolation.ABS_PIECEWISE_CONSTANT:
        return IntegralRule.LEFT_RIEMANN
    return IntegralRule.TRAPEZOID


# ---------------------------------------------------------------- path primitives


def _split_T(n: int, T: float) -> tuple[int, float]:
    s = n * T
    j = round(s)
    if abs(s - j) < 1e-9:
        return int(j), 0.0
    j = math.floor(s)
    return j, s - j


def time_integral(y: np.ndarray, n: int, T: float, mode: Interpolation = Interpolation.LINEAR) -> np.ndarray:
    """``int_0^T X(s) ds`` for grid values ``y`` of shape ``(..., K+1)``."""
    j, frac = _split_T(n, T)
    h = 1.0 / n
    if Interpolation(mode) is Interpolation.ABS_PIECEWISE_CONSTANT:
        a = np.abs(y)
        total = a[..., :j].sum(axis=-1) * h
        if frac:
            total = total + a[..., j] * frac * h
        return total
    total = (0.5 * (y[..., 0] + y[..., j]) + y[..., 1:j].sum(axis=-1)) * h if j else np.zeros(y.shape[:-1])
    if frac:
        end = y[..., j] + frac * (y[..., j + 1] - y[..., j])
        total = total + 0.5 * (y[..., j] + end) * frac * h
    return total


def terminal_value(y: np.ndarray, n: int, T: float, mode: Interpolation = Interpolation.LINEAR) -> np.ndarray:
    j, frac = _split_T(n, T)
    if Interpolation(mode) is Interpolation.ABS_PIECEWISE_CONSTANT:
        return np.abs(y[..., j])
    if frac:
        return y[..., j] + frac * (y[..., j + 1] - y[..., j])
    return y[..., j]


def running_max(y: np.ndarray, n: int, T: float, mode: Interpolation = Interpolation.LINEAR) -> np.ndarray:
    """``sup_{[0,T]} X``; a linear interpolant peaks at a node or at ``T``."""
    j, _ = _split_T(n, T)
    if Interpolation(mode) is Interpolation.ABS_PIECEWISE_CONSTANT:
        return np.abs(y[..., : j + 1]).max(axis=-1)
    return np.maximum(y[..., : j + 1].max(axis=-1), terminal_value(y, n, T, mode))


# ------------------------------------------------------------------ functionals


@dataclass(frozen=True)
class PathFunctional:
    """Discounted payoff ``D(T) * h(path)``.

    ``rate_coord`` selects the short-rate coordinate; when it is ``None`` the
    constant ``const_rate`` discounts instead.  ``price_is_log`` marks a
    log-price coordinate.  ``cap`` replaces ``h`` by ``min(h, cap)``.  For
    ``CUSTOM`` the callable receives ``(values, n, T, mode)`` and returns the
    undiscounted ``h`` per path.
    """

    kind: PayoffKind
    T: float
    face: float = 1.0
    strike: float = 0.0
    barrier: float = math.inf
    price_coord: int = 0
    price_is_log: bool = False
    rate_coord: int | None = None
    const_rate: float = 0.0
    cap: float | None = None
    custom: Callable | None = None
    custom_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if not self.T >= 0:
            raise DomainError("horizon T must be >= 0")
        if self.cap is not None and not self.cap > 0:
            raise DomainError("cap must be positive")
        if self.kind is PayoffKind.CUSTOM and self.custom is None:
            raise DomainError("custom payoff needs a callable")

    @property
    def _d_max(self) -> float:
        if self.rate_coord is not None:
            return 1.0
        return math.exp(-self.const_rate * self.T)

    @property
    def _h_bound(self) -> float:
        k = self.kind
        if k is PayoffKind.BOND:
            return self.face
        if k in (PayoffKind.EURO_PUT, PayoffKind.ASIAN_PUT):
            return self.strike
        if k is PayoffKind.UP_AND_OUT_CALL:
            return max(self.barrier - self.strike, 0.0)
        if k is PayoffKind.BINARY_BELOW:
            return 1.0
        if k is PayoffKind.CUSTOM and self.custom_bound is not None:
            return self.custom_bound
        return math.inf

    @property
    def bounded(self) -> bool:
        return self.cap is not None or math.isfinite(self._h_bound)

    def bound(self) -> float:
        """Sup of ``|payoff|`` over paths with a nonnegative rate coordinate."""
        h = self._h_bound if self.cap is None else min(self._h_bound, self.cap)
        return h * self._d_max

    def _check_coords(self, d: int):
        coords = [self.price_coord] + ([] if self.rate_coord is None else [self.rate_coord])
        if self.kind is PayoffKind.BOND:
            coords = coords[1:]
        for c in coords:
            if not 0 <= c < d:
                raise DomainError(f"coordinate {c} out of range for a {d}-dimensional path")

    def discount(self, values: np.ndarray, n: int, mode: Interpolation) -> np.ndarray:
        if self.rate_coord is None:
            return np.full(values.shape[:-2], math.exp(-self.const_rate * self.T))
        return np.exp(-time_integral(values[..., self.rate_coord], n, self.T, mode))

    def _price(self, values):
        s = values[..., self.price_coord]
        return np.exp(s) if self.price_is_log else s

    def payoff(self, values: np.ndarray, n: int, mode: Interpolation) -> np.ndarray:
        """Undiscounted ``h`` per path (after the cap)."""
        k, T, K = self.kind, self.T, self.strike
        if k is PayoffKind.BOND:
            h = np.full(values.shape[:-2], float(self.face))
        elif k is PayoffKind.CUSTOM:
            h = np.asarray(self.custom(values, n, T, mode), dtype=float)
        else:
            s = self._price(values)
            if k in (PayoffKind.ASIAN_CALL, PayoffKind.ASIAN_PUT):
                avg = time_integral(s, n, T, mode) / T if T > 0 else terminal_value(s, n, T, mode)
                h = np.maximum(avg - K, 0.0) if k is PayoffKind.ASIAN_CALL else np.maximum(K - avg, 0.0)
            elif k is PayoffKind.LOOKBACK_MAX:
                h = running_max(s, n, T, mode)
            else:
                s_T = terminal_value(s, n, T, mode)
                if k is PayoffKind.EURO_CALL:
                    h = np.maximum(s_T - K, 0.0)
                elif k is PayoffKind.EURO_PUT:
                    h = np.maximum(K - s_T, 0.0)
                elif k is PayoffKind.UP_AND_OUT_CALL:
                    alive = running_max(s, n, T, mode) <= self.barrier
                    h = np.where(alive, np.maximum(s_T - K, 0.0), 0.0)
                elif k is PayoffKind.BINARY_BELOW:
                    h = (s_T < self.barrier).astype(float)
                else:
                    raise ValueError(k)
        if self.cap is not None:
            h = np.minimum(h, self.cap)
        return h


def _as_grid(path, n, mode):
    if isinstance(path, ContinuousPath):
        return path.grid.values, path.grid.n, path.mode
    if isinstance(path, PathGrid):
        return path.values, path.n, mode
    if n is None:
        raise DomainError("raw arrays need the step rate n")
    return np.asarray(path, dtype=float), n, mode


def discount_factor(path, T: float, rule: IntegralRule = IntegralRule.TRAPEZOID, n: int | None = None, coord: int = 0):
    """``exp(-int_0^T x_coord(s) ds)`` on the interpolated path."""
    mode = (
        Interpolation.ABS_PIECEWISE_CONSTANT
        if IntegralRule(rule) is IntegralRule.LEFT_RIEMANN
        else Interpolation.LINEAR
    )
    values, n, _ = _as_grid(path, n, mode)
    if values.ndim == 1:
        values = values[:, None]
    return np.exp(-time_integral(values[..., coord], n, T, mode))


def evaluate(functional: PathFunctional, path, n: int | None = None, mode: Interpolation = Interpolation.LINEAR):
    """Discounted payoff for one path or a block ``(P, K+1, d)``.

    ``path`` may be a :class:`ContinuousPath`, a :class:`PathGrid` or a raw
    array (then ``n`` is required).
    """
    values, n, mode = _as_grid(path, n, Interpolation(mode))
    if values.ndim == 1:
        values = values[:, None]
    functional._check_coords(values.shape[-1])
    need = _split_T(n, functional.T)
    if values.shape[-2] < need[0] + (2 if need[1] else 1):
        raise DomainError("path does not cover [0, T]")
    out = functional.discount(values, n, mode) * functional.payoff(values, n, mode)
    return float(out) if out.ndim == 0 else out


def put_call_parity_call(put_price: float, bond_price_unit: float, s0: float, K: float) -> float:
    """Call value ``s0 - K * E[D(T)] + put``."""
    return s0 - K * bond_price_unit + put_price


def truncate(functional: PathFunctional, k: float) -> PathFunctional:
    """Same functional with payoff ``min(h, k)``; caps only ever tighten."""
    if not k > 0:
        raise DomainError("cap must be positive")
    cap = k if functional.cap is None else min(functional.cap, k)
    return replace(functional, cap=cap)


def bond(T: float, face: float = 1000.0, rate_coord: int = 0) -> PathFunctional:
    return PathFunctional(PayoffKind.BOND, T, face=face, rate_coord=rate_coord)


def euro_call(T: float, K: float, r: float = 0.0, price_coord: int = 0, price_is_log: bool = False) -> PathFunctional:
    return PathFunctional(
        PayoffKind.EURO_CALL, T, strike=K, const_rate=r, price_coord=price_coord, price_is_log=price_is_log
    )


def euro_put(T: float, K: float, r: float = 0.0, price_coord: int = 0, price_is_log: bool = False) -> PathFunctional:
    return PathFunctional(
        PayoffKind.EURO_PUT, T, strike=K, const_rate=r, price_coord=price_coord, price_is_log=price_is_log
    )
