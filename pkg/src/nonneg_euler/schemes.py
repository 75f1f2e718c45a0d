"""One-step updates, path generation and interpolation.

The proposed scheme is the Euler update driven by a centred nonnegative
increment ``eps - mu``.  The Gaussian competitors (b1)-(b4) repair the square
root of a possibly negative state in different ways and are available for
models with a square-root leg (CIR, and the variance leg of Heston).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError
from .increments import GaussianLaw, TwoPointLaw
from .models import GBM, Heston, ModelSpec
from .streams import SeededStream, stream_keys, uniforms_from_keys

__all__ = [
    "Scheme",
    "Interpolation",
    "PathGrid",
    "ContinuousPath",
    "LatticeSpec",
    "step",
    "n_steps",
    "simulate_paths",
    "simulate_path",
    "interpolate",
    "lattice_specialize",
    "write_path_dump",
]


class Scheme(str, enum.Enum):
    PROPOSED = "proposed"
    B1 = "b1"
    B2 = "b2"
    B3 = "b3"
    B4 = "b4"

    @property
    def label(self) -> str:
        return "Bernoulli" if self is Scheme.PROPOSED else f"({self.value})"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        key = text.strip().lower().strip("()")
        if key in ("bernoulli", "proposed"):
            return cls.PROPOSED
        return cls(key)


class Interpolation(str, enum.Enum):
    LINEAR = "linear"
    ABS_PIECEWISE_CONSTANT = "abs_piecewise_constant"


def n_steps(n: int, T: float) -> int:
    """Number of updates simulated: ``floor(nT) + 1``, so the interpolant covers ``[0, T]``."""
    if n < 1 or T < 0:
        raise DomainError(f"need n >= 1 and T >= 0, got n={n}, T={T}")
    return math.floor(n * T + 1e-9) + 1


def _proposed(model: ModelSpec, t, y, eps, mu, n):
    return y + model.drift(t, y) / n + model.factor_diag(t, y) * (eps - mu) / math.sqrt(n)


def _cir_gaussian(scheme, kappa, beta, nu, y, z, n):
    sn = math.sqrt(n)
    if scheme is Scheme.B1:
        return y + kappa * (beta - y) / n + nu * np.sqrt(np.maximum(y, 0.0)) * z / sn
    if scheme is Scheme.B2:
        yp = np.maximum(y, 0.0)
        return y + kappa * (beta - yp) / n + nu * np.sqrt(yp) * z / sn
    if scheme is Scheme.B3:
        return np.abs(y + kappa * (beta - y) / n + nu * np.sqrt(y) * z / sn)
    if scheme is Scheme.B4:
        return y + kappa * (beta - y) / n + nu * np.sqrt(np.abs(y)) * z / sn
    raise ValueError(scheme)


def _fixed_variance(scheme, v):
    # variance fed to the log-price leg
    if scheme is Scheme.B4:
        return np.abs(v)
    if scheme is Scheme.B3:
        return v
    return np.maximum(v, 0.0)


def _gaussian(scheme, model: ModelSpec, y, z, n):
    leg = model.cir_leg
    if leg is None:
        raise DomainError(f"scheme {scheme.value} is only defined for square-root models")
    kappa, beta, nu = leg
    if model.d == 1:
        return _cir_gaussian(scheme, kappa, beta, nu, y, z, n)
    if isinstance(model, Heston):
        v, logs = y[..., 0], y[..., 1]
        z1, z2 = z[..., 0], z[..., 1]
        v_new = _cir_gaussian(scheme, kappa, beta, nu, v, z1, n)
        vf = _fixed_variance(scheme, v)
        w = model.rho * z1 + math.sqrt(1.0 - model.rho**2) * z2
        logs_new = logs + (model.r - 0.5 * vf) / n + np.sqrt(vf) * w / math.sqrt(n)
        return np.stack([v_new, logs_new], axis=-1)
    raise DomainError(f"scheme {scheme.value} is not defined for model {model.name}")


def step(scheme: Scheme, model: ModelSpec, k: int, y, draw, n: int, mu=None) -> np.ndarray:
    """One update from state ``y`` at time ``k/n`` with increment ``draw``.

    ``mu`` is the increment mean (required for the proposed scheme).  Works on
    a single state of shape ``(d,)`` or a batch ``(..., d)``.
    """
    scheme = Scheme(scheme)
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    draw = np.atleast_1d(np.asarray(draw, dtype=float))
    if scheme is Scheme.PROPOSED:
        if mu is None:
            raise ValueError("the proposed scheme needs the increment mean mu")
        if not model.space.contains(y):
            raise DomainError(f"state {y} is outside E")
        out = _proposed(model, k / n, y, draw, np.asarray(mu, dtype=float), n)
    else:
        if scheme is Scheme.B3 and np.any(y[..., 0] < 0):
            raise DomainError("(b3) needs a nonnegative square-root state")
        out = _gaussian(scheme, model, y, draw, n)
    return out[0] if scalar else out


@dataclass(frozen=True)
class PathGrid:
    """States ``Y(0), ..., Y(floor(nT)+1)`` on the grid ``k/n``; ``values`` is ``(K+1, d)``."""

    n: int
    T: float
    values: np.ndarray
    scheme: Scheme
    seed: int | None = None
    stream_id: int | None = None

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) / self.n


def _check_law(scheme: Scheme, model: ModelSpec, law):
    if scheme is Scheme.PROPOSED:
        if law is None or law.dim != model.d:
            raise DomainError(f"{model.name} needs a {model.d}-dimensional increment law")
        if not all(law.support_nonnegative[: model.m]):
            raise DomainError("increment law must be nonnegative on the constrained coordinates")
        return law
    if law is None:
        return GaussianLaw(model.d)
    if not isinstance(law, GaussianLaw) or law.dim != model.d:
        raise DomainError(f"scheme {scheme.value} uses a {model.d}-dimensional Gaussian law")
    return law


def simulate_paths(
    scheme: Scheme,
    model: ModelSpec,
    law,
    n: int,
    T: float,
    seed: int,
    path_ids,
) -> np.ndarray:
    """Paths for the given path indices, shape ``(len(path_ids), floor(nT)+2, d)``.

    The draws of path ``p`` come from stream ``(seed, p)`` only, so the result
    for one path does not depend on which other paths are simulated with it.
    Proposed-scheme states leaving ``E`` raise :class:`DomainError`.
    """
    scheme = Scheme(scheme)
    law = _check_law(scheme, model, law)
    path_ids = np.asarray(path_ids, dtype=np.int64).reshape(-1)
    K = n_steps(n, T)
    keys = stream_keys(seed, path_ids)[:, None]
    n_u = law.n_uniforms
    offsets = np.arange(n_u, dtype=np.uint64)
    out = np.empty((path_ids.size, K + 1, model.d))
    y = np.broadcast_to(model.x0, (path_ids.size, model.d)).copy()
    out[:, 0] = y
    mu = law.mean
    m = model.m
    for k in range(K):
        u = uniforms_from_keys(keys, np.uint64(k * n_u) + offsets)
        draw = law.from_uniforms(u)
        if scheme is Scheme.PROPOSED:
            y = _proposed(model, k / n, y, draw, mu, n)
            if m and np.any(y[:, :m] < 0):
                bad = int(np.argmax(np.any(y[:, :m] < 0, axis=1)))
                raise DomainError(
                    f"state left E at step {k + 1} of path {int(path_ids[bad])} "
                    f"(seed {seed}); check the feasibility window"
                )
        else:
            y = _gaussian(scheme, model, y, draw, n)
        out[:, k + 1] = y
    return out


def simulate_path(scheme: Scheme, model: ModelSpec, law, n: int, T: float, stream: SeededStream) -> PathGrid:
    values = simulate_paths(scheme, model, law, n, T, stream.seed, [stream.stream_id])[0]
    return PathGrid(n, T, values, Scheme(scheme), stream.seed, stream.stream_id)


def _split_time(n: int, t):
    s = np.asarray(t, dtype=float) * n
    j = np.floor(s)
    near = np.abs(s - np.round(s)) < 1e-9
    j = np.where(near, np.round(s), j)
    frac = np.where(near, 0.0, s - j)
    return j.astype(np.int64), frac


@dataclass(frozen=True)
class ContinuousPath:
    """Continuous-time extension of a :class:`PathGrid` on ``[0, T]``."""

    grid: PathGrid
    mode: Interpolation = Interpolation.LINEAR

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.grid.T + 1e-12):
            raise DomainError(f"t must lie in [0, {self.grid.T}]")
        j, frac = _split_time(self.grid.n, t_arr)
        vals = self.grid.values
        if Interpolation(self.mode) is Interpolation.ABS_PIECEWISE_CONSTANT:
            out = np.abs(vals[j])
        else:
            # a grid may end exactly at T; evaluate its last point from the left
            last = vals.shape[0] - 2
            over = j > last
            frac = np.where(over, frac + (j - last), frac)
            j = np.minimum(j, max(last, 0))
            nxt = np.minimum(j + 1, vals.shape[0] - 1)
            out = vals[j] + frac[..., None] * (vals[nxt] - vals[j])
        if vals.shape[1] == 1:
            out = out[..., 0]
        return out


def interpolate(grid: PathGrid, mode: Interpolation = Interpolation.LINEAR) -> ContinuousPath:
    return ContinuousPath(grid, Interpolation(mode))


@dataclass(frozen=True)
class LatticeSpec:
    u_n: float
    d_n: float
    p_up: float

    def states(self, x0: float, k: int) -> np.ndarray:
        """The ``k+1`` lattice points reachable after ``k`` steps, ascending."""
        j = np.arange(k + 1)
        return np.sort(x0 * self.u_n**j * self.d_n ** (k - j))


def lattice_specialize(model: GBM | tuple[float, float], mu: float, n: int) -> LatticeSpec:
    """Binomial multipliers of the scheme for constant-coefficient GBM under a two-point law.

    ``model`` is a constant :class:`GBM` or a ``(beta0, nu0)`` pair.
    """
    if isinstance(model, GBM):
        if not model.constant:
            raise DomainError("lattice form needs constant coefficients")
        beta0, nu0 = float(model.beta), float(model.nu)
    else:
        beta0, nu0 = model
    if nu0 <= 0 or mu <= 0:
        raise DomainError("need nu0 > 0 and mu > 0")
    growth = 1.0 + beta0 / n
    u_n = growth + nu0 / (math.sqrt(n) * mu)
    d_n = growth - nu0 * mu / math.sqrt(n)
    if d_n <= 0:
        raise InfeasibleError(f"d_n={d_n:.6g} <= 0: (mu={mu}, n={n}) outside the window")
    return LatticeSpec(u_n, d_n, TwoPointLaw(mu).p_v)


def write_path_dump(fh, values: np.ndarray, scheme: Scheme, n: int, T: float, seed: int, path_ids=None):
    """Write paths as CSV, one record per path and coordinate.

    The first line is ``# scheme=<s>,n=<n>,T=<T>,seed=<seed>``, then a header
    ``path,coord,y0,y1,...``.
    """
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[None]
    if path_ids is None:
        path_ids = range(values.shape[0])
    fh.write(f"# scheme={Scheme(scheme).value},n={n},T={T},seed={seed}\n")
    fh.write("path,coord," + ",".join(f"y{k}" for k in range(values.shape[1])) + "\n")
    for pid, path in zip(path_ids, values):
        for c in range(path.shape[1]):
            fh.write(f"{pid},{c}," + ",".join(repr(float(v)) for v in path[:, c]) + "\n")
