"""Infinitesimal and discrete generators, and their gap as a convergence diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .models import ModelSpec
from .streams import SeededStream

__all__ = [
    "SmoothTestFunction",
    "GridSpec",
    "plateau",
    "apply_generator",
    "apply_discrete_generator",
    "generator_gap",
    "make_grid",
    "jump_free_n",
]


def _psi(t):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def plateau(s):
    """Smooth step: 1 for ``s <= 0``, 0 for ``s >= 1``; returns value, first and second derivative."""
    s = np.asarray(s, dtype=float)
    inner = (s > 0) & (s < 1)
    sc = np.where(inner, s, 0.5)
    u = 1.0 - sc
    A, B = _psi(sc), _psi(u)
    A1, B1 = A / sc**2, -B / u**2
    A2, B2 = A * (1 / sc**4 - 2 / sc**3), B * (1 / u**4 - 2 / u**3)
    S = A + B
    num = B1 * A - B * A1
    h = B / S
    h1 = num / S**2
    h2 = (B2 * A - B * A2) / S**2 - 2.0 * num * (A1 + B1) / S**3
    value = np.where(inner, h, np.where(s <= 0, 1.0, 0.0))
    return value, np.where(inner, h1, 0.0), np.where(inner, h2, 0.0)


@dataclass(frozen=True)
class SmoothTestFunction:
    """Quadratic ``c + g.(x-z) + (x-z).Q(x-z)/2`` times a smooth cutoff.

    The cutoff equals 1 while ``|x_i - z_i| <= inner[i]`` for every ``i`` and
    vanishes once some ``|x_i - z_i| >= outer[i]``; an infinite radius leaves
    that coordinate uncut.
    """

    constant: float = 0.0
    linear: np.ndarray = field(default_factory=lambda: np.zeros(1))
    quadratic: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    center: np.ndarray = field(default_factory=lambda: np.zeros(1))
    inner: np.ndarray = field(default_factory=lambda: np.ones(1))
    outer: np.ndarray = field(default_factory=lambda: np.full(1, 2.0))

    def __post_init__(self):
        d = np.atleast_1d(self.linear).size
        for name, shape in (
            ("linear", (d,)), ("quadratic", (d, d)), ("center", (d,)), ("inner", (d,)), ("outer", (d,))
        ):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shape).copy()
            object.__setattr__(self, name, arr)
        if not np.allclose(self.quadratic, self.quadratic.T):
            raise DomainError("quadratic part must be symmetric")
        if np.any(self.outer <= self.inner) or np.any(self.inner < 0):
            raise DomainError("need 0 <= inner < outer")

    @property
    def d(self) -> int:
        return self.linear.size

    @property
    def radius(self) -> float:
        """Sup-norm radius about ``center`` outside which ``f`` vanishes."""
        return float(np.max(self.outer))

    @classmethod
    def build(cls, d, constant=0.0, linear=0.0, quadratic=0.0, center=0.0, inner=1.0, outer=None):
        inner = np.broadcast_to(np.asarray(inner, dtype=float), (d,))
        outer = 2.0 * inner if outer is None else outer
        q = np.asarray(quadratic, dtype=float)
        if q.ndim < 2:
            q = np.diag(np.broadcast_to(q, (d,)))
        return cls(constant, np.broadcast_to(linear, (d,)), q, np.broadcast_to(center, (d,)), inner, outer)

    def _cut(self, x):
        z = x - self.center
        a = np.abs(z)
        sgn = np.sign(z)
        finite = np.isfinite(self.outer)
        width = np.where(finite, self.outer - self.inner, 1.0)
        s = np.where(finite, (a - self.inner) / width, -1.0)
        v, d1, d2 = plateau(s)
        return v, d1 * sgn / width, d2 / width**2

    def _poly(self, x):
        z = x - self.center
        qz = z @ self.quadratic
        return self.constant + z @ self.linear + 0.5 * np.sum(z * qz, axis=-1), self.linear + qz

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p, _ = self._poly(x)
        v, _, _ = self._cut(x)
        return p * np.prod(v, axis=-1)

    __call__ = value

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p, gp = self._poly(x)
        chi, gchi, _ = self._cut_products(x)
        return chi[..., None] * gp + p[..., None] * gchi

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p, gp = self._poly(x)
        chi, gchi, hchi = self._cut_products(x)
        outer = gp[..., :, None] * gchi[..., None, :]
        return chi[..., None, None] * self.quadratic + outer + np.swapaxes(outer, -1, -2) + p[..., None, None] * hchi

    def _cut_products(self, x):
        v, d1, d2 = self._cut(x)
        d = self.d
        chi = np.prod(v, axis=-1)
        grad = np.empty(x.shape)
        hess = np.empty(x.shape + (d,))
        for i in range(d):
            others = np.prod(np.delete(v, i, axis=-1), axis=-1)
            grad[..., i] = d1[..., i] * others
            hess[..., i, i] = d2[..., i] * others
            for j in range(i + 1, d):
                rest = np.prod(np.delete(v, [i, j], axis=-1), axis=-1)
                hess[..., i, j] = hess[..., j, i] = d1[..., i] * d1[..., j] * rest
        return chi, grad, hess


@dataclass(frozen=True)
class GridSpec:
    """Evaluation points ``x`` (shape ``(k, d)``) with their times ``t`` (shape ``(k,)``)."""

    x: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        t = np.broadcast_to(np.asarray(self.t, dtype=float), x.shape[:1]).copy()
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)


def make_grid(model: ModelSpec, lo, hi, count: int = 21, times=(0.0,)) -> GridSpec:
    """Tensor grid on the box ``[lo, hi]`` crossed with ``times``; must lie in ``E``."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (model.d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (model.d,))
    axes = [np.linspace(a, b, count) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.d)
    xs = np.tile(pts, (len(times), 1))
    ts = np.repeat(np.asarray(times, dtype=float), len(pts))
    if not all(model.space.contains(p) for p in pts):
        raise DomainError("grid points must lie in E")
    return GridSpec(xs, ts)


def _per_time(fn, t, x):
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    if t.ndim == 0 or np.all(t == t.flat[0]):
        return fn(float(t.flat[0]) if t.size else 0.0, x)
    out = [fn(float(ti), xi) for ti, xi in zip(t.reshape(-1), x.reshape(-1, x.shape[-1]))]
    return np.stack(out).reshape(x.shape[:-1] + np.shape(out[0]))


def apply_generator(model: ModelSpec, f: SmoothTestFunction, t, x) -> np.ndarray:
    """``b.grad f + tr(a hess f)/2`` with ``a = sigma~ Sigma sigma~^T``."""
    x = np.asarray(x, dtype=float)
    b = _per_time(model.drift, t, x)
    a = _per_time(model.diffusion_matrix, t, x)
    return np.sum(b * f.gradient(x), axis=-1) + 0.5 * np.sum(a * f.hessian(x), axis=(-1, -2))


def apply_discrete_generator(
    model: ModelSpec,
    law,
    n: int,
    f: SmoothTestFunction,
    t,
    x,
    samples: int = 200_000,
    seed: int = 0,
    return_stderr: bool = False,
):
    """``n E[f(x + b/n + sigma~(eps - mu)/sqrt(n)) - f(x)]``.

    Exact finite sum for laws with atoms; otherwise a Monte Carlo average over
    ``samples`` draws, whose standard error is returned when requested.
    """
    x = np.asarray(x, dtype=float)
    if not model.space.contains(x):
        raise DomainError("generator points must lie in E")
    b = _per_time(model.drift, t, x)[..., None, :]
    s = _per_time(model.factor_diag, t, x)[..., None, :]
    fx = f(x)[..., None]
    mu = law.mean
    atoms = law.atoms()
    if atoms is not None:
        values, probs = atoms
        y = x[..., None, :] + b / n + s * (values - mu) / math.sqrt(n)
        diff = f(y) - fx
        out = n * diff @ probs
        err = np.zeros_like(out)
    else:
        u = SeededStream(seed).uniforms(samples * law.n_uniforms).reshape(samples, law.n_uniforms)
        eps = law.from_uniforms(u)
        y = x[..., None, :] + b / n + s * (eps - mu) / math.sqrt(n)
        diff = n * (f(y) - fx)
        out = diff.mean(axis=-1)
        err = diff.std(axis=-1, ddof=1) / math.sqrt(samples)
    return (out, err) if return_stderr else out


def generator_gap(model: ModelSpec, law, f: SmoothTestFunction, n: int, grid: GridSpec) -> float:
    """``max`` over the grid of ``|A_n f - A f|``."""
    gaps = [
        np.abs(apply_discrete_generator(model, law, n, f, t, x[None]) - apply_generator(model, f, t, x[None]))
        for t, x in _group_by_time(grid)
    ]
    return float(max(np.max(g) for g in gaps))


def _group_by_time(grid: GridSpec):
    for t in np.unique(grid.t):
        yield float(t), grid.x[grid.t == t]


def jump_free_n(model: ModelSpec, law, grid: GridSpec, eps: float, n_max: int = 2**40) -> int | None:
    """Smallest ``n`` after which no one-step move from the grid exceeds ``eps`` in norm.

    Uses the bound ``|b|/n + |sigma~ (e - mu)|/sqrt(n)``, which decreases in
    ``n``, so the returned ``n`` stays valid for all larger ``n``.  Returns
    ``None`` for laws without finite support.
    """
    atoms = law.atoms()
    if atoms is None:
        return None
    if not eps > 0:
        raise DomainError("eps must be positive")
    values, probs = atoms
    values = values[probs > 0]
    drift = max(float(np.max(np.linalg.norm(model.drift(t, x), axis=-1))) for t, x in _group_by_time(grid))
    spread = max(
        float(np.max(np.linalg.norm(model.factor_diag(t, x)[:, None, :] * (values - law.mean), axis=-1)))
        for t, x in _group_by_time(grid)
    )

    def ok(n):
        return drift / n + spread / math.sqrt(n) < eps

    if ok(1):
        return 1
    lo, hi = 1, 2
    while not ok(hi):
        lo, hi = hi, hi * 2
        if hi > n_max:
            raise DomainError(f"no n <= {n_max} keeps every move below eps={eps}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi
