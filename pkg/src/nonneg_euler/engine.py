"""Monte Carlo runner, error statistics and weak-rate regression.

Paths are split into fixed blocks of consecutive path indices.  Each block
returns its count, mean and sum of squared deviations; the blocks are merged
in index order, so the floating-point result does not depend on how many
worker threads computed them.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, InfeasibleError, NumericalError, SchemeError
from .models import ModelSpec
from .payoffs import PathFunctional, PayoffKind, evaluate
from .schemes import Interpolation, Scheme, simulate_paths

__all__ = [
    "Z95",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "McEstimate",
    "RateEstimate",
    "TableResult",
    "run_experiment",
    "convergence_rate",
    "run_table",
    "write_table_csv",
    "write_layout_csv",
]

Z95 = 1.96
CSV_COLUMNS = ("n", "scheme", "mean", "stderr", "margin95", "bias", "rmse", "N", "seed")
DEFAULT_BLOCK = 8192


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    scheme: Scheme
    payoff: PathFunctional
    n: int
    N: int
    seed: int = 0
    law: object = None
    reference: float | None = None
    interpolation: Interpolation | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.interpolation is not None:
            object.__setattr__(self, "interpolation", Interpolation(self.interpolation))

    @property
    def T(self) -> float:
        return self.payoff.T

    @property
    def mode(self) -> Interpolation:
        """Linear, except (b4) bond pricing which uses ``|Y(floor(ns))|``."""
        if self.interpolation is not None:
            return self.interpolation
        if self.scheme is Scheme.B4 and self.payoff.kind is PayoffKind.BOND:
            return Interpolation.ABS_PIECEWISE_CONSTANT
        return Interpolation.LINEAR

    def validate(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if self.scheme is not Scheme.PROPOSED:
            return
        if self.law is None:
            raise ConfigError("the proposed scheme needs an increment law")
        if not np.allclose(self.law.cov, self.model.Sigma, atol=1e-12):
            raise ConfigError("increment covariance must equal the model's Sigma")
        verdict = self.model.check(self.law.mean[: max(self.model.m, 1)], self.n)
        if not verdict:
            raise InfeasibleError(f"{self.model.name} at n={self.n}: {verdict.reason}")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    margin95: float
    bias: float
    rmse: float
    N: int
    n: int
    scheme: str = ""
    seed: int = 0

    @classmethod
    def from_moments(cls, mean, var, N, n, reference=None, scheme="", seed=0) -> "McEstimate":
        stderr = math.sqrt(var / N) if N > 1 else 0.0
        bias = math.nan if reference is None else mean - reference
        rmse = math.sqrt(bias**2 + stderr**2)
        return cls(mean, stderr, Z95 * stderr, bias, rmse, N, n, scheme, seed)

    @classmethod
    def failed(cls, N, n, scheme="", seed=0) -> "McEstimate":
        nan = math.nan
        return cls(nan, nan, nan, nan, nan, N, n, scheme, seed)

    def row(self) -> list[str]:
        def num(x):
            return repr(float(x))

        return [
            str(self.n), self.scheme, num(self.mean), num(self.stderr), num(self.margin95),
            num(self.bias), num(self.rmse), str(self.N), str(self.seed),
        ]


def _block_moments(config: ExperimentConfig, start: int, stop: int):
    ids = np.arange(start, stop)
    paths = simulate_paths(config.scheme, config.model, config.law, config.n, config.T, config.seed, ids)
    values = np.asarray(evaluate(config.payoff, paths, config.n, config.mode), dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        p = int(ids[np.argmax(bad)])
        raise NumericalError(f"non-finite payoff on path {p} (seed {config.seed}); replay with path_ids=[{p}]")
    mean = float(values.mean())
    m2 = float(((values - mean) ** 2).sum())
    return stop - start, mean, m2


def _merge(parts):
    count, mean, m2 = 0, 0.0, 0.0
    for c, mu, s in parts:
        total = count + c
        delta = mu - mean
        mean += delta * c / total
        m2 += s + delta**2 * count * c / total
        count = total
    return count, mean, m2


def run_experiment(config: ExperimentConfig, threads: int = 1, block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """Monte Carlo estimate of ``E[payoff]`` from paths ``0..N-1``.

    Results depend only on ``config`` and ``block_size``, never on ``threads``.
    """
    config.validate()
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    bounds = [(s, min(s + block_size, config.N)) for s in range(0, config.N, block_size)]
    if threads == 1:
        parts = [_block_moments(config, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: _block_moments(config, *ab), bounds))
    count, mean, m2 = _merge(parts)
    var = m2 / (count - 1) if count > 1 else 0.0
    return McEstimate.from_moments(
        mean, var, count, config.n, config.reference, config.scheme.label, config.seed
    )


@dataclass(frozen=True)
class RateEstimate:
    """``rate = |slope|`` of ``log|bias|`` against ``log n`` (with intercept)."""

    rate: float
    slope: float
    intercept: float
    used: tuple[tuple[float, float], ...]
    excluded: tuple[tuple[float, float], ...] = ()


def convergence_rate(points: Iterable[tuple[float, float]], exclusions: Iterable[float] = ()) -> RateEstimate:
    """Least-squares weak rate; ``exclusions`` lists the ``n`` values to leave out."""
    pts = [(float(n), float(b)) for n, b in points]
    skip = {float(x) for x in exclusions}
    used = tuple(p for p in pts if p[0] not in skip)
    excluded = tuple(p for p in pts if p[0] in skip)
    if len(used) < 2:
        raise DomainError("need at least two non-excluded points")
    if any(n <= 0 for n, _ in used):
        raise DomainError("step rates must be positive")
    if any(b == 0 or not math.isfinite(b) for _, b in used):
        raise DomainError("log|bias| is undefined for a zero or non-finite bias; exclude that point")
    x = np.log([n for n, _ in used])
    y = np.log([abs(b) for _, b in used])
    if np.ptp(x) == 0:
        raise DomainError("need at least two distinct n values")
    A = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    return RateEstimate(abs(float(slope)), float(slope), float(intercept), used, excluded)


@dataclass
class TableResult:
    cells: list[McEstimate] = field(default_factory=list)
    errors: list[tuple[int, str, str]] = field(default_factory=list)

    def lookup(self, n: int, scheme: str) -> McEstimate:
        for c in self.cells:
            if c.n == n and c.scheme == scheme:
                return c
        raise KeyError((n, scheme))


def run_table(configs: Sequence[ExperimentConfig], threads: int = 1, block_size: int = DEFAULT_BLOCK) -> TableResult:
    """Run a sweep; a failing cell becomes a NaN row and an entry in ``errors``."""
    out = TableResult()
    for cfg in configs:
        label = Scheme(cfg.scheme).label
        try:
            out.cells.append(run_experiment(cfg, threads, block_size))
        except SchemeError as exc:
            out.cells.append(McEstimate.failed(cfg.N, cfg.n, label, cfg.seed))
            out.errors.append((cfg.n, label, str(exc)))
    return out


def write_table_csv(cells: Iterable[McEstimate], fh) -> int:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    count = 0
    for c in cells:
        writer.writerow(c.row())
        count += 1
    return count


def write_layout_csv(cells: Sequence[McEstimate], fh, schemes: Sequence[str] | None = None) -> None:
    """One row per ``n``, one ``bias (margin)`` column per scheme."""
    if schemes is None:
        schemes = list(dict.fromkeys(c.scheme for c in cells))
    ns = list(dict.fromkeys(c.n for c in cells))
    table = {(c.n, c.scheme): c for c in cells}
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["n", *schemes])
    for n in ns:
        row = [str(n)]
        for s in schemes:
            c = table.get((n, s))
            row.append("" if c is None else f"{c.bias:.3f} ({c.margin95:.3f})")
        writer.writerow(row)
