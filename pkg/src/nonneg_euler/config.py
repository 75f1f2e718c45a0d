"""TOML experiment configs: parsing, validation and serialization.

A config has four sections::

    [model]    type = "cir" | "heston" | "gbm" | "cev" | "affine" | "two_factor_cir" | "garch_sv"
    [scheme]   kind, law, mu, mu3, rho, interpolation
    [payoff]   kind, T, face, strike, barrier, coordinates, cap, reference
    [run]      n (int or list), N (int or list), seed

plus an optional ``[gencheck]`` section for generator diagnostics.  Table
fixtures hold one or more ``[[panel]]`` entries, each a config of that shape.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analytic import cir_bond_price, heston_call_price
from .engine import ExperimentConfig
from .errors import ConfigError, DomainError
from .increments import GaussianLaw, make_bivariate_two_point, make_linear_mix, make_two_point
from .models import CEV, CIR, GBM, Affine, GarchSV, Heston, ModelSpec, TwoFactorCIR
from .payoffs import PathFunctional, PayoffKind
from .schemes import Scheme

__all__ = [
    "FIXTURES",
    "load_text",
    "load_file",
    "load_fixture",
    "dumps",
    "build_model",
    "build_law",
    "build_payoff",
    "reference_price",
    "sweep",
    "RunSpec",
]

FIXTURES = ("table1", "table2", "table3", "table4", "table5")

_MODEL_FIELDS = {
    "cir": (CIR, {"kappa": None, "beta": None, "nu": None, "x0": None}),
    "heston": (Heston, {"kappa": None, "beta": None, "nu": None, "r": None, "rho": None, "v0": None, "s0": None}),
    "gbm": (GBM, {"beta": None, "nu": None, "x0": None}),
    "cev": (CEV, {"b0": None, "b1": 0.0, "nu": None, "alpha": None, "x0": None}),
    "affine": (Affine, {"h0": 0.0, "h1": 1.0, "k0": None, "k1": 0.0, "r0": 0.0}),
    "two_factor_cir": (
        TwoFactorCIR,
        {"beta1": None, "beta2": None, "lam11": None, "lam12": 0.0, "lam21": 0.0, "lam22": None, "rho": None,
         "x0": [0.04, 0.04]},
    ),
    "garch_sv": (GarchSV, {"alpha": None, "lam": None, "nu": None, "beta": None, "rho": None, "v0": None, "s0": None}),
}


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"missing [{name}] section")
    return sec


def _fields(sec: dict, spec: dict, where: str) -> dict:
    unknown = set(sec) - set(spec) - {"type"}
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, default in spec.items():
        if key in sec:
            out[key] = sec[key]
        elif default is None:
            raise ConfigError(f"[{where}] missing key '{key}'")
        else:
            out[key] = default
    return out


def build_model(sec: dict) -> ModelSpec:
    kind = sec.get("type")
    if kind not in _MODEL_FIELDS:
        raise ConfigError(f"[model] type must be one of {sorted(_MODEL_FIELDS)}, got {kind!r}")
    cls, spec = _MODEL_FIELDS[kind]
    p = _fields(sec, spec, "model")
    try:
        if kind == "cir":
            return CIR(p["kappa"], p["beta"], p["nu"], p["x0"])
        if kind == "gbm":
            return GBM(p["beta"], p["nu"], p["x0"])
        if kind == "cev":
            b0, b1 = float(p["b0"]), float(p["b1"])
            return CEV(lambda x: b0 + b1 * np.asarray(x, dtype=float), abs(b1), p["nu"], p["alpha"], p["x0"])
        if kind == "two_factor_cir":
            x0 = tuple(float(v) for v in p.pop("x0"))
            return TwoFactorCIR(**p, x0_value=x0)
        return cls(**p)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"[model] {exc}") from exc


def build_law(sec: dict, model: ModelSpec):
    scheme = Scheme.parse(str(sec.get("kind", "proposed")))
    if scheme is not Scheme.PROPOSED:
        return None
    law = sec.get("law", "two_point")
    try:
        if law == "two_point":
            return make_two_point(float(sec["mu"]))
        if law == "bivariate_two_point":
            mu1, mu2 = sec["mu"]
            return make_bivariate_two_point(mu1, mu2, float(sec.get("rho", getattr(model, "rho", 0.0))))
        if law == "linear_mix":
            mu = sec["mu"]
            mu1 = float(mu[0] if isinstance(mu, list) else mu)
            rho = float(sec.get("rho", getattr(model, "rho", 0.0)))
            base3 = GaussianLaw(1) if sec.get("base3") == "gaussian" else None
            return make_linear_mix(rho, mu1, float(sec.get("mu3", 1.0)), base3)
    except KeyError as exc:
        raise ConfigError(f"[scheme] missing key {exc}") from exc
    except DomainError as exc:
        raise ConfigError(f"[scheme] {exc}") from exc
    raise ConfigError(f"[scheme] unknown law {law!r}")


_PAYOFF_KEYS = {
    "kind", "T", "face", "strike", "barrier", "price_coord", "price_is_log", "rate_coord",
    "const_rate", "cap", "reference",
}


def build_payoff(sec: dict) -> PathFunctional:
    unknown = set(sec) - _PAYOFF_KEYS
    if unknown:
        raise ConfigError(f"[payoff] unknown keys: {', '.join(sorted(unknown))}")
    try:
        kind = PayoffKind(sec["kind"])
        if kind is PayoffKind.CUSTOM:
            raise ConfigError("[payoff] custom payoffs are library-only")
        kwargs = {k: sec[k] for k in _PAYOFF_KEYS - {"kind", "T", "reference"} if k in sec}
        if kind is PayoffKind.BOND:
            kwargs.setdefault("rate_coord", 0)
        return PathFunctional(kind, float(sec["T"]), **kwargs)
    except KeyError as exc:
        raise ConfigError(f"[payoff] missing key {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[payoff] {exc}") from exc


def reference_price(sec: dict, model: ModelSpec, payoff: PathFunctional) -> float | None:
    """``reference`` may be a number, ``"analytic"`` or absent."""
    ref = sec.get("reference")
    if ref is None:
        return None
    if isinstance(ref, (int, float)):
        return float(ref)
    if ref != "analytic":
        raise ConfigError(f"[payoff] reference must be a number or 'analytic', got {ref!r}")
    if isinstance(model, CIR) and payoff.kind is PayoffKind.BOND:
        return cir_bond_price(model.kappa, model.beta, model.nu, model.x0_value, payoff.T, payoff.face)
    if isinstance(model, Heston) and payoff.kind is PayoffKind.EURO_CALL:
        return heston_call_price(model, payoff.strike, payoff.T)
    raise ConfigError(f"no analytic reference for {payoff.kind.value} under {model.name}")


def _as_list(value, name):
    values = value if isinstance(value, list) else [value]
    if not values:
        raise ConfigError(f"[run] {name} must not be empty")
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"[run] {name} must hold positive integers, got {v!r}")
    return values


@dataclass(frozen=True)
class RunSpec:
    """Resolved sweep: schemes times ``(n, N)`` pairs for one model and payoff."""

    model: ModelSpec
    payoff: PathFunctional
    schemes: tuple[Scheme, ...]
    pairs: tuple[tuple[int, int], ...]
    seed: int
    laws: dict
    reference: float | None
    interpolation: str | None

    def configs(self, scale: float = 1.0) -> list[ExperimentConfig]:
        out = []
        for n, N in self.pairs:
            N_scaled = max(1, int(round(N / scale)))
            for s in self.schemes:
                out.append(
                    ExperimentConfig(
                        self.model, s, self.payoff, n, N_scaled, self.seed, self.laws[s], self.reference,
                        self.interpolation,
                    )
                )
        return out


def sweep(doc: dict, seed: int | None = None) -> RunSpec:
    """Resolve a config document (or one fixture panel) into a :class:`RunSpec`."""
    model = build_model(_section(doc, "model"))
    scheme_sec = _section(doc, "scheme")
    kinds = scheme_sec.get("kinds", [scheme_sec.get("kind", "proposed")])
    try:
        schemes = tuple(Scheme.parse(str(k)) for k in kinds)
    except ValueError as exc:
        raise ConfigError(f"[scheme] {exc}") from exc
    laws = {s: build_law({**scheme_sec, "kind": s.value}, model) for s in schemes}
    payoff_sec = _section(doc, "payoff")
    payoff = build_payoff(payoff_sec)
    run = _section(doc, "run")
    if "n" not in run or "N" not in run:
        raise ConfigError("[run] needs n and N")
    ns, Ns = _as_list(run["n"], "n"), _as_list(run["N"], "N")
    if len(Ns) == 1:
        Ns = Ns * len(ns)
    if len(Ns) != len(ns):
        raise ConfigError("[run] N must be a single value or match the length of n")
    if seed is None:
        seed = run.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    interp = scheme_sec.get("interpolation")
    return RunSpec(
        model, payoff, schemes, tuple(zip(ns, Ns)), seed, laws,
        reference_price(payoff_sec, model, payoff), interp,
    )


def load_text(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc


def load_file(path) -> tuple[dict, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load_text(text), text


def load_fixture(name: str) -> tuple[dict, str]:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    text = resources.files("nonneg_euler").joinpath("fixtures", f"{name}.toml").read_text(encoding="utf-8")
    return load_text(text), text


def dumps(doc: dict) -> str:
    """Serialize a config document; ``load_text(dumps(d)) == d``."""
    clean = copy.deepcopy(doc)
    return tomli_w.dumps(clean)
