"""Command-line front end: ``price``, ``table``, ``rate`` and ``gencheck``.

Exit codes: 0 success, 2 configuration error, 3 infeasible parameters,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .config import FIXTURES, build_law, build_model, load_file, load_fixture, sweep
from .engine import McEstimate, convergence_rate, run_experiment, run_table, write_layout_csv, write_table_csv
from .errors import ConfigError, DomainError, InfeasibleError, NumericalError
from .generators import SmoothTestFunction, generator_gap, make_grid
from .schemes import Scheme

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


@dataclass
class RunManifest:
    command: str
    source: str
    seed: int | None
    version: str
    wall_clock_s: float
    outputs: list[str]
    argv: list[str]
    scale: str = "1"
    threads: int = 1
    config_text: str = ""
    extra: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _scale(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"invalid scale {text!r}") from exc
    if value <= 0:
        raise argparse.ArgumentTypeError("scale must be positive")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _describe(est: McEstimate) -> str:
    bias = "" if math.isnan(est.bias) else f"  bias {est.bias:+.4f}  rmse {est.rmse:.4f}"
    return (
        f"n={est.n:<5d} {est.scheme:<10s} mean {est.mean:.4f}  stderr {est.stderr:.4f}  "
        f"margin95 {est.margin95:.4f}{bias}  N={est.N}"
    )


def _report_errors(result) -> None:
    for n, label, msg in result.errors:
        print(f"cell n={n} {label} failed: {msg}", file=sys.stderr)


def _write_results(out: Path, cells) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        write_table_csv(cells, fh)


# ------------------------------------------------------------------ commands


def cmd_price(args) -> int:
    t0 = time.perf_counter()
    doc, text = load_file(args.config)
    spec = sweep(doc, args.seed)
    configs = spec.configs(float(args.scale))
    if len(configs) == 1:
        cells = [run_experiment(configs[0], args.threads)]
        errors = []
    else:
        result = run_table(configs, args.threads)
        cells, errors = result.cells, result.errors
        _report_errors(result)
    for est in cells:
        print(_describe(est))
    if args.out:
        out = Path(args.out)
        _write_results(out, cells)
        RunManifest(
            "price", str(args.config), spec.seed, __version__, time.perf_counter() - t0, [str(out)],
            sys.argv[1:], str(args.scale), args.threads, text,
        ).write(_manifest_path(out))
    if errors:
        return _classify(errors)
    return EXIT_OK


def _classify(errors) -> int:
    msgs = " ".join(m for _, _, m in errors)
    return EXIT_NUMERICAL if "non-finite" in msgs else EXIT_INFEASIBLE


def cmd_table(args) -> int:
    t0 = time.perf_counter()
    doc, text = load_fixture(args.fixture)
    panels = doc.get("panel", [])
    cells, errors = [], []
    schemes_seen = []
    for panel in panels:
        spec = sweep(panel, args.seed)
        result = run_table(spec.configs(float(args.scale)), args.threads)
        _report_errors(result)
        cells.extend(result.cells)
        errors.extend(result.errors)
        schemes_seen.extend(s.label for s in spec.schemes if s.label not in schemes_seen)
    out = Path(args.out or f"{args.fixture}.csv")
    _write_results(out, cells)
    layout = out.with_name(out.stem + ".layout.csv")
    with layout.open("w", encoding="utf-8", newline="") as fh:
        if doc.get("layout") == "pairs":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "N", "bias", "margin", "RMSE"])
            for c in cells:
                writer.writerow([c.n, c.N, f"{c.bias:.4f}", f"{c.margin95:.4f}", f"{c.rmse:.4f}"])
        else:
            write_layout_csv(cells, fh, schemes_seen)
    for est in cells:
        print(_describe(est))
    seed = sweep(panels[0], args.seed).seed if panels else None
    RunManifest(
        "table", args.fixture, seed, __version__, time.perf_counter() - t0, [str(out), str(layout)],
        sys.argv[1:], str(args.scale), args.threads, text,
    ).write(_manifest_path(out))
    return _classify(errors) if errors else EXIT_OK


def _read_points(path: str, scheme: str | None):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows or "n" not in rows[0] or "bias" not in rows[0]:
        raise ConfigError("rate input needs a header with 'n' and 'bias' columns")
    if scheme is not None:
        label = Scheme.parse(scheme).label
        rows = [r for r in rows if r.get("scheme") == label]
    try:
        return [(float(r["n"]), float(r["bias"])) for r in rows]
    except ValueError as exc:
        raise ConfigError(f"bad number in {path}: {exc}") from exc


def cmd_rate(args) -> int:
    if args.fixture:
        doc, _ = load_fixture(args.fixture)
        panels = [p for p in doc.get("panel", []) if "reference_bias" in p]
        if not panels:
            raise ConfigError(f"fixture {args.fixture} has no stored bias column")
        if not 0 <= args.panel < len(panels):
            raise ConfigError(f"panel index must be below {len(panels)}")
        panel = panels[args.panel]
        ns = panel["run"]["n"]
        points = list(zip(ns, panel["reference_bias"]))
    elif args.csv:
        points = _read_points(args.csv, args.scheme)
    else:
        raise ConfigError("give a bias CSV or --fixture")
    try:
        est = convergence_rate(points, args.exclude)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"rate {est.rate:.6f}  slope {est.slope:+.6f}  points {len(est.used)}  excluded {len(est.excluded)}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rate", "slope", "intercept", "points", "excluded"])
            writer.writerow([repr(est.rate), repr(est.slope), repr(est.intercept), len(est.used), len(est.excluded)])
    return EXIT_OK


def _gencheck_function(sec: dict, d: int) -> SmoothTestFunction:
    try:
        return SmoothTestFunction.build(
            d,
            constant=sec.get("constant", 0.0),
            linear=sec.get("linear", 0.0),
            quadratic=sec.get("quadratic", 2.0),
            center=sec.get("center", 0.0),
            inner=sec.get("inner", 1.0),
            outer=sec.get("outer"),
        )
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"[gencheck] {exc}") from exc


def cmd_gencheck(args) -> int:
    t0 = time.perf_counter()
    doc, text = load_file(args.config)
    if not isinstance(doc.get("model"), dict):
        raise ConfigError("missing [model] section")
    model = build_model(doc["model"])
    scheme_sec = doc.get("scheme", {})
    law = build_law({**scheme_sec, "kind": "proposed"}, model)
    sec = doc.get("gencheck")
    if not isinstance(sec, dict):
        raise ConfigError("missing [gencheck] section")
    ns = sec.get("n", [8, 32, 128])
    if not ns or not all(isinstance(n, int) and n >= 1 for n in ns):
        raise ConfigError("[gencheck] n must list positive integers")
    f = _gencheck_function(sec, model.d)
    try:
        grid = make_grid(
            model, sec.get("grid_lo", 0.0), sec.get("grid_hi", 1.0), int(sec.get("grid_count", 21)),
            tuple(sec.get("times", [0.0])),
        )
    except DomainError as exc:
        raise ConfigError(f"[gencheck] {exc}") from exc
    rows = []
    for n in ns:
        verdict = model.check(law.mean[: max(model.m, 1)], n)
        if not verdict:
            raise InfeasibleError(f"{model.name} at n={n}: {verdict.reason}")
        rows.append((n, generator_gap(model, law, f, n, grid)))
    out_fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out_fh, lineterminator="\n")
        writer.writerow(["n", "gap"])
        for n, gap in rows:
            writer.writerow([n, repr(gap)])
    finally:
        if args.out:
            out_fh.close()
    if args.out:
        out = Path(args.out)
        RunManifest(
            "gencheck", str(args.config), None, __version__, time.perf_counter() - t0, [str(out)],
            sys.argv[1:], "1", 1, text,
        ).write(_manifest_path(out))
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nneuler", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scale=True):
        p.add_argument("--seed", type=_seed, default=None, help="root seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if scale:
            p.add_argument("--scale", type=_scale, default=Fraction(1), help="divide every path count N by this")
        p.add_argument("--out", default=None, help="CSV output path")

    p = sub.add_parser("price", help="Monte Carlo price from a config file")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("table", help="reproduce a table layout from a bundled fixture")
    p.add_argument("fixture", choices=FIXTURES)
    common(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("rate", help="weak-rate regression of log|bias| on log n")
    p.add_argument("csv", nargs="?", help="CSV with n and bias columns")
    p.add_argument("--fixture", choices=FIXTURES, help="use the stored bias column of a fixture")
    p.add_argument("--panel", type=int, default=0)
    p.add_argument("--scheme", default=None, help="filter rows of a table CSV by scheme")
    p.add_argument("--exclude", type=float, nargs="*", default=[], help="n values left out")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("gencheck", help="generator gap |A_n f - A f| over a grid")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gencheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
