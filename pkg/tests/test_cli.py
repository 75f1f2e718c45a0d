import csv
import json

import pytest

from nonneg_euler import config
from nonneg_euler.cli import main

LOW_CONFIG = """
[model]
type = "cir"
kappa = 0.5
beta = 0.04
nu = 0.3
x0 = 0.04

[scheme]
kind = "proposed"
law = "two_point"
mu = {mu}

[payoff]
kind = "bond"
T = 2.0
face = 1000.0
reference = "analytic"

[run]
n = {n}
N = {N}
seed = 7
"""

GENCHECK = """
[model]
type = "cir"
kappa = 0.5
beta = 0.04
nu = 0.3
x0 = 0.04

[scheme]
law = "two_point"
mu = 0.8

[gencheck]
n = [8, 32, 128]
quadratic = {q}
constant = {c}
inner = {inner}
outer = {outer}
grid_lo = 0.0
grid_hi = 0.4
grid_count = 41
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def test_price_writes_csv_and_manifest(tmp_path, capsys):
    cfg = _write(tmp_path, "low.toml", LOW_CONFIG.format(mu=0.8, n=160, N=100_000))
    out = tmp_path / "out.csv"
    assert main(["price", cfg, "--out", str(out)]) == 0
    (row,) = _rows(out)
    assert abs(float(row["bias"])) < 3 * float(row["margin95"])
    manifest = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["outputs"] == [str(out)]
    assert "bias" in capsys.readouterr().out


def test_price_infeasible_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.toml", LOW_CONFIG.format(mu=0.9, n=4, N=100))
    assert main(["price", cfg]) == 3
    assert "0.8819" in capsys.readouterr().err


def test_price_zero_paths_exit_code(tmp_path):
    cfg = _write(tmp_path, "zero.toml", LOW_CONFIG.format(mu=0.8, n=4, N=0))
    assert main(["price", cfg]) == 2


def test_price_parse_error(tmp_path):
    cfg = _write(tmp_path, "broken.toml", "[model\ntype=")
    assert main(["price", cfg]) == 2
    assert main(["price", str(tmp_path / "missing.toml")]) == 2


def test_price_sweep_row_count(tmp_path):
    text = LOW_CONFIG.format(mu=0.8, n="[4, 8, 16]", N=500).replace(
        'kind = "proposed"', 'kinds = ["proposed", "b3"]'
    )
    cfg = _write(tmp_path, "sweep.toml", text)
    out = tmp_path / "sweep.csv"
    assert main(["price", cfg, "--out", str(out)]) == 0
    assert len(_rows(out)) == 6


def test_price_bit_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, "low.toml", LOW_CONFIG.format(mu=0.8, n="[4, 8]", N=40_000))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["price", cfg, "--threads", "1", "--out", str(a)]) == 0
    assert main(["price", cfg, "--threads", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_override(tmp_path):
    cfg = _write(tmp_path, "low.toml", LOW_CONFIG.format(mu=0.8, n=4, N=2000))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["price", cfg, "--seed", "7", "--out", str(a)])
    main(["price", cfg, "--seed", "8", "--out", str(b)])
    assert _rows(a)[0]["seed"] == "7" and _rows(b)[0]["seed"] == "8"
    assert _rows(a)[0]["mean"] != _rows(b)[0]["mean"]


def test_table_determinism_and_layout(tmp_path):
    a, b = tmp_path / "t1a.csv", tmp_path / "t1b.csv"
    assert main(["table", "table1", "--scale", "1000", "--out", str(a)]) == 0
    assert main(["table", "table1", "--scale", "1000", "--threads", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(_rows(a)) == 8 * 5
    layout = (tmp_path / "t1a.layout.csv").read_text().splitlines()
    assert layout[0] == "n,Bernoulli,(b1),(b2),(b3),(b4)" and len(layout) == 9


def test_table4_header(tmp_path):
    out = tmp_path / "t4.csv"
    assert main(["table", "table4", "--scale", "10000", "--out", str(out)]) == 0
    assert (tmp_path / "t4.layout.csv").read_text().splitlines()[0] == "n,Bernoulli,(b1),(b2),(b3),(b4)"


def test_table3_pairs_scaled(tmp_path):
    out = tmp_path / "t3.csv"
    assert main(["table", "table3", "--scale", "400000", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [int(r["N"]) for r in rows[:5]] == [10, 40, 62, 250, 1000]
    assert (tmp_path / "t3.layout.csv").read_text().splitlines()[0] == "n,N,bias,margin,RMSE"


def test_rate_on_fixtures(capsys):
    assert main(["rate", "--fixture", "table3"]) == 0
    assert "rate 1.20" in capsys.readouterr().out
    assert main(["rate", "--fixture", "table5"]) == 0
    rate = float(capsys.readouterr().out.split()[1])
    assert rate == pytest.approx(0.654, abs=0.01)


def test_rate_synthetic_and_exclusions(tmp_path):
    rows = "n,bias\n" + "".join(f"{n},{n ** -2.0!r}\n" for n in (4, 8, 16, 32)) + "64,0\n"
    src = _write(tmp_path, "b.csv", rows)
    out = tmp_path / "rate.csv"
    assert main(["rate", src, "--exclude", "64", "--out", str(out)]) == 0
    (row,) = _rows(out)
    assert float(row["rate"]) == pytest.approx(2.0, abs=1e-12)
    assert row["excluded"] == "1"
    assert main(["rate", src]) == 2


def test_rate_filters_table_csv(tmp_path):
    cfg = _write(
        tmp_path, "s.toml",
        LOW_CONFIG.format(mu=0.8, n="[4, 8, 16]", N=2000).replace('kind = "proposed"', 'kinds = ["proposed", "b3"]'),
    )
    out = tmp_path / "s.csv"
    main(["price", cfg, "--out", str(out)])
    assert main(["rate", str(out), "--scheme", "b3"]) == 0


def test_gencheck(tmp_path):
    cfg = _write(tmp_path, "g.toml", GENCHECK.format(q=2.0, c=0.0, inner=0.2, outer=0.6))
    out = tmp_path / "g.csv"
    assert main(["gencheck", cfg, "--out", str(out)]) == 0
    gaps = [float(r["gap"]) for r in _rows(out)]
    assert len(gaps) == 3 and gaps[0] > gaps[1] > gaps[2]
    const = _write(tmp_path, "c.toml", GENCHECK.format(q=0.0, c=1.0, inner=1.0, outer=2.0))
    out2 = tmp_path / "c.csv"
    assert main(["gencheck", const, "--out", str(out2)]) == 0
    assert all(float(r["gap"]) == 0.0 for r in _rows(out2))


def test_gencheck_missing_model(tmp_path):
    cfg = _write(tmp_path, "m.toml", GENCHECK.format(q=2.0, c=0.0, inner=0.2, outer=0.6).split("[scheme]")[0].replace("[model]", "[other]"))
    assert main(["gencheck", cfg]) == 2


def test_config_round_trip():
    for name in config.FIXTURES:
        doc, _ = config.load_fixture(name)
        text = config.dumps(doc)
        assert config.load_text(text) == doc
        assert config.dumps(config.load_text(text)) == text


def test_fixture_sweep_sizes():
    sizes = {}
    for name in config.FIXTURES:
        doc, _ = config.load_fixture(name)
        sizes[name] = sum(len(config.sweep(p).configs()) for p in doc["panel"])
    assert sizes["table1"] == 40 and sizes["table4"] == 30
    doc, _ = config.load_fixture("table3")
    assert config.sweep(doc["panel"][0]).pairs[-1] == (40, 400_000_000)


def test_unknown_model_type():
    with pytest.raises(Exception) as err:
        config.build_model({"type": "sabr"})
    assert "type" in str(err.value)


def test_scale_validation(capsys):
    with pytest.raises(SystemExit):
        main(["table", "table1", "--scale", "-1"])
    with pytest.raises(SystemExit):
        main(["table", "nope"])
