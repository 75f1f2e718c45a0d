import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonneg_euler.errors import DomainError, InfeasibleError
from nonneg_euler.increments import GaussianLaw, TwoPointLaw, make_linear_mix
from nonneg_euler.models import CIR, GBM, Heston, cir_mean_at
from nonneg_euler.schemes import (
    Interpolation,
    PathGrid,
    Scheme,
    interpolate,
    lattice_specialize,
    n_steps,
    simulate_path,
    simulate_paths,
    step,
    write_path_dump,
)
from nonneg_euler.streams import SeededStream

LOW = CIR(0.5, 0.04, 0.3, 0.04)
HESTON = Heston(2.0, 0.09, 1.0, 0.05, -0.3, 0.09, 100.0)


def test_proposed_step_at_zero_increment():
    y = step(Scheme.PROPOSED, LOW, 0, [0.04], [0.0], 4, mu=[0.8])
    assert y[0] == pytest.approx(0.016, abs=1e-15)


def test_proposed_step_at_mean_is_pure_drift():
    y = step(Scheme.PROPOSED, LOW, 0, [0.07], [0.8], 4, mu=[0.8])
    assert y[0] == pytest.approx(0.07 + 0.5 * (0.04 - 0.07) / 4, abs=1e-16)


def test_b3_step_example():
    y = step(Scheme.B3, LOW, 0, 0.0001, -3.0, 4)
    assert float(y) == pytest.approx(0.0005875, abs=1e-15)


def test_b1_carries_negative_state():
    y = step(Scheme.B1, LOW, 0, -0.01, 1.0, 4)
    assert float(y) == pytest.approx(-0.00375, abs=1e-15)


def test_b2_and_b4_definitions():
    y, z, n = -0.01, 1.0, 4
    assert float(step(Scheme.B2, LOW, 0, y, z, n)) == pytest.approx(y + 0.5 * 0.04 / n)
    expect = y + 0.5 * (0.04 - y) / n + 0.3 * math.sqrt(0.01) * z / 2
    assert float(step(Scheme.B4, LOW, 0, y, z, n)) == pytest.approx(expect)


def test_step_domain_errors():
    with pytest.raises(DomainError):
        step(Scheme.B3, LOW, 0, -0.001, 0.0, 4)
    with pytest.raises(DomainError):
        step(Scheme.PROPOSED, LOW, 0, [-0.001], [0.0], 4, mu=[0.8])


def test_step_count():
    assert n_steps(4, 2.0) == 9
    assert n_steps(5, 5.0) == 26
    assert n_steps(3, 0.5) == 2
    assert n_steps(7, 0.0) == 1


def test_zero_horizon_path():
    g = simulate_path(Scheme.PROPOSED, LOW, TwoPointLaw(0.8), 4, 0.0, SeededStream(1))
    assert g.values.shape == (2, 1)
    assert interpolate(g)(0.0) == 0.04


def test_path_is_deterministic_and_replayable():
    law = TwoPointLaw(0.8)
    full = simulate_paths(Scheme.PROPOSED, LOW, law, 8, 2.0, 99, np.arange(50))
    again = simulate_paths(Scheme.PROPOSED, LOW, law, 8, 2.0, 99, np.arange(50))
    assert np.array_equal(full, again)
    single = simulate_path(Scheme.PROPOSED, LOW, law, 8, 2.0, SeededStream(99, 37))
    assert np.array_equal(single.values, full[37])
    subset = simulate_paths(Scheme.PROPOSED, LOW, law, 8, 2.0, 99, [3, 41, 7])
    assert np.array_equal(subset, full[[3, 41, 7]])


def test_grid_replays_through_step():
    # each update is a pure function of (k, y, draw)
    law = TwoPointLaw(0.8)
    n = 4
    g = simulate_path(Scheme.PROPOSED, LOW, law, n, 2.0, SeededStream(5, 2))
    u = SeededStream(5, 2).uniforms(g.values.shape[0] - 1)
    y = g.values[0]
    for k in range(g.values.shape[0] - 1):
        y = step(Scheme.PROPOSED, LOW, k, y, law.from_uniforms(u[k : k + 1]), n, mu=law.mean)
        assert np.array_equal(y, g.values[k + 1])


def test_nonnegative_cir_paths():
    v = simulate_paths(Scheme.PROPOSED, LOW, TwoPointLaw(0.8), 40, 2.0, 3, np.arange(100_000))
    assert v.min() >= 0.0


def test_infeasible_run_is_reported_with_path():
    with pytest.raises(DomainError, match="path"):
        simulate_paths(Scheme.PROPOSED, CIR(0.5, 0.04, 1.0, 0.0), TwoPointLaw(2.0), 2, 2.0, 0, np.arange(100))


def test_cir_mean_matches_recursion():
    n, T, k, N = 4, 2.0, 8, 1_000_000
    model = CIR(0.5, 0.04, 0.3, 0.08)
    v = simulate_paths(Scheme.PROPOSED, model, TwoPointLaw(0.8), n, T, 17, np.arange(N))[:, k, 0]
    target = cir_mean_at(0.5, 0.04, 0.08, n, k)
    assert abs(v.mean() - target) < 3 * v.std(ddof=1) / math.sqrt(N)


def test_cir_variance_approaches_exact():
    kappa, beta, nu, x0, T = 0.5, 0.04, 0.3, 0.04, 2.0
    e = math.exp(-kappa * T)
    exact = x0 * nu**2 / kappa * (e - e**2) + beta * nu**2 / (2 * kappa) * (1 - e) ** 2
    errs = []
    for n in (4, 64):
        v = simulate_paths(Scheme.PROPOSED, LOW, TwoPointLaw(0.8), n, T, 8, np.arange(200_000))[:, n * 2, 0]
        errs.append(abs(v.var(ddof=1) / exact - 1))
    assert errs[1] < 0.03
    assert errs[1] < errs[0]


def test_linear_interpolation_examples():
    g = PathGrid(4, 0.25, np.array([[0.04], [0.016]]), Scheme.PROPOSED)
    x = interpolate(g)
    assert x(0.125) == pytest.approx(0.028)
    assert x(0.0) == 0.04 and x(0.25) == 0.016


def test_abs_piecewise_constant():
    g = PathGrid(4, 0.5, np.array([[0.01], [-0.002], [0.03]]), Scheme.B4)
    x = interpolate(g, Interpolation.ABS_PIECEWISE_CONSTANT)
    assert x(0.3) == pytest.approx(0.002)
    assert x(0.25) == pytest.approx(0.002)
    assert x(0.1) == 0.01


def test_interpolation_rejects_out_of_range():
    g = PathGrid(4, 0.25, np.array([[0.04], [0.016]]), Scheme.PROPOSED)
    with pytest.raises(DomainError):
        interpolate(g)(0.3)
    with pytest.raises(DomainError):
        interpolate(g)(-0.01)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 50), st.integers(0, 10_000))
def test_linear_interpolant_hits_grid_values(n, seed):
    g = simulate_path(Scheme.PROPOSED, LOW, TwoPointLaw(0.8), max(n, 4), 1.0, SeededStream(seed))
    x = interpolate(g)
    ks = np.arange(g.values.shape[0] - 1)
    ks = ks[ks / g.n <= 1.0]
    assert np.array_equal(x(ks / g.n), g.values[ks, 0])


def test_lattice_example():
    lat = lattice_specialize((0.05, 0.2), 1.0, 100)
    assert lat.u_n == pytest.approx(1.0205) and lat.d_n == pytest.approx(0.9805)
    assert lat.p_up == 0.5
    growth = 1 + 0.05 / 100
    assert (growth - lat.d_n) / (lat.u_n - lat.d_n) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(-0.2, 0.2), st.floats(0.05, 1.0), st.floats(0.2, 3.0), st.integers(10, 500))
def test_lattice_probability_identity(beta0, nu0, mu, n):
    if 1 + beta0 / n - nu0 * mu / math.sqrt(n) <= 0:
        return
    lat = lattice_specialize((beta0, nu0), mu, n)
    growth = 1 + beta0 / n
    assert 0 < lat.d_n < growth < lat.u_n
    assert lat.p_up == pytest.approx((growth - lat.d_n) / (lat.u_n - lat.d_n), rel=1e-12)
    assert lat.p_up == pytest.approx(mu**2 / (1 + mu**2), rel=1e-14)


def test_lattice_rejects_infeasible():
    with pytest.raises(InfeasibleError):
        lattice_specialize((0.0, 1.0), 5.0, 4)


def test_lattice_exhaustive_small_k():
    gbm, mu, n = GBM(0.05, 0.2, 1.0), 0.8, 16
    law = TwoPointLaw(mu)
    lat = lattice_specialize(gbm, mu, n)
    for k in range(1, 11):
        reached = set()
        for outcome in itertools.product([0.0, law.v], repeat=k):
            y = gbm.x0
            for j, e in enumerate(outcome):
                y = step(Scheme.PROPOSED, gbm, j, y, [e], n, mu=law.mean)
            reached.add(round(float(y[0]), 12))
        assert len(reached) == k + 1
        assert np.allclose(sorted(reached), lat.states(1.0, k), rtol=1e-12)


def test_lattice_simulated_paths_on_tree():
    gbm, mu, n = GBM(0.05, 0.2, 1.0), 0.8, 16
    lat = lattice_specialize(gbm, mu, n)
    paths = simulate_paths(Scheme.PROPOSED, gbm, TwoPointLaw(mu), n, 20 / 16, 2, np.arange(5000))[:, :, 0]
    for k in range(21):
        nodes = lat.states(1.0, k)
        dist = np.min(np.abs(paths[:, k, None] - nodes[None, :]), axis=1)
        assert dist.max() < 1e-12 * nodes.max()


def test_heston_gaussian_schemes_fix_variance():
    y = np.array([[-0.01, math.log(100)]])
    z = np.array([[0.5, -1.0]])
    w = -0.3 * 0.5 + math.sqrt(0.91) * -1.0
    for scheme, vf in ((Scheme.B1, 0.0), (Scheme.B2, 0.0), (Scheme.B4, 0.01)):
        out = step(scheme, HESTON, 0, y, z, 5)
        expect = math.log(100) + (0.05 - vf / 2) / 5 + math.sqrt(vf) * w / math.sqrt(5)
        assert out[0, 1] == pytest.approx(expect)


def test_heston_proposed_paths():
    law = make_linear_mix(-0.3, 0.657, 1.0)
    v = simulate_paths(Scheme.PROPOSED, HESTON, law, 5, 5.0, 1, np.arange(20000))
    assert v[:, :, 0].min() >= 0
    assert v.shape == (20000, 27, 2)


def test_gaussian_schemes_need_square_root_leg():
    with pytest.raises(DomainError):
        simulate_paths(Scheme.B1, GBM(0.05, 0.2, 1.0), None, 4, 1.0, 0, [0])
    with pytest.raises(DomainError):
        simulate_paths(Scheme.PROPOSED, LOW, GaussianLaw(1), 4, 1.0, 0, [0])


def test_scheme_labels():
    assert [s.label for s in Scheme] == ["Bernoulli", "(b1)", "(b2)", "(b3)", "(b4)"]
    assert Scheme.parse("(b3)") is Scheme.B3 and Scheme.parse("Bernoulli") is Scheme.PROPOSED


def test_path_dump_header():
    v = simulate_paths(Scheme.PROPOSED, LOW, TwoPointLaw(0.8), 4, 0.5, 12, [0, 1])
    buf = io.StringIO()
    write_path_dump(buf, v, Scheme.PROPOSED, 4, 0.5, 12)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# scheme=proposed,n=4,T=0.5,seed=12"
    assert lines[1] == "path,coord,y0,y1,y2,y3"
    assert len(lines) == 4
    assert [float(s) for s in lines[2].split(",")[2:]] == list(v[0, :, 0])
