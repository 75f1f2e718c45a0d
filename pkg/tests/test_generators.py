import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonneg_euler.errors import DomainError
from nonneg_euler.increments import GaussianLaw, TwoPointLaw, make_bivariate_two_point, make_linear_mix
from nonneg_euler.models import CEV, CIR, GBM, GarchSV, TwoFactorCIR
from nonneg_euler.generators import (
    GridSpec,
    SmoothTestFunction,
    apply_discrete_generator,
    apply_generator,
    generator_gap,
    jump_free_n,
    make_grid,
    plateau,
)

LOW = CIR(0.5, 0.04, 0.3, 0.04)
SQUARE = SmoothTestFunction.build(1, quadratic=2.0, inner=0.2, outer=0.6)


def _psi_mp(t):
    return mp.exp(-1 / t) if t > 0 else mp.mpf(0)


def _plateau_mp(s):
    if s <= 0:
        return mp.mpf(1)
    if s >= 1:
        return mp.mpf(0)
    return _psi_mp(1 - s) / (_psi_mp(s) + _psi_mp(1 - s))


def _mp_function(constant, linear, Q, center, inner, outer):
    # independent high-precision transcription of the cut-off quadratic
    def F(*x):
        z = [mp.mpf(x[i]) - mp.mpf(center[i]) for i in range(len(x))]
        d = len(z)
        p = mp.mpf(constant) + sum(linear[i] * z[i] for i in range(d))
        p += sum(z[i] * Q[i][j] * z[j] for i in range(d) for j in range(d)) / 2
        for i in range(d):
            p *= _plateau_mp((abs(z[i]) - mp.mpf(inner[i])) / (mp.mpf(outer[i]) - mp.mpf(inner[i])))
        return p

    return F


def test_plateau_shape():
    v, d1, d2 = plateau(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert list(v[[0, 1, 3, 4]]) == [1.0, 1.0, 0.0, 0.0]
    assert v[2] == pytest.approx(0.5)
    assert d1[2] < 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    f = SmoothTestFunction.build(
        2, constant=0.3, linear=[0.5, -1.0], quadratic=[[2.0, 0.4], [0.4, 1.0]], center=[0.1, 0.2],
        inner=[0.3, 0.5], outer=[0.9, 1.2],
    )
    x = np.array([0.1, 0.2]) + rng.uniform(-1.1, 1.1, 2)
    mp.mp.dps = 40
    F = _mp_function(0.3, [0.5, -1.0], [[2.0, 0.4], [0.4, 1.0]], [0.1, 0.2], [0.3, 0.5], [0.9, 1.2])
    pt = tuple(float(v) for v in x)
    grad = [float(mp.diff(F, pt, o)) for o in ((1, 0), (0, 1))]
    order = lambda i, j: tuple(int(k == i) + int(k == j) for k in range(2))
    hess = [[float(mp.diff(F, pt, order(i, j))) for j in range(2)] for i in range(2)]
    assert np.allclose(f.gradient(x), grad, rtol=1e-6, atol=1e-12)
    assert np.allclose(f.hessian(x), hess, rtol=1e-6, atol=1e-12)


def test_support_radius():
    f = SmoothTestFunction.build(1, quadratic=2.0, inner=0.2, outer=0.6)
    assert f.radius == 0.6
    x = np.array([[0.61], [-0.7], [3.0]])
    assert np.all(f(x) == 0) and np.all(f.gradient(x) == 0) and np.all(f.hessian(x) == 0)


def test_generator_examples():
    x = np.array([[0.04]])
    assert apply_generator(LOW, SQUARE, 0.0, x)[0] == pytest.approx(0.0036, rel=1e-13)
    assert apply_discrete_generator(LOW, TwoPointLaw(0.8), 4, SQUARE, 0.0, x)[0] == pytest.approx(0.0036, rel=1e-12)
    ident = SmoothTestFunction.build(1, linear=1.0, inner=5.0, outer=10.0)
    assert apply_generator(LOW, ident, 0.0, x)[0] == pytest.approx(0.0, abs=1e-18)


def test_constant_function_gives_zero():
    c = SmoothTestFunction.build(1, constant=3.0, inner=5.0, outer=10.0)
    x = np.linspace(0, 0.4, 9)[:, None]
    assert np.all(apply_generator(LOW, c, 0.0, x) == 0)
    assert np.all(apply_discrete_generator(LOW, TwoPointLaw(0.8), 4, c, 0.0, x) == 0)
    assert generator_gap(LOW, TwoPointLaw(0.8), c, 4, make_grid(LOW, 0.0, 0.4, 9)) == 0.0


@pytest.mark.parametrize("n", [4, 9, 50])
def test_linear_function_recovers_drift(n):
    ident = SmoothTestFunction.build(1, linear=1.0, inner=5.0, outer=10.0)
    x = np.linspace(0, 0.4, 9)[:, None]
    out = apply_discrete_generator(LOW, TwoPointLaw(0.8), n, ident, 0.0, x)
    assert np.allclose(out, LOW.drift(0.0, x)[:, 0], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("n", [4, 16, 100])
def test_quadratic_gap_identity_cir(n):
    x = np.linspace(0, 0.1, 11)[:, None]
    law = TwoPointLaw(0.8)
    gap = apply_discrete_generator(LOW, law, n, SQUARE, 0.0, x) - apply_generator(LOW, SQUARE, 0.0, x)
    b = LOW.drift(0.0, x)[:, 0]
    assert np.allclose(gap, b**2 / n, rtol=1e-9, atol=1e-15)


def test_quadratic_gap_identity_gbm():
    gbm = GBM(0.05, 0.2, 1.0)
    f = SmoothTestFunction.build(1, quadratic=2.0, center=0.0, inner=2.5, outer=6.0)
    x = np.linspace(0.1, 2.0, 11)[:, None]
    for n in (8, 32):
        gap = apply_discrete_generator(gbm, TwoPointLaw(1.0), n, f, 0.0, x) - apply_generator(gbm, f, 0.0, x)
        assert np.allclose(gap, (0.05 * x[:, 0]) ** 2 / n, rtol=1e-9)


def test_quadratic_gap_identity_two_dim():
    m = TwoFactorCIR(0.04, 0.03, 0.5, 0.1, 0.1, 0.4, 0.3, (0.04, 0.03))
    law = make_bivariate_two_point(0.8, 0.8, 0.3)
    H = np.array([[2.0, 0.6], [0.6, 1.0]])
    f = SmoothTestFunction.build(2, quadratic=H, inner=2.0, outer=4.0)
    x = np.array([[0.04, 0.03], [0.1, 0.0], [0.0, 0.2]])
    n = 16
    gap = apply_discrete_generator(m, law, n, f, 0.0, x) - apply_generator(m, f, 0.0, x)
    b = m.drift(0.0, x)
    assert np.allclose(gap, np.einsum("ki,ij,kj->k", b, H, b) / (2 * n), rtol=1e-9, atol=1e-16)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(4, 200))
def test_discrete_generator_is_linear(alpha, gamma, n):
    f = SQUARE
    g = SmoothTestFunction.build(1, constant=1.0, linear=-2.0, quadratic=0.5, center=0.1, inner=0.3, outer=0.8)
    x = np.linspace(0, 0.4, 7)[:, None]
    law = TwoPointLaw(0.8)
    combo = alpha * apply_discrete_generator(LOW, law, n, f, 0.0, x) + gamma * apply_discrete_generator(LOW, law, n, g, 0.0, x)

    class Sum:
        def __call__(self, y):
            return alpha * f(y) + gamma * g(y)

    direct = _discrete_by_hand(LOW, law, n, Sum(), x)
    assert np.allclose(combo, direct, rtol=1e-9, atol=1e-12)


def _discrete_by_hand(model, law, n, fn, x):
    values, probs = law.atoms()
    out = np.zeros(x.shape[0])
    for v, p in zip(values, probs):
        y = x + model.drift(0.0, x) / n + model.factor_diag(0.0, x) * (v - law.mean) / np.sqrt(n)
        out += p * n * (fn(y) - fn(x))
    return out


def test_monte_carlo_generator_reports_stderr():
    law = GaussianLaw(1)
    gbm = GBM(0.05, 0.2, 1.0)
    f = SmoothTestFunction.build(1, quadratic=2.0, inner=2.5, outer=6.0)
    x = np.array([[1.0]])
    val, err = apply_discrete_generator(gbm, law, 50, f, 0.0, x, samples=200_000, seed=3, return_stderr=True)
    exact = apply_generator(gbm, f, 0.0, x)[0] + 0.05**2 / 50
    assert err[0] > 0
    assert abs(val[0] - exact) < 4 * err[0]


def test_points_outside_state_space_rejected():
    with pytest.raises(DomainError):
        apply_discrete_generator(LOW, TwoPointLaw(0.8), 4, SQUARE, 0.0, np.array([[-0.1]]))
    with pytest.raises(DomainError):
        make_grid(LOW, -0.1, 0.4, 5)


def _decreasing(model, law, f, grid, ns=(8, 32, 128)):
    gaps = [generator_gap(model, law, f, n, grid) for n in ns]
    return gaps, all(a > b for a, b in zip(gaps, gaps[1:]))


def test_gap_decreases_cir():
    gaps, ok = _decreasing(LOW, TwoPointLaw(0.8), SQUARE, make_grid(LOW, 0.0, 0.4, 41))
    assert ok, gaps


def test_gap_decreases_gbm():
    gbm = GBM(0.05, 0.2, 1.0)
    f = SmoothTestFunction.build(1, quadratic=2.0, inner=2.5, outer=6.0)
    gaps, ok = _decreasing(gbm, TwoPointLaw(1.0), f, make_grid(gbm, 0.0, 2.0, 21))
    assert ok, gaps


def test_gap_decreases_cev():
    cev = CEV(lambda x: 0.02 - 0.5 * np.asarray(x), 0.5, 0.3, 0.75, 0.04)
    gaps, ok = _decreasing(cev, TwoPointLaw(0.8), SQUARE, make_grid(cev, 0.0, 0.4, 41))
    assert ok, gaps


def test_gap_decreases_garch():
    m = GarchSV(0.02, 0.5, 0.3, 0.05, -0.3, 0.04, 100.0)
    law = make_linear_mix(-0.3, 0.8, 1.0)
    f = SmoothTestFunction.build(2, quadratic=2.0, center=[0.0, np.log(100)], inner=0.5, outer=1.5)
    grid = make_grid(m, [0.0, np.log(100) - 0.3], [0.4, np.log(100) + 0.3], 11)
    gaps, ok = _decreasing(m, law, f, grid)
    assert ok, gaps


def test_time_grid():
    grid = make_grid(LOW, 0.0, 0.4, 5, times=(0.0, 1.0))
    assert grid.x.shape == (10, 1) and list(np.unique(grid.t)) == [0.0, 1.0]
    assert isinstance(GridSpec([[0.1]], 0.0).t, np.ndarray)


def test_jump_free_n():
    grid = make_grid(LOW, 0.0, 0.4, 41)
    law = TwoPointLaw(0.8)
    n = jump_free_n(LOW, law, grid, 0.05)
    values, _ = law.atoms()

    def biggest(k):
        x = grid.x
        moves = LOW.drift(0.0, x)[:, None, :] / k + LOW.factor_diag(0.0, x)[:, None, :] * (values - law.mean) / np.sqrt(k)
        return np.abs(moves).max()

    assert biggest(n) < 0.05
    assert all(biggest(k) < 0.05 for k in (n + 1, 2 * n, 10 * n))
    # n is minimal for the monotone bound |b|/n + |sigma (e - mu)|/sqrt(n)
    x = grid.x
    drift = np.abs(LOW.drift(0.0, x)).max()
    spread = np.abs(LOW.factor_diag(0.0, x)[:, None, :] * (values - law.mean)).max()
    assert drift / (n - 1) + spread / np.sqrt(n - 1) >= 0.05
    assert jump_free_n(LOW, GaussianLaw(1), grid, 0.05) is None
