import numpy as np
import pytest

from ssepres import C
from ssepres import boundary_operators as bo
from ssepres.params import (AggregateRates, AssumptionError, BoundaryParams,
                            aggregates)


def test_d_op_end_values():
    p = bo.DPair([1.0, 0.5, 0.2], [0.7, 0.3, 0.1])
    assert bo.d_op(p, 0.0) == pytest.approx(1.0)
    assert bo.d_op(p, 1.0) == pytest.approx(-0.7)
    # K=1 is linear
    linear = bo.DPair([2.0], [3.0])
    assert bo.d_op(linear, 0.4) == pytest.approx(2.0 * 0.6 - 3.0 * 0.4)


def test_d_op_domain():
    p = bo.DPair([1.0], [1.0])
    assert bo.d_op(p, 1.0 + 1e-10) == bo.d_op(p, 1.0)
    with pytest.raises(ValueError):
        bo.d_op(p, 1.1)
    values = bo.d_op(p, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(values, [1.0, 0.0, -1.0])


def test_dpair_validation():
    with pytest.raises(ValueError):
        bo.DPair([1.0, 0.5], [1.0])
    with pytest.raises(ValueError):
        bo.DPair([-1.0], [1.0])
    p = bo.DPair([1.0], [2.0])
    assert p.swapped() == bo.DPair([2.0], [1.0])


def test_difference_identity_on_random_draws():
    rng = np.random.default_rng(12)
    for _ in range(200):
        K = int(rng.integers(1, 6))
        p = bo.DPair(rng.random(K), rng.random(K))
        y = rng.random(50)
        z = rng.random(50)
        identity = bo.d_op(p, y) - bo.d_op(p, z) + (y - z) * bo.v_op(p, y, z)
        assert np.max(np.abs(identity)) <= 1e-12


def test_v_op_positive_for_monotone_rates():
    p = bo.DPair([1.0, 0.6, 0.2], [0.9, 0.5, 0.5])
    grid = np.linspace(0, 1, 21)
    y, z = np.meshgrid(grid, grid)
    assert np.all(bo.v_op(p, y, z) > 0)


def test_v_corners_constant_sequences():
    p = bo.DPair([0.7, 0.7, 0.7], [0.4, 0.4, 0.4])
    corners = bo.v_corners(p)
    assert corners[(1, 0)] == pytest.approx(0.7 + 0.4)
    assert corners[(0, 1)] == pytest.approx(0.7 + 0.4)
    assert corners[(0, 0)] == pytest.approx(0.0 + 3 * 0.4)


def test_d_inverse():
    p = bo.DPair([1.0, 0.5], [0.8, 0.2])
    for f in (0.0, 0.2, 0.73, 1.0):
        assert bo.d_inverse(p, bo.d_op(p, f)) == pytest.approx(f, abs=1e-12)
    with pytest.raises(ValueError):
        bo.d_inverse(p, 2.0)


def test_mass_fixed_point_symmetric_rates():
    for K in range(1, 6):
        rates = tuple(np.linspace(1.0, 0.2, K))
        m_star = bo.mass_fixed_point(AggregateRates(rates, rates))
        assert m_star == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3, 4, 5])
def test_mass_fixed_point_constant_rates(K):
    i_rate, o_rate = 0.9, 0.3
    m = bo.mass_fixed_point(AggregateRates((i_rate,) * K, (o_rate,) * K))
    ratio = (1 - m ** K) / (1 - (1 - m) ** K)
    assert ratio == pytest.approx(o_rate / i_rate, abs=1e-10)


def test_mass_fixed_point_needs_h1():
    with pytest.raises(AssumptionError):
        bo.mass_fixed_point(AggregateRates((0.0, 0.0), (1.0, 0.5)))


@pytest.mark.parametrize("i_seq,o_seq", [
    ((1.0, 0.5), (1.0, 0.2)),
    ((1.0, 0.2), (1.0, 0.5)),
    ((1.0, 1.0), (1.0, 1.0)),
])
def test_ricatti_closed_form_matches_rk4(i_seq, o_seq):
    agg = AggregateRates(i_seq, o_seq)
    sol = bo.ricatti_coefficients(agg)
    assert sol.m_star == pytest.approx(bo.mass_fixed_point(agg), abs=1e-12)
    for m0 in (0.0, 0.1, 0.9, 1.0):
        trajectory = bo.ricatti_integrate(agg, m0, 10.0, dt=1e-3)
        t = trajectory[C.TIME].to_numpy()
        closed = bo.ricatti_k2(agg, m0, t)
        assert np.max(np.abs(closed - trajectory[C.MASS])) <= 1e-8
        assert not trajectory[C.CLIPPED].any()


def test_ricatti_linear_case_is_flagged():
    sol = bo.ricatti_coefficients(AggregateRates((1.0, 1.0), (1.0, 1.0)))
    assert sol.linear
    assert sol.m_star == pytest.approx(0.5)
    assert bo.ricatti_k2(AggregateRates((1.0, 1.0), (1.0, 1.0)), 0.5, 3.0) \
        == pytest.approx(0.5)


def test_ricatti_integrate_ends_at_t_end():
    agg = AggregateRates((1.0, 0.5), (0.8, 0.5))
    trajectory = bo.ricatti_integrate(agg, 0.2, 0.0105, dt=1e-3)
    assert trajectory[C.TIME].iloc[-1] == pytest.approx(0.0105)
    with pytest.raises(ValueError):
        bo.ricatti_integrate(agg, 0.2, 1.0, dt=0.0)


def test_exponential_decay_bound():
    agg = AggregateRates((1.0, 0.5), (1.0, 0.2))
    m_star = bo.mass_fixed_point(agg)
    p = bo.DPair.aggregate(agg)
    trajectory = bo.ricatti_integrate(agg, 0.05, 10.0)
    m = trajectory[C.MASS].to_numpy()
    t = trajectory[C.TIME].to_numpy()
    v_min = np.min(bo.v_op(p, m, np.full_like(m, m_star)))
    bound = abs(0.05 - m_star) * np.exp(-v_min * t)
    assert np.all(np.abs(m - m_star) <= bound + 1e-10)


def test_stationary_profile_solves_boundary_equations():
    params = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                            gamma=[1.0, 0.5], delta=[0.9, 0.45])
    profile = bo.stationary_profile(params)
    left, right = profile.residuals(params)
    assert abs(left) < 1e-10
    assert abs(right) < 1e-10
    assert 0 <= profile.rho0 <= 1 and 0 <= profile.rho1 <= 1
    assert profile(0.5) == pytest.approx((profile.rho0 + profile.rho1) / 2)


def test_stationary_profile_other_ordering():
    # delta_1 > alpha_1 and beta_1 > gamma_1
    params = BoundaryParams(K=2, alpha=[0.3, 0.1], beta=[1.0, 0.5],
                            gamma=[0.4, 0.2], delta=[0.9, 0.3])
    profile = bo.stationary_profile(params)
    left, right = profile.residuals(params)
    assert abs(left) < 1e-10
    assert abs(right) < 1e-10


def test_stationary_profile_symmetric_rates_is_flat():
    params = BoundaryParams.linear_robin(1.0, 1.0, 1.0, 1.0)
    profile = bo.stationary_profile(params)
    assert profile.rho0 == pytest.approx(0.5, abs=1e-12)
    assert profile.rho1 == pytest.approx(0.5, abs=1e-12)


def test_stationary_profile_linear_robin_closed_form():
    a, b, g, d = 1.0, 0.5, 0.6, 0.8
    profile = bo.stationary_profile(BoundaryParams.linear_robin(a, b, g, d))
    # rho1 - rho0 = -(a - (a+g) rho0) = b - (b+d) rho1
    matrix = np.array([[-1 - (a + g), 1.0], [-1.0, 1 + (b + d)]])
    rho0, rho1 = np.linalg.solve(matrix, [-a, b])
    assert profile.rho0 == pytest.approx(rho0, abs=1e-12)
    assert profile.rho1 == pytest.approx(rho1, abs=1e-12)


def test_stationary_profile_requires_h0_h2():
    params = BoundaryParams(K=2, alpha=[0.5, 1.0], beta=[0.8, 0.4],
                            gamma=[1.0, 0.5], delta=[0.9, 0.45])
    with pytest.raises(AssumptionError):
        bo.stationary_profile(params)


def test_symmetric_current_drives_mass_to_half():
    agg = aggregates(BoundaryParams.symmetric_current(3, 0.5, theta=2))
    assert bo.mass_fixed_point(agg) == pytest.approx(0.5, abs=1e-12)


def test_swapping_rates_reflects_the_operator():
    p = bo.DPair([1.0, 0.6, 0.2], [0.9, 0.5, 0.1])
    m = np.linspace(0, 1, 101)
    np.testing.assert_allclose(bo.d_op(p, m), -bo.d_op(p.swapped(), 1 - m),
                               atol=1e-14)
    agg = AggregateRates((1.2, 0.7, 0.3), (0.5, 0.4, 0.4))
    swapped = AggregateRates(agg.o_seq, agg.i_seq)
    assert bo.mass_fixed_point(swapped) == pytest.approx(
        1 - bo.mass_fixed_point(agg), abs=1e-12)


def test_v_op_is_symmetric():
    rng = np.random.default_rng(5)
    for K in range(1, 6):
        p = bo.DPair(rng.random(K), rng.random(K))
        y = rng.random(100)
        z = rng.random(100)
        np.testing.assert_allclose(bo.v_op(p, y, z), bo.v_op(p, z, y),
                                   rtol=1e-14, atol=1e-15)


def test_d_op_strictly_decreasing():
    rng = np.random.default_rng(8)
    grid = np.linspace(0, 1, 1001)
    for K in range(1, 6):
        lam = np.sort(0.1 + rng.random(K))[::-1]
        sigma = np.sort(0.1 + rng.random(K))[::-1]
        values = bo.d_op(bo.DPair(lam, sigma), grid)
        assert np.all(np.diff(values) < 0)
