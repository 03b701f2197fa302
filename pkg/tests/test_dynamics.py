import numpy as np
import pytest

from ssepres import C, dynamics, oracle, utils
from ssepres.params import BoundaryParams

PARAMS = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                        gamma=[1.0, 0.5], delta=[0.9, 0.45])


def test_overlapping_windows_are_rejected():
    with pytest.raises(ValueError, match="overlapping"):
        dynamics.init(5, PARAMS, dynamics.ConstantDensity(0.5), seed=1)


def test_reference_rates_of_small_configuration():
    # N=6, sites 1..5, K=2
    occupation = [1, 0, 0, 1, 1]
    table = dynamics.compute_rates(occupation, 6, PARAMS)
    np.testing.assert_array_equal(table.bulk, [1, 0, 1, 0])
    scale = 1 / 6
    # left: x=1 removes the particle at site 1 (gamma_1), x=2 creates at
    # the empty site 2 behind the occupied site 1 (alpha_2)
    np.testing.assert_allclose(table.boundary[0], [scale * 1.0, scale * 0.5])
    # right: x=1 removes at site 5 (delta_1); site 4 is occupied and site 5
    # is not empty, so x=2 is inactive
    np.testing.assert_allclose(table.boundary[1], [scale * 0.9, 0.0])
    assert table.total == pytest.approx(2 + scale * (1.0 + 0.5 + 0.9))


def test_cached_rates_match_reference_along_trajectory():
    state = dynamics.init(12, PARAMS, dynamics.ConstantDensity(0.5), seed=3)
    for _ in range(2000):
        dynamics.step(state)
        cached = dynamics.rates(state)
        fresh = dynamics.rates(state, reference=True)
        assert cached.nonzero_channels() == fresh.nonzero_channels()
        np.testing.assert_allclose(cached.boundary, fresh.boundary,
                                   rtol=1e-12)
    state.check_invariants()


def test_step_reports_events_and_advances_time():
    state = dynamics.init(10, PARAMS, dynamics.ConstantDensity(0.5), seed=5)
    event = dynamics.step(state)
    assert isinstance(event, dynamics.Event)
    assert event.dt_micro > 0
    assert state.t_micro == pytest.approx(event.dt_micro)
    assert state.n_events == 1


def test_absorbing_configuration():
    # no creation, no removal on the full lattice, so the all-empty
    # configuration is frozen
    params = BoundaryParams(K=1, alpha=[0.0], beta=[0.0], gamma=[1.0],
                            delta=[1.0])
    state = dynamics.init(6, params, dynamics.ExplicitBits([0] * 5), seed=1)
    assert dynamics.step(state) is dynamics.ABSORBED
    with pytest.warns(UserWarning, match="absorbed"):
        log = dynamics.run_until(state, 1.0)
    assert log.absorbed
    np.testing.assert_array_equal(state.occupation, 0)


def test_same_seed_same_trajectory():
    runs = []
    for _ in range(2):
        state = dynamics.init(20, PARAMS, dynamics.ConstantDensity(0.3),
                              seed=11)
        log = dynamics.run_until(state, 0.05,
                                 sample_times=[0.01, 0.02, 0.05])
        runs.append((state.occupation.copy(), state.j_current.copy(),
                     log.to_frame()))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    np.testing.assert_array_equal(runs[0][1], runs[1][1])
    assert runs[0][2].equals(runs[1][2])


def test_currents_satisfy_continuity():
    state = dynamics.init(16, PARAMS, dynamics.ConstantDensity(0.5), seed=2)
    dynamics.run_until(state, 0.1, debug=True)
    state.check_invariants()
    assert state.k_current[2:-2].sum() == 0


def test_boundary_slowdown_scales_rates():
    slow = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                          gamma=[1.0, 0.5], delta=[0.9, 0.45], theta=2.0)
    table = dynamics.compute_rates([0, 0, 0, 0, 0, 0, 0], 8, slow)
    np.testing.assert_allclose(table.boundary, [[1 / 64, 0.0],
                                                [0.8 / 64, 0.0]])


def test_time_scale():
    assert dynamics.time_scale(10, 2.0, C.DIFFUSIVE) == 100
    assert dynamics.time_scale(10, 2.0, C.SUBDIFFUSIVE) == 1000
    with pytest.raises(ValueError):
        dynamics.time_scale(10, 2.0, "ballistic")


def test_derive_seed_is_stable_and_distinct():
    seeds = [dynamics.derive_seed(42, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [dynamics.derive_seed(42, i) for i in range(100)]


def test_ensemble_does_not_depend_on_workers():
    seeds = [dynamics.derive_seed(0, i) for i in range(6)]
    results = []
    for workers in (1, 3):
        states, logs = dynamics.run_ensemble(
            14, PARAMS, dynamics.ConstantDensity(0.5), seeds, 0.02,
            sample_times=[0.01, 0.02], workers=workers)
        merged = dynamics.ObservationLog.merge(logs).to_frame()
        results.append((np.array([s.occupation for s in states]), merged))
    np.testing.assert_array_equal(results[0][0], results[1][0])
    assert results[0][1].equals(results[1][1])
    assert set(results[0][1][C.SEED]) == set(seeds)


def test_time_averager_matches_constant_configuration():
    # rates vanish for a full lattice without removal
    params = BoundaryParams(K=1, alpha=[1.0], beta=[1.0], gamma=[0.0],
                            delta=[0.0])
    state = dynamics.init(8, params, dynamics.ConstantDensity(1.0), seed=1)
    averager = dynamics.TimeAverager(burn_in=0.5)
    with pytest.warns(UserWarning):
        dynamics.run_until(state, 1.0, observers=(averager,),
                           sample_times=[0.25, 0.5, 0.75, 1.0])
    assert len(averager.averages) == 2
    np.testing.assert_allclose(averager.overall(), 1.0)


def test_snapshots_and_csv_header(tmp_path):
    state = dynamics.init(10, PARAMS, dynamics.BernoulliProfile(
        lambda u: u), seed=4)
    log = dynamics.run_until(state, 0.01, sample_times=[0.005, 0.01],
                             keep_snapshots=True)
    assert len(log.snapshots) == 2
    assert log.snapshots[-1][1].shape == (9,)
    path = tmp_path / "trajectory.csv"
    log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# N = 10"
    assert any(line.startswith("# alpha = ") for line in lines)


def test_first_event_race_between_two_reservoirs():
    # empty lattice, K=1: the only channels are creation at site 1 and at
    # site N-1, so the left one fires first with alpha/(alpha+beta)
    params = BoundaryParams.linear_robin(1.0, 0.5, 1.0, 1.0)
    n = 4000
    left = 0
    for i in range(n):
        state = dynamics.init(4, params, dynamics.ExplicitBits([0, 0, 0]),
                              seed=dynamics.derive_seed(8, i))
        event = dynamics.step(state)
        assert isinstance(event.kind, dynamics.BoundaryFlip)
        assert event.kind.created
        left += event.kind.side == "-"
    p = 1.0 / 1.5
    assert abs(left / n - p) <= 4 * utils.binomial_sigma(p, n)


def test_bernoulli_initial_sample_has_the_profile_mean():
    half = dynamics.BernoulliProfile(lambda u: np.full_like(u, 0.5))
    samples = np.array([
        dynamics.init(100, PARAMS, half,
                      seed=dynamics.derive_seed(21, i)).occupation
        for i in range(50)])
    assert set(np.unique(samples)) <= {0, 1}
    assert abs(samples.mean() - 0.5) <= 3 * utils.binomial_sigma(
        0.5, samples.size)


def test_zero_horizon_leaves_state_unchanged():
    state = dynamics.init(12, PARAMS, dynamics.ConstantDensity(0.5), seed=9)
    log = dynamics.run_until(state, 0.0)
    np.testing.assert_array_equal(state.occupation, state.initial_occupation)
    assert state.t_micro == 0.0
    assert state.n_events == 0
    np.testing.assert_array_equal(state.j_current, 0)
    np.testing.assert_array_equal(state.k_current, 0)
    assert len(log.rows) == 1


def test_long_run_occupation_matches_stationary_marginals():
    params = BoundaryParams.linear_robin(1.0, 0.5, 0.6, 0.8)
    seeds = [dynamics.derive_seed(31, i) for i in range(200)]
    _, logs = dynamics.run_ensemble(
        6, params, dynamics.ConstantDensity(0.5), seeds, 11.0,
        sample_times=[1.0, 11.0],
        observers_factory=lambda: (dynamics.TimeAverager(burn_in=1.0),))
    averages = np.array([log.occupation_average for log in logs])
    exact = oracle.site_marginals(oracle.stationary(6, params))
    sigmas = utils.max_sigmas(averages.mean(axis=0), exact,
                              utils.standard_error(averages))
    assert sigmas <= 4.0


def test_time_averages_do_not_depend_on_workers():
    seeds = [dynamics.derive_seed(3, i) for i in range(6)]
    results = []
    for workers in (1, 3):
        _, logs = dynamics.run_ensemble(
            14, PARAMS, dynamics.ConstantDensity(0.5), seeds, 0.04,
            sample_times=[0.01, 0.02, 0.03, 0.04], workers=workers,
            observers_factory=lambda: (
                dynamics.TimeAverager(burn_in=0.01),))
        assert all(log.occupation_average is not None for log in logs)
        results.append(np.array([log.occupation_average for log in logs]))
    np.testing.assert_array_equal(results[0], results[1])
    assert results[0].shape == (6, 13)
    assert np.all((results[0] >= 0) & (results[0] <= 1))


def test_invariants_catch_a_stale_total_rate():
    state = dynamics.init(12, PARAMS, dynamics.ConstantDensity(0.5), seed=6)
    dynamics.run_until(state, 0.01)
    state.check_invariants()
    table = dynamics.rates(state)
    assert table.total == pytest.approx(table.resummed_total(), rel=1e-12)
    state._chan[0] += 0.5
    with pytest.raises(AssertionError, match="total rate"):
        state.check_invariants()
