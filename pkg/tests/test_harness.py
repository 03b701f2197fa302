import json
import math

import numpy as np
import pytest

from ssepres import C, harness, oracle
from ssepres.config import ToleranceTable
from ssepres.params import AssumptionError, BoundaryParams

ROBIN = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                       gamma=[1.0, 0.5], delta=[0.9, 0.45])
BALANCED = BoundaryParams(K=2, alpha=[0.5, 0.5], beta=[0.5, 0.5],
                          gamma=[0.5, 0.5], delta=[0.5, 0.5], theta=2.0)
LOOSE = ToleranceTable.from_mapping({"l1_profile": 1.0,
                                     "log_error_slope": 10.0,
                                     "l1_stationary": 1.0,
                                     "j_relative_error": 10.0,
                                     "k_relative_error": 10.0,
                                     "mass_sup_error": 1.0,
                                     "terminal_mass_error": 1.0})


def test_spec_validation():
    with pytest.raises(ValueError, match="2K\\+2"):
        harness.ExperimentSpec(kind=C.HYDRODYNAMIC, params=ROBIN,
                               N_list=[4])
    with pytest.raises(ValueError):
        harness.ExperimentSpec(kind="movie", params=ROBIN)
    with pytest.raises(ValueError):
        harness.ExperimentSpec(kind=C.HYDRODYNAMIC, params=ROBIN,
                               ensemble_size=0)
    with pytest.raises(ValueError):
        harness.ExperimentSpec.from_mapping(
            {"kind": C.HYDRODYNAMIC, "colour": "red"}, ROBIN)
    spec = harness.ExperimentSpec(kind=C.HYDRODYNAMIC, params=ROBIN,
                                  t_grid=[0.2, 0.1], ensemble_size=3)
    assert spec.t_grid == (0.1, 0.2)
    assert len(set(spec.seeds())) == 3
    assert "# alpha = [1.0, 0.5]" in spec.header()


def test_initial_profiles():
    assert harness.initial_profile(0.3, ROBIN, 8)(0.5) == pytest.approx(0.3)
    linear = harness.initial_profile({"linear": [0.2, 0.8]}, ROBIN, 8)
    assert linear(0.5) == pytest.approx(0.5)
    stationary = harness.initial_profile("stationary", ROBIN, 8)
    assert stationary.is_density()
    assert harness.initial_profile([0.1, 0.2, 0.3], ROBIN, 8).m == 2
    with pytest.raises(ValueError):
        harness.initial_profile("random", ROBIN, 8)


def test_report_verdicts():
    report = harness.ComparisonReport("demo", ToleranceTable.from_mapping(
        {"error": {"value": 0.1, "calibrated": False}}))
    report.add("error", 0.05, N=10)
    report.add("note", 123.0)
    assert report.passed
    report.add("error", 0.2, N=20)
    assert not report.passed
    frame = report.to_frame()
    assert list(frame[C.PASSED]) == [True, True, False]
    assert math.isnan(frame[C.TOLERANCE].iloc[1])
    with pytest.raises(ValueError):
        report.add("error", float("nan"))


def test_write_report(tmp_path):
    spec = harness.ExperimentSpec(kind=C.OPERATOR_CHECKS, params=ROBIN)
    report = harness.ComparisonReport(C.OPERATOR_CHECKS, spec.tolerances)
    report.add("decomposition_error", 1e-15)
    report.tables["extra"] = report.to_frame()
    harness.write_report(report, tmp_path, spec)
    metrics = (tmp_path / "operator_checks_metrics.csv").read_text()
    assert metrics.startswith("# ssepres")
    assert (tmp_path / "operator_checks_extra.csv").exists()
    manifest = json.loads(
        (tmp_path / "operator_checks_manifest.json").read_text())
    assert manifest["passed"] is True
    assert manifest["params"]["K"] == 2
    assert list(manifest) == sorted(manifest)


def test_operator_checks_pass():
    spec = harness.ExperimentSpec(kind=C.OPERATOR_CHECKS, params=ROBIN,
                                  n_draws=5000, seed_base=3)
    report = harness.run(spec)
    metrics = set(report.to_frame()[C.METRIC])
    assert {"decomposition_error", "half_mass_error", "ratio_identity_error",
            "ricatti_gap", "decay_bound_excess"} <= metrics
    assert report.passed
    frame = report.to_frame()
    ratio = frame[frame[C.METRIC] == "ratio_identity_error"]
    assert sorted(ratio["K"]) == [1, 2, 3, 4, 5]
    assert ratio[C.PASSED].all()


def test_hydrodynamic_report_is_reproducible(tmp_path):
    outputs = []
    for run in ("a", "b"):
        spec = harness.ExperimentSpec(
            kind=C.HYDRODYNAMIC, params=BALANCED, N_list=[16, 32],
            ensemble_size=8, t_grid=[0.01, 0.02], seed_base=5, pde_m=32,
            cells=8, initial=0.4, tolerances=LOOSE,
            output_dir=tmp_path / run)
        with pytest.warns(UserWarning, match="calibrated"):
            report = harness.run(spec)
        assert report.passed
        outputs.append((tmp_path / run / "hydrodynamic_metrics.csv")
                       .read_bytes())
    assert outputs[0] == outputs[1]
    assert (tmp_path / "a" / "hydrodynamic_profiles.csv").exists()


def test_ficks_law_vanishing_test_function():
    spec = harness.ExperimentSpec(
        kind=C.FICKS_LAW, params=ROBIN, N_list=[16], ensemble_size=4,
        t_grid=[0.01], pde_m=32, initial=0.5, test_function=[0.0],
        tolerances=LOOSE)
    report = harness.run_ficks_law(spec)
    table = report.tables["currents"]
    assert table["j_mean"].iloc[0] == 0
    assert table["k_mean"].iloc[0] == 0
    assert table["j_limit"].iloc[0] == 0
    assert table["k_limit"].iloc[0] == 0


def test_hydrostatic_robin_checks_assumptions():
    slow = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                          gamma=[1.0, 0.5], delta=[0.9, 0.45], theta=2.0)
    with pytest.raises(ValueError):
        harness.run_hydrostatic_robin(harness.ExperimentSpec(
            kind=C.HYDROSTATIC_ROBIN, params=slow))
    not_monotone = BoundaryParams(K=2, alpha=[0.5, 1.0], beta=[0.8, 0.4],
                                  gamma=[1.0, 0.5], delta=[0.9, 0.45])
    with pytest.raises(AssumptionError):
        harness.run_hydrostatic_robin(harness.ExperimentSpec(
            kind=C.HYDROSTATIC_ROBIN, params=not_monotone))
    with pytest.raises(ValueError):
        harness.run_hydrostatic_robin(harness.ExperimentSpec(
            kind=C.HYDRODYNAMIC, params=ROBIN))


def test_neumann_mass_small_run():
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_NEUMANN_MASS, params=BALANCED, N_list=[12],
        ensemble_size=6, t_grid=[0.25, 0.5], m0_list=[0.5],
        tolerances=LOOSE)
    report = harness.run(spec)
    frame = report.to_frame()
    gap = frame[frame[C.METRIC] == "ricatti_gap"]
    assert len(gap) == 1 and gap[C.PASSED].all()
    assert report.tables["fixed_point"]["m_star"].iloc[0] == \
        pytest.approx(0.5, abs=1e-12)
    assert set(report.tables["mass"][C.TIME]) == {0.25, 0.5}


def test_oracle_certify_small_run():
    spec = harness.ExperimentSpec(
        kind=C.ORACLE_CERTIFY, params=ROBIN, N_list=[6], ensemble_size=3000,
        t_grid=[1.0, 3.0], initial=0.5, seed_base=2)
    report = harness.run(spec)
    assert report.passed
    marginals = report.tables["marginals"]
    assert len(marginals) == 2 * 5
    np.testing.assert_allclose(
        marginals.groupby(C.TIME)["exact"].count(), 5)


def test_hydrostatic_robin_small_lattice_matches_stationary_marginals():
    # floor(eps*N) = 0 for N=10, so no replacement gap is reported
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_ROBIN, params=ROBIN, N_list=[10],
        ensemble_size=200, t_grid=[2.0], burn_in=0.5)
    report = harness.run(spec)
    frame = report.to_frame()
    assert "replacement_gap" not in set(frame[C.METRIC])
    assert frame[frame[C.METRIC] == "oracle_sigmas"][C.PASSED].all()
    sites = report.tables["sites"]
    exact = oracle.site_marginals(oracle.stationary(10, ROBIN))
    np.testing.assert_allclose(sites["exact"], exact)
    assert np.all(np.abs(sites["time_average"] - exact)
                  <= 4 * sites["sem"])


def test_neumann_mass_compares_two_thetas():
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_NEUMANN_MASS, params=BALANCED, N_list=[8],
        ensemble_size=20, t_grid=[0.25, 0.5], m0_list=[0.3],
        theta_list=[1.5, 2.0], tolerances=LOOSE)
    report = harness.run(spec)
    assert report.passed
    mass = report.tables["mass"]
    assert set(mass["theta"]) == {1.5, 2.0}
    curves = {theta: group["ricatti"].to_numpy()
              for theta, group in mass.groupby("theta")}
    np.testing.assert_array_equal(curves[1.5], curves[2.0])
    frame = report.to_frame()
    gap = frame[frame[C.METRIC] == "theta_gap_sigmas"]
    assert len(gap) == 1
    assert gap["theta"].iloc[0] == 1.5 and gap["theta_other"].iloc[0] == 2.0
    sup = frame[frame[C.METRIC] == "mass_sup_error"]
    assert set(sup["theta"]) == {1.5, 2.0}


def test_neumann_mass_rejects_fast_reservoirs():
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_NEUMANN_MASS, params=BALANCED, N_list=[8],
        theta_list=[1.0, 2.0])
    with pytest.raises(ValueError, match="theta>1"):
        harness.run_hydrostatic_neumann_mass(spec)


# desk-scale experiments


@pytest.mark.slow
def test_oracle_certification_at_full_scale():
    for theta in (1.0, 2.0):
        params = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                                gamma=[1.0, 0.5], delta=[0.9, 0.45],
                                theta=theta)
        spec = harness.ExperimentSpec(
            kind=C.ORACLE_CERTIFY, params=params, N_list=[6],
            ensemble_size=100000, t_grid=[1.0, 4.0], initial=0.5)
        assert harness.run(spec).passed


@pytest.mark.slow
def test_hydrodynamic_limit_converges():
    spec = harness.ExperimentSpec(
        kind=C.HYDRODYNAMIC, params=ROBIN, N_list=[64, 128, 256],
        ensemble_size=200, t_grid=[0.1], initial={"linear": [0.0, 1.0]},
        seed_base=1)
    assert harness.run(spec).passed


@pytest.mark.slow
def test_ficks_law_from_stationary_start():
    spec = harness.ExperimentSpec(
        kind=C.FICKS_LAW, params=ROBIN, N_list=[256], ensemble_size=200,
        t_grid=[0.1], initial="stationary", test_function=[1.0])
    report = harness.run(spec)
    frame = report.to_frame()
    j_error = frame[frame[C.METRIC] == "j_relative_error"]
    assert j_error[C.PASSED].all()


@pytest.mark.slow
def test_ficks_law_field_vanishes_for_slow_reservoirs():
    slow = BoundaryParams(K=2, alpha=[1.0, 0.5], beta=[0.8, 0.4],
                          gamma=[1.0, 0.5], delta=[0.9, 0.45], theta=2.0)
    spec = harness.ExperimentSpec(
        kind=C.FICKS_LAW, params=slow, N_list=[128], ensemble_size=200,
        t_grid=[0.1], initial={"linear": [0.2, 0.8]})
    frame = harness.run(spec).to_frame()
    assert frame[frame[C.METRIC] == "k_field_sigmas"][C.PASSED].all()


@pytest.mark.slow
def test_hydrostatic_robin_profile():
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_ROBIN, params=ROBIN, N_list=[10, 128],
        ensemble_size=32, t_grid=[2.0], burn_in=1.0)
    report = harness.run(spec)
    assert report.passed
    frame = report.to_frame()
    gap = frame[frame[C.METRIC] == "replacement_gap"]
    assert list(gap[C.N]) == [128]


@pytest.mark.slow
def test_neumann_mass_follows_ricatti():
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_NEUMANN_MASS, params=BALANCED, N_list=[32],
        ensemble_size=100, t_grid=np.linspace(0.25, 4.0, 16),
        m0_list=[0.1])
    assert harness.run(spec).passed


@pytest.mark.slow
def test_neumann_mass_curves_agree_across_thetas():
    spec = harness.ExperimentSpec(
        kind=C.HYDROSTATIC_NEUMANN_MASS, params=BALANCED, N_list=[16],
        ensemble_size=200, t_grid=np.linspace(0.25, 2.0, 8),
        m0_list=[0.1], theta_list=[2.0, 3.0])
    report = harness.run(spec)
    frame = report.to_frame()
    assert frame[frame[C.METRIC] == "theta_gap_sigmas"][C.PASSED].all()
    assert frame[frame[C.METRIC] == "mass_sup_error"][C.PASSED].all()
