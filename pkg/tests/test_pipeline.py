import math

import numpy as np
import pytest

from j2lambert.astro import JUPITER
from j2lambert.bench import build_stress_case
from j2lambert.lambert import LambertError, LambertQuery, solve_kepler_lambert
from j2lambert.mlp import MlpConfig, init_model
from j2lambert.pipeline import (
    ModelLayoutError, PerturbedLambertQuery, predict_correction, solve_perturbed_lambert,
)
from j2lambert.propagator import propagate_rv
from j2lambert.samples import EXTENDED_RANGES, STREAM_BENCH, TABLE1_RANGES, SampleForm, generate_sample, sample_seed
from j2lambert.shooting import ShootingConfig, shoot

from .conftest import KEPLER_JUPITER


def _query(k, ranges=TABLE1_RANGES, body=JUPITER):
    rec = generate_sample(sample_seed(77, k, STREAM_BENCH), ranges, body)
    return rec, PerturbedLambertQuery(rec.r0, rec.rf, rec.tof, rec.revs, body, plane_hint=np.cross(rec.r0, rec.v0))


def _zero_model():
    ci, _ = SampleForm.DV2_SPH.codecs()
    model = init_model(MlpConfig(10, 3, (6,), input_codec=ci, output_codec=("raw", "raw", "raw")))
    for p in model.params():
        p[...] = 0.0
    return model


def test_cold_start_is_shooting_from_keplerian_guess():
    _, q = _query(0)
    res = solve_perturbed_lambert(q, cold_start=True)
    kep = solve_kepler_lambert(LambertQuery(q.r0, q.rf, q.tof, JUPITER.mu, 0, plane_hint=q.plane_hint))[0]
    ref = shoot(q.r0, kep.v0, q.rf, q.tof, JUPITER, ShootingConfig())
    assert np.array_equal(res.v_d, kep.v0)
    assert np.array_equal(res.dnn_correction, np.zeros(3))
    assert np.array_equal(res.v0, ref.v0) and res.iterations == ref.iterations
    assert res.converged and res.terminal_error < 1e-3


def test_zero_output_model_matches_cold_start():
    _, q = _query(1)
    model = _zero_model()
    a = solve_perturbed_lambert(q, model)
    b = solve_perturbed_lambert(q, cold_start=True)
    assert np.array_equal(a.dnn_correction, np.zeros(3))
    assert np.array_equal(a.v0, b.v0)


def test_keplerian_body_needs_no_iterations():
    _, q = _query(2, EXTENDED_RANGES, KEPLER_JUPITER)
    res = solve_perturbed_lambert(q, cold_start=True)
    assert res.converged and res.iterations == 0
    assert res.keplerian_error < 1e-3


def test_propagation_accounting():
    for k in range(3):
        _, q = _query(10 + k, EXTENDED_RANGES)
        res = solve_perturbed_lambert(q, cold_start=True)
        n_candidates = 1 if q.revs == 0 else 2
        assert res.setup_propagations == n_candidates
        assert res.shooting.propagations == 4 * res.iterations + 1
        assert res.propagations == n_candidates + 4 * res.iterations + 1


def test_dnn_accounting_ranks_corrected_branches():
    _, q = _query(11, EXTENDED_RANGES.for_revs(2))
    res = solve_perturbed_lambert(q, _zero_model())
    assert res.setup_propagations == 4
    assert res.shooting.propagations == 4 * res.iterations + 1
    _, q0 = _query(12)
    assert solve_perturbed_lambert(q0, _zero_model()).setup_propagations == 1


def test_trained_model_improves_single_revolution_guess(guess_model):
    improved = 0
    for k in range(20):
        rec, q = _query(100 + k)
        res = solve_perturbed_lambert(q, guess_model)
        assert res.converged and res.terminal_error <= 1e-3
        kep_err = np.linalg.norm(rec.v0 - res.v_d)
        dnn_err = np.linalg.norm(rec.v0 - res.v_d - res.dnn_correction)
        improved += dnn_err < kep_err
    assert improved >= 14


def test_pipeline_is_deterministic(guess_model):
    _, q = _query(7, EXTENDED_RANGES.for_revs(3))
    a, b = solve_perturbed_lambert(q, guess_model), solve_perturbed_lambert(q, guess_model)
    assert np.array_equal(a.v0, b.v0) and a.iterations == b.iterations


def test_correction_is_rotation_covariant(guess_model):
    # the field is symmetric about the spin axis, so a rotated query wants a rotated correction
    rec, _ = _query(3)
    r_fd, _ = propagate_rv(rec.r0, rec.v_d, rec.tof, JUPITER)
    phi = 0.7
    R = np.array([[math.cos(phi), -math.sin(phi), 0], [math.sin(phi), math.cos(phi), 0], [0, 0, 1]])
    a = predict_correction(guess_model, rec.r0, rec.v_d, rec.rf - r_fd, rec.tof)
    b = predict_correction(guess_model, R @ rec.r0, R @ rec.v_d, R @ (rec.rf - r_fd), rec.tof)
    # exact only to the extent the network learned the symmetry
    assert np.linalg.norm(R @ a - b) < 0.5 * np.linalg.norm(a) + 1e-3


def test_coincident_branch():
    sc = build_stress_case(np.random.default_rng(4), 360, 0, JUPITER, TABLE1_RANGES)
    q = PerturbedLambertQuery(sc.r0, sc.rf, sc.tof, sc.lambert_revs, JUPITER, plane_hint=sc.normal)
    res = solve_perturbed_lambert(q, cold_start=True)
    assert res.branch == "coincident"
    assert res.converged
    assert np.array_equal(res.dnn_correction, np.zeros(3))
    assert res.setup_propagations > 0


def test_model_layout_errors():
    _, q = _query(0)
    with pytest.raises(ModelLayoutError):
        solve_perturbed_lambert(q)
    wrong = init_model(MlpConfig(7, 3, (4,)))
    with pytest.raises(ModelLayoutError):
        solve_perturbed_lambert(q, wrong)
    tagged = _zero_model()
    tagged.meta["form"] = "dv1-Sph"
    with pytest.raises(ModelLayoutError):
        solve_perturbed_lambert(q, tagged)


def test_query_validation():
    with pytest.raises(LambertError):
        PerturbedLambertQuery([1e5, 0, 0], [0, 1e5, 0], 0.0, 0, JUPITER)
    with pytest.raises(LambertError):
        PerturbedLambertQuery([1e5, 0, 0], [0, 1e5, 0], 10.0, -1, JUPITER)


def test_timings_recorded():
    _, q = _query(0)
    res = solve_perturbed_lambert(q, _zero_model())
    assert {"lambert", "keplerian_propagation", "correction", "branch_selection", "shooting"} <= set(res.timings)
    assert res.total_time == pytest.approx(sum(res.timings.values()))
