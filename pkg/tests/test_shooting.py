import numpy as np
import pytest

from j2lambert.astro import JUPITER, DomainError
from j2lambert.propagator import propagate_rv
from j2lambert.samples import TABLE1_RANGES, generate_sample
from j2lambert.shooting import (
    ShootingConfig, SingularJacobianError, finite_diff_jacobian, newton_correction, shoot,
)

from .conftest import KEPLER_JUPITER, random_orbit


@pytest.fixture(scope="module")
def sample():
    return generate_sample(123, TABLE1_RANGES.for_revs(0), JUPITER)


def test_short_flight_jacobian_is_time_times_identity():
    s, _ = random_orbit(np.random.default_rng(1))
    H = finite_diff_jacobian(s.position, s.velocity, 1.0, JUPITER)
    # entries carry forward-difference roundoff of a couple of ulps of |rf| over dv
    floor = 2 * np.spacing(np.abs(s.position).max()) / 1e-6
    assert np.all(np.abs(np.diag(H) - 1.0) < floor + 1e-6)
    off = H[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < floor + 1e-6)


def _central(r0, v, tof, body, h):
    H = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        rp, _ = propagate_rv(r0, v + e, tof, body)
        rm, _ = propagate_rv(r0, v - e, tof, body)
        H[:, j] = (rp - rm) / (2 * h)
    return H


def test_jacobian_matches_central_differences():
    s, T = random_orbit(np.random.default_rng(2), KEPLER_JUPITER)
    H = finite_diff_jacobian(s.position, s.velocity, 0.4 * T, KEPLER_JUPITER)
    ref = _central(s.position, s.velocity, 0.4 * T, KEPLER_JUPITER, 1e-7)
    assert np.max(np.abs(H - ref) / np.abs(ref).max()) < 1e-4


def test_jacobian_step_sensitivity():
    s, T = random_orbit(np.random.default_rng(3))
    H1 = finite_diff_jacobian(s.position, s.velocity, 0.3 * T, JUPITER, 1e-6)
    H2 = finite_diff_jacobian(s.position, s.velocity, 0.3 * T, JUPITER, 5e-7)
    assert np.max(np.abs(H1 - H2) / np.abs(H1).max()) < 1e-4


def test_fixed_point(sample):
    res = shoot(sample.r0, sample.v0, sample.rf, sample.tof, JUPITER)
    assert res.converged and res.iterations == 0
    assert np.array_equal(res.v0, sample.v0)
    assert res.propagations == 1


def test_converges_from_keplerian_guess(sample):
    res = shoot(sample.r0, sample.v_d, sample.rf, sample.tof, JUPITER)
    assert res.converged and res.terminal_error <= 1e-3
    assert res.propagations == 4 * res.iterations + 1
    assert res.initial_error == pytest.approx(np.linalg.norm(sample.delta_rf), rel=1e-9)


def test_zero_budget(sample):
    res = shoot(sample.r0, sample.v_d, sample.rf, sample.tof, JUPITER, ShootingConfig(max_iter=0))
    assert not res.converged and res.iterations == 0 and res.status == "max_iter"
    assert res.terminal_error == res.initial_error
    assert res.terminal_error == pytest.approx(np.linalg.norm(sample.delta_rf), rel=1e-9)


def test_best_iterate_never_worse(sample):
    for cfg in (ShootingConfig(max_iter=1), ShootingConfig(max_iter=2, step_limit=1e-4)):
        res = shoot(sample.r0, sample.v_d, sample.rf, sample.tof, JUPITER, cfg)
        assert res.terminal_error <= res.initial_error


def test_deterministic(sample):
    a = shoot(sample.r0, sample.v_d, sample.rf, sample.tof, JUPITER)
    b = shoot(sample.r0, sample.v_d, sample.rf, sample.tof, JUPITER)
    assert np.array_equal(a.v0, b.v0) and a.iterations == b.iterations


def test_singular_jacobian():
    with pytest.raises(SingularJacobianError):
        newton_correction(np.diag([1.0, 1.0, 0.0]), np.ones(3))


def test_non_finite_guess_rejected(sample):
    with pytest.raises(DomainError):
        shoot(sample.r0, [np.nan, 0, 0], sample.rf, sample.tof, JUPITER)


@pytest.mark.parametrize("kw", [dict(tol=0), dict(max_iter=-1), dict(dv_step=0), dict(step_limit=-1.0)])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        ShootingConfig(**kw)
