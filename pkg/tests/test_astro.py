import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from j2lambert.astro import (
    JUPITER, BodyParams, DomainError, OrbitalElements, StateCartesian, angle_between,
    angular_momentum_z, cart_to_spherical, cart_to_spherical_rows, elements_to_state,
    get_body, j2_acceleration, j2_energy, kepler_propagate, load_body_catalog, orbital_period,
    spherical_to_cart, spherical_to_cart_rows, state_to_elements,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
vectors = st.tuples(finite, finite, finite).map(np.array)


def test_two_body_limit_on_axis():
    body = JUPITER.with_j2(0.0)
    r = 1.0e6
    a = j2_acceleration(StateCartesian([r, 0, 0], [0, 0, 0]), body)
    assert a[0] == pytest.approx(-body.mu / r**2, rel=1e-15)
    assert a[1] == 0.0 and a[2] == 0.0


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_equatorial_points_have_no_vertical_pull(x, y):
    if math.hypot(x, y) < 1e3:
        return
    assert j2_acceleration(np.array([x, y, 0.0]), JUPITER)[2] == 0.0


def test_polar_point():
    r = 4.0e5
    a = j2_acceleration(np.array([0.0, 0.0, r]), JUPITER)
    expected = -(JUPITER.mu / r**2) * (1 - 3 * JUPITER.j2 * (JUPITER.radius / r) ** 2)
    assert a[2] == pytest.approx(expected, rel=1e-14)
    assert a[0] == 0.0 and a[1] == 0.0


@given(vectors)
def test_zero_j2_is_point_mass(p):
    if np.linalg.norm(p) < 1.0:
        return
    body = JUPITER.with_j2(0.0)
    r = np.linalg.norm(p)
    expected = -body.mu * p / r**3
    np.testing.assert_allclose(j2_acceleration(p, body), expected, rtol=1e-14, atol=0)


def test_acceleration_is_gradient_of_potential():
    # energy = v^2/2 + U, so a = -grad U; check by central differences
    p = np.array([6.1e5, -2.3e5, 3.4e5])
    zero_v = np.zeros(3)
    h = 1.0
    grad = np.array([
        (j2_energy(p + h * e, zero_v, JUPITER) - j2_energy(p - h * e, zero_v, JUPITER)) / (2 * h)
        for e in np.eye(3)
    ])
    np.testing.assert_allclose(j2_acceleration(p, JUPITER), -grad, rtol=1e-7)


def test_zero_radius_rejected():
    with pytest.raises(DomainError):
        j2_acceleration(np.zeros(3), JUPITER)


def test_period_normalized_units():
    assert orbital_period(1.0, 4 * math.pi**2) == pytest.approx(1.0, rel=1e-15)


def test_period_jupiter_15_radii():
    # independent 30-digit evaluation
    assert orbital_period(15 * 71492.0, JUPITER.mu) == pytest.approx(619922.928848315237, rel=1e-14)


@given(st.floats(1e3, 1e8))
def test_period_scaling(a):
    assert orbital_period(2 * a, JUPITER.mu) / orbital_period(a, JUPITER.mu) == pytest.approx(2**1.5, rel=1e-14)


@pytest.mark.parametrize("a", [0.0, -1.0])
def test_period_needs_positive_axis(a):
    with pytest.raises(DomainError):
        orbital_period(a, JUPITER.mu)


def test_spherical_fixed_points():
    assert cart_to_spherical([1, 0, 0]).as_tuple() == (1.0, 0.0, 0.0)
    assert cart_to_spherical([0, 0, 5]).as_tuple() == (5.0, 0.0, math.pi / 2)
    assert cart_to_spherical([0, 0, 0]).as_tuple() == (0.0, 0.0, 0.0)


@given(vectors)
def test_spherical_round_trip(v):
    n = np.linalg.norm(v)
    if n < 1e-3:
        return
    back = spherical_to_cart(cart_to_spherical(v))
    assert np.linalg.norm(back - v) <= 1e-12 * n


def test_spherical_angle_ranges_on_many_inputs():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(100_000, 3)) * rng.lognormal(0, 3, size=(100_000, 1))
    v[:10, :2] = 0.0
    v[10:20, 1] = -1e-300
    s = cart_to_spherical_rows(v)
    assert np.all((s[:, 1] >= 0) & (s[:, 1] < 2 * math.pi))
    assert np.all(np.abs(s[:, 2]) <= math.pi / 2)
    err = np.linalg.norm(spherical_to_cart_rows(s) - v, axis=1)
    assert np.all(err <= 1e-12 * np.linalg.norm(v, axis=1))


def test_rowwise_matches_scalar():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(50, 3))
    rows = cart_to_spherical_rows(v)
    for k in range(50):
        np.testing.assert_allclose(rows[k], cart_to_spherical(v[k]).as_tuple(), rtol=1e-15, atol=1e-15)


def test_circular_equatorial_round_trip():
    oe = OrbitalElements(1.2e6, 0.0, 0.0, 0.0, 0.0, 1.0)
    back = state_to_elements(elements_to_state(oe, JUPITER.mu), JUPITER.mu)
    assert back.a == pytest.approx(oe.a, rel=1e-9)
    assert back.e == 0.0 and back.i == 0.0 and back.raan == 0.0 and back.argp == 0.0
    assert back.mean_anomaly == pytest.approx(1.0, abs=1e-9)


def test_inclined_eccentric_round_trip():
    oe = OrbitalElements(1.0e6, 0.3, 0.5, 1.1, 2.2, 3.3)
    back = state_to_elements(elements_to_state(oe, JUPITER.mu), JUPITER.mu)
    for name in ("a", "e", "i", "raan", "argp", "mean_anomaly"):
        assert getattr(back, name) == pytest.approx(getattr(oe, name), rel=1e-10, abs=1e-10), name


@given(
    st.floats(4e5, 2e6), st.floats(0.01, 0.9), st.floats(0.01, 3.1),
    st.floats(0, 6.28), st.floats(0, 6.28), st.floats(0, 6.28),
)
def test_elements_state_round_trip(a, e, i, raan, argp, m):
    s = elements_to_state(OrbitalElements(a, e, i, raan, argp, m), JUPITER.mu)
    s2 = elements_to_state(state_to_elements(s, JUPITER.mu), JUPITER.mu)
    np.testing.assert_allclose(s2.position, s.position, rtol=0, atol=1e-7 * a)
    np.testing.assert_allclose(s2.velocity, s.velocity, rtol=0, atol=1e-7 * np.linalg.norm(s.velocity))


@pytest.mark.parametrize("a", [0.0, -5.0])
def test_non_positive_axis_rejected(a):
    with pytest.raises(DomainError):
        elements_to_state(OrbitalElements(a, 0.1, 0.1, 0, 0, 0), JUPITER.mu)


def test_kepler_propagate_closes_after_one_period():
    s = elements_to_state(OrbitalElements(1.0e6, 0.4, 0.7, 0.3, 1.0, 2.0), JUPITER.mu)
    r, v = kepler_propagate(s.position, s.velocity, orbital_period(1.0e6, JUPITER.mu), JUPITER.mu)
    np.testing.assert_allclose(r, s.position, atol=1e-6)
    np.testing.assert_allclose(v, s.velocity, atol=1e-12)


def test_angular_momentum_z_and_angle():
    assert angular_momentum_z([1, 0, 0], [0, 2, 0]) == 2.0
    assert angle_between([1, 0, 0], [-1, 1e-12, 0]) == pytest.approx(math.pi - 1e-12, abs=1e-15)


def test_body_catalog(tmp_path):
    cat = load_body_catalog()
    assert cat["jupiter"] == BodyParams(126686534.0, 71492.0, 0.014736, "jupiter")
    assert get_body("Jupiter-Kepler").j2 == 0.0
    with pytest.raises(DomainError):
        get_body("pluto")
    bad = tmp_path / "b.ini"
    bad.write_text("[x]\nmu = 1\n")
    with pytest.raises(DomainError):
        load_body_catalog(bad)


@pytest.mark.parametrize("kw", [dict(mu=0, radius=1, j2=0), dict(mu=1, radius=-1, j2=0), dict(mu=1, radius=1, j2=-0.1)])
def test_body_validation(kw):
    with pytest.raises(DomainError):
        BodyParams(**kw)
