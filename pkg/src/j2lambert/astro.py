"""Central-body parameters, state parameterizations and J2 dynamics.

All quantities use km, s and km/s unless noted otherwise.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Input outside the domain of a conversion or dynamics function."""


class UnsupportedOrbitError(DomainError):
    """Orbit is not a closed (elliptic) orbit or is rectilinear."""


@dataclass(frozen=True)
class BodyParams:
    mu: float
    radius: float
    j2: float
    name: str = ""

    def __post_init__(self):
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if not self.radius > 0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if not self.j2 >= 0:
            raise DomainError(f"j2 must be non-negative, got {self.j2}")

    def with_j2(self, j2: float) -> "BodyParams":
        return BodyParams(self.mu, self.radius, j2, self.name)


_DEFAULT_CATALOG = "bodies.ini"


def load_body_catalog(path: str | Path | None = None) -> dict[str, BodyParams]:
    """Read a body catalog (INI sections ``[name]`` with mu/radius/j2 keys)."""
    parser = configparser.ConfigParser()
    if path is None:
        text = resources.files("j2lambert.data").joinpath(_DEFAULT_CATALOG).read_text()
        parser.read_string(text, source=_DEFAULT_CATALOG)
    else:
        with open(path) as fh:
            parser.read_file(fh)
    catalog = {}
    for name in parser.sections():
        sec = parser[name]
        try:
            catalog[name] = BodyParams(
                mu=float(sec["mu"]), radius=float(sec["radius"]), j2=float(sec["j2"]), name=name
            )
        except KeyError as exc:
            raise DomainError(f"body '{name}' is missing key {exc}") from None
    return catalog


def get_body(name: str, catalog_path: str | Path | None = None) -> BodyParams:
    catalog = load_body_catalog(catalog_path)
    try:
        return catalog[name.lower()]
    except KeyError:
        known = ", ".join(sorted(catalog))
        raise DomainError(f"unknown body '{name}' (known: {known})") from None


JUPITER = BodyParams(mu=126686534.0, radius=71492.0, j2=0.014736, name="jupiter")


@dataclass(frozen=True, eq=False)
class StateCartesian:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.position))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_array(cls, y) -> "StateCartesian":
        y = np.asarray(y, dtype=float)
        return cls(y[:3].copy(), y[3:6].copy())


@dataclass(frozen=True)
class SphericalVector:
    """Magnitude, azimuth in [0, 2pi) and elevation in [-pi/2, pi/2]."""

    magnitude: float
    azimuth: float
    elevation: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.magnitude, self.azimuth, self.elevation)


@dataclass(frozen=True)
class OrbitalElements:
    """Osculating Keplerian elements; angles in radians."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    mean_anomaly: float


# ---------------------------------------------------------------------------
# Dynamics


def j2_acceleration(state: StateCartesian | np.ndarray, body: BodyParams) -> np.ndarray:
    """Acceleration of the J2 gravity model at the given position (km/s^2)."""
    pos = state.position if isinstance(state, StateCartesian) else np.asarray(state, float)[:3]
    x, y, z = pos
    r2 = x * x + y * y + z * z
    if not r2 > 0:
        raise DomainError("acceleration undefined at zero radius")
    r = math.sqrt(r2)
    k = -body.mu / (r2 * r)
    q = 1.5 * body.j2 * body.radius * body.radius / r2
    zz = z * z / r2
    fxy = k * (1.0 + q * (1.0 - 5.0 * zz))
    fz = k * (1.0 + q * (3.0 - 5.0 * zz))
    return np.array([fxy * x, fxy * y, fz * z])


def j2_energy(position, velocity, body: BodyParams) -> float:
    """Specific energy including the J2 potential term (conserved)."""
    r = np.linalg.norm(position)
    z = position[2]
    v2 = float(np.dot(velocity, velocity))
    ratio = body.radius / r
    return 0.5 * v2 - body.mu / r * (1.0 - 0.5 * body.j2 * ratio * ratio * (3.0 * z * z / (r * r) - 1.0))


def angular_momentum_z(position, velocity) -> float:
    return float(position[0] * velocity[1] - position[1] * velocity[0])


def orbital_period(a: float, mu: float) -> float:
    if not a > 0:
        raise DomainError(f"semimajor axis must be positive, got {a}")
    return TWO_PI * math.sqrt(a**3 / mu)


# ---------------------------------------------------------------------------
# Spherical coordinates


def cart_to_spherical(v) -> SphericalVector:
    x, y, z = (float(c) for c in v)
    mag = math.sqrt(x * x + y * y + z * z)
    if mag == 0.0:
        return SphericalVector(0.0, 0.0, 0.0)
    if x == 0.0 and y == 0.0:
        az = 0.0
    else:
        az = math.atan2(y, x) % TWO_PI
        # a tiny negative angle rounds up to exactly 2pi under the modulo
        if az >= TWO_PI:
            az = 0.0
    # atan2 keeps full precision near the poles, unlike asin(z / mag)
    el = math.atan2(z, math.hypot(x, y))
    return SphericalVector(mag, az, el)


def spherical_to_cart(s: SphericalVector | tuple) -> np.ndarray:
    mag, az, el = s.as_tuple() if isinstance(s, SphericalVector) else s
    ce = math.cos(el)
    return np.array([mag * ce * math.cos(az), mag * ce * math.sin(az), mag * math.sin(el)])


def cart_to_spherical_rows(v: np.ndarray) -> np.ndarray:
    """Vectorized cart_to_spherical on an (n, 3) array; same conventions."""
    v = np.asarray(v, dtype=float)
    mag = np.linalg.norm(v, axis=-1)
    az = np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
    az = np.where(az >= TWO_PI, 0.0, az)
    el = np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1]))
    return np.stack([mag, az, el], axis=-1)


def spherical_to_cart_rows(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    mag, az, el = s[..., 0], s[..., 1], s[..., 2]
    ce = np.cos(el)
    return np.stack([mag * ce * np.cos(az), mag * ce * np.sin(az), mag * np.sin(el)], axis=-1)


# ---------------------------------------------------------------------------
# Orbital elements

_CIRCULAR_TOL = 1e-12
_EQUATORIAL_TOL = 1e-12


def solve_kepler(mean_anomaly: float, e: float) -> float:
    """Eccentric anomaly for the elliptic Kepler equation M = E - e sin E."""
    if not 0.0 <= e < 1.0:
        raise UnsupportedOrbitError(f"eccentricity must be in [0, 1), got {e}")
    k, m = divmod(mean_anomaly, TWO_PI)
    E = m + e * math.sin(m) if e < 0.8 else math.pi
    for _ in range(60):
        f = E - e * math.sin(E) - m
        dE = f / (1.0 - e * math.cos(E))
        E -= dE
        if abs(dE) <= 1e-15 * max(1.0, abs(E)):
            break
    return E + k * TWO_PI


def true_to_eccentric(nu: float, e: float) -> float:
    return 2.0 * math.atan2(math.sqrt(1.0 - e) * math.sin(0.5 * nu), math.sqrt(1.0 + e) * math.cos(0.5 * nu))


def eccentric_to_true(E: float, e: float) -> float:
    return 2.0 * math.atan2(math.sqrt(1.0 + e) * math.sin(0.5 * E), math.sqrt(1.0 - e) * math.cos(0.5 * E))


def _rotation(raan: float, i: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(i), math.sin(i)
    cw, sw = math.cos(argp), math.sin(argp)
    return np.array(
        [
            [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
            [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
            [sw * si, cw * si, ci],
        ]
    )


def elements_to_state(oe: OrbitalElements, mu: float) -> StateCartesian:
    if not oe.a > 0:
        raise DomainError(f"semimajor axis must be positive, got {oe.a}")
    if not 0.0 <= oe.e < 1.0:
        raise UnsupportedOrbitError(f"only closed orbits are supported, got e={oe.e}")
    a, e = oe.a, oe.e
    E = solve_kepler(oe.mean_anomaly, e)
    cE, sE = math.cos(E), math.sin(E)
    b_ratio = math.sqrt(1.0 - e * e)
    r_pf = np.array([a * (cE - e), a * b_ratio * sE, 0.0])
    rdot = math.sqrt(mu / a) / (1.0 - e * cE)
    v_pf = np.array([-rdot * sE, rdot * b_ratio * cE, 0.0])
    rot = _rotation(oe.raan, oe.i, oe.argp)
    return StateCartesian(rot @ r_pf, rot @ v_pf)


def state_to_elements(state: StateCartesian, mu: float) -> OrbitalElements:
    """Osculating elements of a bound state.

    Circular orbits (e below 1e-12) get argp = 0 with the anomaly measured
    from the node; equatorial orbits get raan = 0 with angles measured from
    the x axis.
    """
    r_vec, v_vec = state.position, state.velocity
    r = float(np.linalg.norm(r_vec))
    if not r > 0:
        raise DomainError("state has zero radius")
    v2 = float(np.dot(v_vec, v_vec))
    h_vec = np.cross(r_vec, v_vec)
    h = float(np.linalg.norm(h_vec))
    if h <= 1e-14 * r * math.sqrt(v2 + mu / r):
        raise UnsupportedOrbitError("rectilinear state has no orbital plane")
    energy = 0.5 * v2 - mu / r
    if energy >= 0:
        raise UnsupportedOrbitError("state is not on a closed orbit")
    a = -mu / (2.0 * energy)
    e_vec = ((v2 - mu / r) * r_vec - float(np.dot(r_vec, v_vec)) * v_vec) / mu
    e = float(np.linalg.norm(e_vec))
    h_hat = h_vec / h
    i = math.acos(max(-1.0, min(1.0, h_hat[2])))

    node = np.array([-h_hat[1], h_hat[0], 0.0])
    node_norm = float(np.linalg.norm(node))
    if node_norm < _EQUATORIAL_TOL:
        raan = 0.0
        ref = np.array([1.0, 0.0, 0.0])
    else:
        ref = node / node_norm
        raan = math.atan2(ref[1], ref[0]) % TWO_PI
    perp = np.cross(h_hat, ref)

    def in_plane_angle(vec):
        return math.atan2(float(np.dot(vec, perp)), float(np.dot(vec, ref)))

    if e < _CIRCULAR_TOL:
        e = 0.0
        argp = 0.0
    else:
        argp = in_plane_angle(e_vec) % TWO_PI
    u = in_plane_angle(r_vec)
    nu = u - argp
    E = true_to_eccentric(nu, e)
    M = (E - e * math.sin(E)) % TWO_PI
    if raan >= TWO_PI:
        raan = 0.0
    if argp >= TWO_PI:
        argp = 0.0
    if M >= TWO_PI:
        M = 0.0
    return OrbitalElements(a, e, i, raan, argp, M)


def semimajor_axis(position, velocity, mu: float) -> float:
    r = float(np.linalg.norm(position))
    energy = 0.5 * float(np.dot(velocity, velocity)) - mu / r
    if energy >= 0:
        raise UnsupportedOrbitError("state is not on a closed orbit")
    return -mu / (2.0 * energy)


def kepler_propagate(position, velocity, tof: float, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic two-body propagation of an elliptic state with Lagrange f, g."""
    r0_vec = np.asarray(position, dtype=float)
    v0_vec = np.asarray(velocity, dtype=float)
    if tof == 0:
        return r0_vec.copy(), v0_vec.copy()
    r0 = float(np.linalg.norm(r0_vec))
    a = semimajor_axis(r0_vec, v0_vec, mu)
    sqrt_a = math.sqrt(a)
    n = math.sqrt(mu / a**3)
    sigma0 = float(np.dot(r0_vec, v0_vec)) / math.sqrt(mu)
    ecosE0 = 1.0 - r0 / a
    esinE0 = sigma0 / sqrt_a
    e = math.hypot(ecosE0, esinE0)
    E0 = math.atan2(esinE0, ecosE0)
    M0 = E0 - esinE0
    dE = solve_kepler(M0 + n * tof, e) - E0
    c, s = math.cos(dE), math.sin(dE)
    r = a + (r0 - a) * c + sigma0 * sqrt_a * s
    f = 1.0 - a / r0 * (1.0 - c)
    g = (r0 / a * s + sigma0 / sqrt_a * (1.0 - c)) / n
    fdot = -math.sqrt(mu * a) / (r * r0) * s
    gdot = 1.0 - a / r * (1.0 - c)
    return f * r0_vec + g * v0_vec, fdot * r0_vec + gdot * v0_vec


def angle_between(u, v) -> float:
    """Unsigned angle in [0, pi] between two vectors, robust near 0 and pi."""
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))
