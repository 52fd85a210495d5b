"""Multi-revolution Keplerian Lambert solver (Izzo's formulation).

Solutions are parameterized by Lancaster-Blanchard's x variable and found
with Householder iterations on the non-dimensional time of flight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .astro import DomainError

# transfer angles closer than this to 0 or pi leave the plane undetermined
COLLINEAR_TOL = 1e-6


class LambertError(DomainError):
    pass


class NoSolutionError(LambertError):
    """Time of flight is below the minimum time for the requested revolutions."""


class AmbiguousPlaneError(LambertError):
    """Initial and final positions are collinear and no plane hint was given."""


class Branch(enum.Enum):
    # left/right of the minimum-time point in x; LOW is the smaller-x solution
    LOW = "low-path"
    HIGH = "high-path"


@dataclass(frozen=True, eq=False)
class LambertQuery:
    """Inputs of a Keplerian Lambert problem.

    ``plane_hint`` is the desired angular-momentum direction. For a
    well-defined geometry it only selects the direction of motion (short or
    long way); for collinear r0, rf it defines the transfer plane.
    """

    r0: np.ndarray
    rf: np.ndarray
    tof: float
    mu: float
    revs: int = 0
    branch: Branch | None = None
    plane_hint: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "r0", np.asarray(self.r0, dtype=float))
        object.__setattr__(self, "rf", np.asarray(self.rf, dtype=float))
        if self.plane_hint is not None:
            object.__setattr__(self, "plane_hint", np.asarray(self.plane_hint, dtype=float))
        if not self.tof > 0:
            raise LambertError(f"time of flight must be positive, got {self.tof}")
        if not (np.linalg.norm(self.r0) > 0 and np.linalg.norm(self.rf) > 0):
            raise LambertError("position vectors must be non-zero")
        if self.revs < 0:
            raise LambertError("revs must be non-negative")


@dataclass(frozen=True, eq=False)
class LambertSolution:
    v0: np.ndarray
    vf: np.ndarray
    revs: int
    branch: Branch | None
    x: float = field(default=float("nan"), repr=False)
    iterations: int = field(default=0, repr=False)


def transfer_geometry(r0, rf, plane_hint=None) -> tuple[np.ndarray, float]:
    """Unit transfer-plane normal and transfer angle in [0, 2pi)."""
    r0 = np.asarray(r0, float)
    rf = np.asarray(rf, float)
    n0, nf = np.linalg.norm(r0), np.linalg.norm(rf)
    cross = np.cross(r0, rf)
    sin_abs = np.linalg.norm(cross) / (n0 * nf)
    cos_t = float(np.dot(r0, rf)) / (n0 * nf)
    theta = math.atan2(sin_abs, cos_t)  # in [0, pi]
    collinear = theta < COLLINEAR_TOL or math.pi - theta < COLLINEAR_TOL
    if collinear:
        if plane_hint is None:
            raise AmbiguousPlaneError(
                f"r0 and rf are collinear (transfer angle {theta:.3g} rad); supply a plane hint"
            )
        hint = np.asarray(plane_hint, float)
        r0_hat = r0 / n0
        normal = hint - np.dot(hint, r0_hat) * r0_hat
        nn = np.linalg.norm(normal)
        if nn < 1e-12:
            raise AmbiguousPlaneError("plane hint is parallel to r0")
        normal /= nn
        theta = 0.0 if theta < COLLINEAR_TOL else math.pi
        return normal, theta
    normal = cross / np.linalg.norm(cross)
    if plane_hint is not None and float(np.dot(plane_hint, normal)) < 0:
        normal = -normal
        theta = 2.0 * math.pi - theta
    return normal, theta


def _hypergeometric_f(z: float, tol: float) -> float:
    sj, cj, j = 1.0, 1.0, 0
    while True:
        cj1 = cj * (3.0 + j) * (1.0 + j) / (2.5 + j) * z / (j + 1)
        sj += cj1
        cj = cj1
        j += 1
        if abs(cj1) <= tol or j > 1000:
            return sj


def _x2tof2(x: float, n: int, lam: float) -> float:
    a = 1.0 / (1.0 - x * x)
    if a > 0:
        alfa = 2.0 * math.acos(x)
        beta = 2.0 * math.asin(math.sqrt(lam * lam / a))
        if lam < 0:
            beta = -beta
        return a * math.sqrt(a) * ((alfa - math.sin(alfa)) - (beta - math.sin(beta)) + 2.0 * math.pi * n) / 2.0
    alfa = 2.0 * math.acosh(x)
    beta = 2.0 * math.asinh(math.sqrt(-lam * lam / a))
    if lam < 0:
        beta = -beta
    return -a * math.sqrt(-a) * ((beta - math.sinh(beta)) - (alfa - math.sinh(alfa))) / 2.0


def x2tof(x: float, n: int, lam: float) -> float:
    """Non-dimensional time of flight as a function of x."""
    battin, lagrange = 0.01, 0.2
    dist = abs(x - 1.0)
    if battin < dist < lagrange:
        return _x2tof2(x, n, lam)
    k = lam * lam
    e = x * x - 1.0
    rho = abs(e)
    z = math.sqrt(1.0 + k * e)
    if dist < battin:
        eta = z - lam * x
        s1 = 0.5 * (1.0 - lam - x * eta)
        q = 4.0 / 3.0 * _hypergeometric_f(s1, 1e-11)
        return (eta**3 * q + 4.0 * lam * eta) / 2.0 + n * math.pi / rho**1.5
    y = math.sqrt(rho)
    g = x * z - lam * e
    if e < 0:
        d = n * math.pi + math.acos(max(-1.0, min(1.0, g)))
    else:
        f = y * (z - lam * x)
        d = math.log(f + g)
    return (x - lam * z - d / y) / e


def _dtdx(x: float, t: float, lam: float) -> tuple[float, float, float]:
    l2 = lam * lam
    l3 = l2 * lam
    umx2 = 1.0 - x * x
    y = math.sqrt(1.0 - l2 * umx2)
    y2 = y * y
    y3 = y2 * y
    dt = (3.0 * t * x - 2.0 + 2.0 * l3 * x / y) / umx2
    ddt = (3.0 * t + 5.0 * x * dt + 2.0 * (1.0 - l2) * l3 / y3) / umx2
    dddt = (7.0 * x * ddt + 8.0 * dt - 6.0 * (1.0 - l2) * l2 * l3 * x / y3 / y2) / umx2
    return dt, ddt, dddt


def _halley_tmin(x0: float, t0: float, n: int, lam: float, tol: float, max_iter: int):
    """Locate the minimum non-dimensional time for n revolutions."""
    for it in range(max_iter):
        dt, ddt, dddt = _dtdx(x0, t0, lam)
        if dt != 0.0:
            xn = x0 - dt * ddt / (ddt * ddt - dt * dddt / 2.0)
        else:
            xn = x0
        xn = max(-0.999999999999, min(0.999999999999, xn))
        err = abs(x0 - xn)
        t0 = x2tof(xn, n, lam)
        x0 = xn
        if err < tol:
            break
    return x0, t0


def _householder(t: float, x0: float, n: int, lam: float, tol: float, max_iter: int) -> tuple[float, int]:
    it = 0
    for it in range(1, max_iter + 1):
        tof = x2tof(x0, n, lam)
        dt, ddt, dddt = _dtdx(x0, tof, lam)
        delta = tof - t
        dt2 = dt * dt
        xn = x0 - delta * (dt2 - delta * ddt / 2.0) / (dt * (dt2 - delta * ddt) + dddt * delta * delta / 6.0)
        # keep iterates inside the domain of x (elliptic for n > 0)
        if xn <= -1.0:
            xn = 0.5 * (x0 - 1.0)
        elif n > 0 and xn >= 1.0:
            xn = 0.5 * (x0 + 1.0)
        if not math.isfinite(xn):
            raise LambertError("Householder iteration produced a non-finite iterate")
        err = abs(x0 - xn)
        x0 = xn
        if err <= tol:
            break
    return x0, it


def _velocities(x, lam, gamma, rho, sigma, r1, r2, ir1, ir2, it1, it2):
    y = math.sqrt(1.0 - lam * lam + lam * lam * x * x)
    vr1 = gamma * ((lam * y - x) - rho * (lam * y + x)) / r1
    vr2 = -gamma * ((lam * y - x) + rho * (lam * y + x)) / r2
    vt = gamma * sigma * (y + lam * x)
    return vr1 * ir1 + vt / r1 * it1, vr2 * ir2 + vt / r2 * it2


def solve_kepler_lambert(q: LambertQuery, max_iter: int = 50) -> list[LambertSolution]:
    """Solve a two-body Lambert problem for ``q.revs`` complete revolutions.

    Zero-revolution queries return one solution. Multi-revolution queries
    return the requested branch, or both (LOW first) when none is given.
    """
    r1v, r2v = q.r0, q.rf
    r1, r2 = float(np.linalg.norm(r1v)), float(np.linalg.norm(r2v))
    normal, theta = transfer_geometry(r1v, r2v, q.plane_hint)
    c = float(np.linalg.norm(r2v - r1v))
    if c <= 1e-14 * max(r1, r2):
        raise LambertError("r0 and rf coincide; the transfer is degenerate")
    s = 0.5 * (r1 + r2 + c)
    ir1, ir2 = r1v / r1, r2v / r2
    it1, it2 = np.cross(normal, ir1), np.cross(normal, ir2)
    lam = math.sqrt(max(0.0, 1.0 - c / s))
    if theta > math.pi:
        lam = -lam
    t = math.sqrt(2.0 * q.mu / s**3) * q.tof

    n = q.revs
    t00 = math.acos(lam) + lam * math.sqrt(1.0 - lam * lam)
    if n > 0:
        t0n = t00 + n * math.pi
        if t < t0n:
            x_min, t_min = _halley_tmin(0.0, t0n, n, lam, 1e-13, 50)
            if t_min > t:
                raise NoSolutionError(
                    f"time of flight below the minimum for {n} revolution(s) "
                    f"(non-dimensional {t:.6g} < {t_min:.6g})"
                )
    gamma = math.sqrt(q.mu * s / 2.0)
    rho = (r1 - r2) / c
    sigma = math.sqrt(max(0.0, 1.0 - rho * rho))

    def build(x, iters, branch):
        v1, v2 = _velocities(x, lam, gamma, rho, sigma, r1, r2, ir1, ir2, it1, it2)
        return LambertSolution(v1, v2, n, branch, x, iters)

    if n == 0:
        t1 = 2.0 / 3.0 * (1.0 - lam**3)
        if t >= t00:
            x0 = -(t - t00) / (t - t00 + 4.0)
        elif t <= t1:
            x0 = 5.0 / 2.0 * t1 * (t1 - t) / (t * (1.0 - lam**5)) + 1.0
        else:
            x0 = (t00 / t) ** (math.log(2.0) / math.log(t00 / t1)) - 1.0
        x, iters = _householder(t, x0, 0, lam, 1e-14, max_iter)
        return [build(x, iters, None)]

    out = []
    if q.branch in (None, Branch.LOW):
        tmp = ((n * math.pi + math.pi) / (8.0 * t)) ** (2.0 / 3.0)
        x, iters = _householder(t, (tmp - 1.0) / (tmp + 1.0), n, lam, 1e-14, max_iter)
        out.append(build(x, iters, Branch.LOW))
    if q.branch in (None, Branch.HIGH):
        tmp = ((8.0 * t) / (n * math.pi)) ** (2.0 / 3.0)
        x, iters = _householder(t, (tmp - 1.0) / (tmp + 1.0), n, lam, 1e-14, max_iter)
        out.append(build(x, iters, Branch.HIGH))
    return out
