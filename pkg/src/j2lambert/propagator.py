"""Adaptive DOP853 propagation of the J2 equations of motion.

The stepping kernel is compiled with numba; the Butcher tableau is the
Dormand-Prince 8(5,3) table shipped with scipy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

from .astro import BodyParams, DomainError, StateCartesian

_N_STAGES = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_N_STAGES, :_N_STAGES])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_N_STAGES])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# PI controller exponents (error estimator of order 7)
_BETA = 0.04
_ALPHA = 1.0 / 8.0 - 0.75 * _BETA

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_STEP_UNDERFLOW = 2
STATUS_NONFINITE = 3


class PropagationError(RuntimeError):
    """Integration stopped before reaching the requested time."""

    def __init__(self, message: str, t_reached: float, status: int):
        super().__init__(message)
        self.t_reached = t_reached
        self.status = status


@dataclass(frozen=True)
class PropagatorConfig:
    # tight enough for sub-micrometre-per-km closure over one revolution
    rel_tol: float = 3e-14
    abs_tol: float = 3e-14
    max_steps: int = 200_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            val = getattr(self, name)
            if not 0 < val <= 1e-3:
                raise DomainError(f"{name} must lie in (0, 1e-3], got {val}")
        if self.max_steps <= 0:
            raise DomainError("max_steps must be positive")


DEFAULT_CONFIG = PropagatorConfig()


@njit(cache=True, fastmath=False)
def _rhs(y, mu, radius, j2, out):
    x = y[0]
    yy = y[1]
    z = y[2]
    r2 = x * x + yy * yy + z * z
    r = math.sqrt(r2)
    k = -mu / (r2 * r)
    q = 1.5 * j2 * radius * radius / r2
    zz = z * z / r2
    fxy = k * (1.0 + q * (1.0 - 5.0 * zz))
    fz = k * (1.0 + q * (3.0 - 5.0 * zz))
    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = fxy * x
    out[4] = fxy * yy
    out[5] = fz * z


@njit(cache=True)
def _rms_scaled(v, scale):
    s = 0.0
    for i in range(v.shape[0]):
        q = v[i] / scale[i]
        s += q * q
    return math.sqrt(s / v.shape[0])


@njit(cache=True)
def _initial_step(y0, f0, tof, mu, radius, j2, rtol, atol):
    n = y0.shape[0]
    scale = np.empty(n)
    for i in range(n):
        scale[i] = atol + abs(y0[i]) * rtol
    d0 = _rms_scaled(y0, scale)
    d1 = _rms_scaled(f0, scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, tof)
    y1 = y0 + h0 * f0
    f1 = np.empty(n)
    _rhs(y1, mu, radius, j2, f1)
    d2 = _rms_scaled(f1 - f0, scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, tof)


@njit(cache=True)
def _dop853(y0, tof, mu, radius, j2, rtol, atol, max_steps, A, B, C, E3, E5):
    n = 6
    ns = 12
    y = y0.copy()
    K = np.empty((ns + 1, n))
    ytmp = np.empty(n)
    y_new = np.empty(n)
    scale = np.empty(n)
    _rhs(y, mu, radius, j2, K[0])
    h = _initial_step(y, K[0], tof, mu, radius, j2, rtol, atol)
    t = 0.0
    err_prev = 1e-4
    rejected = False
    steps = 0
    while t < tof:
        if steps >= max_steps:
            return y, t, 1, steps
        h_min = 10.0 * (math.nextafter(t, math.inf) - t)
        if h < h_min:
            return y, t, 2, steps
        last = False
        if t + h >= tof:
            h = tof - t
            last = True
        for s in range(1, ns):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                ytmp[i] = y[i] + h * acc
            _rhs(ytmp, mu, radius, j2, K[s])
        for i in range(n):
            acc = 0.0
            for j in range(ns):
                acc += B[j] * K[j, i]
            y_new[i] = y[i] + h * acc
        _rhs(y_new, mu, radius, j2, K[ns])
        finite = True
        for i in range(n):
            if not math.isfinite(y_new[i]) or not math.isfinite(K[ns, i]):
                finite = False
        if not finite:
            if h < 1e-300:
                return y, t, 3, steps
            h *= _MIN_FACTOR
            rejected = True
            steps += 1
            continue
        for i in range(n):
            scale[i] = atol + max(abs(y[i]), abs(y_new[i])) * rtol
        e5 = 0.0
        e3 = 0.0
        for i in range(n):
            a5 = 0.0
            a3 = 0.0
            for j in range(ns + 1):
                a5 += K[j, i] * E5[j]
                a3 += K[j, i] * E3[j]
            a5 /= scale[i]
            a3 /= scale[i]
            e5 += a5 * a5
            e3 += a3 * a3
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * n)
        steps += 1
        if err <= 1.0:
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            if rejected:
                factor = min(1.0, factor)
            if last:
                t = tof
            else:
                t += h
            for i in range(n):
                y[i] = y_new[i]
                K[0, i] = K[ns, i]
            err_prev = max(err, 1e-4)
            h *= factor
            rejected = False
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 8.0))
            rejected = True
    return y, t, 0, steps


def propagate_array(y0, tof: float, body: BodyParams, cfg: PropagatorConfig = DEFAULT_CONFIG):
    """Propagate a 6-vector state; returns the final 6-vector.

    Raises ``PropagationError`` when the step budget runs out or the step
    size collapses, carrying the time reached.
    """
    y0 = np.asarray(y0, dtype=float)
    if tof < 0:
        raise DomainError(f"time of flight must be non-negative, got {tof}")
    if tof == 0:
        return y0.copy()
    if not np.linalg.norm(y0[:3]) > 0:
        raise DomainError("initial state has zero radius")
    y, t, status, steps = _dop853(
        np.ascontiguousarray(y0), float(tof), body.mu, body.radius, body.j2,
        cfg.rel_tol, cfg.abs_tol, cfg.max_steps, _A, _B, _C, _E3, _E5,
    )
    if status != STATUS_OK:
        reason = {
            STATUS_MAX_STEPS: f"step budget of {cfg.max_steps} exhausted",
            STATUS_STEP_UNDERFLOW: "step size underflow",
            STATUS_NONFINITE: "non-finite state",
        }[status]
        raise PropagationError(f"{reason} at t={t:.6g} s of {tof:.6g} s", t, status)
    return y


def propagate(state0: StateCartesian, tof: float, body: BodyParams,
              cfg: PropagatorConfig = DEFAULT_CONFIG) -> StateCartesian:
    if tof == 0:
        return state0
    return StateCartesian.from_array(propagate_array(state0.as_array(), tof, body, cfg))


def propagate_rv(r0, v0, tof: float, body: BodyParams, cfg: PropagatorConfig = DEFAULT_CONFIG):
    y = propagate_array(np.concatenate([r0, v0]), tof, body, cfg)
    return y[:3], y[3:]


def count_steps(y0, tof: float, body: BodyParams, cfg: PropagatorConfig = DEFAULT_CONFIG) -> int:
    """Number of attempted steps for a propagation (diagnostics)."""
    _, _, _, steps = _dop853(
        np.ascontiguousarray(np.asarray(y0, float)), float(tof), body.mu, body.radius, body.j2,
        cfg.rel_tol, cfg.abs_tol, cfg.max_steps, _A, _B, _C, _E3, _E5,
    )
    return int(steps)
