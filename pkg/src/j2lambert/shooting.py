"""Finite-difference Newton shooting on the initial velocity."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .astro import BodyParams, DomainError
from .propagator import DEFAULT_CONFIG, PropagationError, PropagatorConfig, propagate_rv

SINGULAR_COND = 1e14


class SingularJacobianError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ShootingConfig:
    tol: float = 1e-3
    max_iter: int = 2000
    dv_step: float = 1e-6
    step_limit: float | None = None
    propagator: PropagatorConfig = DEFAULT_CONFIG

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 0:
            raise DomainError("max_iter must be non-negative")
        if not self.dv_step > 0:
            raise DomainError("dv_step must be positive")
        if self.step_limit is not None and not self.step_limit > 0:
            raise DomainError("step_limit must be positive when given")


@dataclass(frozen=True, eq=False)
class ShootingResult:
    v0: np.ndarray
    converged: bool
    iterations: int
    terminal_error: float
    propagations: int
    initial_error: float
    status: str = "converged"


def finite_diff_jacobian(r0, v, tof: float, body: BodyParams, dv_step: float = 1e-6,
                         cfg: PropagatorConfig = DEFAULT_CONFIG, rf_nominal=None) -> np.ndarray:
    """Forward-difference sensitivity of the final position to the initial velocity.

    Column j is (rf(v + dv e_j) - rf(v)) / dv. ``rf_nominal`` skips the
    nominal propagation when the caller already has it.
    """
    v = np.asarray(v, dtype=float)
    if rf_nominal is None:
        rf_nominal, _ = propagate_rv(r0, v, tof, body, cfg)
    H = np.empty((3, 3))
    for j in range(3):
        vp = v.copy()
        vp[j] += dv_step
        rf_j, _ = propagate_rv(r0, vp, tof, body, cfg)
        H[:, j] = (rf_j - rf_nominal) / dv_step
    return H


def newton_correction(H: np.ndarray, residual: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        # an exactly singular pivot is reported below as SingularJacobianError
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(H, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() == 0.0 or pivots.max() / pivots.min() > SINGULAR_COND:
        raise SingularJacobianError("Jacobian is singular to working precision")
    return lu_solve((lu, piv), residual, check_finite=False)


def shoot(r0, v_init, rf_target, tof: float, body: BodyParams,
          cfg: ShootingConfig = ShootingConfig()) -> ShootingResult:
    """Drive the terminal position error below ``cfg.tol``.

    Each iteration propagates the nominal trajectory plus three perturbed
    ones for the Jacobian, so a converged run costs 4*iterations + 1
    propagations. Exhausting ``max_iter`` or a failed propagation of a
    diverging iterate ends the run unconverged; the best iterate is
    returned either way.
    """
    r0 = np.asarray(r0, dtype=float)
    rf_target = np.asarray(rf_target, dtype=float)
    v = np.array(v_init, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("initial velocity guess is not finite")
    pcfg = cfg.propagator

    rf, _ = propagate_rv(r0, v, tof, body, pcfg)
    props = 1
    residual = rf_target - rf
    err = float(np.linalg.norm(residual))
    initial_error = err
    best_v, best_err = v.copy(), err
    iterations = 0
    status = "max_iter"
    while True:
        if err <= cfg.tol:
            status = "converged"
            break
        if iterations >= cfg.max_iter:
            break
        try:
            H = finite_diff_jacobian(r0, v, tof, body, cfg.dv_step, pcfg, rf_nominal=rf)
        except PropagationError:
            status = "propagation_failed"
            props += 3
            break
        props += 3
        dv = newton_correction(H, residual)
        if cfg.step_limit is not None:
            norm = float(np.linalg.norm(dv))
            if norm > cfg.step_limit:
                dv *= cfg.step_limit / norm
        v = v + dv
        iterations += 1
        if not np.all(np.isfinite(v)):
            status = "diverged"
            break
        try:
            rf, _ = propagate_rv(r0, v, tof, body, pcfg)
        except PropagationError:
            props += 1
            status = "propagation_failed"
            break
        props += 1
        residual = rf_target - rf
        err = float(np.linalg.norm(residual))
        if err < best_err:
            best_v, best_err = v.copy(), err
    return ShootingResult(
        v0=best_v,
        converged=best_err <= cfg.tol,
        iterations=iterations,
        terminal_error=best_err,
        propagations=props,
        initial_error=initial_error,
        status=status,
    )
