"""Perturbed Lambert solver: Keplerian guess, learned correction, shooting."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .astro import BodyParams, spherical_to_cart
from .lambert import LambertError, LambertQuery, NoSolutionError, solve_kepler_lambert, transfer_geometry
from .mlp import MlpModel, forward
from .propagator import DEFAULT_CONFIG, PropagationError, PropagatorConfig, propagate_rv
from .samples import SampleForm, dv2_sph_input
from .shooting import ShootingConfig, ShootingResult, shoot

GUESS_FORM = SampleForm.DV2_SPH
# flight-path angles scanned when the end points coincide in direction
COINCIDENT_GRID = np.linspace(-1.2, 1.2, 25)


class ModelLayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PerturbedLambertQuery:
    r0: np.ndarray
    rf: np.ndarray
    tof: float
    revs: int
    body: BodyParams
    plane_hint: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "r0", np.asarray(self.r0, dtype=float))
        object.__setattr__(self, "rf", np.asarray(self.rf, dtype=float))
        if self.plane_hint is not None:
            object.__setattr__(self, "plane_hint", np.asarray(self.plane_hint, dtype=float))
        if not self.tof > 0:
            raise LambertError(f"time of flight must be positive, got {self.tof}")
        if self.revs < 0:
            raise LambertError("revs must be non-negative")


@dataclass(frozen=True, eq=False)
class PipelineResult:
    shooting: ShootingResult
    v_d: np.ndarray
    dnn_correction: np.ndarray
    keplerian_error: float
    pre_shooting_error: float
    setup_propagations: int
    branch: str
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.shooting.converged

    @property
    def v0(self) -> np.ndarray:
        return self.shooting.v0

    @property
    def iterations(self) -> int:
        return self.shooting.iterations

    @property
    def terminal_error(self) -> float:
        return self.shooting.terminal_error

    @property
    def propagations(self) -> int:
        return self.setup_propagations + self.shooting.propagations

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())


def check_guess_model(model: MlpModel) -> None:
    form = model.meta.get("form")
    if form is not None and form != GUESS_FORM.value:
        raise ModelLayoutError(f"model was trained on form {form}, expected {GUESS_FORM.value}")
    if model.input_dim != GUESS_FORM.input_dim or model.output_dim != 3:
        raise ModelLayoutError(
            f"model maps {model.input_dim} -> {model.output_dim} columns, "
            f"expected {GUESS_FORM.input_dim} -> 3"
        )


def predict_correction(model: MlpModel, r0, v_d, delta_rf, tof: float) -> np.ndarray:
    """Cartesian correction (km/s) to add to the Keplerian velocity."""
    check_guess_model(model)
    length_unit = float(model.meta.get("length_unit", 71492.0))
    x = dv2_sph_input(r0, v_d, delta_rf, tof, length_unit)
    return spherical_to_cart(tuple(forward(model, x)))


class _Counter:
    def __init__(self, r0, rf, tof, body, cfg):
        self.r0, self.rf, self.tof, self.body, self.cfg = r0, rf, tof, body, cfg
        self.count = 0

    def miss(self, v) -> np.ndarray:
        self.count += 1
        rf, _ = propagate_rv(self.r0, v, self.tof, self.body, self.cfg)
        return rf - self.rf


def coincident_guess(r0, rf, tof: float, revs: int, normal, body: BodyParams,
                     cfg: PropagatorConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, float, int]:
    """Initial velocity for a whole-revolution transfer back to the direction of r0.

    The two-body problem is degenerate here: every in-plane orbit through r0
    with period tof/revs qualifies, whatever its flight-path angle. Each
    member of that family is tuned in speed (secant on the along-track miss
    under J2) and the flight-path angle with the smallest remaining miss is
    kept. Returns (velocity, miss in km, propagations used).
    """
    r0 = np.asarray(r0, float)
    rf = np.asarray(rf, float)
    r = float(np.linalg.norm(r0))
    r_hat = r0 / r
    t_hat = np.cross(normal, r_hat)
    along = np.cross(normal, rf / np.linalg.norm(rf))
    a = (body.mu * (tof / revs / (2.0 * math.pi)) ** 2) ** (1.0 / 3.0)
    if 2.0 / r - 1.0 / a <= 0:
        raise NoSolutionError("time of flight too long for a bound orbit through r0")
    speed0 = math.sqrt(body.mu * (2.0 / r - 1.0 / a))
    ctr = _Counter(r0, rf, tof, body, cfg)

    def tuned(gamma: float):
        d = math.cos(gamma) * t_hat + math.sin(gamma) * r_hat
        s1, s2 = speed0, speed0 * (1.0 + 1e-5)
        try:
            f1 = float(ctr.miss(s1 * d) @ along)
            for _ in range(8):
                f2 = float(ctr.miss(s2 * d) @ along)
                if f2 == f1:
                    break
                s1, s2, f1 = s2, s2 - f2 * (s2 - s1) / (f2 - f1), f2
                if abs(f1) < 1e-3:
                    break
            res = ctr.miss(s2 * d)
        except PropagationError:
            return math.inf, None
        return float(np.linalg.norm(res)), s2 * d

    misses = [tuned(g)[0] for g in COINCIDENT_GRID]
    k = int(np.argmin(misses))
    if not math.isfinite(misses[k]):
        raise PropagationError("no member of the coincident-transfer family could be propagated", 0.0, 0)
    lo = COINCIDENT_GRID[max(k - 1, 0)]
    hi = COINCIDENT_GRID[min(k + 1, len(COINCIDENT_GRID) - 1)]
    opt = minimize_scalar(lambda g: tuned(g)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-8})
    miss, v = tuned(opt.x)
    if v is None:
        miss, v = tuned(COINCIDENT_GRID[k])
    return v, miss, ctr.count


def solve_perturbed_lambert(q: PerturbedLambertQuery, model: MlpModel | None = None,
                            shoot_cfg: ShootingConfig = ShootingConfig(),
                            cold_start: bool = False) -> PipelineResult:
    """Solve the J2 Lambert problem for ``q``.

    Every Keplerian candidate (one for zero revolutions, two branches
    otherwise) is propagated under J2 and corrected by the model; the
    corrected guesses are propagated again and the one with the smaller
    terminal miss starts shooting. With ``cold_start`` the correction is
    skipped and the candidate with the smaller Keplerian miss is kept.

    When rf points along r0 after whole revolutions the two-body guess is
    degenerate; ``coincident_guess`` replaces it and no correction is applied.
    """
    if model is None and not cold_start:
        raise ModelLayoutError("a trained model is required unless cold_start is set")
    if model is not None and not cold_start:
        check_guess_model(model)
    body = q.body
    pcfg: PropagatorConfig = shoot_cfg.propagator if shoot_cfg is not None else DEFAULT_CONFIG
    timings: dict[str, float] = {}

    t = time.perf_counter()
    normal, theta = transfer_geometry(q.r0, q.rf, q.plane_hint)
    if theta == 0.0 and q.revs >= 1:
        v_guess, miss, setup = coincident_guess(q.r0, q.rf, q.tof, q.revs, normal, body, pcfg)
        timings["lambert"] = time.perf_counter() - t
        t = time.perf_counter()
        result = shoot(q.r0, v_guess, q.rf, q.tof, body, shoot_cfg)
        timings["shooting"] = time.perf_counter() - t
        return PipelineResult(result, v_guess, np.zeros(3), miss, result.initial_error,
                              setup, "coincident", timings)
    candidates = solve_kepler_lambert(LambertQuery(q.r0, q.rf, q.tof, body.mu, q.revs, None, q.plane_hint))
    timings["lambert"] = time.perf_counter() - t

    t = time.perf_counter()
    evaluated = []
    setup = 0
    last_exc: Exception | None = None
    for sol in candidates:
        setup += 1
        try:
            r_fd, _ = propagate_rv(q.r0, sol.v0, q.tof, body, pcfg)
        except PropagationError as exc:
            last_exc = exc
            continue
        evaluated.append((sol, r_fd, float(np.linalg.norm(q.rf - r_fd))))
    timings["keplerian_propagation"] = time.perf_counter() - t
    if not evaluated:
        raise last_exc

    t = time.perf_counter()
    guesses = []
    for sol, r_fd, miss in evaluated:
        dv = np.zeros(3) if cold_start else predict_correction(model, q.r0, sol.v0, q.rf - r_fd, q.tof)
        guesses.append((sol, dv, miss))
    timings["correction"] = time.perf_counter() - t

    # with several branches the corrected guesses are ranked by their own miss
    t = time.perf_counter()
    if len(guesses) > 1 and not cold_start:
        ranked = []
        for sol, dv, miss in guesses:
            setup += 1
            try:
                r1, _ = propagate_rv(q.r0, sol.v0 + dv, q.tof, body, pcfg)
            except PropagationError:
                continue
            ranked.append((float(np.linalg.norm(q.rf - r1)), sol, dv, miss))
        if ranked:
            _, sol, dv, miss = min(ranked, key=lambda g: g[0])
        else:
            sol, dv, miss = min(guesses, key=lambda g: g[2])
    else:
        sol, dv, miss = min(guesses, key=lambda g: g[2])
    timings["branch_selection"] = time.perf_counter() - t

    t = time.perf_counter()
    result = shoot(q.r0, sol.v0 + dv, q.rf, q.tof, body, shoot_cfg)
    timings["shooting"] = time.perf_counter() - t

    return PipelineResult(
        shooting=result,
        v_d=sol.v0,
        dnn_correction=dv,
        keplerian_error=miss,
        pre_shooting_error=result.initial_error,
        setup_propagations=setup,
        branch=sol.branch.value if sol.branch is not None else "single",
        timings=timings,
    )
