"""Benchmark harness: convergence, stress geometries and amortized cost."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .astro import JUPITER, BodyParams, angle_between, elements_to_state, orbital_period
from .lambert import LambertError
from .mlp import MlpModel
from .pipeline import PerturbedLambertQuery, solve_perturbed_lambert
from .propagator import PropagationError, propagate_rv
from .samples import (
    EXTENDED_RANGES, STREAM_BENCH, STREAM_STRESS, SampleRanges, draw_elements,
    generate_sample, sample_seed,
)
from .shooting import ShootingConfig, SingularJacobianError

log = logging.getLogger(__name__)

METHODS = ("SN", "DNN")
REPORT_COLUMNS = ["method", "revs", "n", "converged", "ratio", "mean_iters", "mean_time_s", "mean_err_km"]
SOLVE_COLUMNS = ["method", "revs", "index", "seed", "converged", "iterations", "time_s",
                 "terminal_error_km", "propagations", "status"]
# sample indices of different revolution counts never overlap
REV_INDEX_BLOCK = 1_000_000


@dataclass(frozen=True)
class BenchConfig:
    rev_counts: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    samples_per_rev: int = 100
    methods: tuple[str, ...] = METHODS
    shoot_cfg: dict[str, ShootingConfig] = field(
        default_factory=lambda: {m: ShootingConfig(tol=1e-3, max_iter=2000) for m in METHODS}
    )
    seed: int = 2024
    ranges: SampleRanges = EXTENDED_RANGES
    body: BodyParams = JUPITER

    def __post_init__(self):
        object.__setattr__(self, "rev_counts", tuple(int(r) for r in self.rev_counts))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.samples_per_rev < 1:
            raise ValueError("samples_per_rev must be at least 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if any(r < 0 for r in self.rev_counts):
            raise ValueError("revolution counts must be non-negative")

    def shooting_for(self, method: str) -> ShootingConfig:
        return self.shoot_cfg.get(method, ShootingConfig())


@dataclass(frozen=True)
class SolveRecord:
    method: str
    revs: int
    index: int
    seed: int
    converged: bool
    iterations: int
    time_s: float
    terminal_error_km: float
    propagations: int
    status: str


@dataclass(frozen=True)
class BenchRow:
    method: str
    revs: int
    n: int
    converged: int
    ratio: float
    mean_iters: float
    mean_time_s: float
    mean_err_km: float


@dataclass(eq=False)
class BenchReport:
    rows: list[BenchRow]
    metadata: dict = field(default_factory=dict)
    solves: list[SolveRecord] = field(default_factory=list)

    def row(self, method: str, revs: int) -> BenchRow:
        for r in self.rows:
            if r.method == method and r.revs == revs:
                return r
        raise KeyError((method, revs))

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows}, key=lambda m: (m not in METHODS, m))

    def rev_counts(self) -> list[int]:
        return sorted({r.revs for r in self.rows})


def aggregate(solves: list[SolveRecord]) -> list[BenchRow]:
    """Per (method, revs) summary.

    Iteration, time and error means are taken over converged solves only,
    so a method is not rewarded or penalized for the cost of its failures;
    they are NaN when nothing converged.
    """
    keys = sorted({(s.method, s.revs) for s in solves}, key=lambda k: (k[1], k[0] not in METHODS, k[0]))
    rows = []
    for method, revs in keys:
        group = [s for s in solves if s.method == method and s.revs == revs]
        ok = [s for s in group if s.converged]

        def mean(attr):
            return float(np.mean([getattr(s, attr) for s in ok])) if ok else math.nan

        rows.append(BenchRow(method, revs, len(group), len(ok), len(ok) / len(group),
                             mean("iterations"), mean("time_s"), mean("terminal_error_km")))
    return rows


def _solve(method: str, query: PerturbedLambertQuery, model: MlpModel | None,
           cfg: ShootingConfig) -> tuple[bool, int, float, float, int, str]:
    t = time.perf_counter()
    try:
        res = solve_perturbed_lambert(query, model, cfg, cold_start=(method == "SN"))
    except (SingularJacobianError, LambertError, PropagationError) as exc:
        return False, 0, time.perf_counter() - t, math.inf, 0, type(exc).__name__
    elapsed = time.perf_counter() - t
    return (res.converged, res.iterations, elapsed, res.terminal_error,
            res.propagations, res.shooting.status)


def _machine_note() -> str:
    return f"{platform.machine()} {platform.processor() or 'cpu'} python {platform.python_version()}"


def bench_queries(cfg: BenchConfig, revs: int):
    """Fresh bench-stream samples for one revolution count, as (index, seed, query)."""
    ranges = cfg.ranges.for_revs(revs)
    for k in range(cfg.samples_per_rev):
        index = revs * REV_INDEX_BLOCK + k
        seed = sample_seed(cfg.seed, index, STREAM_BENCH)
        rec = generate_sample(seed, ranges, cfg.body)
        # the direction of motion is known to a mission designer, so it is passed along
        yield index, seed, PerturbedLambertQuery(rec.r0, rec.rf, rec.tof, rec.revs, cfg.body,
                                                 plane_hint=np.cross(rec.r0, rec.v0))


def run_convergence_bench(cfg: BenchConfig, model: MlpModel | None = None) -> BenchReport:
    """Solve the same fresh samples with every method, per revolution count."""
    if "DNN" in cfg.methods and model is None:
        raise ValueError("the DNN method needs a trained model")
    solves: list[SolveRecord] = []
    for revs in cfg.rev_counts:
        for index, seed, query in bench_queries(cfg, revs):
            for method in cfg.methods:
                ok, iters, dt, err, props, status = _solve(method, query, model, cfg.shooting_for(method))
                solves.append(SolveRecord(method, revs, index, seed, ok, iters, dt, err, props, status))
        log.info("revs %d done", revs)
    meta = {
        "mode": "conv",
        "seed": cfg.seed,
        "samples_per_rev": cfg.samples_per_rev,
        "rev_counts": list(cfg.rev_counts),
        "body": cfg.body.name,
        "stream": "bench",
        "machine": _machine_note(),
    }
    return BenchReport(aggregate(solves), meta, solves)


# ---------------------------------------------------------------------------
# Stress geometry


def _wrap_pi(x: float) -> float:
    return (x + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True, eq=False)
class StressCase:
    r0: np.ndarray
    v0: np.ndarray
    rf: np.ndarray
    tof: float
    lambert_revs: int
    normal: np.ndarray
    angle_error: float


def _sweep_to_angle(r0, v0, sweep: float, guess: float, body: BodyParams) -> tuple[float, np.ndarray]:
    """tof at which the in-plane angle from r0 (in the initial plane) equals ``sweep``.

    Newton on tof using the angular rate at the end point; the sweep is only
    ever compared modulo 2pi so ``guess`` must already be within half a
    revolution of the answer.
    """
    n0 = np.cross(r0, v0)
    n0 /= np.linalg.norm(n0)
    e1 = r0 / np.linalg.norm(r0)
    e2 = np.cross(n0, e1)
    tof = guess
    # steps are capped so an eccentric orbit cannot throw tof across a revolution
    max_step = 0.1 * guess * 2.0 * math.pi / sweep
    for _ in range(60):
        rf, vf = propagate_rv(r0, v0, tof, body)
        theta = math.atan2(float(rf @ e2), float(rf @ e1))
        delta = _wrap_pi(theta - sweep)
        rate = float(np.cross(rf, vf) @ n0) / float(rf @ rf)
        step = max(-max_step, min(max_step, delta / rate))
        tof -= step
        if tof <= 0:
            raise PropagationError("sweep search left the positive time axis", 0.0, 0)
        if abs(delta) < 1e-13:
            break
    rf, _ = propagate_rv(r0, v0, tof, body)
    return tof, rf


def build_stress_case(rng: np.random.Generator, angle_deg: int, revs: int, body: BodyParams,
                      ranges: SampleRanges = EXTENDED_RANGES, grid: int = 16,
                      max_draws: int = 20) -> StressCase:
    """Transfer whose end point lies exactly 180 or 360 degrees from its start.

    The orbit shape and orientation are drawn from ``ranges``; the initial
    mean anomaly is then tuned so that the J2-propagated end point returns to
    the line of r0 (out-of-plane residual zero) after sweeping the requested
    angle plus ``revs`` whole revolutions.
    """
    if angle_deg not in (180, 360):
        raise ValueError("stress angle must be 180 or 360 degrees")
    sweep = math.pi + 2.0 * math.pi * revs if angle_deg == 180 else 2.0 * math.pi * (revs + 1)
    lambert_revs = revs if angle_deg == 180 else revs + 1
    for _ in range(max_draws):
        oe0 = draw_elements(rng, ranges, body)
        period = orbital_period(oe0.a, body.mu)

        def case(m0):
            oe = type(oe0)(oe0.a, oe0.e, oe0.i, oe0.raan, oe0.argp, m0)
            st = elements_to_state(oe, body.mu)
            r0, v0 = st.position, st.velocity
            # Keplerian time to sweep the angle is the starting guess
            tof, rf = _sweep_to_angle(r0, v0, sweep, sweep / (2.0 * math.pi) * period, body)
            n0 = np.cross(r0, v0)
            n0 /= np.linalg.norm(n0)
            return r0, v0, rf, tof, n0

        def residual(m0):
            _, _, rf, _, n0 = case(m0)
            return float(rf @ n0) / float(np.linalg.norm(rf))

        try:
            ms = np.linspace(0.0, 2.0 * math.pi, grid + 1)
            gs = [residual(m) for m in ms]
            m_root = None
            for k in range(grid):
                if gs[k] == 0.0:
                    m_root = ms[k]
                    break
                if gs[k] * gs[k + 1] < 0:
                    m_root = brentq(residual, ms[k], ms[k + 1], xtol=1e-15, rtol=1e-15)
                    break
            if m_root is None:
                continue
            r0, v0, rf, tof, n0 = case(m_root)
        except PropagationError:
            continue
        target = math.pi if angle_deg == 180 else 0.0
        err = abs(angle_between(r0, rf) - target)
        if err > 1e-9 or tof <= 0:
            continue
        return StressCase(r0, v0, rf, tof, lambert_revs, n0, err)
    raise RuntimeError(f"no {angle_deg} deg stress geometry found after {max_draws} draws")


def run_stress_bench(angle_deg: int, rev_counts, n: int, seed: int, model: MlpModel | None = None,
                     methods=("DNN",), shoot_cfg: ShootingConfig = ShootingConfig(),
                     body: BodyParams = JUPITER, ranges: SampleRanges = EXTENDED_RANGES) -> BenchReport:
    if "DNN" in methods and model is None:
        raise ValueError("the DNN method needs a trained model")
    solves: list[SolveRecord] = []
    worst_angle = 0.0
    for revs in rev_counts:
        for k in range(n):
            index = revs * REV_INDEX_BLOCK + k
            s = sample_seed(seed, index, STREAM_STRESS + angle_deg)
            sc = build_stress_case(np.random.default_rng(s), angle_deg, revs, body, ranges)
            worst_angle = max(worst_angle, sc.angle_error)
            query = PerturbedLambertQuery(sc.r0, sc.rf, sc.tof, sc.lambert_revs, body, plane_hint=sc.normal)
            for method in methods:
                ok, iters, dt, err, props, status = _solve(method, query, model, shoot_cfg)
                solves.append(SolveRecord(method, revs, index, s, ok, iters, dt, err, props, status))
        log.info("stress %d deg revs %d done", angle_deg, revs)
    meta = {
        "mode": "stress",
        "angle_deg": angle_deg,
        "seed": seed,
        "samples_per_rev": n,
        "rev_counts": [int(r) for r in rev_counts],
        "body": body.name,
        "worst_angle_error_rad": worst_angle,
        "machine": _machine_note(),
    }
    return BenchReport(aggregate(solves), meta, solves)


# ---------------------------------------------------------------------------
# Amortized cost


@dataclass(frozen=True)
class CostRow:
    batch_size: int
    method: str
    one_time_s: float
    per_solve_s: float
    total_s: float
    one_time_fraction: float


@dataclass(eq=False)
class CostReport:
    rows: list[CostRow]
    crossover: int | None
    one_time_s: float
    per_solve_s: dict[str, float]
    metadata: dict = field(default_factory=dict)


def amortized_cost(batch_sizes, one_time_s: float, per_solve_s: dict[str, float]) -> CostReport:
    """Total cost per batch size: the learned method pays ``one_time_s`` once."""
    if one_time_s < 0 or any(c < 0 for c in per_solve_s.values()):
        raise ValueError("costs must be non-negative")
    rows = []
    for n in batch_sizes:
        if n < 1:
            raise ValueError("batch sizes must be positive")
        for method, c in per_solve_s.items():
            fixed = one_time_s if method == "DNN" else 0.0
            total = fixed + n * c
            rows.append(CostRow(int(n), method, fixed, c, total, fixed / total if total > 0 else 0.0))
    crossover = None
    if "SN" in per_solve_s and "DNN" in per_solve_s:
        saving = per_solve_s["SN"] - per_solve_s["DNN"]
        if saving > 0:
            # smallest n with one_time + n*c_dnn < n*c_sn
            crossover = int(math.floor(one_time_s / saving)) + 1
    return CostReport(rows, crossover, one_time_s, dict(per_solve_s))


def run_total_cost_bench(batch_sizes, cfg: BenchConfig, model: MlpModel, one_time_s: float) -> CostReport:
    """Measure per-solve cost on a rev-balanced sample, then amortize.

    Per-solve means here include failed solves: a batch pays for them too.
    """
    conv = run_convergence_bench(cfg, model)
    per = {}
    for method in cfg.methods:
        times = [s.time_s for s in conv.solves if s.method == method]
        per[method] = float(np.mean(times))
    rep = amortized_cost(batch_sizes, one_time_s, per)
    rep.metadata = {**conv.metadata, "mode": "total", "one_time_s": one_time_s,
                    "crossover": rep.crossover}
    return rep


# ---------------------------------------------------------------------------
# Report I/O


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else ("inf" if math.isinf(v) else f"{v:.10g}")
    return str(v)


def write_report(report: BenchReport, path: str | Path) -> None:
    """CSV summary at ``path`` plus a JSON metadata sidecar and per-solve CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            w.writerow([r.method, r.revs, r.n, r.converged, _fmt(r.ratio), _fmt(r.mean_iters),
                        _fmt(r.mean_time_s), _fmt(r.mean_err_km)])
    path.with_suffix(".json").write_text(json.dumps(report.metadata, indent=2, sort_keys=True) + "\n")
    if report.solves:
        with open(solves_path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SOLVE_COLUMNS)
            for s in report.solves:
                w.writerow([s.method, s.revs, s.index, s.seed, int(s.converged), s.iterations,
                            _fmt(s.time_s), _fmt(s.terminal_error_km), s.propagations, s.status])


def solves_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_solves.csv")


def read_report(path: str | Path) -> BenchReport:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(REPORT_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(REPORT_COLUMNS)} fields")
            rows.append(BenchRow(rec[0], int(rec[1]), int(rec[2]), int(rec[3]),
                                 float(rec[4]), float(rec[5]), float(rec[6]), float(rec[7])))
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    solves = []
    sp = solves_path(path)
    if sp.exists():
        with open(sp, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for rec in reader:
                solves.append(SolveRecord(rec[0], int(rec[1]), int(rec[2]), int(rec[3]), rec[4] == "1",
                                          int(rec[5]), float(rec[6]), float(rec[7]), int(rec[8]), rec[9]))
    return BenchReport(rows, meta, solves)


def write_cost_report(report: CostReport, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["batch_size", "method", "one_time_s", "per_solve_s", "total_s", "one_time_fraction"])
        for r in report.rows:
            w.writerow([r.batch_size, r.method, _fmt(r.one_time_s), _fmt(r.per_solve_s),
                        _fmt(r.total_s), _fmt(r.one_time_fraction)])
    meta = {**report.metadata, "crossover": report.crossover, "one_time_s": report.one_time_s,
            "per_solve_s": report.per_solve_s}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_cost_report(path: str | Path) -> CostReport:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            rows.append(CostRow(int(rec[0]), rec[1], float(rec[2]), float(rec[3]), float(rec[4]), float(rec[5])))
    meta = json.loads(path.with_suffix(".json").read_text())
    return CostReport(rows, meta.get("crossover"), meta["one_time_s"], meta["per_solve_s"], meta)
