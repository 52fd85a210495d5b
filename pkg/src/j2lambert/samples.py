"""Training-sample factory and sample-form projections.

A sample is built without solving the perturbed problem: draw a random
orbit and time of flight, propagate it under J2 to get the exact target,
solve the Keplerian Lambert problem between the same endpoints, propagate
that Keplerian guess under J2, and record the differences.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .astro import (
    BodyParams,
    OrbitalElements,
    StateCartesian,
    cart_to_spherical_rows,
    elements_to_state,
    orbital_period,
    state_to_elements,
)
from .lambert import LambertError, LambertQuery, solve_kepler_lambert
from .propagator import DEFAULT_CONFIG, PropagationError, PropagatorConfig, propagate_rv

SECONDS_PER_DAY = 86400.0
MAX_RETRIES = 50

# Stream tags keep per-sample seeds of different consumers disjoint.
STREAM_TRAIN = 0
STREAM_BENCH = 1
STREAM_STRESS = 2


@dataclass(frozen=True)
class SampleRanges:
    """Uniform sampling intervals; radii in body radii, times in periods."""

    rp_range: tuple[float, float] = (5.0, 30.0)
    ra_max: float = 30.0
    incl_range: tuple[float, float] = (0.0, 1.0)
    raan_range: tuple[float, float] = (0.0, 2 * math.pi)
    argp_range: tuple[float, float] = (0.0, 2 * math.pi)
    mean_anomaly_range: tuple[float, float] = (0.0, 2 * math.pi)
    tof_range: tuple[float, float] = (0.0, 1.0)
    revs: int | None = None

    def __post_init__(self):
        lo, hi = self.rp_range
        if lo < 5.0 or hi < lo:
            raise ValueError(f"invalid pericentre range {self.rp_range}")
        if self.ra_max < hi:
            raise ValueError("ra_max must be at least the largest pericentre radius")
        tlo, thi = self.tof_range
        if not (0.0 <= tlo < thi):
            raise ValueError(f"invalid tof range {self.tof_range}")
        if self.revs is not None and not (tlo <= self.revs < thi):
            raise ValueError(f"revs={self.revs} outside tof range {self.tof_range}")

    def for_revs(self, revs: int) -> "SampleRanges":
        return SampleRanges(
            self.rp_range, self.ra_max, self.incl_range, self.raan_range,
            self.argp_range, self.mean_anomaly_range, self.tof_range, revs,
        )

    def tof_fraction_bounds(self) -> tuple[float, float]:
        if self.revs is None:
            return self.tof_range
        return float(self.revs), float(min(self.revs + 1, self.tof_range[1]))


TABLE1_RANGES = SampleRanges()
EXTENDED_RANGES = SampleRanges(incl_range=(0.0, math.pi), tof_range=(0.0, 10.0))


@dataclass(frozen=True, eq=False)
class SampleRecord:
    r0: np.ndarray
    v0: np.ndarray
    rf: np.ndarray
    vf: np.ndarray
    v_d: np.ndarray
    r_fd: np.ndarray
    delta_v0: np.ndarray
    delta_rf: np.ndarray
    tof: float
    revs: int
    seed: int
    elements: OrbitalElements | None = field(default=None, repr=False)
    retries: int = 0


class SampleGenerationError(RuntimeError):
    pass


def sample_seed(dataset_seed: int, index: int, stream: int = STREAM_TRAIN) -> int:
    """Per-sample seed derived from (stream, dataset seed, index)."""
    ss = np.random.SeedSequence(entropy=[stream, dataset_seed], spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def revs_for_tof(tof: float, period: float) -> int:
    """Complete revolutions in ``tof``; an exact multiple of the period counts up."""
    if not period > 0:
        raise ValueError("period must be positive")
    return int(math.floor(tof / period))


def draw_elements(rng: np.random.Generator, ranges: SampleRanges, body: BodyParams) -> OrbitalElements:
    rp = rng.uniform(*ranges.rp_range)
    ra = rng.uniform(rp, ranges.ra_max)
    a = 0.5 * (ra + rp) * body.radius
    e = (ra - rp) / (ra + rp)
    return OrbitalElements(
        a=a,
        e=e,
        i=rng.uniform(*ranges.incl_range),
        raan=rng.uniform(*ranges.raan_range),
        argp=rng.uniform(*ranges.argp_range),
        mean_anomaly=rng.uniform(*ranges.mean_anomaly_range),
    )


def draw_tof_fraction(rng: np.random.Generator, ranges: SampleRanges) -> float:
    lo, hi = ranges.tof_fraction_bounds()
    while True:
        frac = rng.uniform(lo, hi)
        if lo < frac < hi:
            return frac


def _closest_branch(solutions, v_true):
    return min(solutions, key=lambda s: float(np.linalg.norm(s.v0 - v_true)))


def generate_sample(seed: int, ranges: SampleRanges, body: BodyParams,
                    prop_cfg: PropagatorConfig = DEFAULT_CONFIG) -> SampleRecord:
    """Build one sample; deterministic in ``seed``.

    Draws whose Keplerian Lambert problem has no solution (or whose
    propagation fails) are rejected and redrawn from a sub-seed.
    """
    for attempt in range(MAX_RETRIES):
        rng = np.random.default_rng([seed, attempt])
        oe = draw_elements(rng, ranges, body)
        period = orbital_period(oe.a, body.mu)
        tof = draw_tof_fraction(rng, ranges) * period
        revs = revs_for_tof(tof, period)
        state0 = elements_to_state(oe, body.mu)
        r0, v0 = state0.position, state0.velocity
        try:
            rf, vf = propagate_rv(r0, v0, tof, body, prop_cfg)
            sols = solve_kepler_lambert(
                LambertQuery(r0, rf, tof, body.mu, revs=revs, plane_hint=np.cross(r0, v0))
            )
            v_d = _closest_branch(sols, v0).v0
            r_fd, _ = propagate_rv(r0, v_d, tof, body, prop_cfg)
        except (LambertError, PropagationError):
            continue
        return SampleRecord(
            r0=r0, v0=v0, rf=rf, vf=vf, v_d=v_d, r_fd=r_fd,
            delta_v0=v0 - v_d, delta_rf=rf - r_fd,
            tof=tof, revs=revs, seed=seed, elements=oe, retries=attempt,
        )
    raise SampleGenerationError(f"seed {seed}: no valid sample after {MAX_RETRIES} draws")


def audit_record(rec: SampleRecord, ranges: SampleRanges, body: BodyParams,
                 prop_cfg: PropagatorConfig = DEFAULT_CONFIG, tol_km: float = 1e-5) -> list[str]:
    """Re-run the propagation steps of a stored record and list every discrepancy.

    Checks the difference identities (exactly), that (r0, v0) and (r0, v_d)
    reach the stored rf and r_fd within ``tol_km``, and that the generating
    orbit recovered from (r0, v0) lies inside ``ranges``. Empty means clean.
    """
    problems = []
    if not np.array_equal(rec.delta_v0, rec.v0 - rec.v_d):
        problems.append("delta_v0 != v0 - v_d")
    if not np.array_equal(rec.delta_rf, rec.rf - rec.r_fd):
        problems.append("delta_rf != rf - r_fd")
    rf, _ = propagate_rv(rec.r0, rec.v0, rec.tof, body, prop_cfg)
    if np.linalg.norm(rf - rec.rf) > tol_km:
        problems.append(f"rf off by {np.linalg.norm(rf - rec.rf):.3g} km")
    r_fd, _ = propagate_rv(rec.r0, rec.v_d, rec.tof, body, prop_cfg)
    if np.linalg.norm(r_fd - rec.r_fd) > tol_km:
        problems.append(f"r_fd off by {np.linalg.norm(r_fd - rec.r_fd):.3g} km")

    oe = state_to_elements(StateCartesian(rec.r0, rec.v0), body.mu)
    slack = 1e-9
    rp = oe.a * (1 - oe.e) / body.radius
    ra = oe.a * (1 + oe.e) / body.radius
    if not ranges.rp_range[0] - slack <= rp <= ranges.rp_range[1] + slack:
        problems.append(f"pericentre {rp:.6g} R outside {ranges.rp_range}")
    if not rp - slack <= ra <= ranges.ra_max + slack:
        problems.append(f"apocentre {ra:.6g} R outside [rp, {ranges.ra_max}]")
    if not ranges.incl_range[0] - slack <= oe.i <= ranges.incl_range[1] + slack:
        problems.append(f"inclination {oe.i:.6g} outside {ranges.incl_range}")
    period = orbital_period(oe.a, body.mu)
    frac = rec.tof / period
    lo, hi = ranges.tof_fraction_bounds()
    if not lo - slack < frac < hi + slack:
        problems.append(f"tof fraction {frac:.6g} outside ({lo}, {hi})")
    if rec.revs != revs_for_tof(rec.tof, period) and abs(frac - round(frac)) > slack:
        problems.append(f"revs {rec.revs} does not match tof fraction {frac:.6g}")
    return problems


# ---------------------------------------------------------------------------
# Datasets

_VEC_FIELDS = ("r0", "v0", "rf", "vf", "v_d", "r_fd", "delta_v0", "delta_rf")
_CSV_PREFIX = {"r0": "r0", "v0": "v0", "rf": "rf", "vf": "vf", "v_d": "vd",
               "r_fd": "rfd", "delta_v0": "dv0", "delta_rf": "drf"}
CSV_COLUMNS = ["seed", "revs", "tof_s"] + [
    f"{_CSV_PREFIX[name]}_{axis}" for name in _VEC_FIELDS for axis in "xyz"
]


@dataclass(eq=False)
class Dataset:
    """Column-oriented collection of samples; vector fields are (n, 3)."""

    seed: np.ndarray
    revs: np.ndarray
    tof: np.ndarray
    r0: np.ndarray
    v0: np.ndarray
    rf: np.ndarray
    vf: np.ndarray
    v_d: np.ndarray
    r_fd: np.ndarray
    delta_v0: np.ndarray
    delta_rf: np.ndarray

    def __len__(self) -> int:
        return int(self.tof.shape[0])

    @classmethod
    def from_records(cls, records) -> "Dataset":
        records = list(records)
        if not records:
            raise ValueError("no records")
        cols = {name: np.array([getattr(r, name) for r in records], dtype=float) for name in _VEC_FIELDS}
        return cls(
            seed=np.array([r.seed for r in records], dtype=np.int64),
            revs=np.array([r.revs for r in records], dtype=np.int64),
            tof=np.array([r.tof for r in records], dtype=float),
            **cols,
        )

    def subset(self, idx) -> "Dataset":
        return Dataset(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    def record(self, k: int) -> SampleRecord:
        return SampleRecord(
            **{name: getattr(self, name)[k].copy() for name in _VEC_FIELDS},
            tof=float(self.tof[k]), revs=int(self.revs[k]), seed=int(self.seed[k]),
        )

    def equals(self, other: "Dataset") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


def generate_dataset(n: int, seed: int, ranges: SampleRanges, body: BodyParams,
                     prop_cfg: PropagatorConfig = DEFAULT_CONFIG, stream: int = STREAM_TRAIN,
                     start: int = 0, progress=None) -> Dataset:
    if n <= 0:
        raise ValueError("n must be positive")
    records = []
    for k in range(start, start + n):
        records.append(generate_sample(sample_seed(seed, k, stream), ranges, body, prop_cfg))
        if progress is not None:
            progress(k - start + 1, n)
    return Dataset.from_records(records)


def write_dataset(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for k in range(len(ds)):
                row = [str(int(ds.seed[k])), str(int(ds.revs[k])), f"{ds.tof[k]:.17g}"]
                for name in _VEC_FIELDS:
                    row.extend(f"{c:.17g}" for c in getattr(ds, name)[k])
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header!r}")
            rows = list(reader)
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: dataset has no rows")
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
    seeds = np.array([int(r[0]) for r in rows], dtype=np.int64)
    revs = np.array([int(r[1]) for r in rows], dtype=np.int64)
    num = np.array([[float(x) for x in r[2:]] for r in rows], dtype=float)
    cols = {name: num[:, 1 + 3 * j: 4 + 3 * j] for j, name in enumerate(_VEC_FIELDS)}
    return Dataset(seed=seeds, revs=revs, tof=num[:, 0], **{k: np.ascontiguousarray(v) for k, v in cols.items()})


# ---------------------------------------------------------------------------
# Sample forms


class SampleForm(enum.Enum):
    V_CAR = "v-Car"
    V_SPH = "v-Sph"
    DV1_CAR = "dv1-Car"
    DV1_SPH = "dv1-Sph"
    DV2_CAR = "dv2-Car"
    DV2_SPH = "dv2-Sph"

    @classmethod
    def parse(cls, text: str) -> "SampleForm":
        for form in cls:
            if form.value.lower() == text.strip().lower():
                return form
        raise ValueError(f"unknown sample form '{text}'")

    @property
    def spherical(self) -> bool:
        return self.value.endswith("Sph")

    @property
    def input_blocks(self) -> tuple[str, ...]:
        return {
            "v": ("r0", "rf", "tof"),
            "dv1": ("r0", "delta_rf", "tof"),
            "dv2": ("r0", "v_d", "delta_rf", "tof"),
        }[self.value.split("-")[0]]

    @property
    def output_block(self) -> str:
        return "v0" if self.value.startswith("v-") else "delta_v0"

    @property
    def input_dim(self) -> int:
        return 3 * (len(self.input_blocks) - 1) + 1

    def input_names(self) -> list[str]:
        names = []
        for block in self.input_blocks:
            names.extend(["tof"] if block == "tof" else component_names(block, self.spherical))
        return names

    def output_names(self) -> list[str]:
        return component_names(self.output_block, self.spherical)

    def codecs(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """Default per-column network pretreatment for (inputs, outputs).

        Spherical forms take log10 of difference-vector magnitudes, which
        span several decades, and feed azimuths as (cos, sin) pairs so the
        0/2pi seam is continuous. Cartesian forms stay raw.
        """
        def block_codec(block):
            if block == "tof":
                return ("raw",)
            if not self.spherical:
                return ("raw",) * 3
            return ("log" if block in _DIFFERENCE_BLOCKS else "raw", "angle", "raw")

        inputs = tuple(c for b in self.input_blocks for c in block_codec(b))
        return inputs, block_codec(self.output_block)


ALL_FORMS = tuple(SampleForm)
_DIFFERENCE_BLOCKS = {"delta_rf", "delta_v0"}

# position-like blocks are shown in body radii, differences stay in km
_LENGTH_SCALED = {"r0", "rf"}


def component_names(block: str, spherical: bool) -> list[str]:
    suffix = ("mag", "az", "el") if spherical else ("x", "y", "z")
    return [f"{block}_{s}" for s in suffix]


def block_values(ds: Dataset, block: str, spherical: bool, length_unit: float) -> np.ndarray:
    """Presentation-unit values of one block: (n, 3) vectors or (n, 1) tof in days."""
    if block == "tof":
        return (ds.tof / SECONDS_PER_DAY)[:, None]
    vec = getattr(ds, block)
    if block in _LENGTH_SCALED:
        vec = vec / length_unit
    return cart_to_spherical_rows(vec) if spherical else vec.copy()


def project_form(data: Dataset | SampleRecord, form: SampleForm,
                 length_unit: float = 71492.0) -> tuple[np.ndarray, np.ndarray]:
    """Input and output arrays of a sample form.

    A single record gives 1-D vectors; a dataset gives (n, dim) arrays.
    Spherical difference blocks are the spherical coordinates of the
    Cartesian difference vector.
    """
    single = isinstance(data, SampleRecord)
    ds = Dataset.from_records([data]) if single else data
    x = np.hstack([block_values(ds, b, form.spherical, length_unit) for b in form.input_blocks])
    y = block_values(ds, form.output_block, form.spherical, length_unit)
    if single:
        return x[0], y[0]
    return x, y


def dv2_sph_input(r0, v_d, delta_rf, tof: float, length_unit: float) -> np.ndarray:
    """dv2-Sph input vector for a single query (same layout as project_form)."""
    vecs = np.vstack([np.asarray(r0, float) / length_unit, v_d, delta_rf])
    sph = cart_to_spherical_rows(vecs)
    return np.concatenate([sph.ravel(), [tof / SECONDS_PER_DAY]])


def symmetry_augmenter(form: SampleForm):
    """Random exact symmetries of the J2 problem, applied to projected batches.

    The oblate field is unchanged by rotations about the polar axis and by
    reflection through the equator, so rotating every vector of a sample by
    one random angle about z, and mirroring z with probability 1/2, yields
    another valid sample. Returns ``augment(rng, x, y) -> (x, y)``.
    """
    blocks = [b for b in form.input_blocks if b != "tof"]
    in_starts = [3 * form.input_blocks.index(b) for b in blocks]

    def augment(rng: np.random.Generator, x, y):
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        n = x.shape[0]
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        flip = rng.random(n) < 0.5
        for arr, starts in ((x, in_starts), (y, [0])):
            for j in starts:
                if form.spherical:
                    arr[:, j + 1] = np.mod(arr[:, j + 1] + phi, 2.0 * math.pi)
                    arr[:, j + 2] = np.where(flip, -arr[:, j + 2], arr[:, j + 2])
                else:
                    c, s_ = np.cos(phi), np.sin(phi)
                    vx, vy = arr[:, j].copy(), arr[:, j + 1]
                    arr[:, j] = c * vx - s_ * vy
                    arr[:, j + 1] = s_ * vx + c * vy
                    arr[:, j + 2] = np.where(flip, -arr[:, j + 2], arr[:, j + 2])
        return x, y

    return augment
