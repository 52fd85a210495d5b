"""Column statistics and input/output correlation screening of sample forms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .samples import ALL_FORMS, Dataset, SampleForm, component_names, block_values, project_form

WEAK_CORRELATION = 0.01


class UndefinedStatisticError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    std: float
    rho: float
    n: int


def summary_stats(values) -> ColumnStats:
    """Population mean and std, plus log10 of the largest over the smallest nonzero |X|."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty column")
    mean = float(np.mean(x))
    std = float(np.sqrt(np.mean((x - mean) ** 2)))
    ax = np.abs(x)
    nonzero = ax[ax > 0]
    if nonzero.size == 0:
        raise UndefinedStatisticError("magnitude spread is undefined for an all-zero column")
    return ColumnStats(mean, std, float(np.log10(ax.max()) - np.log10(nonzero.min())), int(x.size))


def pearson_matrix(inputs, outputs) -> np.ndarray:
    """Population Pearson coefficients, one row per output, one column per input.

    Pairs involving a zero-variance column are NaN.
    """
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(outputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if n < 2 or Y.shape[0] != n:
        raise ValueError("need at least two paired rows")
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    sx = np.sqrt(np.mean(Xc * Xc, axis=0))
    sy = np.sqrt(np.mean(Yc * Yc, axis=0))
    cov = (Yc.T @ Xc) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        R = cov / np.outer(sy, sx)
    # a column is constant when its spread vanishes relative to its level
    const_x = sx <= 1e-14 * np.maximum(np.abs(X).max(axis=0), 1e-300)
    const_y = sy <= 1e-14 * np.maximum(np.abs(Y).max(axis=0), 1e-300)
    R[const_y, :] = np.nan
    R[:, const_x] = np.nan
    return np.clip(R, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class CorrelationReport:
    form: SampleForm
    matrix: np.ndarray
    weak_rows: np.ndarray
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    dominance: float

    @property
    def has_weak_rows(self) -> bool:
        return bool(self.weak_rows.any())

    def block(self, name: str) -> np.ndarray:
        """Output-by-component correlations against one three-column input block."""
        if name == "tof" or name not in self.form.input_blocks:
            raise KeyError(name)
        j = 3 * self.form.input_blocks.index(name)
        return self.matrix[:, j:j + 3]


def _weak_rows(R: np.ndarray, threshold: float) -> np.ndarray:
    absr = np.where(np.isnan(R), 0.0, np.abs(R))
    return np.all(absr < threshold, axis=1)


def diagonal_dominance(block: np.ndarray) -> float:
    """min over rows of |B_ii| - max_{j != i} |B_ij|; positive means dominant."""
    A = np.abs(np.nan_to_num(block, nan=0.0))
    margins = []
    for i in range(A.shape[0]):
        off = np.delete(A[i], i)
        margins.append(A[i, i] - off.max())
    return float(min(margins))


# the start position is shared by every form and says little about the output
_SCORED_BLOCKS = ("v_d", "delta_rf", "rf")


def correlation_report(ds: Dataset, form: SampleForm, threshold: float = WEAK_CORRELATION,
                       length_unit: float = 71492.0) -> CorrelationReport:
    x, y = project_form(ds, form, length_unit)
    R = pearson_matrix(x, y)
    score = sum(diagonal_dominance(R[:, 3 * k:3 * k + 3])
                for k, b in enumerate(form.input_blocks) if b in _SCORED_BLOCKS)
    return CorrelationReport(form, R, _weak_rows(R, threshold), tuple(form.input_names()),
                             tuple(form.output_names()), float(score))


@dataclass(frozen=True, eq=False)
class ScreeningReport:
    stats: dict[str, ColumnStats | None]
    correlations: list[CorrelationReport]
    ranking: list[SampleForm]


def variable_columns(ds: Dataset, forms=ALL_FORMS, length_unit: float = 71492.0) -> dict[str, np.ndarray]:
    """Every distinct variable used by ``forms``, keyed by column name."""
    cols: dict[str, np.ndarray] = {}
    for form in forms:
        for block in (*form.input_blocks, form.output_block):
            values = block_values(ds, block, form.spherical, length_unit)
            names = ["tof"] if block == "tof" else component_names(block, form.spherical)
            for k, name in enumerate(names):
                cols.setdefault(name, values[:, k])
    return cols


def form_screening_report(ds: Dataset, forms=ALL_FORMS, threshold: float = WEAK_CORRELATION,
                          length_unit: float = 71492.0) -> ScreeningReport:
    """Statistics for every variable and a ranking of forms.

    Forms without weak output rows come first; ties break on the summed
    diagonal-dominance margins of the Keplerian-velocity and terminal-miss
    blocks (the target-position block for forms that have neither).
    """
    if len(ds) == 0:
        raise ValueError("empty dataset")
    stats: dict[str, ColumnStats | None] = {}
    for name, col in variable_columns(ds, forms, length_unit).items():
        try:
            stats[name] = summary_stats(col)
        except UndefinedStatisticError:
            stats[name] = None
    reports = [correlation_report(ds, f, threshold, length_unit) for f in forms]
    order = sorted(range(len(reports)),
                   key=lambda k: (reports[k].has_weak_rows, -reports[k].dominance, k))
    return ScreeningReport(stats, reports, [reports[k].form for k in order])


def _num(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.10g}"


def write_stats_csv(report: ScreeningReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "mean", "std", "rho", "n"])
        for name, st in report.stats.items():
            if st is None:
                w.writerow([name, "nan", "nan", "nan", "0"])
            else:
                w.writerow([name, _num(st.mean), _num(st.std), _num(st.rho), st.n])


def write_correlation_csv(report: ScreeningReport, path: str | Path) -> None:
    """Long format: one row per (form, output, input) coefficient."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["form", "output", "input", "pearson", "weak_row"])
        for rep in report.correlations:
            for i, out in enumerate(rep.output_names):
                for j, inp in enumerate(rep.input_names):
                    w.writerow([rep.form.value, out, inp, _num(float(rep.matrix[i, j])), int(rep.weak_rows[i])])


def ranking_text(report: ScreeningReport) -> str:
    by_form = {r.form: r for r in report.correlations}
    lines = ["rank  form      weak_rows  dominance"]
    for k, form in enumerate(report.ranking, start=1):
        rep = by_form[form]
        lines.append(f"{k:<5} {form.value:<9} {int(rep.weak_rows.sum()):<10} {rep.dominance:+.4f}")
    return "\n".join(lines) + "\n"
