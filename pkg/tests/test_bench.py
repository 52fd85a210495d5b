import math

import numpy as np
import pytest

from j2lambert.astro import JUPITER, angle_between
from j2lambert.bench import (
    BenchConfig, SolveRecord, aggregate, amortized_cost, build_stress_case, read_cost_report,
    read_report, run_convergence_bench, run_stress_bench, write_cost_report, write_report,
)
from j2lambert.samples import TABLE1_RANGES


def _rec(method, revs, ok, iters=3, t=0.1, err=1e-4):
    return SolveRecord(method, revs, 0, 0, ok, iters, t, err if ok else math.inf, 4 * iters + 2, "x")


def test_aggregate_means_over_converged_only():
    solves = [_rec("SN", 1, True, 2, 0.2), _rec("SN", 1, True, 4, 0.4), _rec("SN", 1, False, 2000, 9.0),
              _rec("DNN", 1, True, 1, 0.1), _rec("DNN", 0, False)]
    rows = {(r.method, r.revs): r for r in aggregate(solves)}
    sn = rows["SN", 1]
    assert (sn.n, sn.converged) == (3, 2)
    assert sn.ratio == pytest.approx(2 / 3)
    assert sn.mean_iters == 3.0 and sn.mean_time_s == pytest.approx(0.3)
    dead = rows["DNN", 0]
    assert dead.ratio == 0.0 and math.isnan(dead.mean_iters)


def test_amortized_identities():
    rep = amortized_cost([1, 10, 100, 1000], 5.0, {"SN": 0.03, "DNN": 0.01})
    for r in rep.rows:
        assert r.total_s == r.one_time_s + r.batch_size * r.per_solve_s
        assert r.one_time_fraction == (r.one_time_s / r.total_s)
        assert (r.one_time_s == 5.0) == (r.method == "DNN")
    n = rep.crossover
    assert n == 251
    assert 5.0 + n * 0.01 < n * 0.03
    assert 5.0 + (n - 1) * 0.01 >= (n - 1) * 0.03


def test_no_crossover_when_learned_method_is_slower():
    assert amortized_cost([10], 1.0, {"SN": 0.01, "DNN": 0.02}).crossover is None


def test_amortized_rejects_bad_input():
    with pytest.raises(ValueError):
        amortized_cost([0], 1.0, {"SN": 0.1})
    with pytest.raises(ValueError):
        amortized_cost([1], -1.0, {"SN": 0.1})


def test_bench_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(samples_per_rev=0)
    with pytest.raises(ValueError):
        BenchConfig(methods=("SN", "GA"))
    with pytest.raises(ValueError):
        run_convergence_bench(BenchConfig(samples_per_rev=1), None)


def test_small_convergence_bench_and_round_trip(tmp_path):
    cfg = BenchConfig(rev_counts=(0, 2), samples_per_rev=3, methods=("SN",))
    rep = run_convergence_bench(cfg)
    assert [(r.method, r.revs, r.n) for r in rep.rows] == [("SN", 0, 3), ("SN", 2, 3)]
    assert all(r.ratio == 1.0 for r in rep.rows)
    assert all(s.propagations == (1 if s.revs == 0 else 2) + 4 * s.iterations + 1 for s in rep.solves)
    write_report(rep, tmp_path / "b.csv")
    back = read_report(tmp_path / "b.csv")
    assert back.metadata == rep.metadata
    for a, b in zip(rep.rows, back.rows):
        assert (a.method, a.revs, a.converged) == (b.method, b.revs, b.converged)
        assert b.mean_time_s == pytest.approx(a.mean_time_s, rel=1e-9)
    assert [s.index for s in back.solves] == [s.index for s in rep.solves]
    # same seed, same samples
    again = run_convergence_bench(cfg)
    assert [s.seed for s in again.solves] == [s.seed for s in rep.solves]
    assert [s.iterations for s in again.solves] == [s.iterations for s in rep.solves]


def test_cost_report_round_trip(tmp_path):
    rep = amortized_cost([1, 50], 2.0, {"SN": 0.02, "DNN": 0.01})
    write_cost_report(rep, tmp_path / "c.csv")
    back = read_cost_report(tmp_path / "c.csv")
    assert back.crossover == rep.crossover == 201
    assert [(r.batch_size, r.method, r.total_s) for r in back.rows] == [
        (r.batch_size, r.method, pytest.approx(r.total_s, rel=1e-9)) for r in rep.rows]


def test_read_report_rejects_bad_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n")
    with pytest.raises(ValueError):
        read_report(p)


@pytest.mark.parametrize("angle,revs", [(180, 0), (180, 2), (360, 0), (360, 1)])
def test_stress_geometry(angle, revs):
    sc = build_stress_case(np.random.default_rng(revs), angle, revs, JUPITER, TABLE1_RANGES)
    target = math.pi if angle == 180 else 0.0
    assert abs(angle_between(sc.r0, sc.rf) - target) < 1e-9
    assert sc.lambert_revs == (revs if angle == 180 else revs + 1)
    assert sc.tof > 0


def test_stress_rejects_other_angles():
    with pytest.raises(ValueError):
        build_stress_case(np.random.default_rng(0), 90, 0, JUPITER)


def test_small_stress_bench():
    rep = run_stress_bench(180, [0], 2, 3, methods=("SN",))
    assert rep.row("SN", 0).ratio == 1.0
    assert rep.metadata["worst_angle_error_rad"] < 1e-9
