import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from j2lambert.astro import JUPITER, spherical_to_cart
from j2lambert.propagator import propagate_rv
from j2lambert.samples import (
    ALL_FORMS, EXTENDED_RANGES, STREAM_BENCH, TABLE1_RANGES, Dataset, SampleForm, SampleRanges,
    audit_record, draw_elements, dv2_sph_input, generate_dataset, generate_sample, project_form,
    read_dataset, revs_for_tof, sample_seed, symmetry_augmenter, write_dataset,
)

from .conftest import KEPLER_JUPITER


@given(st.integers(0, 2**63 - 1))
def test_record_identities_and_ranges(seed):
    rec = generate_sample(seed, TABLE1_RANGES, JUPITER)
    assert np.array_equal(rec.delta_v0, rec.v0 - rec.v_d)
    assert np.array_equal(rec.delta_rf, rec.rf - rec.r_fd)
    oe = rec.elements
    rp, ra = oe.a * (1 - oe.e) / JUPITER.radius, oe.a * (1 + oe.e) / JUPITER.radius
    assert 5 - 1e-9 <= rp <= ra <= 30 + 1e-9
    assert 0 <= oe.i <= 1
    assert rec.revs == 0
    assert audit_record(rec, TABLE1_RANGES, JUPITER) == []


def test_keplerian_body_gives_zero_differences():
    for k in range(20):
        rec = generate_sample(sample_seed(3, k), EXTENDED_RANGES, KEPLER_JUPITER)
        assert np.linalg.norm(rec.delta_v0) < 1e-9
        assert np.linalg.norm(rec.delta_rf) < 1e-4


def test_regeneration_is_bit_identical():
    a = generate_sample(42, TABLE1_RANGES, JUPITER)
    b = generate_sample(42, TABLE1_RANGES, JUPITER)
    for name in ("r0", "v0", "rf", "vf", "v_d", "r_fd", "delta_v0", "delta_rf"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.tof == b.tof and a.revs == b.revs


@pytest.mark.parametrize("frac,revs", [(0.5, 0), (9.99, 9), (1.0, 1), (3.0, 3)])
def test_revs_for_tof(frac, revs):
    assert revs_for_tof(frac * 1000.0, 1000.0) == revs


def test_revs_for_tof_rejects_bad_period():
    with pytest.raises(ValueError):
        revs_for_tof(1.0, 0.0)


@pytest.mark.parametrize("kw", [dict(rp_range=(4.0, 10.0)), dict(ra_max=20.0), dict(tof_range=(1.0, 1.0)),
                                dict(revs=3)])
def test_range_validation(kw):
    with pytest.raises(ValueError):
        SampleRanges(**kw)


def test_rev_constrained_ranges():
    rng = EXTENDED_RANGES.for_revs(4)
    assert rng.tof_fraction_bounds() == (4.0, 5.0)
    rec = generate_sample(5, rng, JUPITER)
    assert rec.revs == 4


def test_extended_ranges_reach_retrograde_and_many_revs():
    ds = generate_dataset(300, 1, EXTENDED_RANGES, JUPITER)
    assert ds.revs.max() >= 8
    inc = [generate_sample(int(s), EXTENDED_RANGES, JUPITER).elements.i for s in ds.seed[:60]]
    assert max(inc) > math.pi / 2


def test_element_draws_uniform():
    rng = np.random.default_rng(8)
    draws = [draw_elements(rng, TABLE1_RANGES, JUPITER) for _ in range(10_000)]
    rp = np.array([d.a * (1 - d.e) for d in draws]) / JUPITER.radius
    for values, lo, hi in (
        (rp, 5.0, 30.0),
        (np.array([d.i for d in draws]), 0.0, 1.0),
        (np.array([d.raan for d in draws]), 0.0, 2 * math.pi),
        (np.array([d.argp for d in draws]), 0.0, 2 * math.pi),
        (np.array([d.mean_anomaly for d in draws]), 0.0, 2 * math.pi),
    ):
        assert stats.kstest(values, "uniform", args=(lo, hi - lo)).pvalue > 0.05 / 5


def test_miss_grows_with_flight_time():
    ds = generate_dataset(2000, 9, EXTENDED_RANGES, JUPITER)
    rho = stats.spearmanr(ds.tof, np.linalg.norm(ds.delta_rf, axis=1)).statistic
    assert rho > 0.3


def test_form_dimensions():
    rec = generate_sample(11, TABLE1_RANGES, JUPITER)
    dims = {f: project_form(rec, f)[0].shape[0] for f in ALL_FORMS}
    assert [dims[f] for f in ALL_FORMS] == [7, 7, 7, 7, 10, 10]
    for f in ALL_FORMS:
        assert project_form(rec, f)[1].shape == (3,)
        assert len(f.input_names()) == f.input_dim


def test_dv2_sph_layout_and_round_trip():
    rec = generate_sample(12, EXTENDED_RANGES, JUPITER)
    x, y = project_form(rec, SampleForm.DV2_SPH)
    assert x[9] == pytest.approx(rec.tof / 86400.0)
    assert x[0] == pytest.approx(np.linalg.norm(rec.r0) / JUPITER.radius)
    assert x[6] == pytest.approx(np.linalg.norm(rec.delta_rf))
    np.testing.assert_allclose(spherical_to_cart(tuple(y)), rec.delta_v0, rtol=0,
                               atol=1e-12 * np.linalg.norm(rec.delta_v0))
    assert np.array_equal(dv2_sph_input(rec.r0, rec.v_d, rec.delta_rf, rec.tof, JUPITER.radius), x)


def test_keplerian_record_projects_to_zero_output():
    rec = generate_sample(13, TABLE1_RANGES, KEPLER_JUPITER)
    _, y = project_form(rec, SampleForm.DV1_CAR)
    assert np.linalg.norm(y) < 1e-9


def test_form_parse_and_codecs():
    assert SampleForm.parse(" DV2-sph ") is SampleForm.DV2_SPH
    with pytest.raises(ValueError):
        SampleForm.parse("v-OEm")
    ci, co = SampleForm.DV2_SPH.codecs()
    assert ci == ("raw", "angle", "raw", "raw", "angle", "raw", "log", "angle", "raw", "raw")
    assert co == ("log", "angle", "raw")
    assert SampleForm.V_CAR.codecs() == (("raw",) * 7, ("raw",) * 3)


def test_dataset_file_round_trip(tmp_path):
    ds = generate_dataset(100, 5, EXTENDED_RANGES, JUPITER)
    assert len(ds) == 100
    write_dataset(ds, tmp_path / "d.csv")
    back = read_dataset(tmp_path / "d.csv")
    assert back.equals(ds)
    assert back.record(7).revs == ds.record(7).revs


def test_read_dataset_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("seed,revs\n1,2\n")
    with pytest.raises(ValueError):
        read_dataset(p)


def test_streams_and_seeds_do_not_collide():
    a = generate_dataset(100, 1, TABLE1_RANGES, JUPITER)
    b = generate_dataset(100, 1, TABLE1_RANGES, JUPITER, start=100)
    c = generate_dataset(100, 1, TABLE1_RANGES, JUPITER, stream=STREAM_BENCH)
    keys = [set(map(bytes, d.r0.view(np.uint8).reshape(len(d), -1))) for d in (a, b, c)]
    assert not keys[0] & keys[1] and not keys[0] & keys[2] and not keys[1] & keys[2]


def test_subset_and_empty():
    ds = generate_dataset(10, 2, TABLE1_RANGES, JUPITER)
    assert len(ds.subset(np.arange(3))) == 3
    with pytest.raises(ValueError):
        Dataset.from_records([])
    with pytest.raises(ValueError):
        generate_dataset(0, 1, TABLE1_RANGES, JUPITER)


def _rotate(v, phi, flip):
    c, s = math.cos(phi), math.sin(phi)
    out = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])
    if flip:
        out[2] = -out[2]
    return out


@pytest.mark.parametrize("form", [SampleForm.DV2_SPH, SampleForm.DV2_CAR])
def test_augmented_sample_is_physical(form):
    rec = generate_sample(21, EXTENDED_RANGES, JUPITER)
    x, y = project_form(rec, form)
    rng = np.random.default_rng(0)
    xa, ya = symmetry_augmenter(form)(rng, x[None], y[None])
    rng = np.random.default_rng(0)
    phi, flip = rng.uniform(0, 2 * math.pi), rng.random() < 0.5
    r0, v0, v_d = (_rotate(v, phi, flip) for v in (rec.r0, rec.v0, rec.v_d))
    rf, _ = propagate_rv(r0, v0, rec.tof, JUPITER)
    r_fd, _ = propagate_rv(r0, v_d, rec.tof, JUPITER)
    ds = Dataset.from_records([type(rec)(r0, v0, rf, rf, v_d, r_fd, v0 - v_d, rf - r_fd, rec.tof, rec.revs, 0)])
    xr, yr = project_form(ds, form)
    np.testing.assert_allclose(xa[0], xr[0], rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(ya[0], yr[0], rtol=1e-6, atol=1e-12)
