import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vfhilbert import decompose as dc
from vfhilbert import pipeline as pl
from vfhilbert import verify as vf
from vfhilbert.grid import GridFunction


@pytest.fixture(scope="module")
def instance64():
    return pl.run_instance(pl.golden_config("n64"), 3)


def test_report_ratio_and_coercion():
    r = vf.ConstantReport("x", "i", np.float64(3.0), np.int64(4), k=np.int32(2))
    assert r.ratio == 0.75
    assert type(r.lhs) is float and type(r.k) is int
    assert not r.degenerate


@pytest.mark.parametrize("rhs", [0.0, -1.0, math.inf, math.nan])
def test_degenerate_rhs_gives_nan_ratio(rhs):
    r = vf.ConstantReport("x", "i", 1.0, rhs)
    assert r.degenerate
    assert math.isnan(r.ratio)


def test_csv_has_fixed_columns_and_round_trips():
    reports = [vf.ConstantReport("a", "i0", 1.0, 2.0, delta=0.5, sigma=0.25, k=1, p=1.5),
               vf.ConstantReport("b", "i1", 3.0, 0.0)]
    text = vf.reports_to_csv(reports)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == vf.CSV_COLUMNS
    assert float(rows[0]["ratio"]) == 0.5
    assert rows[0]["k"] == "1" and rows[0]["j"] == "-1"
    assert math.isnan(float(rows[1]["ratio"]))
    assert text.endswith("\n") and "\r" not in text


def test_claim_basic_unit_example():
    # delta = |E| = |F| = 1: the sum is sigma over dyadic sigma <= 1, about 2
    assert vf.claim_basic_ratio(1.0, 1.0, 1.0) == pytest.approx(2.0, abs=1e-5)


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_claim_basic_bounded(delta, e_measure, f_measure):
    ratio = vf.claim_basic_ratio(delta, e_measure, f_measure)
    assert 0 < ratio <= vf.CLAIM_BASIC_BOUND
    # direct term-by-term sum
    direct = sum(delta * 2.0 ** -m * min(e_measure / delta, f_measure * 4.0 ** m) for m in range(21))
    assert ratio == pytest.approx(direct / math.sqrt(delta * e_measure * f_measure), rel=1e-12)


def test_fit_decay_exponent():
    ks = [1, 2, 3]
    assert vf.fit_decay_exponent(ks, [2.0 ** (-3 * k) * 5 for k in ks]) == pytest.approx(3.0)
    assert math.isnan(vf.fit_decay_exponent([1, 2], [0.0, 1.0]))


def test_caps_evaluation_and_emission():
    reports = [vf.ConstantReport("tree_lemma", "a", 2.0, 1.0),
               vf.ConstantReport("tree_lemma", "b", 4.0, 1.0),
               vf.ConstantReport("claim_rjk", "a", -1.0, 1.0),
               vf.ConstantReport("claim_rjk", "b", 3.0, 1.0),
               vf.ConstantReport("jn_halving", "a", 0.0, 0.5),
               vf.ConstantReport("tree_lemma", "c", 1.0, 0.0)]
    caps = vf.caps_from_reports(reports)
    assert caps["tree_lemma"] == {"max": 6.0}
    assert caps["claim_rjk"] == {"min": -1.5}
    assert caps["jn_halving"] == {"max": 1.0}
    assert vf.evaluate_caps(reports, caps) == []
    bad = vf.evaluate_caps([vf.ConstantReport("tree_lemma", "d", 7.0, 1.0),
                            vf.ConstantReport("claim_rjk", "d", -2.0, 1.0)], caps)
    assert [b for _, b in bad] == [6.0, -1.5]
    table = vf.summarize(reports)
    assert table["tree_lemma"] == (2, 2.0, 4.0)


def test_empty_forest_gives_no_records(lat64):
    tiles, universe = dc.default_index_sets(lat64)
    ctx = dc.relation_context(lat64, tiles, universe)
    zero = np.zeros(tiles.size)
    stats = dc.TileStats(tiles, zero, zero, zero.astype(complex), 8, universe, np.zeros(universe.size))
    forest = dc.build_forest(ctx, stats, zero, lat64.C)
    assert list(forest.trees()) == []
    samples = np.zeros((64, 64))
    assert vf.check_estimates(forest, 1.0, 1.0, 0.25) == []
    assert vf.check_tree_lemma(forest, stats, zero, zero, zero) == []
    assert vf.check_bessel_shells(forest, samples) == []
    assert vf.check_square_function(forest, samples, zero)[0] == []
    assert vf.check_intersection_lemma(forest, samples > 0, 0.25) == []
    assert vf.check_size_claim(forest)[0].lhs == 0.0
    assert vf.balance_aggregate(forest, 1.0, 1.0, 2.0).lhs == 0.0


def test_tree_lemma_vanishes_without_F(instance64):
    res = instance64
    zero = np.zeros_like(res.coeff_F)
    reports = vf.check_tree_lemma(res.forest, res.stats, res.weights, zero, res.coeff_E)
    assert reports and all(r.lhs == 0.0 for r in reports)


def test_estimates_match_direct_sums(instance64):
    res = instance64
    forest = res.forest
    e_m, f_m = res.E.measure(), res.F.measure()
    reports = vf.check_estimates(forest, e_m, f_m, 0.25)
    by_key = {(r.inequality_id, r.delta, r.sigma): r for r in reports}
    for (delta, sigma), records in forest.strata.items():
        tops = sum(forest.lat.tile(forest.context.tiles[r.top]).area for r in records)
        assert by_key[("estimate_density", delta, sigma)].lhs == pytest.approx(tops, rel=1e-12)
        assert by_key[("estimate_density", delta, sigma)].rhs == pytest.approx(e_m / delta)
        assert by_key[("estimate_orthogonality", delta, sigma)].rhs == pytest.approx(f_m / sigma ** 2)


def test_coefficient_bessel_at_most_one(lat64, rng):
    f = GridFunction(lat64.spec, rng.normal(size=(64, 64)))
    tiles, _ = dc.default_index_sets(lat64)
    r = vf.check_coefficient_bessel(lat64, f, tiles)
    assert 0 < r.ratio <= 1 + 1e-12


def test_beta_weight_profile(instance64):
    forest = instance64.forest
    ctx = forest.context
    _, rec = next(forest.trees())
    table, pos = ctx.tile_table.take([rec.top]), 0
    weight = vf.beta_weight(forest.lat, table, pos, 8)
    inside = dc.dilated_mask(forest.lat, table, pos, 1.0)
    # |y1|, |y2| <= 1 on the tile itself
    assert weight[inside].min() >= 1 / 3 - 1e-12
    assert weight.max() <= 1.0
    far = ~dc.dilated_mask(forest.lat, table, pos, 4.0)
    if far.any():
        assert weight[far].max() <= 1 / (1 + 2.0 ** 8) + 1e-12


def test_instance_reports_are_well_formed(instance64):
    ids = {r.inequality_id for r in instance64.reports}
    assert {"estimate_density", "tree_lemma", "claim_basic", "size_claim", "coefficient_bessel"} <= ids
    for r in instance64.reports:
        assert r.instance_id == instance64.instance_id
        if r.inequality_id == "claim_basic":
            assert r.ratio <= 1.0
