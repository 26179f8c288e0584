"""Acceptance suite: one summary line per criterion is printed at the end of the module.

Criteria 1, 5 and 6 run the shipped 50-seed sweeps at n = 128 and n = 256
(a few minutes on one core).  Parts of criterion 5 are unattainable with the
shipped constants; those parts are strict xfails and the criterion line says FAIL.
"""

import time

import numpy as np
import pytest

from vfhilbert import decompose as dc
from vfhilbert import modelop as mo
from vfhilbert import pipeline as pl
from vfhilbert import verify as vf
from vfhilbert import wavepackets as wp
from vfhilbert.geometry import FrequencyInterval, Lattice, VectorField
from vfhilbert.grid import GridFunction, GridSpec, forward_transform, inner_product

VERDICTS = {n: {} for n in range(1, 7)}

STRUCTURAL_KEYS = ("partition", "top_in_tree", "stratum_udense", "stratum_size", "residual_halving",
                   "tops_disjoint", "cover_disjoint", "jn_halving")
STABLE_IDS = ("estimate_orthogonality", "estimate_density", "estimate_maximal", "tree_lemma",
              "bessel_shell", "square_function_shell", "weak_type_aggregate")
MAX_CHANGE = 2.0


def record(criterion, part, ok):
    VERDICTS[criterion][part] = bool(ok)
    return bool(ok)


@pytest.fixture(scope="module", autouse=True)
def criterion_lines(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    lines = []
    for n, parts in VERDICTS.items():
        if not parts:
            lines.append(f"criterion {n}: NOT RUN")
            continue
        failed = sorted(p for p, ok in parts.items() if not ok)
        verdict = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
        lines.append(f"criterion {n}: {verdict}")
    if reporter is not None:
        reporter.write_line("")
        for line in lines:
            reporter.write_line(line)
    else:
        print("\n".join(lines))


def _run_sweep(name):
    cfg = pl.golden_config(name)
    start = time.perf_counter()
    results = pl.sweep(cfg)
    return cfg, results, time.perf_counter() - start


@pytest.fixture(scope="module")
def sweep64():
    return _run_sweep("n64")


@pytest.fixture(scope="module")
def sweep128():
    return _run_sweep("n128")


@pytest.fixture(scope="module")
def sweep256():
    return _run_sweep("n256")


def _max_ratio(results, key):
    values = [r.ratio for _, reports, _ in results for r in reports
              if r.inequality_id == key and not r.degenerate and np.isfinite(r.ratio)]
    return max(values) if values else float("nan")


# 1. structural exactness --------------------------------------------------------------

def test_criterion_1_structure(sweep128):
    cfg, results, seconds = sweep128
    assert len(results) == 50
    broken = sorted({(iid, key) for iid, _, st in results for key in STRUCTURAL_KEYS if not st[key]})
    record(1, "structure", not broken)
    record(1, "runtime", seconds < 600)
    assert not broken, broken[:10]
    assert seconds < 600


# 2. micro-scale oracles ----------------------------------------------------------------

def _enumerated_size(lat, ctx, pool, weights):
    tiles = [lat.tile(ctx.tiles[p]) for p in pool]
    best = 0.0
    for top in (lat.tile(u) for u in ctx.universe):
        below = [lat.tile_leq(s, top) for s in tiles]
        if not any(below):
            continue
        energy = sum(weights[p] for p, s, b in zip(pool, tiles, below)
                     if b and not top.omega.overlaps(s.omega.half(1)))
        best = max(best, float(np.sqrt(energy / top.area)))
    return best


def test_criterion_2_oracles():
    rng = np.random.default_rng(2)
    lat = Lattice(GridSpec(64), 1 / 8, 3)
    tiles, universe = dc.default_index_sets(lat)
    ctx = dc.relation_context(lat, tiles, universe)
    size_ok = True
    for count in range(1, 13):
        pool = np.sort(rng.choice(tiles.size, size=count, replace=False))
        weights = np.zeros(tiles.size)
        weights[pool] = rng.exponential(size=count)
        size_ok &= dc.size_of(ctx, pool, weights)[0] == pytest.approx(_enumerated_size(lat, ctx, pool, weights),
                                                                    rel=1e-12)
    record(2, "size_of", size_ok)

    # exhaustive search for a <= b <= c with a not <= c
    small = Lattice(GridSpec(64), 1 / 8, 3, C=2)
    T = small.table()
    M = small.leq_matrix(T, T)
    witnesses = np.argwhere(((M.astype(np.float32) @ M.astype(np.float32)) > 0) & ~M)
    witness_ok = witnesses.size > 0
    if witness_ok:
        a, c = witnesses[0]
        b = np.flatnonzero(M[a] & M[:, c])[0]
        ta, tb, tc = small.tile(a), small.tile(b), small.tile(c)
        witness_ok = small.tile_leq(ta, tb) and small.tile_leq(tb, tc) and not small.tile_leq(ta, tc)
    record(2, "non_transitivity_witness", witness_ok)

    spec = lat.spec
    f = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    idx = rng.choice(lat.indices(range(3), (-1, 1)), 4, replace=False)
    table = mo.coefficients(GridFunction(spec, f), lat, idx)
    x1, x2 = spec.coordinates()
    worst = 0.0
    for index in idx:
        tile = lat.tile(index)
        sup = wp.packet_support(tile.omega, lat)
        cx, cy = tile.center(lat.side_length)
        naive = 0j
        for row in range(spec.n):
            for col in range(spec.n):
                value = np.sum(sup.amplitude * np.exp(2j * np.pi * (sup.xi * (x1[row, col] - cx)
                                                                    + sup.eta * (x2[row, col] - cy))))
                naive += f[row, col] * np.conj(value / spec.side_length) * spec.spacing ** 2
        worst = max(worst, abs(table.lookup(index) - naive))
    record(2, "coefficients", worst <= 1e-10)
    assert size_ok and witness_ok and worst <= 1e-10


# 3. analytic identities -----------------------------------------------------------------

def test_criterion_3_identities():
    rng = np.random.default_rng(3)
    lat = Lattice(GridSpec(64), 1 / 8, 3)
    spec = lat.spec
    g = GridFunction(spec, rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64)))
    parseval = abs(g.norm() - forward_transform(g).norm()) / g.norm()
    record(3, "parseval", parseval <= 1e-10)

    idx = rng.choice(lat.indices(range(3), (-1, 1)), 10, replace=False)
    norms = max(abs(wp.make_packet(lat.tile(i), lat).samples.norm() - 1) for i in idx)
    record(3, "unit_norm", norms <= 1e-8)

    packets = [wp.make_packet(lat.containing_tile(FrequencyInterval(1, k), 0.3, 0.6), lat).samples
               for k in range(2, 6)]
    ortho = max(abs(inner_product(a, b)) for p, a in enumerate(packets) for b in packets[p + 1:])
    record(3, "orthogonality", ortho <= 1e-9)

    ctx = dc.relation_context(lat, *dc.default_index_sets(lat))
    tau = int(np.argmax(ctx.one_tree.sum(axis=0)))
    members = np.flatnonzero(ctx.leq[:, tau])
    coeffs = rng.normal(size=members.size) + 1j * rng.normal(size=members.size)
    square = dc.tree_square_function(ctx, members, coeffs)
    delta_parseval = abs(np.sum(square ** 2) * spec.spacing ** 2 / np.sum(np.abs(coeffs) ** 2) - 1)
    record(3, "delta_parseval", delta_parseval <= 1e-12)

    f = GridFunction(spec, rng.normal(size=(64, 64)))
    period = max(mo.periodization_check(f, FrequencyInterval(level, k), lat)
                 for level, k in [(0, 1), (1, 4), (2, 8)])
    record(3, "periodization", period <= 1e-8)

    v = VectorField.constant(spec, 0.0)
    flat_gap = 0.0
    for i in idx[:5]:
        tile = lat.tile(i)
        curved = wp.make_packet(tile, lat, "curved", v).samples.samples
        flat = wp.make_packet(tile, lat, "alpha").samples.samples
        flat_gap = max(flat_gap, float(np.max(np.abs(curved - flat))))
    record(3, "curved_equals_flat", flat_gap <= 1e-6)
    assert all(VERDICTS[3].values()), VERDICTS[3]


# 4. reconstruction against the constant-field oracle -------------------------------

def test_criterion_4_reconstruction():
    rng = np.random.default_rng(4)
    lat = Lattice(GridSpec(128), 1 / 16, 4)
    c_id = -1j * np.pi
    c_model = 2j * np.pi * np.sign(-wp.KERNEL_SCALE)
    errors = []
    for _ in range(20):
        f = GridFunction(lat.spec, rng.normal(size=(128, 128)))
        u0 = float(rng.uniform(-1, 1))
        projected, model = mo.averaged_model_reconstruction(f, u0, lat)
        oracle = mo.constant_field_oracle(f, u0, lat).samples
        approx = c_id * projected.samples + c_model * model.samples
        errors.append(np.linalg.norm(approx - oracle) / np.linalg.norm(oracle))
    record(4, "relative_l2", max(errors) <= 0.02)
    assert max(errors) <= 0.02, max(errors)


# 5. measured-constant stability ------------------------------------------------------

def test_criterion_5_stability(sweep64, sweep128, sweep256):
    caps = pl.load_caps("caps.json")
    bad = []
    for key in STABLE_IDS:
        a, b = _max_ratio(sweep128[1], key), _max_ratio(sweep256[1], key)
        ok = np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0 and max(a / b, b / a) <= MAX_CHANGE
        # the shipped cap is the calibration maximum times 1.5
        top = max(a, b, _max_ratio(sweep64[1], key))
        ok &= caps[key]["max"] == pytest.approx(1.5 * top, rel=1e-12)
        if not ok:
            bad.append((key, a, b, caps.get(key)))
    record(5, "stability", not bad)
    assert not bad, bad


def _min_exponent(results, key):
    values = [r.lhs for _, reports, _ in results for r in reports if r.inequality_id == key]
    return min(values) if values else float("nan")


@pytest.mark.xfail(strict=True, reason="tree members spread over C*top while shells k <= 3 stay inside it; "
                                      "fitted decay stays near 1, far below 4")
def test_criterion_5_decay_exponents(sweep128, sweep256):
    lows = {key: min(_min_exponent(sweep128[1], key), _min_exponent(sweep256[1], key))
            for key in ("bessel_decay_exponent", "shell_decay_exponent")}
    ok = all(np.isfinite(v) and v >= vf.DECAY_EXPONENT_TARGET for v in lows.values())
    record(5, "decay_exponents", ok)
    assert ok, lows


@pytest.mark.xfail(strict=True, reason="intersection densities hit tiny sizes whose max ratio moves "
                                      "by about 3x between n = 128 and n = 256")
def test_criterion_5_intersection_stability(sweep128, sweep256):
    a = _max_ratio(sweep128[1], "intersection_lemma")
    b = _max_ratio(sweep256[1], "intersection_lemma")
    ok = np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0 and max(a / b, b / a) <= MAX_CHANGE
    record(5, "intersection_stability", ok)
    assert ok, (a, b)


# 6. appendix arithmetic -----------------------------------------------------------------

def test_criterion_6_claims(sweep128, sweep256):
    rng = np.random.default_rng(6)
    triples = rng.uniform(1e-6, 1.0, size=(100, 3))
    worst = max(vf.claim_basic_ratio(d, e, f, 2.0 ** -20) for d, e, f in triples)
    record(6, "claim_basic", worst <= vf.CLAIM_BASIC_BOUND)
    cap = pl.load_caps("caps.json")["size_claim"]["max"]
    realized = max(_max_ratio(sweep128[1], "size_claim"), _max_ratio(sweep256[1], "size_claim"))
    record(6, "size_claim", realized <= cap)
    assert worst <= vf.CLAIM_BASIC_BOUND
    assert realized <= cap
