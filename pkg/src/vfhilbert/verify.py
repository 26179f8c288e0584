"""Measured constants: every estimate of the decomposition as an LHS/RHS record.

Each check returns :class:`ConstantReport` rows.  Upper-type records pass
when their ratio stays below a cap, lower-type records (intersection
densities, decay exponents, retention) when it stays above a floor; the
kind of each id is listed in LOWER_BOUND_IDS.
"""

import csv
import io
from dataclasses import dataclass, asdict

import numpy as np

from . import decompose as dc
from .grid import fft_centered
from . import wavepackets as wp

CSV_COLUMNS = ["inequality_id", "instance_id", "delta", "sigma", "k", "j", "p", "eps", "lhs", "rhs", "ratio"]

LOWER_BOUND_IDS = {
    "intersection_lemma", "claim_rjk", "disjoint_tops_retention",
    "bessel_decay_exponent", "shell_decay_exponent",
}

# thresholds that do not come from calibration
DECAY_EXPONENT_TARGET = 4.0
JN_HALVING = 0.5
CLAIM_BASIC_BOUND = 4.0

# ratios against these fixed thresholds must stay at or below 1
FIXED_CAPS = {"jn_halving": {"max": 1.0}, "claim_basic": {"max": 1.0}, "pantry_area": {"max": 1.0}}


@dataclass
class ConstantReport:
    inequality_id: str
    instance_id: str
    lhs: float
    rhs: float
    delta: float = float("nan")
    sigma: float = float("nan")
    k: int = -1
    j: int = -1
    p: float = float("nan")
    eps: float = float("nan")

    def __post_init__(self):
        for name in ("lhs", "rhs", "delta", "sigma", "p", "eps"):
            setattr(self, name, float(getattr(self, name)))
        self.k = int(self.k)
        self.j = int(self.j)

    @property
    def degenerate(self):
        return not (self.rhs > 0 and np.isfinite(self.rhs))

    @property
    def ratio(self):
        return self.lhs / self.rhs if not self.degenerate else float("nan")

    def row(self):
        d = asdict(self)
        d["ratio"] = self.ratio
        return d


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        row = r.row()
        writer.writerow({c: _fmt(row[c]) for c in CSV_COLUMNS})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


# helpers ----------------------------------------------------------------------------

def _top_table(context, rec):
    return context.tile_table.take([rec.top]), 0


def _shell_masks(lat, table, pos, k_max):
    """Masks of Omega_0 = top and Omega_k = 2^k top minus 2^(k-1) top, while 2^k top fits."""
    masks = []
    prev = None
    for k in range(k_max + 1):
        scale = 2.0 ** k
        if scale * table.length[pos] > lat.side_length or scale * lat.width > lat.side_length:
            break
        cur = dc.dilated_mask(lat, table, pos, scale)
        masks.append(cur if prev is None else cur & ~prev)
        prev = cur
    return masks


def _coefficients_at(lat, fhat, context, positions):
    """<f, phi_s> for decomposed-tile positions given the centered spectrum of f."""
    out = np.zeros(len(positions), dtype=complex)
    table = context.tile_table.take(positions)
    key = table.level * (1 << 20) + table.k
    for value in np.unique(key):
        sel = np.flatnonzero(key == value)
        omega = dc.FrequencyInterval(int(table.level[sel[0]]), int(table.k[sel[0]]))
        sup = wp.packet_support(omega, lat)
        weights = fhat[sup.rows, sup.cols] * sup.amplitude
        out[sel] = np.conj(wp.tile_phases(sup, table.cx[sel], table.cy[sel])) @ weights
    return out


def fit_decay_exponent(ks, ratios):
    """N with ratios ~ 2^(-N k), by least squares on log2; nan if fewer than two usable points."""
    ks = np.asarray(ks, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    ok = ratios > 0
    if np.count_nonzero(ok) < 2:
        return float("nan")
    slope = np.polyfit(ks[ok], np.log2(ratios[ok]), 1)[0]
    return float(-slope)


# checks -----------------------------------------------------------------------------

def check_estimates(forest, e_measure, f_measure, eps, instance_id=""):
    out = []
    ctx = forest.context
    for (delta, sigma), records in sorted(forest.strata.items(), key=lambda kv: (-kv[0][0], -kv[0][1])):
        lhs = float(sum(ctx.tile_area[r.top] for r in records))
        common = dict(instance_id=instance_id, delta=delta, sigma=sigma, eps=eps)
        out.append(ConstantReport("estimate_orthogonality", lhs=lhs, rhs=f_measure / sigma ** 2, **common))
        out.append(ConstantReport("estimate_density", lhs=lhs, rhs=e_measure / delta, **common))
        out.append(ConstantReport("estimate_maximal", lhs=lhs,
                                  rhs=f_measure ** (1 - eps) * e_measure ** eps / (delta * sigma ** (1 + eps)),
                                  **common))
    return out


def check_tree_lemma(forest, stats, weights, coeff_f, coeff_e, instance_id=""):
    out = []
    ctx = forest.context
    for (delta, sigma), rec in forest.trees():
        members = rec.members
        lhs = float(np.sum(np.abs(coeff_f[members]) * np.abs(coeff_e[members])))
        tree_delta = float(np.max(stats.udense[members]))
        tree_sigma = dc.size_of(ctx, members, weights)[0]
        rhs = tree_delta * tree_sigma * ctx.tile_area[rec.top]
        out.append(ConstantReport("tree_lemma", instance_id, lhs, rhs, delta=tree_delta, sigma=tree_sigma))
    return out


def check_bessel_shells(forest, f_samples, instance_id="", k_max=3):
    """Localized Bessel ratios per shell and the fitted decay exponent per 1-tree."""
    out = []
    ctx = forest.context
    lat = forest.lat
    h2 = lat.spec.spacing ** 2
    for (delta, sigma), rec in forest.trees():
        one = dc.one_tree_part(ctx, rec)
        if one.size == 0:
            continue
        table, pos = _top_table(ctx, rec)
        ks, ratios = [], []
        for k, mask in enumerate(_shell_masks(lat, table, pos, k_max)):
            piece = f_samples * mask
            norm2 = float(np.sum(np.abs(piece) ** 2) * h2)
            if norm2 <= 0:
                continue
            coeffs = _coefficients_at(lat, fft_centered(piece, lat.spec), ctx, one)
            lhs = float(np.sum(np.abs(coeffs) ** 2))
            out.append(ConstantReport("bessel_shell", instance_id, lhs, norm2, delta=delta, sigma=sigma, k=k))
            ks.append(k)
            ratios.append(lhs / norm2)
        fit_k = [k for k in ks if k >= 1]
        if len(fit_k) >= 2:
            exponent = fit_decay_exponent(fit_k, [r for k, r in zip(ks, ratios) if k >= 1])
            if np.isfinite(exponent):
                out.append(ConstantReport("bessel_decay_exponent", instance_id, exponent, DECAY_EXPONENT_TARGET,
                                          delta=delta, sigma=sigma, k=max(fit_k)))
    return out


def _lp_norm(values, p, h2):
    return float(np.sum(np.abs(values) ** p) * h2) ** (1.0 / p)


def beta_weight(lat, table, pos, N):
    """1/(1 + |y1|^N + |y2|^N) in the normalized sheared coordinates of the tile."""
    x1, x2 = lat.spec.coordinates()
    d1, d2 = lat.sheared_offsets(x1, x2, table.cx[pos], table.cy[pos], table.slope[pos])
    y1 = 2 * d1 / table.length[pos]
    y2 = 2 * d2 / lat.width
    return 1.0 / (1.0 + np.abs(y1) ** N + np.abs(y2) ** N)


def check_square_function(forest, f_samples, weights, p_list=(1.25, 1.5, 2.0, 3.0), N=8, eps=0.25,
                          instance_id="", k_max=3):
    """Lp square-function bound, shell decay, BMO bound and John-Nirenberg halving per 1-tree."""
    out = []
    structural = {"jn_halving": True}
    ctx = forest.context
    lat = forest.lat
    h2 = lat.spec.spacing ** 2
    fhat = fft_centered(f_samples, lat.spec)
    for (delta, sigma), rec in forest.trees():
        one = dc.one_tree_part(ctx, rec)
        if one.size == 0:
            continue
        table, pos = _top_table(ctx, rec)
        coeffs = _coefficients_at(lat, fhat, ctx, one)
        square = dc.tree_square_function(ctx, one, coeffs, "cells")
        weight = beta_weight(lat, table, pos, N)
        common = dict(instance_id=instance_id, delta=delta, sigma=sigma)
        for p in p_list:
            out.append(ConstantReport("square_function_lp", lhs=_lp_norm(square, p, h2),
                                      rhs=_lp_norm(f_samples * weight, p, h2), p=p, **common))
        shells = _shell_masks(lat, table, pos, k_max)
        shell_square = []
        for k, mask in enumerate(shells):
            shell_coeffs = _coefficients_at(lat, fft_centered(f_samples * mask, lat.spec), ctx, one)
            shell_square.append((k, mask, dc.tree_square_function(ctx, one, shell_coeffs, "cells")))
        for p in p_list:
            ks, ratios = [], []
            for k, mask, sq in shell_square:
                rhs = _lp_norm(f_samples * mask, p, h2)
                if rhs <= 0:
                    continue
                lhs = _lp_norm(sq, p, h2)
                out.append(ConstantReport("square_function_shell", lhs=lhs, rhs=rhs, k=k, p=p, **common))
                if k >= 1:
                    ks.append(k)
                    ratios.append(lhs / rhs)
            if len(ks) >= 2:
                exponent = fit_decay_exponent(ks, ratios)
                if np.isfinite(exponent):
                    out.append(ConstantReport("shell_decay_exponent", lhs=exponent, rhs=DECAY_EXPONENT_TARGET,
                                              k=max(ks), p=p, **common))
        # BMO form, under the uniform size precondition
        energy = float(np.sum(np.abs(coeffs) ** 2))
        top_area = ctx.tile_area[rec.top]
        own = np.sqrt(energy / top_area)
        tree_size = dc.size_of(ctx, one, weights)[0]
        if own > 0 and tree_size <= 2.0 * own:
            region = dc.dilated_mask(lat, table, pos, lat.C)
            rhs = float(np.sum(square[region]) * h2) / np.sqrt(top_area)
            out.append(ConstantReport("square_function_bmo", lhs=float(np.sqrt(energy)), rhs=rhs, **common))
        # John-Nirenberg generations
        jn_sigma = max(tree_size, own)
        if jn_sigma > 0:
            _, measures = dc.john_nirenberg_levels(ctx, one, coeffs, jn_sigma, (table, pos))
            worst = max((measures[n] / measures[n - 1] for n in range(1, len(measures))), default=0.0)
            out.append(ConstantReport("jn_halving", lhs=worst, rhs=JN_HALVING, **common))
            structural["jn_halving"] &= worst <= JN_HALVING
    return out, structural


def check_pantry(forest, instance_id=""):
    """Split every 1-tree into disjoint-top subtrees; area of the tops against C |top|."""
    out = []
    structural = {"pantry_disjoint": True, "pantry_inside": True}
    ctx = forest.context
    for (delta, sigma), rec in forest.trees():
        one = dc.one_tree_part(ctx, rec)
        if one.size == 0:
            continue
        _, (disjoint, inside, area_ratio) = dc.pantry_partition(ctx, int(ctx.tile_in_universe[rec.top]), one)
        structural["pantry_disjoint"] &= disjoint
        structural["pantry_inside"] &= inside
        out.append(ConstantReport("pantry_area", instance_id, area_ratio, forest.lat.C, delta=delta, sigma=sigma))
    return out, structural


def check_intersection_lemma(forest, f_mask, eps, instance_id=""):
    out = []
    ctx = forest.context
    lat = forest.lat
    for (delta, sigma), rec in forest.trees():
        size = rec.size
        if size <= 0:
            continue
        factor = size ** -eps
        table, pos = _top_table(ctx, rec)
        if factor * table.length[pos] > lat.side_length or factor * lat.width > lat.side_length:
            continue
        mask = dc.dilated_mask(lat, table, pos, factor)
        density = np.count_nonzero(mask & f_mask) / np.count_nonzero(mask)
        out.append(ConstantReport("intersection_lemma", instance_id, density, size ** (1 + eps),
                                  delta=delta, sigma=size, eps=eps))
    return out


def balance_aggregate(forest, e_measure, f_measure, p, instance_id=""):
    ctx = forest.context
    lhs = 0.0
    for (delta, sigma), records in forest.strata.items():
        lhs += delta * sigma * float(sum(ctx.tile_area[r.top] for r in records))
    rhs = f_measure ** (1 / p) * e_measure ** (1 - 1 / p)
    return ConstantReport("weak_type_aggregate", instance_id, lhs, rhs, p=p)


def weak_type_model(bilinear_value, e_measure, f_measure, p, instance_id=""):
    rhs = e_measure ** (1 - 1 / p) * f_measure ** (1 / p)
    return ConstantReport("weak_type_model", instance_id, bilinear_value, rhs, p=p)


def claim_basic_ratio(delta, e_measure, f_measure, sigma_min=2.0 ** -20):
    """sum over dyadic sigma in [sigma_min, 1] of delta*sigma*min(|E|/delta, |F|/sigma^2), over sqrt(delta|E||F|)."""
    count = int(round(-np.log2(sigma_min)))
    sigmas = 2.0 ** -np.arange(count + 1)
    terms = delta * sigmas * np.minimum(e_measure / delta, f_measure / sigmas ** 2)
    return float(np.sum(terms) / np.sqrt(delta * e_measure * f_measure))


def check_claim_basic(forest, e_measure, f_measure, instance_id="", sigma_min=2.0 ** -20):
    out = []
    for delta in sorted({d for d, _ in forest.strata}, reverse=True):
        ratio = claim_basic_ratio(delta, e_measure, f_measure, sigma_min)
        out.append(ConstantReport("claim_basic", instance_id, ratio, CLAIM_BASIC_BOUND, delta=delta))
    return out


def check_size_claim(forest, instance_id=""):
    sizes = [rec.size for _, rec in forest.trees()]
    return [ConstantReport("size_claim", instance_id, float(max(sizes, default=0.0)), 1.0)]


def check_claim_rjk(forest, orgs, f_mask, eps, instance_id=""):
    out = []
    lat = forest.lat
    U = forest.context.universe_table
    for org in orgs:
        sigma = org.sigma
        for R, k in org.shell_level.items():
            if k is None:
                continue
            j = org.coverage_level[R]
            mask = dc.dilated_mask(lat, U, R, 2.0 ** k)
            density = np.count_nonzero(mask & f_mask) / np.count_nonzero(mask)
            rhs = 2.0 ** -j * sigma ** (1 + 3 * eps) * (sigma ** -eps / 2 ** k) ** 2
            out.append(ConstantReport("claim_rjk", instance_id, density, rhs,
                                      delta=org.delta, sigma=sigma, k=k, j=j, eps=eps))
    return out


def check_coefficient_bessel(lat, f, indices, instance_id=""):
    """max over omega of sum |<f, phi_s>|^2 / ||f||^2."""
    from .modelop import coefficients
    coeffs = coefficients(f, lat, indices)
    table = lat.table(coeffs.indices)
    key = table.level * (1 << 20) + table.k
    norm2 = float(np.sum(np.abs(f.samples) ** 2) * lat.spec.spacing ** 2)
    worst = 0.0
    for value in np.unique(key):
        worst = max(worst, float(np.sum(np.abs(coeffs.values[key == value]) ** 2)))
    return ConstantReport("coefficient_bessel", instance_id, worst, norm2)


# cap handling ------------------------------------------------------------------------

def evaluate_caps(reports, caps):
    """List of (report, bound) pairs violating the cap file."""
    bad = []
    for r in reports:
        if r.degenerate or not np.isfinite(r.ratio):
            continue
        entry = caps.get(r.inequality_id)
        if entry is None:
            continue
        if "max" in entry and r.ratio > entry["max"]:
            bad.append((r, entry["max"]))
        if "min" in entry and r.ratio < entry["min"]:
            bad.append((r, entry["min"]))
    return bad


def summarize(reports):
    """{id: (count, min ratio, max ratio)} over non-degenerate reports."""
    table = {}
    for r in reports:
        if r.degenerate or not np.isfinite(r.ratio):
            continue
        count, lo, hi = table.get(r.inequality_id, (0, np.inf, -np.inf))
        table[r.inequality_id] = (count + 1, min(lo, r.ratio), max(hi, r.ratio))
    return table


def caps_from_summary(table, slack=1.5):
    """Caps from {id: (count, min, max)}: maxima times slack, floors divided by it.

    Ids with a fixed theoretical bound keep that bound instead.
    """
    caps = {}
    for key, (count, lo, hi) in sorted(table.items()):
        if key in FIXED_CAPS:
            caps[key] = dict(FIXED_CAPS[key])
        elif key in LOWER_BOUND_IDS:
            caps[key] = {"min": lo / slack if lo >= 0 else lo * slack}
        else:
            caps[key] = {"max": hi * slack}
    return caps


def caps_from_reports(reports, slack=1.5):
    return caps_from_summary(summarize(reports), slack)
