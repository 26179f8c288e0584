"""Density, size, the tree selection loops, the maximal organization and square functions.

Tiles are handled by their global lattice index.  Two index sets matter:
the decomposed collection (tiles that carry packets) and the universe of
lattice tiles that can serve as tree tops or as dominating tiles in the
udense supremum.  The order relation between the two is precomputed once
per lattice as boolean matrices; all loops then work on those matrices.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import FrequencyInterval, Tree

SELECTION_FACTOR = 2.0  # selection threshold is sigma / (SELECTION_FACTOR * C)


# relation context -------------------------------------------------------------

class RelationContext:
    """Order-relation matrices between the decomposed tiles and the top universe."""

    def __init__(self, lat, tile_indices, universe_indices):
        self.lat = lat
        self.tiles = np.asarray(tile_indices, dtype=np.int64)
        self.universe = np.asarray(universe_indices, dtype=np.int64)
        if np.any(np.diff(self.tiles) <= 0) or np.any(np.diff(self.universe) <= 0):
            raise ValueError("index sets must be sorted and unique")
        self.tile_table = lat.table(self.tiles)
        self.universe_table = lat.table(self.universe)
        # universe position of every decomposed tile (tiles must lie in the universe)
        pos = np.searchsorted(self.universe, self.tiles)
        if np.any(pos >= self.universe.size) or np.any(self.universe[np.minimum(pos, self.universe.size - 1)] != self.tiles):
            raise ValueError("decomposed tiles must belong to the universe")
        self.tile_in_universe = pos
        self.leq = lat.leq_matrix(self.tile_table, self.universe_table)      # [s, tau]: s <= tau
        one = lat.half_disjoint_matrix(self.universe_table, self.tile_table, 1).T
        self.one_tree = self.leq & one                                         # s in 1-tree of tau
        leq_ss = self.leq[:, pos]                                              # [s, t]: s <= t
        t_half_l, t_half_k = self.tile_table.half_of(2)
        s_half_l, s_half_k = self.tile_table.half_of(2)
        shift = t_half_l[None, :] - s_half_l[:, None]
        nested_left = (shift >= 0) & ((t_half_k[None, :] >> np.maximum(shift, 0)) == s_half_k[:, None])
        self.leq_ss = leq_ss
        self.selection = leq_ss & nested_left                                  # [s, t]: s in M(t)
        self.tile_area = self.tile_table.area
        self.universe_area = self.universe_table.area

    def positions(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        pos = np.searchsorted(self.tiles, indices)
        if indices.size and (np.any(pos >= self.tiles.size) or np.any(self.tiles[np.minimum(pos, self.tiles.size - 1)] != indices)):
            raise ValueError("index not among decomposed tiles")
        return pos


def relation_context(lat, tile_indices, universe_indices):
    key = ("relations", np.asarray(tile_indices, dtype=np.int64).tobytes(),
           np.asarray(universe_indices, dtype=np.int64).tobytes())
    if key not in lat.cache:
        lat.cache[key] = RelationContext(lat, tile_indices, universe_indices)
    return lat.cache[key]


def default_index_sets(lat, slope_range=(-1.0, 1.0)):
    """(decomposed tiles, universe): packets at levels below l_max, tops up to l_max."""
    tiles = lat.indices(range(lat.l_max), slope_range)
    universe = lat.indices(range(lat.l_max + 1), slope_range)
    return tiles, universe


# density ------------------------------------------------------------------------

def chi_l1_norm(p_chi):
    """Integral over the plane of 1/(1+|y|^p)."""
    return 2.0 * np.pi * (np.pi / p_chi) / np.sin(2.0 * np.pi / p_chi)


def chi_kernel(lat, omega, p_chi):
    """L1-normalized chi profile of an omega's tiles, as a function of grid displacement."""
    spec = lat.spec
    n = spec.n
    h = spec.spacing
    d = np.arange(n) * h
    d1, d2 = np.meshgrid(d, d)
    length = lat.width * 2 ** omega.level
    d1 = lat.wrap(d1)
    d2 = lat.wrap(d2 - omega.center * d1)
    y = np.hypot(2.0 * d1 / length, 2.0 * d2 / lat.width)
    area = lat.width * length
    return 1.0 / (1.0 + y ** p_chi) / (area / 4.0 * chi_l1_norm(p_chi))


@dataclass(frozen=True, eq=False)
class TileStats:
    indices: np.ndarray
    dense: np.ndarray
    udense: np.ndarray
    coeff_F: np.ndarray
    p_chi: int
    universe: np.ndarray
    universe_dense: np.ndarray


def dense_values(lat, e_mask, v, indices, p_chi=8):
    """dense(s) = integral over E_s of the chi profile of s, for the given tiles."""
    if p_chi < 4 or p_chi % 2:
        raise ValueError("p_chi must be an even integer >= 4")
    indices = np.asarray(indices, dtype=np.int64)
    table = lat.table(indices)
    spec = lat.spec
    h = spec.spacing
    out = np.zeros(indices.size)
    e_mask = np.asarray(e_mask, dtype=bool)
    key = table.level * (1 << 20) + table.k
    for value in np.unique(key):
        pos = np.flatnonzero(key == value)
        omega = FrequencyInterval(int(table.level[pos[0]]), int(table.k[pos[0]]))
        cols = v.column_mask(omega)
        e_omega = e_mask & cols[None, :]
        if not e_omega.any():
            continue
        kern = chi_kernel(lat, omega, p_chi)
        corr = np.fft.ifft2(np.fft.fft2(e_omega) * np.conj(np.fft.fft2(kern))).real * h * h
        ci = np.rint(table.cx[pos] / h).astype(int) % spec.n
        cj = np.rint(table.cy[pos] / h).astype(int) % spec.n
        out[pos] = np.maximum(corr[cj, ci], 0.0)
    return out


def density_stats(lat, e_mask, v, context, coeff_F=None, p_chi=8):
    universe_dense = dense_values(lat, e_mask, v, context.universe, p_chi)
    dense = universe_dense[context.tile_in_universe]
    udense = np.zeros(context.tiles.size)
    for start in range(0, context.tiles.size, 512):
        block = context.leq[start:start + 512]
        udense[start:start + 512] = np.max(np.where(block, universe_dense[None, :], 0.0), axis=1)
    if coeff_F is None:
        coeff_F = np.zeros(context.tiles.size, dtype=complex)
    return TileStats(context.tiles, dense, udense, np.asarray(coeff_F), p_chi, context.universe, universe_dense)


def dyadic_ceiling(x):
    """Smallest power of two >= x, elementwise for x > 0."""
    mant, expo = np.frexp(np.asarray(x, dtype=float))
    return np.where(mant == 0.5, np.ldexp(1.0, expo - 1), np.ldexp(1.0, expo))


def density_stratify(udense):
    """{delta: positions} with udense in (delta/2, delta]; plus positions with udense = 0."""
    udense = np.asarray(udense, dtype=float)
    zero = np.flatnonzero(udense <= 0)
    pos = np.flatnonzero(udense > 0)
    strata = {}
    if pos.size:
        deltas = dyadic_ceiling(udense[pos])
        for delta in sorted(set(deltas.tolist()), reverse=True):
            strata[delta] = pos[deltas == delta]
    return strata, zero


# size ---------------------------------------------------------------------------

def size_of(context, positions, weights, top_mask=None):
    """Largest normalized 1-tree energy of the tiles at `positions`.

    weights: |coefficient|^2 for every decomposed tile.  Candidate tops are
    universe tiles dominating some pool tile (or `top_mask`).  Returns
    (size, universe position of the witness top, witness member positions).
    """
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size == 0:
        return 0.0, -1, positions
    block = context.one_tree[positions]
    energy = weights[positions] @ block
    value = energy / context.universe_area
    if top_mask is None:
        top_mask = context.leq[positions].any(axis=0)
    value = np.where(top_mask, value, -1.0)
    best = int(np.argmax(value))
    if value[best] <= 0:
        return 0.0, -1, positions[:0]
    members = positions[block[:, best]]
    return float(np.sqrt(value[best])), best, members


@dataclass
class TreeRecord:
    top: int                     # position among decomposed tiles
    members: np.ndarray          # positions among decomposed tiles, sorted
    size: float                  # normalized energy at selection time


@dataclass
class LevelDiagnostic:
    delta: float
    sigma: float
    trees: int
    residual_size: float
    residual_count: int


def size_iteration(context, positions, weights, C, sigma_min=2.0 ** -20, selection_factor=SELECTION_FACTOR):
    """Greedy tree selection on one density stratum.

    Returns (list of (sigma, [TreeRecord]), leftover positions, diagnostics).
    At level sigma, while some tile t in stock has
    sqrt(sum over s in M(t) of weight / |t|) >= sigma / (selection_factor*C),
    where M(t) = {s in stock : s <= t, omega_{t,2} inside omega_{s,2}},
    the most clockwise such t is taken and the maximal tree
    {s in stock : s <= t} is removed.
    """
    positions = np.asarray(positions, dtype=np.int64)
    n_all = context.tiles.size
    stock = np.zeros(n_all, dtype=bool)
    stock[positions] = True
    threshold_factor = selection_factor * C
    sel = context.selection[np.ix_(positions, positions)]
    leq = context.leq_ss[np.ix_(positions, positions)]
    w = weights[positions]
    area = context.tile_area[positions]
    slope = context.tile_table.slope[positions]
    level = context.tile_table.level[positions]
    alive = np.ones(positions.size, dtype=bool)
    energy = w @ sel                          # per candidate top t
    start_value = max(size_of(context, positions, weights)[0],
                      float(np.sqrt(np.max(energy / area))) if positions.size else 0.0)
    out = []
    diagnostics = []
    if positions.size == 0:
        return out, positions, diagnostics
    sigma = float(np.ldexp(1.0, int(np.floor(np.log2(start_value))) + 1)) if start_value > 0 else sigma_min
    guard = 0
    while alive.any() and sigma >= sigma_min:
        trees = []
        cut = (sigma / threshold_factor) ** 2
        while True:
            guard += 1
            if guard > positions.size + 64 * 64:
                raise RuntimeError("selection loop did not terminate")
            rms2 = energy / area
            cand = alive & (rms2 >= cut)
            if not cand.any():
                break
            idx = np.flatnonzero(cand)
            # most clockwise: larger slope, then longer, then lexicographic
            order = np.lexsort((idx, -level[idx], -slope[idx]))
            t = idx[order[0]]
            members = alive & leq[:, t]
            trees.append(TreeRecord(int(positions[t]), positions[members], float(np.sqrt(rms2[t]))))
            energy -= w[members] @ sel[members]
            alive &= ~members
        residual = positions[alive]
        res_size = size_of(context, residual, weights)[0]
        out.append((sigma, trees))
        diagnostics.append(LevelDiagnostic(float("nan"), sigma, len(trees), res_size, int(residual.size)))
        sigma /= 2.0
    return out, positions[alive], diagnostics


def pantry_partition(context, top_universe, member_positions):
    """Split a 1-tree into subtrees with pairwise disjoint tops (longest first).

    Returns list of (top position, member positions), plus the checks:
    (tops pairwise disjoint, tops inside C*top, sum of top areas / |top|).
    """
    lat = context.lat
    members = np.asarray(member_positions, dtype=np.int64)
    pantry = np.ones(members.size, dtype=bool)
    leq = context.leq_ss[np.ix_(members, members)]
    level = context.tile_table.level[members]
    parts = []
    while pantry.any():
        idx = np.flatnonzero(pantry)
        t = idx[np.lexsort((idx, -level[idx]))[0]]
        grab = pantry & leq[:, t]
        parts.append((int(members[t]), members[grab]))
        pantry &= ~grab
    tops = np.array([p[0] for p in parts], dtype=np.int64)
    top_table = context.tile_table.take(tops)
    inter = lat.intersect_matrix(top_table, top_table)
    np.fill_diagonal(inter, False)
    big = context.universe_table.take([top_universe])
    spatial_inside = _spatially_inside(lat, top_table, big, lat.C)
    ratio = float(np.sum(top_table.area) / big.area[0])
    return parts, (not inter.any(), bool(spatial_inside.all()), ratio)


def _spatially_inside(lat, a, b, factor):
    """a[p] inside factor * b[0] (ignoring omega)."""
    d1 = lat.wrap(a.cx - b.cx[0])
    d2 = lat.wrap(a.cy - b.cy[0] - b.slope[0] * d1)
    fit1 = (np.abs(d1) + a.length / 2 <= factor * b.length[0] / 2 + 1e-12) | (factor * b.length[0] >= lat.side_length)
    spread = np.abs(a.slope - b.slope[0]) * a.length / 2
    fit2 = (np.abs(d2) + spread + lat.width / 2 <= factor * lat.width / 2 + 1e-12) | (factor * lat.width >= lat.side_length)
    return fit1 & fit2


# forest ---------------------------------------------------------------------------

@dataclass
class Forest:
    lat: object
    context: RelationContext
    strata: dict                              # (delta, sigma) -> [TreeRecord]
    residual: np.ndarray                      # positions left after sigma_min
    zero_udense: np.ndarray                   # positions with udense == 0
    diagnostics: list = field(default_factory=list)
    selection_constant: float = 20.0

    def trees(self):
        for key in sorted(self.strata, key=lambda d: (-d[0], -d[1])):
            for tree in self.strata[key]:
                yield key, tree

    def tree_objects(self):
        lat, tiles = self.lat, self.context.tiles
        for key, rec in self.trees():
            yield key, Tree(lat.tile(tiles[rec.top]), tuple(lat.tile(tiles[m]) for m in rec.members), "general")

    def to_text(self):
        lat, tiles = self.lat, self.context.tiles

        def line(pos):
            return " ".join(str(int(v)) for v in lat.keys_of(tiles[pos]))

        out = ["# forest: stratum <delta> <sigma>; tree blocks list the top first, then members (l k i j)"]
        for (delta, sigma), records in sorted(self.strata.items(), key=lambda kv: (-kv[0][0], -kv[0][1])):
            out.append(f"stratum {delta!r} {sigma!r}")
            for rec in records:
                out.append("tree")
                out.append(line(rec.top))
                out.extend(line(m) for m in rec.members if m != rec.top)
                out.append("end")
        out.append("residual")
        out.extend(line(m) for m in self.residual)
        out.append("zero_udense")
        out.extend(line(m) for m in self.zero_udense)
        return "\n".join(out) + "\n"


def build_forest(context, stats, weights, C, sigma_min=2.0 ** -20, selection_factor=SELECTION_FACTOR):
    strata_pos, zero = density_stratify(stats.udense)
    strata = {}
    residual = []
    diagnostics = []
    for delta, positions in strata_pos.items():
        levels, leftover, diags = size_iteration(context, positions, weights, C, sigma_min, selection_factor)
        for sigma, records in levels:
            if records:
                strata[(delta, sigma)] = records
        for d in diags:
            d.delta = delta
        diagnostics.extend(diags)
        residual.append(leftover)
    residual = np.sort(np.concatenate(residual)) if residual else np.zeros(0, dtype=np.int64)
    return Forest(context.lat, context, strata, residual, zero, diagnostics, selection_factor * C)


def check_forest(forest, stats, weights, input_positions=None):
    """Structural invariants; returns a dict name -> bool."""
    ctx = forest.context
    seen = np.zeros(ctx.tiles.size, dtype=np.int64)
    top_in = True
    stratum_ok = True
    size_ok = True
    for (delta, sigma), tree in forest.trees():
        seen[tree.members] += 1
        top_in &= bool(np.any(tree.members == tree.top))
        ud = stats.udense[tree.members]
        stratum_ok &= bool(np.all((ud > delta / 2) & (ud <= delta)))
        size_ok &= bool(sigma / forest.selection_constant <= tree.size * (1 + 1e-12) and tree.size <= sigma)
    seen[forest.residual] += 1
    seen[forest.zero_udense] += 1
    expected = np.ones(ctx.tiles.size, dtype=np.int64)
    if input_positions is not None:
        expected = np.isin(np.arange(ctx.tiles.size), input_positions).astype(np.int64)
    partition = bool(np.array_equal(seen, expected))
    residual_ok = all(d.residual_size < d.sigma / 2 for d in forest.diagnostics)
    return {"partition": partition, "top_in_tree": top_in, "stratum_udense": stratum_ok,
            "stratum_size": size_ok, "residual_halving": residual_ok}


def one_tree_part(context, rec):
    """Members of the tree whose right omega-half avoids the top's omega."""
    top = context.tile_table.take([rec.top])
    mem = context.tile_table.take(rec.members)
    keep = context.lat.half_disjoint_matrix(top, mem, 1)[0]
    return rec.members[keep]


# dilated parallelograms on the grid ------------------------------------------------

def dilated_mask(lat, table, pos, factor):
    """Grid mask of factor * (cell of tile `pos` of the TileArray), minimal image."""
    x1, x2 = lat.spec.coordinates()
    d1, d2 = lat.sheared_offsets(x1, x2, table.cx[pos], table.cy[pos], table.slope[pos])
    tol = 1e-12
    inside1 = (np.abs(d1) <= factor * table.length[pos] / 2 + tol) | (factor * table.length[pos] >= lat.side_length)
    inside2 = (np.abs(d2) <= factor * lat.width / 2 + tol) | (factor * lat.width >= lat.side_length)
    return inside1 & inside2


def column_mask_of(lat, v, level, k):
    om = FrequencyInterval(int(level), int(k))
    return v.column_mask(om)


# density cover ----------------------------------------------------------------------

@dataclass
class CoverResult:
    classes: dict            # k -> universe positions in the class
    selected: dict           # k -> selected universe positions
    unclassified: np.ndarray
    ratio: float
    disjoint: bool


def shell_class(lat, table, pos, e_mask, v, delta, factor_fn, k_max=None):
    """Least k with |u^-1(omega) n E n 2^k R| >= factor_fn(k) * delta; None when no k fits."""
    cols = column_mask_of(lat, v, table.level[pos], table.k[pos])
    e_omega = np.asarray(e_mask, dtype=bool) & cols[None, :]
    h2 = lat.spec.spacing ** 2
    k = 0
    while True:
        scale = 2.0 ** k
        if scale * table.length[pos] > lat.side_length or scale * lat.width > lat.side_length:
            return None
        if k_max is not None and k > k_max:
            return None
        mask = dilated_mask(lat, table, pos, scale)
        measure = np.count_nonzero(e_omega & mask) * h2
        if measure >= factor_fn(k, table.area[pos]) * delta:
            return k
        k += 1


def density_cover(lat, table, positions, e_mask, v, delta, e_measure):
    """Shell classes and greedy selection for a family of parallelograms.

    Class k: least k with |u^-1(omega_R) n 2^k R n E| >= delta 2^(20k) |2^k R| / 100.
    Within a class, repeatedly keep the longest R and drop every R' whose
    2^k R' meets 2^k R and whose omega overlaps omega_R.
    """
    positions = np.asarray(positions, dtype=np.int64)

    def need(k, area):
        return 2.0 ** (20 * k) * (4.0 ** k) * area / 100.0

    classes = {}
    unclassified = []
    for p in positions:
        k = shell_class(lat, table, p, e_mask, v, delta, need)
        if k is None:
            unclassified.append(p)
        else:
            classes.setdefault(k, []).append(p)
    selected = {}
    disjoint = True
    for k, members in sorted(classes.items()):
        members = np.array(sorted(members), dtype=np.int64)
        sub = table.take(members)
        scale = 2.0 ** k
        meets = lat.intersect_matrix(sub, sub, scale, scale)
        nested = ~lat.omega_disjoint_matrix(sub, sub)
        conflict = meets & nested
        stock = np.ones(members.size, dtype=bool)
        keep = []
        while stock.any():
            idx = np.flatnonzero(stock)
            r = idx[np.lexsort((idx, -sub.level[idx]))[0]]
            keep.append(r)
            stock &= ~conflict[r]
            stock[r] = False
        keep = np.array(keep, dtype=np.int64)
        block = conflict[np.ix_(keep, keep)].copy()
        np.fill_diagonal(block, False)
        disjoint &= not block.any()
        selected[k] = members[keep]
    total = float(np.sum(table.area[positions]))
    ratio = total / (e_measure / delta) if e_measure > 0 else float("inf")
    return CoverResult({k: np.array(v_) for k, v_ in classes.items()}, selected,
                       np.array(unclassified, dtype=np.int64), ratio, disjoint)


# maximal organization -------------------------------------------------------------

@dataclass
class MaximalOrganization:
    delta: float
    sigma: float
    family: np.ndarray                  # universe positions of the incomparable R
    dense_family: np.ndarray            # universe positions of R-tilde candidates
    assignment: dict                    # tree number -> (R-tilde, R) universe positions
    fibers: dict                        # R -> tree numbers
    disjoint_tops: dict                 # R -> tree numbers kept with disjoint tops
    coverage_level: dict                # R -> j
    shell_level: dict                   # R -> k or None
    retention: float                    # sum over disjoint tops / sum over all tops
    incomparable: bool
    chains_ok: bool
    tops_disjoint: bool
    unassigned: list


def maximal_organize(context, stats, records, delta, sigma, e_mask, v):
    """Organize the trees of one (delta, sigma) stratum under dense parallelograms."""
    lat = context.lat
    U = context.universe_table
    top_u = context.tile_in_universe[np.array([r.top for r in records], dtype=np.int64)]
    top_table = U.take(top_u)
    dense_u = stats.universe_dense
    tilde = np.flatnonzero((dense_u > delta / 2) & (dense_u <= delta))
    tilde_table = U.take(tilde)
    above = lat.leq_matrix(top_table, tilde_table)         # [tree, R-tilde]
    relevant = above.any(axis=0)
    tilde, above = tilde[relevant], above[:, relevant]
    tilde_table = U.take(tilde)
    leq_tt = lat.leq_matrix(tilde_table, tilde_table)      # [a, b]: a <= b
    stock = np.ones(tilde.size, dtype=bool)
    chosen = []
    while stock.any():
        idx = np.flatnonzero(stock)
        r = idx[np.lexsort((idx, -tilde_table.level[idx]))[0]]
        chosen.append(r)
        stock &= ~leq_tt[:, r]
        stock[r] = False
    chosen = np.array(sorted(chosen), dtype=np.int64)
    block = leq_tt[np.ix_(chosen, chosen)].copy()
    np.fill_diagonal(block, False)
    incomparable = not block.any()
    assignment, fibers, unassigned = {}, {}, []
    chains_ok = True
    for t in range(len(records)):
        tildes = np.flatnonzero(above[t])
        best = None
        for r in chosen:               # chosen is in lattice order
            hits = tildes[leq_tt[tildes, r]]
            if hits.size:
                best = (int(tilde[hits[0]]), int(tilde[r]))
                break
        if best is None:
            unassigned.append(t)
            chains_ok = False
            continue
        assignment[t] = best
        fibers.setdefault(best[1], []).append(t)
    disjoint_tops, coverage, shells = {}, {}, {}
    kept_area = all_area = 0.0
    tops_disjoint = True
    for R, trees in sorted(fibers.items()):
        trees = np.array(trees, dtype=np.int64)
        sub = top_table.take(trees)
        meets = lat.intersect_matrix(sub, sub)
        stock = np.ones(trees.size, dtype=bool)
        keep = []
        while stock.any():
            idx = np.flatnonzero(stock)
            r = idx[np.lexsort((top_u[trees[idx]], -sub.level[idx]))[0]]
            keep.append(r)
            stock &= ~meets[r]
            stock[r] = False
        keep = np.array(keep, dtype=np.int64)
        blk = meets[np.ix_(keep, keep)].copy()
        np.fill_diagonal(blk, False)
        tops_disjoint &= not blk.any()
        disjoint_tops[R] = trees[keep].tolist()
        kept_area += float(np.sum(sub.area[keep]))
        total = float(np.sum(sub.area))
        all_area += total
        coverage[R] = int(np.floor(-np.log2(total / U.area[R])))
        shells[R] = shell_class(lat, U, R, e_mask, v, delta,
                                lambda k, area: 2.0 ** (20 * k) * area / 100.0)
    retention = kept_area / all_area if all_area > 0 else 1.0
    return MaximalOrganization(delta, sigma, tilde[chosen], tilde, assignment, fibers, disjoint_tops,
                               coverage, shells, retention, incomparable, chains_ok, tops_disjoint, unassigned)


def organization_text(lat, context, orgs):
    U = context.universe
    lines = ["# organization: stratum <delta> <sigma>; R l k i j j_cov k_shell; fiber tree numbers"]
    for org in orgs:
        lines.append(f"stratum {org.delta!r} {org.sigma!r}")
        for R in sorted(org.fibers):
            key = " ".join(str(int(x)) for x in lat.keys_of(U[R]))
            shell = org.shell_level.get(R)
            lines.append(f"R {key} {org.coverage_level[R]} {'-' if shell is None else shell}")
            lines.append("fiber " + " ".join(str(t) for t in org.fibers[R]))
            lines.append("disjoint " + " ".join(str(t) for t in org.disjoint_tops[R]))
    return "\n".join(lines) + "\n"


# square functions -----------------------------------------------------------------

def tree_square_function(context, member_positions, coeffs, kind="cells", top=None):
    """Delta (cells) or Delta-tilde (columns) of a tree on the grid.

    coeffs: coefficient per member (same order as member_positions).
    For the columns variant `top` is the tree top's position among decomposed
    tiles or a (universe table, position) pair.
    """
    lat = context.lat
    spec = lat.spec
    members = np.asarray(member_positions, dtype=np.int64)
    energy = np.abs(np.asarray(coeffs)) ** 2
    total = np.zeros((spec.n, spec.n))
    if members.size == 0:
        return total
    table = context.tile_table.take(members)
    if kind == "cells":
        key = table.level * (1 << 20) + table.k
        for value in np.unique(key):
            pos = np.flatnonzero(key == value)
            level, k = int(table.level[pos[0]]), int(table.k[pos[0]])
            i_idx, j_idx = lat.cell_indices(level, k)
            cell_value = np.zeros(lat.cells_x(level) * lat.cells_y)
            np.add.at(cell_value, table.i[pos] * lat.cells_y + table.j[pos], energy[pos] / table.area[pos])
            total += cell_value[i_idx * lat.cells_y + j_idx]
        return np.sqrt(total)
    if kind != "columns":
        raise ValueError("kind must be 'cells' or 'columns'")
    if top is None:
        raise ValueError("columns variant needs the tree top")
    top_table, tpos = top if isinstance(top, tuple) else (context.tile_table, top)
    x1, x2 = spec.coordinates()
    half2 = lat.width / 2 + abs(top_table.slope[tpos]) * top_table.length[tpos] / 2
    reach = lat.C * half2
    rows = (np.abs(lat.wrap(x2 - top_table.cy[tpos])) <= reach + 1e-12) | (2 * reach >= lat.side_length)
    for p in range(members.size):
        lo = table.i[p] * table.length[p]
        in_col = (x1 >= lo - 1e-12) & (x1 < lo + table.length[p] - 1e-12)
        total += np.where(in_col & rows, energy[p] / table.area[p], 0.0)
    return np.sqrt(total)


def _interval_inside(lo, length, center, radius, L):
    """Interval [lo, lo+length) inside the arc of given centre and radius (arrays allowed)."""
    if 2 * radius >= L:
        return np.ones(np.shape(lo), dtype=bool) if np.ndim(lo) else True
    mid = np.asarray(lo) + np.asarray(length) / 2
    return np.abs((mid - center + L / 2) % L - L / 2) + np.asarray(length) / 2 <= radius + 1e-12


def john_nirenberg_levels(context, member_positions, coeffs, sigma, top, threshold=100.0):
    """Generations of maximal dyadic x1-intervals where a_{I,K} exceeds threshold*sigma^2.

    top: (TileArray, position) of the tree top.  Returns list of generations,
    each a list of (start, length) intervals, and the list of union measures
    starting with the base interval pi_1(C top).
    """
    lat = context.lat
    L = lat.side_length
    members = np.asarray(member_positions, dtype=np.int64)
    table = context.tile_table.take(members)
    energy = np.abs(np.asarray(coeffs)) ** 2 / table.area
    starts = table.i * table.length
    lengths = table.length
    top_table, tpos = top
    base_center = top_table.cx[tpos]
    base_radius = min(lat.C * top_table.length[tpos] / 2, L / 2)

    def a_value(i_lo, i_len, k_center, k_radius):
        inside = np.broadcast_to(_interval_inside(starts, lengths, k_center, k_radius, L), starts.shape)
        covers = (lengths >= i_len - 1e-12) & (np.abs(((i_lo - starts) + L) % L) + i_len <= lengths + 1e-12)
        return float(np.sum(energy[inside & covers]))

    def maximal_intervals(k_center, k_radius, parent=None):
        found = []
        length = L
        while length >= lat.width - 1e-12:
            count = int(round(L / length))
            for m in range(count):
                lo = m * length
                if not _interval_inside(lo, length, k_center, k_radius, L):
                    continue
                if parent is not None and abs(length - 2 * k_radius) < 1e-12:
                    continue          # proper subintervals only
                if any(_interval_inside(lo, length, f_lo + f_len / 2, f_len / 2, L) for f_lo, f_len in found):
                    continue
                if a_value(lo, length, k_center, k_radius) > threshold * sigma ** 2:
                    found.append((lo, length))
            length /= 2
        return found

    generations = []
    measures = [2 * base_radius]
    current = maximal_intervals(base_center, base_radius)
    while current:
        generations.append(current)
        measures.append(sum(ln for _, ln in current))
        nxt = []
        for lo, ln in current:
            nxt.extend(maximal_intervals(lo + ln / 2, ln / 2, parent=(lo, ln)))
        current = nxt
        if len(generations) > 64:
            break
    return generations, measures
