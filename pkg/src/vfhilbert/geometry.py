"""Vector fields, dyadic slope intervals, the parallelogram tile lattice and trees.

A tile pairs a dyadic slope interval omega (length 2^-l inside [-2, 2]) with
a sheared cell of the torus: x1 runs over a dyadic interval of length
``w * 2^l`` and ``x2 - c(omega) x1`` over an interval of length w.  For a
fixed omega these cells partition the torus.

Spatial relations use the minimal-image convention.  Most predicates come
in two flavours: a scalar one taking :class:`Tile` objects, and a vectorised
one taking :class:`TileArray` columns, which the decomposition code uses to
build whole relation matrices at once.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import GridSpec

GEOMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class VectorField:
    """Slope function u(x1) sampled per grid column; the field is (1, u(x1))."""

    spec: GridSpec
    u: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.u, dtype=float)
        if arr.shape != (self.spec.n,):
            raise ValueError(f"u must have one value per column ({self.spec.n}), got {arr.shape}")
        if np.any(np.abs(arr) > 1 + 1e-15):
            raise ValueError("vector field slope must satisfy |u| <= 1")
        object.__setattr__(self, "u", arr)

    @classmethod
    def constant(cls, spec, value):
        return cls(spec, np.full(spec.n, float(value)))

    def column_mask(self, omega):
        """Columns where u lies in omega (half-open on the right)."""
        return (self.u >= omega.left) & (self.u < omega.right)


@dataclass(frozen=True, order=True)
class FrequencyInterval:
    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or not 0 <= self.index < 4 * 2 ** self.level:
            raise ValueError(f"no dyadic interval with level {self.level}, index {self.index}")

    @property
    def length(self):
        return 2.0 ** -self.level

    @property
    def left(self):
        return -2.0 + self.index * self.length

    @property
    def right(self):
        return -2.0 + (self.index + 1) * self.length

    @property
    def center(self):
        return -2.0 + (self.index + 0.5) * self.length

    @property
    def right_half(self):
        return FrequencyInterval(self.level + 1, 2 * self.index + 1)

    @property
    def left_half(self):
        return FrequencyInterval(self.level + 1, 2 * self.index)

    def half(self, which):
        """which = 1 gives the right half, 2 the left half."""
        if which == 1:
            return self.right_half
        if which == 2:
            return self.left_half
        raise ValueError("half must be 1 or 2")

    def contains(self, other):
        if other.level < self.level:
            return False
        return other.index >> (other.level - self.level) == self.index

    def overlaps(self, other):
        """Intervals share interior points (dyadic: one contains the other)."""
        return self.contains(other) or other.contains(self)


@dataclass(frozen=True, order=True)
class Tile:
    omega: FrequencyInterval
    i: int
    j: int
    width: float

    @property
    def key(self):
        return (self.omega.level, self.omega.index, self.i, self.j)

    @property
    def length(self):
        return self.width * 2 ** self.omega.level

    @property
    def area(self):
        return self.width * self.length

    @property
    def slope(self):
        return self.omega.center

    def center(self, side_length=1.0):
        x1 = (self.i + 0.5) * self.length
        x2 = (self.j + 0.5) * self.width + self.slope * x1
        return x1, x2 % side_length


def _omega_contains(level_a, k_a, level_b, k_b):
    """Vectorised omega_b subset of omega_a."""
    shift = level_b - level_a
    ok = shift >= 0
    return ok & ((k_b >> np.where(ok, shift, 0)) == k_a)


def _omega_disjoint(level_a, k_a, level_b, k_b):
    return ~(_omega_contains(level_a, k_a, level_b, k_b) | _omega_contains(level_b, k_b, level_a, k_a))


class TileArray:
    """Structure-of-arrays view of a set of lattice tiles."""

    def __init__(self, lattice, level, k, i, j):
        self.lattice = lattice
        self.level = np.asarray(level, dtype=np.int64)
        self.k = np.asarray(k, dtype=np.int64)
        self.i = np.asarray(i, dtype=np.int64)
        self.j = np.asarray(j, dtype=np.int64)
        w = lattice.width
        L = lattice.side_length
        self.length = w * 2.0 ** self.level
        self.area = w * self.length
        self.omega_length = 2.0 ** -self.level.astype(float)
        self.slope = -2.0 + (self.k + 0.5) * self.omega_length
        self.cx = (self.i + 0.5) * self.length
        self.cy = np.mod((self.j + 0.5) * w + self.slope * self.cx, L)

    def __len__(self):
        return len(self.level)

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return TileArray(self.lattice, self.level[idx], self.k[idx], self.i[idx], self.j[idx])

    def keys(self):
        return np.stack([self.level, self.k, self.i, self.j], axis=1)

    def tiles(self):
        w = self.lattice.width
        return [Tile(FrequencyInterval(int(a), int(b)), int(c), int(d), w)
                for a, b, c, d in zip(self.level, self.k, self.i, self.j)]

    def half_of(self, which):
        """(level, index) arrays of the right (1) or left (2) omega halves."""
        return self.level + 1, 2 * self.k + (1 if which == 1 else 0)


class Lattice:
    """Tile lattice of band width w over levels 0..l_max on a grid."""

    def __init__(self, spec, width, l_max, C=10.0):
        self.spec = spec
        self.width = float(width)
        self.l_max = int(l_max)
        self.C = float(C)
        L = spec.side_length
        h = spec.spacing
        if not self.width > 0:
            raise ConfigError("band.w", "must be positive")
        cells = L / self.width
        if abs(cells - round(cells)) > 1e-9 or round(cells) & (round(cells) - 1):
            raise ConfigError("band.w", "L/w must be a power of two")
        width_pts = self.width / h
        if abs(width_pts - round(width_pts)) > 1e-9 or round(width_pts) % 4:
            raise ConfigError("band.w", "w must be a multiple of 4 grid spacings")
        if 2.0 / self.width >= spec.n / (2.0 * L):
            raise ConfigError("band.w", "2/w must lie strictly inside the Nyquist band")
        if self.l_max < 0 or self.width * 2 ** self.l_max > L + 1e-12:
            raise ConfigError("band.l_max", "longest tile w*2^l_max must not exceed L")
        if self.C < 1:
            raise ConfigError("constants.C", "must be at least 1")
        self.side_length = L
        self.cells_y = int(round(cells))
        self.width_points = int(round(width_pts))
        counts = [self.omega_count(l) * self.cells_x(l) * self.cells_y for l in range(self.l_max + 1)]
        self._level_offset = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        # per-lattice memo for packet supports and relation matrices
        self.cache = {}

    # counting and indexing
    @staticmethod
    def omega_count(level):
        return 4 * 2 ** level

    def cells_x(self, level):
        return self.cells_y >> level

    def tile_count(self):
        return int(self._level_offset[-1])

    def omegas(self, level):
        return [FrequencyInterval(level, k) for k in range(self.omega_count(level))]

    def index_of(self, level, k, i, j):
        """Global index in (l, k, i, j) order; works on arrays."""
        level = np.asarray(level, dtype=np.int64)
        nx = self.cells_y >> level
        return self._level_offset[level] + (np.asarray(k) * nx + np.asarray(i)) * self.cells_y + np.asarray(j)

    def tile_index(self, tile):
        return int(self.index_of(tile.omega.level, tile.omega.index, tile.i, tile.j))

    def keys_of(self, index):
        index = np.asarray(index, dtype=np.int64)
        level = np.searchsorted(self._level_offset, index, side="right") - 1
        rest = index - self._level_offset[level]
        j = rest % self.cells_y
        rest = rest // self.cells_y
        nx = self.cells_y >> level
        return level, rest // nx, rest % nx, j

    def table(self, index=None):
        if index is None:
            index = np.arange(self.tile_count())
        return TileArray(self, *self.keys_of(index))

    def tile(self, index):
        level, k, i, j = (int(v) for v in self.keys_of(index))
        return Tile(FrequencyInterval(level, k), i, j, self.width)

    def enumerate_tiles(self, levels=None, where=None):
        """Tiles in lexicographic (l, k, i, j) order, optionally filtered.

        `where` receives a :class:`Tile` and returns a bool.
        """
        levels = range(self.l_max + 1) if levels is None else levels
        for level in levels:
            nx = self.cells_x(level)
            for omega in self.omegas(level):
                for i in range(nx):
                    for j in range(self.cells_y):
                        t = Tile(omega, i, j, self.width)
                        if where is None or where(t):
                            yield t

    def indices(self, levels=None, omega_within=None):
        """Global indices of tiles at the given levels whose omega lies in a slope range."""
        levels = range(self.l_max + 1) if levels is None else levels
        out = []
        for level in levels:
            start, stop = self._level_offset[level], self._level_offset[level + 1]
            idx = np.arange(start, stop)
            if omega_within is not None:
                lo, hi = omega_within
                _, k, _, _ = self.keys_of(idx)
                left = -2.0 + k * 2.0 ** -level
                keep = (left >= lo - 1e-15) & (left + 2.0 ** -level <= hi + 1e-15)
                idx = idx[keep]
            out.append(idx)
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def containing_tile(self, omega, x1, x2):
        """The tile of the given omega whose cell holds the point (x1, x2)."""
        L = self.side_length
        length = self.width * 2 ** omega.level
        x1 = x1 % L
        i = int(np.floor(x1 / length))
        j = int(np.floor(((x2 - omega.center * x1) % L) / self.width)) % self.cells_y
        return Tile(omega, i, j, self.width)

    def cell_indices(self, level, k):
        """Integer (i, j) cell labels of every grid point for slope interval (level, k).

        Exact integer arithmetic: the slope times 2^(level+1) is an integer.
        """
        n = self.spec.n
        a = np.arange(n)[None, :]
        b = np.arange(n)[:, None]
        W = self.width_points
        scale = 2 ** (level + 1)
        slope_num = -(2 ** (level + 2)) + 2 * k + 1
        i_idx = np.broadcast_to(a // (W << level), (n, n))
        j_idx = np.floor_divide(b * scale - slope_num * a, W * scale) % self.cells_y
        return i_idx, j_idx

    def cell_mask(self, tile):
        i_idx, j_idx = self.cell_indices(tile.omega.level, tile.omega.index)
        return (i_idx == tile.i) & (j_idx == tile.j)

    # relations
    def wrap(self, d):
        L = self.side_length
        return d - L * np.round(d / L)

    def sheared_offsets(self, x1, x2, cx, cy, slope):
        """Minimal-image offsets of points from centres in the sheared frame of slope."""
        d1 = self.wrap(x1 - cx)
        d2 = self.wrap(x2 - cy - slope * d1)
        return d1, d2

    def leq_matrix(self, a, b):
        """Boolean matrix [p, q] = (a[p] <= b[q]) for TileArrays a, b."""
        C = self.C
        L = self.side_length
        w = self.width
        lvl_a, k_a = a.level[:, None], a.k[:, None]
        lvl_b, k_b = b.level[None, :], b.k[None, :]
        nested = _omega_contains(lvl_a, k_a, lvl_b, k_b)
        d1 = self.wrap(a.cx[:, None] - b.cx[None, :])
        d2 = self.wrap(a.cy[:, None] - b.cy[None, :] - b.slope[None, :] * d1)
        half_a = a.length[:, None] / 2
        reach_b = C * b.length[None, :] / 2
        fit1 = (np.abs(d1) + half_a <= reach_b + GEOMETRY_TOL) | (C * b.length[None, :] >= L)
        spread = np.abs(a.slope[:, None] - b.slope[None, :]) * half_a
        fit2 = (np.abs(d2) + spread + w / 2 <= C * w / 2 + GEOMETRY_TOL) | (C * w >= L)
        return nested & fit1 & fit2

    def intersect_matrix(self, a, b, scale_a=1.0, scale_b=1.0):
        """Boolean matrix [p, q]: interiors of scale_a*a[p] and scale_b*b[q] meet on the torus.

        Parallelograms are dilated about their centres.  Separating-axis test
        over the periodic images that can reach the fundamental domain.
        """
        L = self.side_length
        w = self.width
        scale_a = np.broadcast_to(np.asarray(scale_a, dtype=float), (len(a),))[:, None]
        scale_b = np.broadcast_to(np.asarray(scale_b, dtype=float), (len(b),))[None, :]
        hl_a, hw_a = scale_a * a.length[:, None] / 2, scale_a * w / 2
        hl_b, hw_b = scale_b * b.length[None, :] / 2, scale_b * w / 2
        s_a, s_b = a.slope[:, None], b.slope[None, :]
        base1 = self.wrap(a.cx[:, None] - b.cx[None, :])
        base2 = self.wrap(a.cy[:, None] - b.cy[None, :])
        reach = max(np.max(hl_a, initial=0) + np.max(hl_b, initial=0), 0.0)
        m1_max = int(np.ceil(reach / L)) + 1
        ext2 = np.max(hw_a, initial=0) + np.max(hw_b, initial=0) + 2.0 * reach
        m2_max = int(np.ceil(ext2 / L)) + 1
        hit = np.zeros((len(a), len(b)), dtype=bool)
        for m1 in range(-m1_max, m1_max + 1):
            d1 = base1 + m1 * L
            for m2 in range(-m2_max, m2_max + 1):
                d2 = base2 + m2 * L
                sep = np.abs(d1) >= hl_a + hl_b - GEOMETRY_TOL
                for s in (s_a, s_b):
                    proj = np.abs(d2 - s * d1)
                    ext = (np.abs(s_a - s) * hl_a + hw_a) + (np.abs(s_b - s) * hl_b + hw_b)
                    sep = sep | (proj >= ext - GEOMETRY_TOL)
                hit |= ~sep
        return hit

    def omega_contains_matrix(self, a, b):
        """[p, q] = omega_b[q] subset of omega_a[p]."""
        return _omega_contains(a.level[:, None], a.k[:, None], b.level[None, :], b.k[None, :])

    def omega_disjoint_matrix(self, a, b):
        return _omega_disjoint(a.level[:, None], a.k[:, None], b.level[None, :], b.k[None, :])

    def half_disjoint_matrix(self, tops, members, which):
        """[p, q] = omega_top[p] and omega_{member q, which} are disjoint."""
        hl, hk = members.half_of(which)
        return _omega_disjoint(tops.level[:, None], tops.k[:, None], hl[None, :], hk[None, :])

    # scalar conveniences
    def _pair(self, a, b):
        return self.table([self.tile_index(a)]), self.table([self.tile_index(b)])

    def tile_leq(self, a, b):
        ta, tb = self._pair(a, b)
        return bool(self.leq_matrix(ta, tb)[0, 0])

    def intersects(self, a, b, scale_a=1.0, scale_b=1.0):
        ta, tb = self._pair(a, b)
        return bool(self.intersect_matrix(ta, tb, scale_a, scale_b)[0, 0])

    def comparable_incident(self, a, b):
        """True when a, b meet spatially and one omega contains the other."""
        return bool(self.intersects(a, b) and a.omega.overlaps(b.omega))


def tile_leq(lattice, a, b):
    return lattice.tile_leq(a, b)


def comparable_incident(lattice, a, b):
    return lattice.comparable_incident(a, b)


@dataclass(frozen=True)
class Tree:
    top: Tile
    members: tuple
    kind: str = "general"

    def __len__(self):
        return len(self.members)

    def __contains__(self, tile):
        return tile in self.members


def _kind_half(kind):
    return {"general": None, "1": 1, 1: 1, "1-tree": 1, "2": 2, 2: 2, "2-tree": 2}[kind]


def maximal_tree_with_top(lattice, top, pool, kind="general"):
    """All pool tiles below `top`, restricted by the j-tree half condition."""
    pool = sorted(set(pool), key=lambda t: t.key)
    which = _kind_half(kind)
    if not pool:
        return Tree(top, (), _kind_name(which))
    tops = lattice.table([lattice.tile_index(top)])
    members = lattice.table([lattice.tile_index(t) for t in pool])
    keep = lattice.leq_matrix(members, tops)[:, 0]
    if which is not None:
        keep &= lattice.half_disjoint_matrix(tops, members, which)[0]
    return Tree(top, tuple(t for t, ok in zip(pool, keep) if ok), _kind_name(which))


def _kind_name(which):
    return {None: "general", 1: "1-tree", 2: "2-tree"}[which]
