"""Bump profiles, tile multipliers, wave packets and kernel pieces.

Orientation convention.  A frequency (xi, eta) with eta > 0 is assigned
the crest slope ``-xi/eta``: the plane wave exp(2 pi i (xi x1 + eta x2))
is constant along lines of that slope.  Tile multipliers localize the
crest slope to the tile's omega, so a packet is elongated along its tile.
The Hilbert transform along (1, u) then acts through ``xi + eta*u``.

Curved packets are computed exactly in the frequency domain, column by
column: on the column x1 the packet spectrum is multiplied by the kernel
piece evaluated at ``xi + eta*u(x1)``.  A trapezoid-rule route over the
line parameter t is kept as an independent cross-check and reports its
truncation tail.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import AccuracyError, ConfigError
from .grid import GridFunction, fft_centered, ifft_centered

# Kernel pieces sit at frequency KERNEL_SCALE/length(s).  The value and sign
# come from `calibrate_kernel_scale`, which minimizes the packet mass
# falling outside the active half of omega; ACTIVE_HALF names that half
# (2 = left half omega_2).
KERNEL_SCALE = -0.75
ACTIVE_HALF = 2

KERNEL_PIECES = 100


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, and S(x) + S(1-x) = 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        y = 1.0 - x
        b = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
        out = a / (a + b)
    return np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, out))


@dataclass(frozen=True)
class BumpProfile:
    """The three one-dimensional profiles and the sharpening offset."""

    offset: int = 2
    gauss_nodes: int = 96

    def sqrt_beta(self, x):
        return smooth_step(2.0 - np.abs(np.asarray(x, dtype=float)))

    def beta(self, x):
        return self.sqrt_beta(x) ** 2

    def sqrt_beta_tilde(self, y):
        y = np.asarray(y, dtype=float)
        return smooth_step(2.0 * y - 1.0) * smooth_step(5.0 - 2.0 * y)

    def beta_tilde(self, y):
        return self.sqrt_beta_tilde(y) ** 2

    def psi0(self, z):
        z = np.asarray(z, dtype=float)
        return smooth_step((z - 0.98) / 0.01) * smooth_step((1.02 - z) / 0.01)

    def _ramp_integral(self, a):
        """Integral of S(t)^2 over [0, a] for a in [0, 1], by Gauss-Legendre."""
        a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
        nodes, weights = leggauss(self.gauss_nodes)
        t = 0.5 * a[..., None] * (nodes + 1.0)
        return 0.5 * a * np.sum(weights * smooth_step(t) ** 2, axis=-1)

    def beta_antiderivative(self, z):
        """Integral of beta over (-inf, z]."""
        z = np.asarray(z, dtype=float)
        ramp = float(self._ramp_integral(1.0))
        out = np.where(z <= -2.0, 0.0, 0.0)
        out = np.where((z > -2.0) & (z <= -1.0), self._ramp_integral(z + 2.0), out)
        out = np.where((z > -1.0) & (z <= 1.0), ramp + (z + 1.0), out)
        out = np.where((z > 1.0) & (z < 2.0), ramp + 2.0 + ramp - self._ramp_integral(2.0 - z), out)
        return np.where(z >= 2.0, 2.0 * ramp + 2.0, out)

    def beta_integral(self):
        return float(self.beta_antiderivative(3.0))


PROFILE = BumpProfile()


# multipliers ---------------------------------------------------------------

def crest_slope(xi, eta):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(eta > 0, -xi / np.where(eta > 0, eta, 1.0), np.inf)


def beta_omega(x, level, index, profile=PROFILE):
    """beta(2^(l+c) (x - centre of the right half)); index may be any integer."""
    length = 2.0 ** -level
    right_center = -2.0 + (index + 0.75) * length
    return profile.beta(2.0 ** (level + profile.offset) * (np.asarray(x) - right_center))


def beta_level(x, level, profile=PROFILE):
    """Sum of beta_omega over level-l intervals, including the left neighbour of [-2, 2].

    The neighbour (index -1) makes the sum periodic on the whole window that
    the slope average over [-1, 1] reaches.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for index in range(-1, 4 * 2 ** level):
        total = total + beta_omega(x, level, index, profile)
    return total


def beta_level_fast(x, level, profile=PROFILE):
    """beta_level using that exactly one bump can be nonzero at each slope."""
    x = np.asarray(x, dtype=float)
    y = (x + 2.0) * 2.0 ** level - 0.25
    index = np.floor(y)
    valid = (index >= -1) & (index <= 4 * 2 ** level - 1)
    return np.where(valid, beta_omega(x, level, index, profile), 0.0)


def gamma_level(x, level, profile=PROFILE):
    """gamma_l(x) = (1/2) * integral of beta_level over [x-1, x+1], in closed form."""
    x = np.asarray(x, dtype=float)
    scale = 2.0 ** (level + profile.offset)
    total = np.zeros_like(x)
    for index in range(-1, 4 * 2 ** level):
        right_center = -2.0 + (index + 0.75) * 2.0 ** -level
        upper = profile.beta_antiderivative(scale * (x + 1.0 - right_center))
        lower = profile.beta_antiderivative(scale * (x - 1.0 - right_center))
        total = total + (upper - lower) / scale
    return 0.5 * total


def plateau_const(profile=PROFILE):
    """Constant value of gamma_l on [-1, 1]: 2^-c times the integral of beta."""
    return profile.beta_integral() * 2.0 ** -profile.offset


def _check_nyquist(lat, slope_hi, eta_hi):
    limit = (lat.spec.n // 2 - 1) / lat.side_length
    if eta_hi > limit or slope_hi * eta_hi > limit:
        raise ConfigError("band.w", "packet frequency support exceeds the Nyquist band")


def multiplier_m_omega(omega, lat, profile=PROFILE):
    w = lat.width
    shift = omega.length / 4.0
    _check_nyquist(lat, max(abs(omega.left + shift), abs(omega.right + shift)), 2.5 / w)
    xi, eta = lat.spec.frequencies()
    vals = profile.beta_tilde(w * eta) * beta_omega(crest_slope(xi, eta), omega.level, omega.index, profile)
    vals = np.where(eta > 0, vals, 0.0)
    return GridFunction(lat.spec, vals, "frequency")


def periodizing_multiplier(level, lat, profile=PROFILE):
    xi, eta = lat.spec.frequencies()
    slope = np.where(eta > 0, crest_slope(xi, eta), 0.0)
    inside = eta > 0
    vals = np.zeros_like(xi)
    vals[inside] = profile.beta_tilde(lat.width * eta[inside]) * gamma_level(slope[inside], level, profile)
    return GridFunction(lat.spec, vals, "frequency")


def band_mask(lat):
    """Indicator of the trapezoid 1/w <= eta <= 2/w, |xi| <= eta."""
    xi, eta = lat.spec.frequencies()
    w = lat.width
    tol = 1e-12 / w
    return (eta >= 1.0 / w - tol) & (eta <= 2.0 / w + tol) & (np.abs(xi) <= eta + tol)


def band_projection(f, lat):
    spectrum = fft_centered(f.samples, f.spec)
    return GridFunction(f.spec, ifft_centered(spectrum * band_mask(lat), f.spec))


# packets -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PacketSupport:
    """Frequency support of the mother packet of one omega.

    rows/cols index the centered spectrum; `amplitude` is sqrt(m_omega)
    scaled so that every tile packet of this omega has unit L2 norm, and
    `normalization` is |s| * integral of m_omega, the factor relating the
    averaged tile projections to the multiplier m_omega.
    """

    omega: object
    rows: np.ndarray
    cols: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    amplitude: np.ndarray
    normalization: float


def packet_support(omega, lat, profile=PROFILE):
    key = ("support", omega.level, omega.index, profile)
    if key not in lat.cache:
        m = multiplier_m_omega(omega, lat, profile).samples
        rows, cols = np.nonzero(m > 0)
        vals = m[rows, cols]
        xi_axis = lat.spec.frequency_axis()
        area = lat.width * lat.width * 2 ** omega.level
        total = float(np.sum(vals))
        lat.cache[key] = PacketSupport(
            omega, rows, cols, xi_axis[cols], xi_axis[rows],
            np.sqrt(vals / total), area * total / lat.side_length ** 2)
    return lat.cache[key]


def tile_phases(support, cx, cy):
    """exp(-2 pi i k . c(s)) for tiles (rows) and support bins (columns)."""
    cx = np.atleast_1d(cx)[:, None]
    cy = np.atleast_1d(cy)[:, None]
    return np.exp(-2j * np.pi * (support.xi[None, :] * cx + support.eta[None, :] * cy))


def kernel_scale(length, kappa=KERNEL_SCALE):
    return kappa / length


def kernel_piece(length, kappa=KERNEL_SCALE, profile=PROFILE):
    """Frequency profile of the kernel piece attached to tiles of this length."""
    scale = kernel_scale(length, kappa)

    def piece(zeta):
        return profile.psi0(np.asarray(zeta, dtype=float) / scale)

    piece.scale = scale
    return piece


def curved_column_multiplier(support, u, length, kappa=KERNEL_SCALE, profile=PROFILE):
    """Array (columns, bins) of psi_s(xi + eta*u(x1))."""
    scale = kernel_scale(length, kappa)
    zeta = support.xi[None, :] + support.eta[None, :] * np.asarray(u)[:, None]
    return profile.psi0(zeta / scale)


def _column_synthesis(support, coeffs, multiplier, spec):
    """Space samples of sum_k coeffs(k) multiplier(x1, k) e^{2 pi i k.x}/L.

    coeffs: (bins,) spectrum values, multiplier: (n, bins) per column.
    """
    n = spec.n
    L = spec.side_length
    x1 = np.arange(n) * spec.spacing
    weights = multiplier * coeffs[None, :] * np.exp(2j * np.pi * support.xi[None, :] * x1[:, None])
    # accumulate per column and eta row
    table = np.zeros((n, n), dtype=complex)
    np.add.at(table, (slice(None), support.rows), weights)
    # table[x1, eta_row] -> column x1 of the output, inverse along eta
    cols = np.fft.ifft(np.fft.ifftshift(table, axes=1), axis=1) * n / L
    return cols.T


@dataclass(frozen=True, eq=False)
class Packet:
    tile: object
    samples: GridFunction
    kind: str
    tail_bound: float = 0.0


def packet_spectrum(tile, lat, profile=PROFILE):
    """(support, values) of phi_s on its support bins."""
    sup = packet_support(tile.omega, lat, profile)
    cx, cy = tile.center(lat.side_length)
    return sup, sup.amplitude * tile_phases(sup, cx, cy)[0]


def make_packet(tile, lat, kind="phi", v=None, method="spectral", tolerance=1e-6,
                kappa=KERNEL_SCALE, profile=PROFILE):
    sup, values = packet_spectrum(tile, lat, profile)
    spec = lat.spec
    if kind == "phi":
        full = np.zeros((spec.n, spec.n), dtype=complex)
        full[sup.rows, sup.cols] = values
        return Packet(tile, GridFunction(spec, ifft_centered(full, spec)), kind)
    if kind == "alpha":
        full = np.zeros((spec.n, spec.n), dtype=complex)
        full[sup.rows, sup.cols] = values * kernel_piece(tile.length, kappa, profile)(sup.xi)
        return Packet(tile, GridFunction(spec, ifft_centered(full, spec)), kind)
    if kind != "curved":
        raise ValueError(f"unknown packet kind {kind!r}")
    if v is None:
        raise ValueError("curved packets need a vector field")
    if method == "spectral":
        mult = curved_column_multiplier(sup, v.u, tile.length, kappa, profile)
        return Packet(tile, GridFunction(spec, _column_synthesis(sup, values, mult, spec)), kind)
    if method == "quadrature":
        mult, tail = trapezoid_column_multiplier(sup, v.u, tile.length, spec.spacing, kappa, profile)
        if tail > tolerance:
            raise AccuracyError("curved packet quadrature truncation", tail, tolerance)
        return Packet(tile, GridFunction(spec, _column_synthesis(sup, values, mult, spec)), kind, tail)
    raise ValueError(f"unknown method {method!r}")


# trapezoid route ------------------------------------------------------------

@lru_cache(maxsize=8)
def _psi0_transform_table(tau_max=4000.0, step=0.25, nodes=2048):
    """|inverse transform of psi0| sampled on tau >= 0, for tail estimates."""
    x, wts = leggauss(nodes)
    r = 1.0 + 0.02 * x
    wts = 0.02 * wts * PROFILE.psi0(r)
    tau = np.arange(0.0, tau_max + step, step)
    vals = np.empty(tau.size, dtype=complex)
    for start in range(0, tau.size, 2000):
        chunk = tau[start:start + 2000]
        vals[start:start + 2000] = np.exp(2j * np.pi * chunk[:, None] * r[None, :]) @ wts
    return tau, vals


def psi0_inverse_transform(tau, profile=PROFILE, nodes=2048):
    x, wts = leggauss(nodes)
    r = 1.0 + 0.02 * x
    wts = 0.02 * wts * profile.psi0(r)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    return np.exp(2j * np.pi * tau[:, None] * r[None, :]) @ wts


def kernel_tail_fraction(truncation, length, kappa=KERNEL_SCALE):
    """Share of the L1 mass of the kernel piece lying beyond |t| > truncation."""
    tau, vals = _psi0_transform_table()
    mag = np.abs(vals)
    cut = truncation * abs(kappa) / length
    return float(np.sum(mag[tau > cut]) / np.sum(mag))


def trapezoid_column_multiplier(support, u, length, spacing, kappa=KERNEL_SCALE, profile=PROFILE,
                                truncation_factor=8.0):
    """Trapezoid sum over t of the kernel piece against the packet, as a multiplier.

    Evaluating the packet (a trigonometric polynomial) off the grid is exact,
    so the quadrature reduces to sum_t psi_check(t) exp(-2 pi i t zeta) dt.
    Returns (multiplier array, relative truncation tail).
    """
    t_max = truncation_factor * length
    dt = spacing / 2.0
    t = np.arange(-np.floor(t_max / dt), np.floor(t_max / dt) + 1) * dt
    scale = kernel_scale(length, kappa)
    kernel = abs(scale) * psi0_inverse_transform(t * scale, profile)
    zeta = support.xi[None, :] + support.eta[None, :] * np.asarray(u)[:, None]
    out = np.empty(zeta.shape, dtype=complex)
    flat = zeta.ravel()
    res = out.ravel()
    for start in range(0, flat.size, 4096):
        z = flat[start:start + 4096]
        res[start:start + 4096] = np.exp(-2j * np.pi * z[:, None] * t[None, :]) @ kernel * dt
    return out, kernel_tail_fraction(t_max, length, kappa)


# kernel partition of unity ----------------------------------------------------

def _hat(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1, smooth_step(1.0 - np.abs(x)), 0.0)


def kernel_family_piece(zeta, scale, index, profile=PROFILE, pieces=KERNEL_PIECES):
    """Piece `index` (0 .. pieces-1) of the kernel partition at base scale.

    Piece 0 is psi0(zeta/scale).  The others split the remainder of the
    octave smoothly, so that summing over all pieces and all dyadic scales
    scale*2^-l gives the indicator of {zeta/scale > 0}.
    """
    zeta = np.asarray(zeta, dtype=float)
    ratio = zeta / scale
    out = np.zeros_like(ratio)
    pos = ratio > 0
    if index == 0:
        out[pos] = profile.psi0(ratio[pos])
        return out
    x = np.log2(ratio[pos])
    remainder = 1.0 - profile.psi0(2.0 ** (x - np.round(x)))
    out[pos] = remainder * _hat((pieces - 1) * x - index)
    return out


def kernel_partition_sum(zeta, scale, levels, profile=PROFILE, pieces=KERNEL_PIECES):
    """Sum of all pieces over the given dyadic levels (scale * 2^-l)."""
    total = np.zeros_like(np.asarray(zeta, dtype=float))
    for level in levels:
        s = scale * 2.0 ** -level
        for index in range(pieces):
            total = total + kernel_family_piece(zeta, s, index, profile, pieces)
    return total


# kernel scale calibration -----------------------------------------------------

def support_leakage(omega, lat, kappa=KERNEL_SCALE, half=ACTIVE_HALF, samples=4000, profile=PROFILE):
    """Share of curved-packet mass produced by constant slopes u outside the chosen half of omega.

    For a constant field u the squared norm of the curved packet is
    sum_k |phi_hat(k)|^2 psi_s(xi + eta u)^2.  The share is computed by
    integrating that function of u over a window covering every slope at
    which it can be nonzero.
    """
    sup = packet_support(omega, lat, profile)
    length = lat.width * 2 ** omega.level
    scale = kernel_scale(length, kappa)
    # zeta/scale in [0.98, 1.02]  <=>  u in (0.98..1.02 * scale - xi) / eta
    ends = (np.array([0.98, 1.02])[:, None] * scale - sup.xi[None, :]) / sup.eta[None, :]
    lo, hi = ends.min(), ends.max()
    u = np.linspace(lo, hi, samples)
    weight = sup.amplitude ** 2
    mass = np.empty(u.size)
    for start in range(0, u.size, 500):
        chunk = curved_column_multiplier(sup, u[start:start + 500], length, kappa, profile)
        mass[start:start + 500] = (chunk ** 2) @ weight
    total = np.trapezoid(mass, u)
    if total <= 0:
        return 1.0
    target = omega.half(half)
    inside = (u >= target.left) & (u <= target.right)
    return float(1.0 - np.trapezoid(np.where(inside, mass, 0.0), u) / total)


def calibrate_kernel_scale(lat, kappas=None, levels=None, profile=PROFILE):
    """Scan kernel scales and both halves; return (kappa, half, leak, table).

    For each level a representative omega just right of slope 0 is used;
    the score is the worst leakage over levels.
    """
    if kappas is None:
        kappas = np.round(np.concatenate([-np.arange(0.25, 4.01, 0.25), np.arange(0.25, 4.01, 0.25)]), 4)
    if levels is None:
        levels = range(lat.l_max)
    table = []
    for kappa in kappas:
        for half in (1, 2):
            leak = max(support_leakage(_reference_omega(level), lat, float(kappa), half, profile=profile)
                       for level in levels)
            table.append((float(kappa), half, leak))
    best = min(table, key=lambda row: (row[2], abs(row[0]), row[1]))
    return best[0], best[1], best[2], table


def _reference_omega(level):
    from .geometry import FrequencyInterval
    return FrequencyInterval(level, 2 * 2 ** level)
