"""Packet coefficients, the model operator, the bilinear form and exact oracles.

Everything is evaluated on the frequency side: a tile packet is the mother
packet of its omega times a phase, so the coefficients of all tiles sharing
an omega come from a single matrix product against the support bins.
"""

from dataclasses import dataclass

import numpy as np

from . import wavepackets as wp
from .errors import AccuracyError
from .grid import GridFunction, fft_centered, ifft_centered

# relative size below which xi + eta u0 counts as zero (grid bins on the singular line)
ZERO_SLOPE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """Coefficients indexed by global lattice tile index."""

    indices: np.ndarray
    values: np.ndarray
    source: str = "F"

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    def lookup(self, index):
        pos = np.searchsorted(self.indices, index)
        return self.values[pos]

    def as_dict(self, lattice):
        return {lattice.tile(i): complex(v) for i, v in zip(self.indices, self.values)}


def _groups(lat, indices):
    """Yield (omega, positions into indices, TileArray) for each omega present."""
    indices = np.asarray(indices, dtype=np.int64)
    table = lat.table(indices)
    key = table.level * (1 << 20) + table.k
    order = np.argsort(key, kind="stable")
    bounds = np.flatnonzero(np.diff(key[order])) + 1
    from .geometry import FrequencyInterval
    for chunk in np.split(order, bounds):
        if chunk.size == 0:
            continue
        first = chunk[0]
        omega = FrequencyInterval(int(table.level[first]), int(table.k[first]))
        yield omega, chunk, table.take(chunk)


def _sorted(indices):
    indices = np.unique(np.asarray(indices, dtype=np.int64))
    return indices


def coefficients(f, lat, indices, source="F"):
    """<f, phi_s> for every tile index, via one transform of f."""
    indices = _sorted(indices)
    fhat = fft_centered(np.asarray(f.samples), lat.spec)
    out = np.zeros(indices.size, dtype=complex)
    for omega, pos, tiles in _groups(lat, indices):
        sup = wp.packet_support(omega, lat)
        weights = fhat[sup.rows, sup.cols] * sup.amplitude
        out[pos] = np.conj(wp.tile_phases(sup, tiles.cx, tiles.cy)) @ weights
    return CoefficientTable(indices, out, source)


def _column_transform(mask, spec):
    """h * sum over x2 of mask * e^{-2 pi i k2 x2 / L}; rows centred in k2, columns x1."""
    return np.fft.fftshift(np.fft.fft(np.asarray(mask, dtype=float), axis=0), axes=0) * spec.spacing


def curved_coefficients(e_mask, v, lat, indices, kappa=wp.KERNEL_SCALE, method="spectral", tolerance=1e-6):
    """<1_E, h_s> for every tile index, with h_s the curved packet of the field v.

    method "quadrature" builds the kernel convolution by the truncated
    trapezoid sum and raises AccuracyError when its tail exceeds tolerance.
    """
    if method not in ("spectral", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    indices = _sorted(indices)
    spec = lat.spec
    ecol = _column_transform(e_mask, spec)
    x1 = np.arange(spec.n) * spec.spacing
    out = np.zeros(indices.size, dtype=complex)
    for omega, pos, tiles in _groups(lat, indices):
        sup = wp.packet_support(omega, lat)
        length = lat.width * 2 ** omega.level
        if method == "spectral":
            mult = wp.curved_column_multiplier(sup, v.u, length, kappa)
        else:
            tail = wp.kernel_tail_fraction(8.0 * length, length, kappa)
            if tail > tolerance:
                raise AccuracyError("curved packet quadrature truncation", tail, tolerance)
            mult, _ = wp.trapezoid_column_multiplier(sup, v.u, length, spec.spacing, kappa)
        live = np.flatnonzero(np.any(mult != 0, axis=0))
        if live.size == 0:
            continue
        modul = np.exp(-2j * np.pi * x1[:, None] * sup.xi[None, live])
        vk = np.sum(mult[:, live] * modul * ecol[sup.rows[live], :].T, axis=0)
        phases = wp.tile_phases(sup, tiles.cx, tiles.cy)[:, live]
        out[pos] = np.conj(phases) @ (sup.amplitude[live] * vk) * (spec.spacing / spec.side_length)
    return CoefficientTable(indices, out, "E")


def model_apply(f, lat, indices, v, kappa=wp.KERNEL_SCALE):
    """sum_s <f, phi_s> h_s on the grid."""
    spec = lat.spec
    total = np.zeros((spec.n, spec.n), dtype=complex)
    indices = _sorted(indices)
    if indices.size == 0:
        return GridFunction(spec, total)
    coeffs = coefficients(f, lat, indices)
    for omega, pos, tiles in _groups(lat, indices):
        sup = wp.packet_support(omega, lat)
        spectrum = sup.amplitude * (coeffs.values[pos] @ wp.tile_phases(sup, tiles.cx, tiles.cy))
        mult = wp.curved_column_multiplier(sup, v.u, lat.width * 2 ** omega.level, kappa)
        total += wp._column_synthesis(sup, spectrum, mult, spec)
    return GridFunction(spec, total)


def flat_model_apply(f, lat, indices, kappa=wp.KERNEL_SCALE):
    """sum_s <f, phi_s> alpha_s assembled as one spectrum (horizontal-field oracle)."""
    spec = lat.spec
    spectrum = np.zeros((spec.n, spec.n), dtype=complex)
    indices = _sorted(indices)
    if indices.size:
        coeffs = coefficients(f, lat, indices)
        for omega, pos, tiles in _groups(lat, indices):
            sup = wp.packet_support(omega, lat)
            piece = wp.kernel_piece(lat.width * 2 ** omega.level, kappa)(sup.xi)
            np.add.at(spectrum, (sup.rows, sup.cols),
                      piece * sup.amplitude * (coeffs.values[pos] @ wp.tile_phases(sup, tiles.cx, tiles.cy)))
    return GridFunction(spec, ifft_centered(spectrum, spec))


def bilinear_terms(e_mask, f_mask, v, lat, indices):
    """Per-tile products |<1_F, phi_s>| |<1_E, h_s>|, in sorted index order."""
    a = coefficients(GridFunction(lat.spec, np.asarray(f_mask, dtype=float)), lat, indices)
    b = curved_coefficients(e_mask, v, lat, indices)
    return a.indices, np.abs(a.values) * np.abs(b.values)


def bilinear_form(E, F, lat, indices, v):
    _, terms = bilinear_terms(E.mask, F.mask, v, lat, indices)
    return float(np.sum(np.sort(terms)))


def periodization_check(f, omega, lat):
    """Max deviation between f * m_omega and the averaged tile projections.

    Left side: multiplier m_omega / Z_omega.  Right side: literal average over
    the grid points p of one period cell of the centre lattice of
    sum_s <f, phi_s(. + p)> phi_s(x + p).
    """
    spec = lat.spec
    length = lat.width * 2 ** omega.level
    closure = omega.center * lat.side_length / lat.width
    if length > lat.side_length / 2 or abs(closure - round(closure)) > 1e-9:
        raise ValueError("tile centres of this omega do not form a lattice on the torus")
    sup = wp.packet_support(omega, lat)
    fhat = fft_centered(np.asarray(f.samples, dtype=complex), spec)
    left = np.zeros_like(fhat)
    left[sup.rows, sup.cols] = fhat[sup.rows, sup.cols] * sup.amplitude ** 2 * (
        spec.n ** 2 * spec.spacing ** 2 / (lat.width * length))

    nx, ny = int(round(lat.side_length / length)), lat.cells_y
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cx = (ii.ravel() + 0.5) * length
    cy = (jj.ravel() + 0.5) * lat.width + omega.center * cx
    h = spec.spacing
    steps1 = int(round(length / h))
    steps2 = lat.width_points
    acc = np.zeros(sup.rows.size, dtype=complex)
    weights = fhat[sup.rows, sup.cols] * sup.amplitude
    for a in range(steps1):
        for b in range(steps2):
            phases = wp.tile_phases(sup, cx - a * h, cy - b * h)
            coeff = np.conj(phases) @ weights
            acc += coeff @ phases
    right = np.zeros_like(fhat)
    right[sup.rows, sup.cols] = sup.amplitude * acc / (steps1 * steps2)
    diff = ifft_centered(left, spec) - ifft_centered(right, spec)
    return float(np.max(np.abs(diff)))


def constant_field_oracle(f, u0, lat):
    """H_v Pi_tau f for the constant field (1, u0): multiplier -i pi sign(xi + eta u0)."""
    if abs(u0) > 1:
        raise ValueError("|u0| must be at most 1")
    spec = lat.spec
    xi, eta = spec.frequencies()
    fhat = fft_centered(np.asarray(f.samples, dtype=complex), spec) * wp.band_mask(lat)
    zeta = xi + eta * u0
    sign = np.where(np.abs(zeta) <= ZERO_SLOPE_TOL * (np.abs(xi) + np.abs(eta)), 0.0, np.sign(zeta))
    out = -1j * np.pi * sign * fhat
    return GridFunction(spec, ifft_centered(out, spec))


def averaged_model_reconstruction(f, u0, lat, kappa=wp.KERNEL_SCALE, points_per_period=32):
    """(Pi_tau f, R f) where R sums kernel pieces against slope-averaged tile multipliers.

    For every kernel scale kappa/(w 2^l') the tile level is l' clipped to the
    lattice range; the slope average over t in [-1, 1] of sum_omega m_{omega,t}
    is taken by the midpoint rule and divided by the plateau constant.  Bins
    on the line xi + eta u0 = 0 get half the finest-level average, matching the
    principal value sign(0) = 0 of the oracle.  For a
    constant field, H_v Pi_tau = c_id Pi_tau + c_model R with c_id = -i pi and
    c_model = 2 i pi sign(-kappa).
    """
    spec = lat.spec
    xi, eta = spec.frequencies()
    band = wp.band_mask(lat)
    fhat = fft_centered(np.asarray(f.samples, dtype=complex), spec) * band
    rows, cols = np.nonzero(band)
    zeta = xi[rows, cols] + eta[rows, cols] * u0
    slope = -xi[rows, cols] / eta[rows, cols]
    base = kappa / lat.width
    ratio = zeta / base
    # frequencies on the line xi + eta u0 = 0 take the midpoint of the jump
    on_line = np.abs(zeta) <= ZERO_SLOPE_TOL * (np.abs(xi[rows, cols]) + np.abs(eta[rows, cols]))
    active = (ratio > 0) & ~on_line
    result = np.zeros(rows.size)
    plateau = wp.plateau_const()
    averages = {}

    def slope_average(level):
        if level not in averages:
            m = points_per_period * 2 * 2 ** level
            t = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
            avg = np.zeros(rows.size)
            for tj in t:
                avg += wp.beta_level_fast(slope + tj, level)
            averages[level] = avg / m / plateau
        return averages[level]

    if np.any(on_line):
        result[on_line] = 0.5 * slope_average(lat.l_max)[on_line]
    if np.any(active):
        logs = np.log2(ratio[active])
        lo = int(np.floor(-logs.max())) - 2
        hi = int(np.ceil(-logs.min())) + 2
        for level_scale in range(lo, hi + 1):
            level = min(max(level_scale, 0), lat.l_max)
            slope_average(level)
            s = base * 2.0 ** -level_scale
            pieces = np.zeros(rows.size)
            for index in range(wp.KERNEL_PIECES):
                pieces += wp.kernel_family_piece(zeta, s, index)
            result += pieces * averages[level]
    model = np.zeros_like(fhat)
    model[rows, cols] = result * fhat[rows, cols]
    return (GridFunction(spec, ifft_centered(fhat, spec)), GridFunction(spec, ifft_centered(model, spec)))


def fit_reconstruction(pairs, oracles):
    """Least-squares complex scalars (c_id, c_model) across all inputs.

    pairs: list of (Pi f, R f) GridFunctions; oracles: matching oracle outputs.
    Returns (c_id, c_model, relative L2 errors per input).
    """
    a = np.stack([np.concatenate([p.samples.ravel() for p, _ in pairs]),
                  np.concatenate([r.samples.ravel() for _, r in pairs])], axis=1)
    b = np.concatenate([o.samples.ravel() for o in oracles])
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    errors = []
    for (p, r), o in zip(pairs, oracles):
        approx = coef[0] * p.samples + coef[1] * r.samples
        errors.append(float(np.linalg.norm(approx - o.samples) / np.linalg.norm(o.samples)))
    return complex(coef[0]), complex(coef[1]), errors
