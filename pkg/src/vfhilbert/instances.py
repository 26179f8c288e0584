"""Seeded generation of vector fields and sets in physical coordinates.

Everything is defined on the continuum torus first and then sampled, so
the same seed gives the same geometric instance at every grid resolution.
"""

import numpy as np

from .errors import ConfigError
from .geometry import VectorField
from .grid import IndicatorSet

FIELD_STREAM, E_STREAM, F_STREAM = 1, 2, 3


def _rng(seed, stream):
    return np.random.default_rng([int(seed), stream])


def make_field(spec, cfg, seed):
    kind = cfg.get("kind", "random_walk")
    L = spec.side_length
    x1 = np.arange(spec.n) * spec.spacing
    if kind == "constant":
        value = float(cfg.get("value", 0.0))
        if abs(value) > 1:
            raise ConfigError("field.value", "slope must lie in [-1, 1]")
        return VectorField.constant(spec, value)
    if kind == "piecewise":
        segments = cfg.get("segments")
        if not segments:
            raise ConfigError("field.segments", "need at least one [start, value] pair")
        starts = np.array([s[0] for s in segments], dtype=float)
        values = np.array([s[1] for s in segments], dtype=float)
        if np.any(np.abs(values) > 1):
            raise ConfigError("field.segments", "slopes must lie in [-1, 1]")
        if np.any(np.diff(starts) <= 0) or starts[0] != 0:
            raise ConfigError("field.segments", "starts must increase from 0")
        return VectorField(spec, values[np.searchsorted(starts, x1 / L, side="right") - 1])
    if kind == "random_walk":
        knots = int(cfg.get("knots", 32))
        step = float(cfg.get("step", 0.2))
        if knots < 1 or spec.n % knots:
            raise ConfigError("field.knots", "must divide the grid size")
        rng = _rng(seed, FIELD_STREAM)
        values = np.clip(rng.uniform(-1, 1) + np.cumsum(rng.normal(0.0, step, knots)), -1.0, 1.0)
        return VectorField(spec, values[(x1 / L * knots).astype(int) % knots])
    raise ConfigError("field.kind", f"unknown field kind {kind!r}")


def _torus_distance(a, b, L):
    d = np.abs(a - b) % L
    return np.minimum(d, L - d)


def make_set(spec, cfg, seed, stream, name):
    kind = cfg.get("kind", "blobs")
    L = spec.side_length
    x1, x2 = spec.coordinates()
    # sample at cell centres so the set is the same physical region at any n
    x1 = x1 + spec.spacing / 2
    x2 = x2 + spec.spacing / 2
    if kind == "rectangles":
        mask = np.zeros((spec.n, spec.n), dtype=bool)
        for box in cfg.get("boxes", []):
            if len(box) != 4:
                raise ConfigError(f"{name}.boxes", "each box is [x0, y0, x1, y1]")
            a0, b0, a1, b1 = (float(v) * L for v in box)
            mask |= (x1 >= a0) & (x1 < a1) & (x2 >= b0) & (x2 < b1)
        return IndicatorSet(spec, mask)
    rng = _rng(seed, stream)
    if kind == "random":
        blocks = int(cfg.get("blocks", 16))
        density = float(cfg.get("density", 0.3))
        if not 0 <= density <= 1:
            raise ConfigError(f"{name}.density", "must lie in [0, 1]")
        if blocks < 1 or spec.n % blocks:
            raise ConfigError(f"{name}.blocks", "must divide the grid size")
        cells = rng.random((blocks, blocks)) < density
        rows = (x2 / L * blocks).astype(int) % blocks
        cols = (x1 / L * blocks).astype(int) % blocks
        return IndicatorSet(spec, cells[rows, cols])
    if kind == "blobs":
        count = int(cfg.get("count", 5))
        lo, hi = cfg.get("radius", [0.05, 0.2])
        if count < 0 or not 0 < lo <= hi:
            raise ConfigError(f"{name}.radius", "need 0 < min <= max")
        centres = rng.random((count, 2)) * L
        radii = rng.uniform(lo, hi, count) * L
        mask = np.zeros((spec.n, spec.n), dtype=bool)
        for (c1, c2), r in zip(centres, radii):
            mask |= _torus_distance(x1, c1, L) ** 2 + _torus_distance(x2, c2, L) ** 2 < r * r
        return IndicatorSet(spec, mask)
    raise ConfigError(f"{name}.kind", f"unknown set kind {kind!r}")


def make_instance(spec, cfg, seed):
    """(field, E, F) for one seed from the 'field', 'E' and 'F' config sections."""
    field = make_field(spec, cfg.get("field", {}), seed)
    e_set = make_set(spec, cfg.get("E", {}), seed, E_STREAM, "E")
    f_set = make_set(spec, cfg.get("F", {}), seed, F_STREAM, "F")
    return field, e_set, f_set
