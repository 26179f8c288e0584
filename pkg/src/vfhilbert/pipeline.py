"""Run configuration and the per-instance pipeline shared by the CLI and the tests.

A run is: generate (field, E, F) from a seed, compute coefficients and
density statistics on the decomposed tiles, build the forest, organize every
stratum, then run all measurements.  `run_instance` returns everything; the
CLI only decides what to write.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import decompose as dc
from . import modelop as mo
from . import verify as vf
from .errors import ConfigError
from .geometry import FrequencyInterval, Lattice
from .grid import GridFunction, GridSpec
from .instances import make_instance
from .wavepackets import packet_support

DEFAULT_P_LIST = (1.25, 1.5, 2.0, 3.0)


@dataclass
class RunConfig:
    n: int = 128
    side_length: float = 1.0
    width: float = 1.0 / 16
    l_max: int = 4
    C: float = 10.0
    p_chi: int = 8
    eps: float = 0.25
    N: int = 8
    p_list: tuple = DEFAULT_P_LIST
    k_max: int = 3
    sigma_min: float = 2.0 ** -20
    packet_method: str = "spectral"
    quadrature_tol: float = 1e-6
    caps: object = "caps.json"          # shipped file name, a path, an inline dict, or None
    field_cfg: dict = field(default_factory=lambda: {"kind": "random_walk"})
    e_cfg: dict = field(default_factory=lambda: {"kind": "blobs"})
    f_cfg: dict = field(default_factory=lambda: {"kind": "blobs"})
    seeds: tuple = (0,)
    out: str = "runs"
    name: str = "run"

    def lattice(self):
        return Lattice(GridSpec(self.n, self.side_length), self.width, self.l_max, self.C)

    def instance_cfg(self):
        return {"field": self.field_cfg, "E": self.e_cfg, "F": self.f_cfg}

    def to_dict(self):
        return {
            "name": self.name,
            "grid": {"n": self.n, "L": self.side_length},
            "band": {"w": self.width, "l_max": self.l_max},
            "constants": {"C": self.C, "p_chi": self.p_chi, "eps": self.eps, "N": self.N,
                          "p_list": list(self.p_list), "k_max": self.k_max, "sigma_min": self.sigma_min,
                          "packet_method": self.packet_method, "quadrature_tol": self.quadrature_tol,
                          "caps": self.caps},
            "field": self.field_cfg, "E": self.e_cfg, "F": self.f_cfg,
            "sweep": {"seeds": list(self.seeds)},
            "out": self.out,
        }


def _number(section, key, value, kind=float, lo=None, hi=None, lo_open=False):
    name = f"{section}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, "must be a number")
    if kind is int and value != int(value):
        raise ConfigError(name, "must be an integer")
    value = kind(value)
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(name, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and value > hi:
        raise ConfigError(name, f"must be <= {hi}")
    return value


def _section(raw, key):
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(key, "must be an object")
    return value


def parse_config(raw):
    """Validate a config mapping into a RunConfig; every failure names its field."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    cfg = RunConfig()
    grid = _section(raw, "grid")
    band = _section(raw, "band")
    const = _section(raw, "constants")
    sweep = _section(raw, "sweep")
    cfg.n = _number("grid", "n", grid.get("n", cfg.n), int, 32, 1024)
    if cfg.n & (cfg.n - 1):
        raise ConfigError("grid.n", "must be a power of two")
    cfg.side_length = _number("grid", "L", grid.get("L", cfg.side_length), float, 0, lo_open=True)
    cfg.width = _number("band", "w", band.get("w", cfg.width), float, 0, lo_open=True)
    cfg.l_max = _number("band", "l_max", band.get("l_max", cfg.l_max), int, 1, 16)
    cfg.C = _number("constants", "C", const.get("C", cfg.C), float, 1)
    cfg.p_chi = _number("constants", "p_chi", const.get("p_chi", cfg.p_chi), int, 4, 64)
    if cfg.p_chi % 2:
        raise ConfigError("constants.p_chi", "must be even")
    cfg.eps = _number("constants", "eps", const.get("eps", cfg.eps), float, 0, 1, lo_open=True)
    cfg.N = _number("constants", "N", const.get("N", cfg.N), int, 1, 64)
    cfg.k_max = _number("constants", "k_max", const.get("k_max", cfg.k_max), int, 1, 16)
    cfg.sigma_min = _number("constants", "sigma_min", const.get("sigma_min", cfg.sigma_min), float, 0, 1,
                            lo_open=True)
    cfg.packet_method = const.get("packet_method", cfg.packet_method)
    if cfg.packet_method not in ("spectral", "quadrature"):
        raise ConfigError("constants.packet_method", "must be 'spectral' or 'quadrature'")
    cfg.quadrature_tol = _number("constants", "quadrature_tol", const.get("quadrature_tol", cfg.quadrature_tol),
                                 float, 0, 1, lo_open=True)
    p_list = const.get("p_list", list(cfg.p_list))
    if not isinstance(p_list, list) or not p_list:
        raise ConfigError("constants.p_list", "must be a non-empty list")
    cfg.p_list = tuple(_number("constants", "p_list", p, float, 1, lo_open=True) for p in p_list)
    caps = const.get("caps", cfg.caps)
    if caps is not None and not isinstance(caps, (str, dict)):
        raise ConfigError("constants.caps", "must be a file name, an object or null")
    cfg.caps = caps
    for key, attr in (("field", "field_cfg"), ("E", "e_cfg"), ("F", "f_cfg")):
        if key in raw:
            setattr(cfg, attr, dict(_section(raw, key)))
    seeds = sweep.get("seeds")
    if seeds is None:
        start = _number("sweep", "start", sweep.get("start", 0), int, 0)
        count = _number("sweep", "count", sweep.get("count", 1), int, 1, 100000)
        seeds = list(range(start, start + count))
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("sweep.seeds", "must be a non-empty list of integers")
    cfg.seeds = tuple(_number("sweep", "seeds", s, int, 0) for s in seeds)
    out = raw.get("out", cfg.out)
    if not isinstance(out, str) or not out:
        raise ConfigError("out", "must be a non-empty string")
    cfg.out = out
    name = raw.get("name", cfg.name)
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "must be a non-empty string")
    cfg.name = name
    # lattice constraints and instance parameters are checked before any real work
    lat = cfg.lattice()
    tiles, _ = dc.default_index_sets(lat)
    if tiles.size == 0:
        raise ConfigError("band.w", "no tiles with slopes in [-1, 1]")
    table = lat.table(tiles)
    for level in np.unique(table.level):
        ks = table.k[table.level == level]
        for k in (ks.min(), ks.max()):
            packet_support(FrequencyInterval(int(level), int(k)), lat)
    make_instance(lat.spec, cfg.instance_cfg(), cfg.seeds[0])
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
    return parse_config(raw)


def golden_config_path(name):
    """Path of a shipped config ('desk', 'n64', 'n128', 'n256') or of caps.json."""
    filename = name if name.endswith(".json") else f"{name}.json"
    return resources.files("vfhilbert").joinpath("data", filename)


def golden_config(name):
    return parse_config(json.loads(golden_config_path(name).read_text()))


def load_caps(entry, base_dir=None):
    """Resolve a caps entry into a dict ({} when caps are disabled)."""
    if entry is None:
        return {}
    if isinstance(entry, dict):
        return entry
    candidates = []
    if base_dir is not None:
        candidates.append(Path(base_dir) / entry)
    candidates.append(Path(entry))
    for path in candidates:
        if path.is_file():
            return json.loads(path.read_text())
    shipped = golden_config_path(entry)
    if shipped.is_file():
        return json.loads(shipped.read_text())
    raise ConfigError("constants.caps", f"cap file {entry!r} not found")


# the pipeline ---------------------------------------------------------------------

@dataclass
class InstanceResult:
    instance_id: str
    seed: int
    field: object
    E: object
    F: object
    forest: object
    stats: object
    weights: np.ndarray
    coeff_F: np.ndarray
    coeff_E: np.ndarray
    organizations: list
    covers: dict
    reports: list
    structural: dict


def instance_id_of(cfg, seed):
    return f"{cfg.name}-n{cfg.n}-s{seed}"


def decompose_instance(cfg, field_, e_set, f_set):
    """Coefficients, density statistics and the forest for one instance."""
    lat = cfg.lattice()
    tiles, universe = dc.default_index_sets(lat)
    ctx = dc.relation_context(lat, tiles, universe)
    coeff_F = mo.coefficients(GridFunction(lat.spec, f_set.mask.astype(float)), lat, tiles).values
    coeff_E = mo.curved_coefficients(e_set.mask, field_, lat, tiles, method=cfg.packet_method,
                                     tolerance=cfg.quadrature_tol).values
    stats = dc.density_stats(lat, e_set.mask, field_, ctx, coeff_F, cfg.p_chi)
    weights = np.abs(coeff_F) ** 2
    forest = dc.build_forest(ctx, stats, weights, cfg.C, cfg.sigma_min)
    return forest, stats, weights, coeff_F, coeff_E


def organize_forest(forest, stats, e_set, field_):
    orgs = []
    for (delta, sigma), records in sorted(forest.strata.items(), key=lambda kv: (-kv[0][0], -kv[0][1])):
        orgs.append(dc.maximal_organize(forest.context, stats, records, delta, sigma, e_set.mask, field_))
    return orgs


def cover_strata(forest, e_set, field_):
    """Density-lemma cover of the tree tops of each density stratum."""
    ctx = forest.context
    lat = forest.lat
    e_measure = e_set.measure()
    by_delta = {}
    for (delta, _), rec in forest.trees():
        by_delta.setdefault(delta, []).append(int(ctx.tile_in_universe[rec.top]))
    return {delta: dc.density_cover(lat, ctx.universe_table, np.array(sorted(set(tops)), dtype=np.int64),
                                    e_set.mask, field_, delta, e_measure)
            for delta, tops in sorted(by_delta.items(), reverse=True)}


def measure_instance(cfg, iid, field_, e_set, f_set, forest, stats, weights, coeff_F, coeff_E, orgs, covers):
    lat = forest.lat
    e_measure, f_measure = e_set.measure(), f_set.measure()
    f_samples = f_set.mask.astype(float)
    reports = []
    reports += vf.check_estimates(forest, e_measure, f_measure, cfg.eps, iid)
    reports += vf.check_tree_lemma(forest, stats, weights, coeff_F, coeff_E, iid)
    reports += vf.check_bessel_shells(forest, f_samples, iid, cfg.k_max)
    square_reports, square_struct = vf.check_square_function(forest, f_samples, weights, cfg.p_list, cfg.N,
                                                             cfg.eps, iid, cfg.k_max)
    reports += square_reports
    reports += vf.check_intersection_lemma(forest, f_set.mask, cfg.eps, iid)
    pantry_reports, pantry_struct = vf.check_pantry(forest, iid)
    reports += pantry_reports
    for p in cfg.p_list:
        reports.append(vf.balance_aggregate(forest, e_measure, f_measure, p, iid))
        bilinear = float(np.sum(np.sort(np.abs(coeff_F) * np.abs(coeff_E))))
        reports.append(vf.weak_type_model(bilinear, e_measure, f_measure, p, iid))
    reports += vf.check_claim_basic(forest, e_measure, f_measure, iid, cfg.sigma_min)
    reports += vf.check_size_claim(forest, iid)
    reports += vf.check_claim_rjk(forest, orgs, f_set.mask, cfg.eps, iid)
    for org in orgs:
        reports.append(vf.ConstantReport("disjoint_tops_retention", iid, org.retention, 1.0,
                                         delta=org.delta, sigma=org.sigma))
    tiles = forest.context.tiles
    reports.append(vf.check_coefficient_bessel(lat, GridFunction(lat.spec, f_samples), tiles, iid))

    structural = dc.check_forest(forest, stats, weights)
    structural["tops_disjoint"] = all(org.tops_disjoint for org in orgs)
    structural["organization_chains"] = all(org.chains_ok and org.incomparable for org in orgs)
    structural["cover_disjoint"] = all(c.disjoint for c in covers.values())
    structural.update(square_struct)
    structural.update(pantry_struct)
    return reports, structural


def run_instance(cfg, seed):
    lat = cfg.lattice()
    iid = instance_id_of(cfg, seed)
    field_, e_set, f_set = make_instance(lat.spec, cfg.instance_cfg(), seed)
    forest, stats, weights, coeff_F, coeff_E = decompose_instance(cfg, field_, e_set, f_set)
    orgs = organize_forest(forest, stats, e_set, field_)
    covers = cover_strata(forest, e_set, field_)
    reports, structural = measure_instance(cfg, iid, field_, e_set, f_set, forest, stats, weights,
                                           coeff_F, coeff_E, orgs, covers)
    return InstanceResult(iid, seed, field_, e_set, f_set, forest, stats, weights, coeff_F, coeff_E,
                          orgs, covers, reports, structural)


def _sweep_worker(args):
    cfg, seed = args
    res = run_instance(cfg, seed)
    return res.instance_id, res.reports, res.structural


def sweep(cfg, seeds=None, jobs=1):
    """[(instance id, reports, structural)] in seed order; jobs > 1 uses worker processes."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    tasks = [(cfg, s) for s in seeds]
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_worker(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_worker, tasks))
