"""Command line interface: gen, decompose, verify, sweep and report.

Output directory layout (all files are rewritten byte-identically on rerun):

    config.json                     resolved configuration
    instances/<id>/field.npy        slope samples u(x1)
    instances/<id>/E.npy, F.npy     boolean set masks
    instances/<id>/instance.json    seed, grid and measures
    forests/<id>.txt                forest text format
    organizations/<id>.txt          maximal organization per stratum
    reports/<id>.csv                one row per measured inequality
    reports.csv                     all instances, in seed order
    summary.csv                     count, min and max ratio per inequality id
    plots/ratio_vs_<axis>.svg       ratio against delta, sigma, k and j

Exit status: 0 success, 1 cap violation, 2 configuration error,
3 accuracy error.  Failures also print one JSON line on stderr.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import decompose as dc
from . import pipeline as pl
from . import verify as vf
from .errors import AccuracyError, ConfigError
from .geometry import VectorField
from .grid import IndicatorSet
from .instances import make_instance

EXIT_OK, EXIT_CAPS, EXIT_CONFIG, EXIT_ACCURACY = 0, 1, 2, 3


def _error_line(kind, **fields):
    print(json.dumps({"error": kind, **fields}, sort_keys=True), file=sys.stderr)


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_json(path, data):
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# instances ----------------------------------------------------------------------

def instance_dir(out, cfg, seed):
    return out / "instances" / pl.instance_id_of(cfg, seed)


def save_instance(out, cfg, seed, field_, e_set, f_set):
    folder = instance_dir(out, cfg, seed)
    folder.mkdir(parents=True, exist_ok=True)
    np.save(folder / "field.npy", np.asarray(field_.u, dtype=float))
    np.save(folder / "E.npy", np.asarray(e_set.mask, dtype=bool))
    np.save(folder / "F.npy", np.asarray(f_set.mask, dtype=bool))
    _write_json(folder / "instance.json", {
        "instance_id": pl.instance_id_of(cfg, seed), "seed": seed, "n": cfg.n, "L": cfg.side_length,
        "E_measure": e_set.measure(), "F_measure": f_set.measure(),
    })


def load_or_make_instance(out, cfg, seed):
    folder = instance_dir(out, cfg, seed)
    spec = cfg.lattice().spec
    files = [folder / name for name in ("field.npy", "E.npy", "F.npy")]
    if all(f.is_file() for f in files):
        u = np.load(files[0])
        e_mask = np.load(files[1])
        f_mask = np.load(files[2])
        if u.shape != (cfg.n,) or e_mask.shape != (cfg.n, cfg.n) or f_mask.shape != (cfg.n, cfg.n):
            raise ConfigError("grid.n", f"stored instance in {folder} does not match the grid")
        return VectorField(spec, u), IndicatorSet(spec, e_mask), IndicatorSet(spec, f_mask)
    field_, e_set, f_set = make_instance(spec, cfg.instance_cfg(), seed)
    save_instance(out, cfg, seed, field_, e_set, f_set)
    return field_, e_set, f_set


# stages -------------------------------------------------------------------------

def _decompose_stage(out, cfg, seed):
    field_, e_set, f_set = load_or_make_instance(out, cfg, seed)
    forest, stats, weights, coeff_F, coeff_E = pl.decompose_instance(cfg, field_, e_set, f_set)
    orgs = pl.organize_forest(forest, stats, e_set, field_)
    iid = pl.instance_id_of(cfg, seed)
    _write_text(out / "forests" / f"{iid}.txt", forest.to_text())
    _write_text(out / "organizations" / f"{iid}.txt", dc.organization_text(forest.lat, forest.context, orgs))
    return field_, e_set, f_set, forest, stats, weights, coeff_F, coeff_E, orgs


def _verify_stage(args):
    out, cfg, seed = args
    field_, e_set, f_set, forest, stats, weights, coeff_F, coeff_E, orgs = _decompose_stage(out, cfg, seed)
    covers = pl.cover_strata(forest, e_set, field_)
    iid = pl.instance_id_of(cfg, seed)
    reports, structural = pl.measure_instance(cfg, iid, field_, e_set, f_set, forest, stats, weights,
                                              coeff_F, coeff_E, orgs, covers)
    _write_text(out / "reports" / f"{iid}.csv", vf.reports_to_csv(reports))
    return iid, reports, structural


def _sweep_stage(args):
    cfg, seed = args
    res = pl.run_instance(cfg, seed)
    return res.instance_id, res.reports, res.structural


def _map(func, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


# summaries -----------------------------------------------------------------------

def read_report_rows(paths):
    rows = []
    for path in paths:
        with open(path, newline="") as handle:
            rows.extend(csv.DictReader(handle))
    return rows


def summarize_rows(rows):
    """{id: [count, min ratio, max ratio]} over rows with a finite ratio."""
    table = {}
    for row in rows:
        ratio = float(row["ratio"])
        if not np.isfinite(ratio):
            continue
        entry = table.setdefault(row["inequality_id"], [0, np.inf, -np.inf])
        entry[0] += 1
        entry[1] = min(entry[1], ratio)
        entry[2] = max(entry[2], ratio)
    return table


def caps_from_rows(rows, slack=1.5):
    return vf.caps_from_summary({k: tuple(v) for k, v in summarize_rows(rows).items()}, slack)


def write_summary(out, rows):
    from .plots import write_plots
    lines = ["inequality_id,count,min_ratio,max_ratio"]
    for key, (count, lo, hi) in sorted(summarize_rows(rows).items()):
        lines.append(f"{key},{count},{lo!r},{hi!r}")
    _write_text(out / "summary.csv", "\n".join(lines) + "\n")
    (out / "plots").mkdir(parents=True, exist_ok=True)
    write_plots(rows, out / "plots")


def _finish(out, results, caps, structural_required=True):
    reports = [r for _, rs, _ in results for r in rs]
    _write_text(out / "reports.csv", vf.reports_to_csv(reports))
    rows = read_report_rows([out / "reports.csv"])
    write_summary(out, rows)
    broken = sorted({(iid, key) for iid, _, st in results for key, ok in st.items() if not ok})
    violations = vf.evaluate_caps(reports, caps)
    status = EXIT_OK
    if structural_required and broken:
        _error_line("structural", failures=[f"{i}:{k}" for i, k in broken[:20]], count=len(broken))
        status = EXIT_CAPS
    if violations:
        first, bound = violations[0]
        _error_line("cap_violation", count=len(violations), inequality_id=first.inequality_id,
                    instance_id=first.instance_id, ratio=first.ratio, bound=bound)
        status = EXIT_CAPS
    ids = len({r.inequality_id for r in reports})
    print(f"{len(results)} instances, {len(reports)} records, {ids} inequality ids, "
          f"{len(violations)} cap violations -> {out}")
    return status


# command handlers ----------------------------------------------------------------

def _resolve(args):
    if args.config is None:
        cfg = pl.golden_config("desk")
        base = None
    else:
        cfg = pl.load_config(args.config)
        base = Path(args.config).resolve().parent
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        cfg.seeds = (args.seed,)
    out = Path(args.out if args.out is not None else cfg.out)
    caps_entry = args.cap_file if getattr(args, "cap_file", None) is not None else cfg.caps
    if getattr(args, "cap_file", None) is not None:
        base = None
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        raise ConfigError("jobs", "must be at least 1")
    return cfg, out, caps_entry, base


def cmd_gen(args):
    cfg, out, _, _ = _resolve(args)
    _write_json(out / "config.json", cfg.to_dict())
    for seed in cfg.seeds:
        field_, e_set, f_set = make_instance(cfg.lattice().spec, cfg.instance_cfg(), seed)
        save_instance(out, cfg, seed, field_, e_set, f_set)
    print(f"{len(cfg.seeds)} instances -> {out / 'instances'}")
    return EXIT_OK


def cmd_decompose(args):
    cfg, out, _, _ = _resolve(args)
    _write_json(out / "config.json", cfg.to_dict())
    for seed in cfg.seeds:
        forest = _decompose_stage(out, cfg, seed)[3]
        print(f"{pl.instance_id_of(cfg, seed)}: {sum(1 for _ in forest.trees())} trees")
    return EXIT_OK


def cmd_verify(args):
    cfg, out, caps_entry, base = _resolve(args)
    caps = pl.load_caps(caps_entry, base)
    _write_json(out / "config.json", cfg.to_dict())
    results = _map(_verify_stage, [(out, cfg, s) for s in cfg.seeds], args.jobs)
    return _finish(out, results, caps)


def cmd_sweep(args):
    cfg, out, caps_entry, base = _resolve(args)
    if args.count is not None:
        if args.count < 1:
            raise ConfigError("count", "must be at least 1")
        start = cfg.seeds[0]
        cfg.seeds = tuple(range(start, start + args.count))
    caps = pl.load_caps(caps_entry, base)
    _write_json(out / "config.json", cfg.to_dict())
    results = _map(_sweep_stage, [(cfg, s) for s in cfg.seeds], args.jobs)
    return _finish(out, results, caps)


def cmd_report(args):
    out = Path(args.out if args.out is not None else "runs")
    if args.csv:
        paths = [Path(p) for p in args.csv]
        missing = [str(p) for p in paths if not p.is_file()]
        if missing:
            raise ConfigError("csv", f"missing report file {missing[0]}")
    else:
        paths = sorted((out / "reports").glob("*.csv")) if (out / "reports").is_dir() else []
        if not paths and (out / "reports.csv").is_file():
            paths = [out / "reports.csv"]
    rows = read_report_rows(paths)
    write_summary(out, rows)
    if args.emit_caps:
        _write_json(Path(args.emit_caps), caps_from_rows(rows))
    print(f"{len(paths)} report files, {len(rows)} records -> {out / 'summary.csv'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="vfhilbert",
                                     description="Wave-packet model of the directional Hilbert transform "
                                                 "and measured decomposition constants.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, caps=False, jobs=False):
        p.add_argument("--config", help="JSON run configuration (default: the shipped desk config)")
        p.add_argument("--out", help="output directory (default: the config's 'out')")
        if seed:
            p.add_argument("--seed", type=int, help="run this single seed instead of the config's seed list")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
        if caps:
            p.add_argument("--cap-file", help="JSON caps overriding the config's constants.caps")

    common(sub.add_parser("gen", help="write instance snapshots"))
    common(sub.add_parser("decompose", help="write forests and organizations"))
    common(sub.add_parser("verify", help="measure every inequality and check caps"), caps=True, jobs=True)
    p = sub.add_parser("sweep", help="measure over the config's seed list without snapshots")
    common(p, seed=False, caps=True, jobs=True)
    p.add_argument("--count", type=int, help="number of consecutive seeds from the first config seed")
    p = sub.add_parser("report", help="aggregate report CSVs into a summary and plots")
    p.add_argument("--out", help="directory holding reports/ (also where the summary goes)")
    p.add_argument("--emit-caps", help="write caps (max x1.5, floors /1.5) to this JSON file")
    p.add_argument("csv", nargs="*", help="report CSV files (default: <out>/reports/*.csv)")
    return parser


HANDLERS = {"gen": cmd_gen, "decompose": cmd_decompose, "verify": cmd_verify, "sweep": cmd_sweep,
            "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        _error_line("config", field=exc.field, message=exc.message)
        return EXIT_CONFIG
    except AccuracyError as exc:
        _error_line("accuracy", message=str(exc), achieved=exc.achieved, tolerance=exc.tolerance)
        return EXIT_ACCURACY


if __name__ == "__main__":
    sys.exit(main())
