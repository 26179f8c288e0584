import copy
import csv
import json
import subprocess
import sys

import pytest

from vfhilbert import pipeline as pl
from vfhilbert.cli import main
from vfhilbert.errors import ConfigError

BASE = json.loads(pl.golden_config_path("n64").read_text())


def small_config(tmp_path, seeds=(0, 1), caps=None, **constants):
    raw = copy.deepcopy(BASE)
    raw["name"] = "t"
    raw["sweep"] = {"seeds": list(seeds)}
    raw["constants"]["caps"] = {} if caps is None else caps
    raw["constants"].update(constants)
    raw["out"] = str(tmp_path / "run")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


@pytest.mark.parametrize("section,key,value,field", [
    ("grid", "n", 100, "grid.n"),
    ("grid", "n", "64", "grid.n"),
    ("band", "w", 0.1, "band.w"),
    ("band", "w", 1 / 64, "band.w"),
    ("band", "l_max", 0, "band.l_max"),
    ("constants", "C", 0.5, "constants.C"),
    ("constants", "p_chi", 7, "constants.p_chi"),
    ("constants", "eps", 0.0, "constants.eps"),
    ("constants", "sigma_min", 2.0, "constants.sigma_min"),
    ("constants", "p_list", [], "constants.p_list"),
    ("constants", "packet_method", "fast", "constants.packet_method"),
    ("sweep", "seeds", [-1], "sweep.seeds"),
])
def test_config_errors_name_the_field(section, key, value, field):
    raw = copy.deepcopy(BASE)
    raw[section][key] = value
    with pytest.raises(ConfigError) as info:
        pl.parse_config(raw)
    assert info.value.field == field


def test_shipped_configs_parse():
    for name in ("desk", "n64", "n128", "n256"):
        cfg = pl.golden_config(name)
        assert cfg.name == name
    assert pl.golden_config("desk").seeds == (0, 1, 2, 3, 4)
    caps = pl.load_caps("caps.json")
    assert caps["claim_basic"] == {"max": 1.0}


def test_missing_and_broken_config_exit_2(tmp_path, capsys):
    assert main(["verify", "--config", str(tmp_path / "nope.json")]) == 2
    assert last_error(capsys)["field"] == "config"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gen", "--config", str(bad)]) == 2
    assert last_error(capsys)["error"] == "config"


def test_bad_width_exit_2_names_field(tmp_path, capsys):
    raw = copy.deepcopy(BASE)
    raw["band"]["w"] = 1 / 64
    path = tmp_path / "w.json"
    path.write_text(json.dumps(raw))
    assert main(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = last_error(capsys)
    assert err == {"error": "config", "field": "band.w", "message": err["message"]}


def test_gen_twice_is_identical(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["gen", "--config", str(cfg), "--out", str(b)]) == 0
    assert tree_bytes(a) == tree_bytes(b)
    assert (a / "instances" / "t-n64-s1" / "E.npy").is_file()


def test_staged_run_matches_direct_verify(tmp_path):
    cfg = small_config(tmp_path)
    staged, direct = tmp_path / "staged", tmp_path / "direct"
    assert main(["gen", "--config", str(cfg), "--out", str(staged)]) == 0
    assert main(["decompose", "--config", str(cfg), "--out", str(staged)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(staged)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(direct)]) == 0
    assert tree_bytes(staged) == tree_bytes(direct)
    assert main(["verify", "--config", str(cfg), "--out", str(direct)]) == 0
    assert tree_bytes(staged) == tree_bytes(direct)
    with open(direct / "reports.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert {r["instance_id"] for r in rows} == {"t-n64-s0", "t-n64-s1"}
    for axis in ("delta", "sigma", "k", "j"):
        assert (direct / "plots" / f"ratio_vs_{axis}.svg").is_file()


def test_sweep_matches_verify_reports(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "s" / "reports.csv").read_bytes() == (tmp_path / "v" / "reports.csv").read_bytes()
    assert not (tmp_path / "s" / "instances").exists()


def test_cap_violation_exit_1(tmp_path, capsys):
    cfg = small_config(tmp_path, seeds=(3,), caps={"size_claim": {"max": 1e-12}})
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = last_error(capsys)
    assert err["error"] == "cap_violation" and err["inequality_id"] == "size_claim"


def test_quadrature_route_exit_3(tmp_path, capsys):
    cfg = small_config(tmp_path, seeds=(3,), packet_method="quadrature")
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    err = last_error(capsys)
    assert err["error"] == "accuracy" and err["achieved"] > err["tolerance"]


def test_report_on_empty_directory(tmp_path):
    out = tmp_path / "empty"
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text() == "inequality_id,count,min_ratio,max_ratio\n"


def test_report_emits_caps(tmp_path):
    cfg = small_config(tmp_path, seeds=(3,))
    run = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--out", str(run)]) == 0
    caps_path = tmp_path / "caps.json"
    assert main(["report", "--out", str(tmp_path / "r"), "--emit-caps", str(caps_path),
                 str(run / "reports.csv")]) == 0
    caps = json.loads(caps_path.read_text())
    assert caps["size_claim"]["max"] > 0
    # the emitted caps accept the run they came from
    cfg2 = small_config(tmp_path, seeds=(3,), caps=caps)
    assert main(["verify", "--config", str(cfg2), "--out", str(tmp_path / "o2")]) == 0


def test_report_missing_file_exit_2(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path), str(tmp_path / "missing.csv")]) == 2
    assert last_error(capsys)["field"] == "csv"


def test_module_entry_point(tmp_path):
    done = subprocess.run([sys.executable, "-m", "vfhilbert", "report", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert "0 report files" in done.stdout
