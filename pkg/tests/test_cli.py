import csv
import json

import pytest
import yaml

from mabarrier.cli import EXIT_CONFIG, EXIT_OK, load_config, main, parse_config

DISK = {"kind": "disk", "center": [0, 0], "radius": 1}
ONE = {"kind": "envelope", "A": 1, "alpha": 0, "beta": 3, "gamma": 0}


def write(tmp_path, name, cfg, fmt="yaml"):
    path = tmp_path / f"{name}.{fmt}"
    path.write_text(yaml.safe_dump(cfg) if fmt == "yaml" else json.dumps(cfg))
    return str(path)


def read_json(tmp_path, out, name):
    return json.loads((tmp_path / out / f"{name}.json").read_text())


def test_barrier_command(tmp_path):
    cfg = write(tmp_path, "b", {"domain": DISK, "rhs": ONE, "output": "out"})
    assert main(["barrier", cfg]) == EXIT_OK
    rep = read_json(tmp_path, "out", "barrier")
    assert rep["schema"] == 1
    c = rep["constants"]
    assert (c["lambda0"], c["N0"], c["M0"]) == (0.5, 2.0, 8.0)
    assert all(m["min_ratio"] > 1 for m in rep["members"])


def test_hilbert_barrier_from_json(tmp_path):
    cfg = write(tmp_path, "h", {"domain": DISK, "rhs": {"kind": "hilbert"}, "output": "o"}, fmt="json")
    assert main(["barrier", cfg]) == EXIT_OK
    assert (tmp_path / "o" / "barrier.json").exists()


def test_corrupted_gamma_rejected_at_load(tmp_path, capsys):
    bad = dict(ONE, gamma=2)
    cfg = write(tmp_path, "bad", {"domain": DISK, "rhs": bad})
    assert main(["barrier", cfg]) == EXIT_CONFIG
    assert "gamma" in capsys.readouterr().err
    with pytest.raises(Exception):
        load_config(cfg)


@pytest.mark.parametrize("raw", [{"rhs": ONE}, {"domain": DISK, "typo": 1},
                                 {"domain": DISK, "solver": {"h": 0.1, "speed": 2}},
                                 {"domain": {"kind": "blob"}}])
def test_invalid_configs(raw):
    with pytest.raises(Exception):
        parse_config(raw)


def test_solve_and_analyze(tmp_path):
    cfg = write(tmp_path, "s", {"domain": DISK, "rhs": ONE, "solver": {"h": 1 / 32},
                                "diagnostics": {"interior_bounds": True}, "output": "out"})
    assert main(["solve", cfg]) == EXIT_OK
    rep = read_json(tmp_path, "out", "solve")
    assert rep["u_at_nearest_center"] == pytest.approx(-0.5, abs=0.02)
    assert all(rep["report"]["flags"].values())
    rows = list(csv.DictReader((tmp_path / "out" / "solution.csv").open()))
    assert set(rows[0]) == {"x1", "x2", "value", "classification"}
    assert {r["classification"] for r in rows} == {"interior", "boundary-band"}
    assert main(["analyze", cfg]) == EXIT_OK
    assert read_json(tmp_path, "out", "analyze")["diagnostics"]["holder"]["passed"]


def test_hilbert_solve(tmp_path):
    cfg = write(tmp_path, "hs", {"domain": DISK, "rhs": {"kind": "hilbert"},
                                 "solver": {"h": 1 / 16, "tolerance": 1e-6}, "output": "out"})
    assert main(["solve", cfg]) == EXIT_OK
    rep = read_json(tmp_path, "out", "solve")
    assert len(rep["report"]["stages"]) > 1 and rep["passed"]


def test_large_dt_is_config_error(tmp_path):
    cfg = write(tmp_path, "dt", {"domain": DISK, "rhs": ONE, "solver": {"h": 0.125, "dt": 5.0}, "output": "out"})
    assert main(["solve", cfg]) == EXIT_CONFIG
    assert not (tmp_path / "out" / "solution.csv").exists()


def test_verify(tmp_path):
    cfg = write(tmp_path, "v", {"domain": DISK, "rhs": {"kind": "manufactured", "u_star": {"kind": "paraboloid", "center": [0, 0]}},
                                "output": "out"})
    assert main(["verify", cfg]) == EXIT_OK
    assert read_json(tmp_path, "out", "verify")["structure"]["envelope_gap"] is None


def test_sweep(tmp_path):
    sweep = {"alpha": [0, 1, 4], "beta": [3, 4, 5], "gamma": [0], "samples": 1000}
    cfg = write(tmp_path, "sw", {"domain": DISK, "sweep": sweep, "output": "out"})
    assert main(["sweep", cfg]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "out" / "sweep.csv").open()))
    assert len(rows) == 9 and all(float(r["min_ratio"]) > 1 for r in rows)


def test_sweep_rejects_rows_and_is_deterministic(tmp_path):
    sweep = {"alpha": [0, 0], "beta": [3], "gamma": [0, 2.5], "samples": 500}
    cfg = write(tmp_path, "sw", {"domain": DISK, "sweep": sweep, "output": "out"})
    assert main(["sweep", cfg]) != EXIT_OK
    rows = list(csv.DictReader((tmp_path / "out" / "sweep.csv").open()))
    assert [r["status"] for r in rows] == ["ok", "rejected", "ok", "rejected"]
    assert rows[0] == rows[2]


@pytest.mark.parametrize("command", ["barrier", "solve", "sweep"])
def test_outputs_are_byte_identical(tmp_path, command):
    raw = {"domain": DISK, "rhs": ONE, "solver": {"h": 0.125}, "sweep": {"samples": 200, "h": [0.25], "solve": True},
           "barrier": {"samples": 500}}
    texts = []
    for run in ("a", "b"):
        cfg = write(tmp_path, run, dict(raw, output=run))
        main([command, cfg])
        texts.append(sorted((p.name, p.read_bytes()) for p in (tmp_path / run).iterdir()))
    assert texts[0] == texts[1]
