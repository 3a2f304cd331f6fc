"""Report rendering and the command line pipeline end to end."""

import csv
import json

import numpy as np
import pytest

from mpibench.cli import main
from mpibench.container import manifest_checksum
from mpibench.report import ReportError, central_slices, parse_results, write_pgm
from mpibench.sweep import run_checkpoint_count
from mpibench.volume import Volume

PHANTOM_CFG = {
    "kind": "cuboid_union",
    "boxes": [[[-3.0, -3.0, -3.0], [6.0, 6.0, 6.0]]],
    "tracer_value": 50.0,
}

SIMULATE_CFG = {
    "grid": {"nx": 7, "ny": 7, "nz": 7, "fov": [14.0, 14.0, 14.0]},
    "phantom": PHANTOM_CFG,
    "operator": {"kind": "spectral", "decay_beta": 1.5, "n_rows": 120},
    "noise": {"snr_db": 20.0, "background_scale": 0.5},
    "seed": 3,
    "supersample": 2,
}

EVAL_CFG = {"shift_extent_mm": 0.5, "shift_step_mm": 0.5, "supersample": 1}


def _write_cfg(path, cfg):
    path.write_text(json.dumps(cfg, indent=2) + "\n")
    return str(path)


def _sweep_cfg(dataset, **overrides):
    cfg = {
        "dataset": str(dataset),
        "preprocess": [{"rank": 40}],
        "methods": [
            {"id": "KACZ-l2", "rho_indices": [5], "sweeps": 30},
            {"id": "VAR-D2-Pl2", "lambda_indices": [4], "iterations": 30},
        ],
        "seeds": [0],
        **EVAL_CFG,
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run simulate, preprocess, reconstruct, evaluate, sweep and report."""
    root = tmp_path_factory.mktemp("cli")
    p = {
        "dataset": root / "dataset",
        "system": root / "system",
        "trace": root / "trace",
        "eval": root / "eval",
        "sweep": root / "sweep",
        "report": root / "report",
    }
    steps = [
        ("simulate", SIMULATE_CFG, p["dataset"]),
        ("preprocess", {"dataset": str(p["dataset"]), "rank": 40}, p["system"]),
        ("reconstruct", {
            "system": str(p["system"]),
            "method": {"id": "KACZ-l2", "rho_indices": [5], "sweeps": 30},
        }, p["trace"]),
        ("evaluate", {"trace": str(p["trace"]), "dataset": str(p["dataset"]),
                      **EVAL_CFG}, p["eval"]),
        ("sweep", _sweep_cfg(p["dataset"]), p["sweep"]),
        ("report", {"results": str(p["sweep"])}, p["report"]),
    ]
    for name, cfg, out in steps:
        cfg_path = _write_cfg(root / f"{name}.json", cfg)
        rc = main([name, "--config", cfg_path, "--out", str(out)])
        assert rc == 0, f"{name} exited with {rc}"
    p["root"] = root
    return p


def test_write_pgm_mapping(tmp_path):
    plane = np.array([[0.0, 50.0], [100.0, 200.0]])
    path = write_pgm(tmp_path / "x.pgm", plane, data_range=100.0)
    data = path.read_bytes()
    header = b"P5\n2 2\n255\n"
    assert data.startswith(header)
    assert data[len(header):] == bytes([0, 128, 255, 255])
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "y.pgm", plane[0], 100.0)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "y.pgm", plane, 0.0)


def test_central_slices_orientation():
    v = np.arange(5 * 4 * 3, dtype=np.float64).reshape(5, 4, 3)
    planes = central_slices(Volume(v))
    assert planes["xy"].shape == (4, 5)
    assert planes["xz"].shape == (3, 5)
    assert planes["yz"].shape == (3, 4)
    assert np.array_equal(planes["xy"], v[:, :, 1].T)
    assert np.array_equal(planes["xz"], v[:, 2, :].T)
    assert np.array_equal(planes["yz"], v[2, :, :].T)


def test_parse_results_missing_file(tmp_path):
    with pytest.raises(ReportError):
        parse_results(tmp_path / "results.csv")


def test_simulate_output(pipeline, tmp_path, capsys):
    assert (pipeline["dataset"] / "manifest.json").exists()
    cfg_path = _write_cfg(tmp_path / "sim.json", SIMULATE_CFG)
    rc = main(["simulate", "--config", cfg_path, "--out", str(tmp_path / "ds")])
    assert rc == 0
    out = capsys.readouterr().out
    assert f"dataset {tmp_path / 'ds'}" in out
    assert "checksum " in out
    # same config and seed give a bit-identical dataset
    assert manifest_checksum(tmp_path / "ds") == manifest_checksum(pipeline["dataset"])


def test_seed_flag_overrides_config(pipeline, tmp_path):
    cfg_path = _write_cfg(tmp_path / "sim.json", SIMULATE_CFG)
    rc = main(["simulate", "--config", cfg_path, "--out", str(tmp_path / "ds"),
               "--seed", "4"])
    assert rc == 0
    assert manifest_checksum(tmp_path / "ds") != manifest_checksum(pipeline["dataset"])


def test_evaluate_outputs(pipeline):
    with open(pipeline["eval"] / "quality.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "eps_psnr", "eps_ssim",
                       "unshifted_psnr", "unshifted_ssim"]
    assert len(rows) - 1 == run_checkpoint_count({"sweeps": 30})
    for row in rows[1:]:
        assert float(row[1]) >= float(row[3])
    quality = json.loads((pipeline["eval"] / "quality.json").read_text())
    assert quality["eps_psnr"] == float(rows[-1][1])


def test_report_tree(pipeline):
    report = pipeline["report"]
    md = (report / "report.md").read_text()
    assert "## Best checkpoints by shift-maximized PSNR" in md
    assert "## Best checkpoints by shift-maximized SSIM" in md
    assert "montage.png" in md
    assert (report / "best_summary.csv").exists()
    assert (report / "montage.png").exists()
    assert (report / "curves.png").exists()
    for method in ("KACZ-l2", "VAR-D2-Pl2"):
        for name in ("xy", "xz", "yz"):
            pgm = report / f"{method}_pp0_{name}.pgm"
            data = pgm.read_bytes()
            assert data.startswith(b"P5\n7 7\n255\n")
            assert len(data) == len(b"P5\n7 7\n255\n") + 49


def test_report_regeneration_is_byte_identical(pipeline, tmp_path):
    cfg_path = _write_cfg(tmp_path / "rep.json", {"results": str(pipeline["sweep"])})
    rc = main(["report", "--config", cfg_path, "--out", str(tmp_path / "again")])
    assert rc == 0
    first = {f.name: f.read_bytes() for f in pipeline["report"].iterdir()}
    second = {f.name: f.read_bytes() for f in (tmp_path / "again").iterdir()}
    assert first == second


def test_sweep_workers_flag_is_deterministic(pipeline, tmp_path):
    cfg_path = _write_cfg(tmp_path / "sweep.json",
                          _sweep_cfg(pipeline["dataset"], save_traces=False))
    for workers, out in (("1", tmp_path / "w1"), ("2", tmp_path / "w2")):
        rc = main(["sweep", "--config", cfg_path, "--out", str(out),
                   "--workers", workers])
        assert rc == 0
    assert (tmp_path / "w1" / "results.csv").read_bytes() == \
        (tmp_path / "w2" / "results.csv").read_bytes()


def test_config_errors_exit_2(pipeline, tmp_path):
    bad = dict(SIMULATE_CFG, noise={"snr_db": 20.0, "sigma": 0.1})
    cases = []
    cases.append(("simulate", bad))
    cases.append(("sweep", _sweep_cfg(pipeline["dataset"],
                                      methods=[{"id": "KACZ-l9"}])))
    cases.append(("sweep", {"dataset": str(pipeline["dataset"])}))
    cases.append(("simulate", dict(SIMULATE_CFG, typo=1)))
    for i, (command, cfg) in enumerate(cases):
        cfg_path = _write_cfg(tmp_path / f"bad{i}.json", cfg)
        rc = main([command, "--config", cfg_path, "--out", str(tmp_path / f"out{i}")])
        assert rc == 2, f"case {i}"

    missing = tmp_path / "nope.json"
    assert main(["simulate", "--config", str(missing),
                 "--out", str(tmp_path / "o")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["simulate", "--config", str(broken),
                 "--out", str(tmp_path / "o")]) == 2


def test_data_errors_exit_3(pipeline, tmp_path):
    cfg_path = _write_cfg(tmp_path / "pp.json",
                          {"dataset": str(tmp_path / "missing"), "rank": 10})
    assert main(["preprocess", "--config", cfg_path,
                 "--out", str(tmp_path / "sys")]) == 3

    import shutil
    tampered = tmp_path / "tampered"
    shutil.copytree(pipeline["dataset"], tampered)
    target = tampered / "system_rows.bin"
    raw = bytearray(target.read_bytes())
    raw[0] ^= 0xFF
    target.write_bytes(bytes(raw))
    cfg_path = _write_cfg(tmp_path / "pp2.json",
                          {"dataset": str(tampered), "rank": 10})
    assert main(["preprocess", "--config", cfg_path,
                 "--out", str(tmp_path / "sys2")]) == 3

    cfg_path = _write_cfg(tmp_path / "rep.json",
                          {"results": str(tmp_path / "no_results")})
    assert main(["report", "--config", cfg_path,
                 "--out", str(tmp_path / "rep")]) == 3


def test_run_failures_exit_4(pipeline, tmp_path):
    cfg = _sweep_cfg(
        pipeline["dataset"],
        methods=[{"id": "KACZ-l1", "lambda_values": [-0.5], "sweeps": 10}],
        save_traces=False,
    )
    cfg_path = _write_cfg(tmp_path / "sweep.json", cfg)
    out = tmp_path / "failed_sweep"
    assert main(["sweep", "--config", cfg_path, "--out", str(out)]) == 4
    assert (out / "results.csv").exists()

    # a report over results with no successful runs is a data error
    cfg_path = _write_cfg(tmp_path / "rep.json", {"results": str(out)})
    assert main(["report", "--config", cfg_path,
                 "--out", str(tmp_path / "rep")]) == 3
