import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from spheromc.cli import ConfigError, build_medium, config_hash, load_config, main

MINIMAL = {
    "geometry": {
        "radius_um": 275.0,
        "n_cells": 24000,
        "cell_volume_m3": 3.14e-15,
        "tx": {"r_um": 500.0, "theta_rad": math.pi / 2, "phi_rad": 0.0},
    },
}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def small_pbs_cfg(seed=5):
    cfg = yaml.safe_load(yaml.safe_dump(MINIMAL))
    cfg["medium"] = {"d_free_m2_s": 1.0e-9, "k_f_per_s": 0.01}
    cfg["pbs"] = {
        "dt_s": 0.05, "n_particles": 3000, "seed": seed, "t_end_s": 3.0,
        "absorption_bin_s": 0.5,
        "probes": [
            {"name": "boundary", "r_um": 275.0, "theta_rad": 0.0,
             "radius_um": 10.0, "kind": "boundary"},
            {"name": "center", "r_um": 0.0, "radius_um": 10.0},
        ],
    }
    return cfg


def test_load_paper_config_reproduces_reference_numbers():
    cfg = load_config(Path(__file__).resolve().parents[1] / "demos" / "paper.yaml")
    medium = build_medium(cfg)
    assert round(medium.porosity, 2) == 0.13
    assert medium.porosity == pytest.approx(0.135, abs=5e-4)
    assert medium.jump_k == pytest.approx(4.49, abs=0.01)


def test_unknown_keys_rejected(tmp_path):
    cfg = yaml.safe_load(yaml.safe_dump(MINIMAL))
    cfg["geometry"]["radiu_um"] = 10.0
    cfg["extras"] = 1
    with pytest.raises(ConfigError) as exc:
        load_config(write_cfg(tmp_path, cfg))
    msg = str(exc.value)
    assert "geometry.radiu_um" in msg and "extras" in msg


def test_empty_config_lists_all_required_keys(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    msg = str(exc.value)
    for key in ("geometry.radius_um", "geometry.n_cells",
                "geometry.cell_volume_m3", "geometry.tx.r_um"):
        assert key in msg


def test_validation_catches_packed_spheroid(tmp_path):
    cfg = yaml.safe_load(yaml.safe_dump(MINIMAL))
    cfg["geometry"]["n_cells"] = 1e9
    with pytest.raises(ConfigError, match="porosity"):
        load_config(write_cfg(tmp_path, cfg))


def test_validation_catches_types_and_signs(tmp_path):
    cfg = yaml.safe_load(yaml.safe_dump(MINIMAL))
    cfg["geometry"]["radius_um"] = "big"
    cfg["medium"] = {"k_f_per_s": -2.0}
    with pytest.raises(ConfigError) as exc:
        load_config(write_cfg(tmp_path, cfg))
    msg = str(exc.value)
    assert "geometry.radius_um" in msg and "medium.k_f_per_s" in msg


def test_model_mode(tmp_path, capsys):
    p = write_cfg(tmp_path, MINIMAL)
    rc = main(["--config", str(p), "--mode", "model", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "porosity" in out
    table = (tmp_path / "model.csv").read_text().splitlines()
    vals = dict(zip(table[0].split(","), (float(x) for x in table[1].split(","))))
    assert vals["jump_k"] == pytest.approx(4.492, abs=1e-3)


def test_model_mode_transparent_limit(tmp_path):
    cfg = yaml.safe_load(yaml.safe_dump(MINIMAL))
    cfg["geometry"]["n_cells"] = 0
    p = write_cfg(tmp_path, cfg)
    assert main(["--config", str(p), "--mode", "model", "--out", str(tmp_path),
                 "--quiet"]) == 0
    row = (tmp_path / "model.csv").read_text().splitlines()[1].split(",")
    porosity, _, d_eff, k = (float(x) for x in row[:4])
    assert porosity == 1.0 and k == 1.0 and d_eff == pytest.approx(1e-9)


def test_sweep_mode_monotone(tmp_path):
    cfg = yaml.safe_load(yaml.safe_dump(MINIMAL))
    cfg["sweep"] = {"n_cells_min": 15000, "n_cells_max": 25000, "n_points": 11}
    p = write_cfg(tmp_path, cfg)
    assert main(["--config", str(p), "--mode", "sweep", "--out", str(tmp_path),
                 "--quiet"]) == 0
    rows = [r.split(",") for r in (tmp_path / "sweep.csv").read_text().splitlines()
            if r and not r.startswith(("#", "n_cells"))]
    eps = [float(r[1]) for r in rows]
    k = [float(r[2]) for r in rows]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert all(a < b for a, b in zip(k, k[1:]))
    assert len(rows) == 11


def test_pbs_mode_outputs_and_determinism(tmp_path):
    p = write_cfg(tmp_path, small_pbs_cfg())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(p), "--mode", "pbs", "--out", str(out1),
                 "--quiet"]) == 0
    assert main(["--config", str(p), "--mode", "pbs", "--out", str(out2),
                 "--quiet"]) == 0
    names = ["pbs_boundary_in.csv", "pbs_boundary_out.csv", "pbs_center.csv",
             "pbs_absorption_rate.csv"]
    for name in names:
        a, b = (out1 / name).read_bytes(), (out2 / name).read_bytes()
        assert a == b, f"{name} differs between identical reruns"
    header = (out1 / "pbs_center.csv").read_text().splitlines()
    assert header[0].startswith("# config_sha256:")
    assert header[1] == "# seed: 5"
    assert header[2] == "t_s,value,unit,provenance,probe_id"
    assert header[3].endswith("m^-3,pbs,center")


def test_pbs_seed_override_changes_output(tmp_path):
    p = write_cfg(tmp_path, small_pbs_cfg())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(p), "--mode", "pbs", "--out", str(out1),
                 "--quiet"]) == 0
    assert main(["--config", str(p), "--mode", "pbs", "--out", str(out2),
                 "--seed", "99", "--quiet"]) == 0
    a = (out1 / "pbs_boundary_in.csv").read_bytes()
    b = (out2 / "pbs_boundary_in.csv").read_bytes()
    assert a != b
    assert b"# seed: 99" in b


def test_analytic_mode_writes_series(tmp_path):
    cfg = small_pbs_cfg()
    cfg["analytic"] = {"n_samples": 2**12, "t_end_s": 100.0, "dt_out_s": 1.0}
    p = write_cfg(tmp_path, cfg)
    assert main(["--config", str(p), "--mode", "analytic", "--out", str(tmp_path),
                 "--quiet"]) == 0
    for name in ("cgf_analytic_boundary_in.csv", "cgf_analytic_boundary_out.csv",
                 "cgf_analytic_center.csv"):
        text = (tmp_path / name).read_text().splitlines()
        assert text[2] == "t_s,value,unit,provenance,probe_id"
        assert len(text) == 3 + 100
        assert text[3].split(",")[2] == "m^-3"
        assert text[3].split(",")[3] == "analytic"


def test_compare_mode_with_zero_reaction_reports_no_peak(tmp_path):
    cfg = small_pbs_cfg()
    cfg["medium"]["k_f_per_s"] = 0.0
    cfg["analytic"] = {"n_samples": 2**12, "t_end_s": 50.0, "dt_out_s": 1.0}
    p = write_cfg(tmp_path, cfg)
    assert main(["--config", str(p), "--mode", "compare", "--out", str(tmp_path),
                 "--quiet"]) == 0
    metrics = json.loads((tmp_path / "compare_metrics.json").read_text())
    assert "error" in metrics and "no peak" in metrics["error"]
    assert (tmp_path / "rate_analytic_spheroid.csv").exists()
    assert (tmp_path / "rate_pbs_transparent.csv").exists()


def test_failure_emits_machine_readable_record(tmp_path, capsys):
    p = tmp_path / "missing.yaml"
    rc = main(["--config", str(p), "--mode", "model", "--out", str(tmp_path)])
    assert rc == 1
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "error" in record and record["error"]["type"]


def test_config_hash_is_stable_and_sensitive():
    cfg1 = load_config(Path(__file__).resolve().parents[1] / "demos" / "paper.yaml")
    cfg2 = load_config(Path(__file__).resolve().parents[1] / "demos" / "paper.yaml")
    assert config_hash(cfg1) == config_hash(cfg2)
    cfg2["pbs"]["seed"] += 1
    assert config_hash(cfg1) != config_hash(cfg2)
