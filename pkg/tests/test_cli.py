import json

import numpy as np
import pytest

from helmray.cli import main
from helmray.config import RunConfig

EUCLID_CFG = """
[geometry]
R1 = 0.5
R = 1.0
R_ray = 1.25

[wave]
k = 4.0
k0 = 1.0
"""

DISK_CFG = """
[coefficients]
preset = identity

[obstacle]
empty = false
rho_fourier_coefficients = 0.5

[geometry]
R1 = 0.7
R = 1.0
R_ray = 1.25

[wave]
k = 4.0
k0 = 2.0
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_config_roundtrip_stable():
    cfg = RunConfig.from_text(DISK_CFG)
    text1 = cfg.to_text()
    cfg2 = RunConfig.from_text(text1)
    assert cfg2.to_text() == text1
    assert cfg2.sha256() == cfg.sha256()


def test_config_typed_access():
    cfg = RunConfig.from_text(DISK_CFG)
    assert cfg.get("geometry", "R") == 1.0
    assert cfg.get("obstacle", "empty") is False
    assert cfg.get("obstacle", "rho_fourier_coefficients") == [0.5]
    obstacle = cfg.obstacle()
    assert obstacle.max_radius == pytest.approx(0.5)


def test_config_rejects_unknown_section():
    with pytest.raises(ValueError):
        RunConfig.from_text("[nonsense]\na = 1\n")


def test_validate_subcommand(tmp_path):
    cfg = _write(tmp_path, EUCLID_CFG)
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    payload = json.loads((tmp_path / "o" / "validation.json").read_text())
    assert payload["ok"]
    assert payload["gradient_fd_relative_error"] < 1e-6


def test_validate_fails_on_bad_geometry(tmp_path):
    bad = EUCLID_CFG.replace("R_ray = 1.25", "R_ray = 0.9")
    cfg = _write(tmp_path, bad)
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_rays_subcommand_tangent_chord(tmp_path, capsys):
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["rays", "--config", cfg, "--R", "1.0",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    payload = json.loads((tmp_path / "o" / "rays.json").read_text())
    assert payload["L"] == pytest.approx(np.sqrt(0.75), abs=2e-3)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["subcommand"] == "rays"
    assert "config_sha256" in manifest


def test_dtn_check_subcommand(tmp_path):
    rc = main(["dtn-check", "--k", "5.0", "--R", "2.0",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    report = json.loads((tmp_path / "o" / "sign_report.json").read_text())
    assert report["sign_property_re_nonpositive"]
    csv_text = (tmp_path / "o" / "dtn_coefficients.csv").read_text()
    assert csv_text.splitlines()[0] == "n,re_t_n,im_t_n"


def test_threshold_matches_hand_formula(tmp_path):
    from helmray.bounds import ConstantsLedger
    led = ConstantsLedger(C_int_tilde=1.0, C_DtN_tilde=1.0, C_H2=1.0,
                          A_min=1.0, A_max=1.0, nu_min=1.0, nu_max=1.0,
                          k0=1.0, L_ray=2.0)
    ledger_path = tmp_path / "ledger.json"
    led.to_json(ledger_path)
    cfg = _write(tmp_path, EUCLID_CFG)
    k, h = 10.0, 0.01
    rc = main(["threshold", "--config", cfg, "--ledger", str(ledger_path),
               "--k", str(k), "--h", str(h), "--out", str(tmp_path / "o")])
    assert rc == 0
    rep = json.loads((tmp_path / "o" / "threshold.json").read_text())
    # hand evaluation of the admissibility inequality's right-hand side
    bracket = 1.0 + 2.0 / 1.0 + 1.0
    rhs = (h * k**2 * np.sqrt(1 + (h * k) ** 2) * 2.0 * 1.0 * 1.0 * 2.0
           * 1.0 * (4 * np.sqrt(2) / np.pi) * bracket)
    assert rep["rhs_at_query"] == pytest.approx(rhs, rel=1e-12)
    assert rep["admissible"] == (rhs <= 1.0)
    assert rep["quasioptimality_constant"] == pytest.approx(4.0)


def test_quasimode_subcommand(tmp_path):
    rc = main(["quasimode", "--L", "1.0", "--delta", "0.1", "--h", "0.01",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    payload = json.loads((tmp_path / "o" / "quasimode.json").read_text())
    assert payload["ratio"] >= 50.9


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_error_reported_structurally(tmp_path, capsys):
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["threshold", "--config", cfg, "--ledger", "/nonexistent.json",
               "--k", "4", "--out", str(tmp_path / "o")])
    assert rc == 1
    err = capsys.readouterr().err
    assert json.loads(err)["error"] == "FileNotFoundError"


def test_resolvent_scan_deterministic(tmp_path):
    cfg = _write(tmp_path, EUCLID_CFG)
    outs = []
    for name in ("a", "b"):
        rc = main(["resolvent-scan", "--config", cfg, "--ks", "3,4",
                   "--seed", "7", "--out", str(tmp_path / name)])
        assert rc == 0
        outs.append((tmp_path / name / "resolvent_scan.csv").read_bytes())
    assert outs[0] == outs[1]


def test_solve_subcommand_outputs(tmp_path):
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["solve", "--config", cfg, "--k", "3.0", "--h", "0.1",
               "--problem", "scattering", "--out", str(tmp_path / "o")])
    assert rc == 0
    payload = json.loads((tmp_path / "o" / "solve.json").read_text())
    assert payload["residual"] <= 1e-10
    assert payload["h_fem"] <= 0.1
    assert (tmp_path / "o" / "solution.csv").exists()


def test_trapping_subcommand(tmp_path):
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["trapping", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 0
    payload = json.loads((tmp_path / "o" / "trapping.json").read_text())
    assert payload["nontrapping"] is True


def test_rays_trajectory_dump(tmp_path):
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["rays", "--config", cfg, "--R", "1.0", "--grid-pos", "5",
               "--grid-dir", "16", "--refine", "1", "--dump-trajectory",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    lines = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "s,x1,x2,xi1,xi2,H"
    assert len(lines) > 10
    h_col = np.array([float(l.split(",")[5]) for l in lines[1:]])
    assert np.abs(h_col).max() < 1e-8  # characteristic set along the dump


def test_eta_subcommand(tmp_path):
    cfg = _write(tmp_path, EUCLID_CFG)
    rc = main(["eta", "--config", cfg, "--k", "2.0", "--h", "0.15",
               "--samples", "2", "--out", str(tmp_path / "o")])
    assert rc == 0
    payload = json.loads((tmp_path / "o" / "eta.json").read_text())
    assert payload["eta"] > 0 and payload["samples"] == 2


def test_convergence_subcommand(tmp_path):
    from helmray.bounds import ConstantsLedger
    led = ConstantsLedger(C_int_tilde=0.2, C_DtN_tilde=2.7, C_H2=0.35,
                          A_min=1.0, A_max=1.0, nu_min=1.0, nu_max=1.0,
                          k0=2.0, L_ray=float(np.sqrt(9 - 0.25)))
    ledger_path = tmp_path / "ledger.json"
    led.to_json(ledger_path)
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["convergence", "--config", cfg, "--ledger", str(ledger_path),
               "--ks", "2", "--hs", "0.08,0.04", "--out", str(tmp_path / "o")])
    assert rc == 0
    lines = (tmp_path / "o" / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("k,h_target,h_fem,energy_error")
    assert len(lines) == 3
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["rows"] == 2


def test_constants_subcommand(tmp_path):
    cfg_text = DISK_CFG + "\n[ray]\ngrid_pos_r = 5\ngrid_pos_theta = 8\ngrid_dir = 24\nrefinement_rounds = 1\n"
    cfg = _write(tmp_path, cfg_text)
    rc = main(["constants", "--config", cfg, "--samples", "2",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    from helmray.bounds import ConstantsLedger
    led = ConstantsLedger.from_json(tmp_path / "o" / "ledger.json")
    led.validate()
    # ray ball radius R + 2 = 3 around the half-unit disk: sqrt(9 - 1/4)
    assert led.L_ray == pytest.approx(np.sqrt(8.75), rel=2e-3)
    assert led.provenance["C_H2"] == "empirical"


def test_h2_scan_subcommand(tmp_path):
    cfg = _write(tmp_path, DISK_CFG)
    rc = main(["h2-scan", "--config", cfg, "--ks", "2,3",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert np.isfinite(summary["fitted_exponent"])
