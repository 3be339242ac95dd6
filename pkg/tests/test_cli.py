import json

import pytest

from chd_opt.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VERIFY, main
from chd_opt.io import read_csv, read_dump

SMALL = "grid.nx = 8\ngrid.ny = 8\ntime.T = 0.03\ncheck.directions = 2\n"


def write_cfg(tmp_path, text=SMALL):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_simulate_outputs(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    header, rows = read_csv(tmp_path / "o" / "diagnostics.csv")
    assert header == ["t", "energy", "mass", "min_phi", "max_phi", "grad_mu_sq", "kinetic"]
    assert len(rows) == 4
    assert read_dump(tmp_path / "o" / "phi_final.dump").data.shape == (8, 8)


def test_simulate_constant_state(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "initial.profile = constant\ninitial.mean = 0.2\nsource.S = zero\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    _, rows = read_csv(tmp_path / "o" / "diagnostics.csv")
    assert len({r[1] for r in rows}) == 1 and len({r[2] for r in rows}) == 1


@pytest.mark.parametrize("mode", ["grad-check", "hessian-check", "energy-audit", "optimize"])
def test_modes_succeed(tmp_path, mode):
    cfg = write_cfg(tmp_path)
    assert main([mode, "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "summary.csv").exists()
    assert not (tmp_path / "o" / "error.json").exists()


def test_config_error_exit(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "potential.theta0 = 0.5\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    rec = json.loads((tmp_path / "o" / "error.json").read_text())
    assert rec["exit_code"] == 2 and rec["kind"] == "validation"
    assert "theta0" in capsys.readouterr().err


def test_verification_failure_exit(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "check.tol = 1e-30\n")
    assert main(["grad-check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_VERIFY


def test_solver_failure_exit(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "solver.newton_maxiter = 1\ninitial.amplitude = 0.9\ntime.tau = 0.03\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert json.loads((tmp_path / "o" / "error.json").read_text())["kind"] == "solver"


def test_seed_override_recorded(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "initial.profile = random\n")
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "5"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "6"])
    assert "'seed' " not in (tmp_path / "a" / "run.txt").read_text()
    assert "seed = 5" in (tmp_path / "a" / "run.txt").read_text()
    assert (tmp_path / "a" / "phi_final.dump").read_bytes() != (tmp_path / "b" / "phi_final.dump").read_bytes()


def test_bad_mode():
    with pytest.raises(SystemExit):
        main(["dance", "--config", "x"])
