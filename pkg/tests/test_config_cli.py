import json
from pathlib import Path

import numpy as np
import pytest

import foliage
from foliage.cli import main
from foliage.config import (
    ConfigError,
    RunConfig,
    loads_config,
    manifest_hash,
    manifest_text,
    normalize,
)


def test_empty_config_gives_valid_defaults():
    cfg = loads_config("")
    assert cfg.dof == 128
    assert cfg.seeds == tuple(range(16))
    assert cfg.t_minus == cfg.t_plus
    assert cfg.nl_scale_boundary == cfg.nl_scale


def test_comments_and_blank_lines_are_skipped():
    cfg = loads_config("# a comment\n\nh = 0.002   # trailing\ntau = 0.5\n")
    assert cfg.h == 0.002


def test_alpha_range_rejected_with_exact_message():
    with pytest.raises(ConfigError, match=r"alpha must lie in \[0,1\)"):
        loads_config("alpha = 1.5")


def test_unknown_key_rejected_with_name():
    with pytest.raises(ConfigError, match="unknown key 'frobnicate'"):
        loads_config("frobnicate = 3")


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        loads_config("h = 0.001\nwhat is this\n")
    with pytest.raises(ConfigError, match="line 3"):
        loads_config("h = 0.001\n\ndof = not_a_number\n")
    with pytest.raises(ConfigError, match="duplicate"):
        loads_config("h = 0.001\nh = 0.002\n")


def test_validators_cover_solver_preconditions():
    for text, frag in [
        ("dof = 2", "dof"),
        ("n_split = 0", "n_split"),
        ("nonlinearity = cubic", "nonlinearity"),
        ("seeds = ", "seeds"),
        ("tau = 0.0005", "tau"),
        ("t_plus = 1.0", "t_plus"),
        ("eps_list = 0.1", "eps_list"),
        ("tol = 0.0", "tol"),
    ]:
        with pytest.raises(ConfigError, match=frag):
            loads_config(text)


def test_manifest_round_trip_and_hash_stability():
    cfg = loads_config("h = 0.002\nseeds = 3 4\ndof = 32\nnl_scale = 0.125\nt_plus = 11.0")
    text = manifest_text(cfg, foliage.__version__)
    again = loads_config(text)
    assert again == normalize(cfg)
    assert manifest_text(again, foliage.__version__) == text
    assert manifest_hash(text) == manifest_hash(text)


SMALL_CFG = """
dof = 32
seeds = 0
fiber_t = 3.0
sim_t = 3.0
approach_t = 1.0
t_plus = 4.0
sweep_count = 3
lip_seeds = 1
lip_fibers = 5
eps_list = 0.1 0.05
"""


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL_CFG, encoding="utf-8")
    return p


def test_cli_eigen_writes_spectrum_and_bounds(cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["eigen", "--config", str(cfg_file), "--out", str(out)])
    assert rc == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "k,lambda_k"
    k, lam1 = lines[1].split(",")
    assert k == "1" and abs(float(lam1) - 1.0) < 1e-6
    rep = json.loads((out / "semigroup_bounds.json").read_text())
    assert rep["passed"] is True
    assert "manifest_sha256" in rep


def test_cli_gap_reports_admissible_contraction(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert main(["gap", "--config", str(cfg_file), "--out", str(out)]) == 0
    rep = json.loads((out / "gap.json").read_text())
    assert rep["gap"]["k"] < 1.0
    assert rep["gap"]["admissible"] is True


def test_cli_simulate_and_fiber_write_csv(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(out)]) == 0
    traj = (out / "trajectory.csv").read_text().splitlines()
    assert traj[0].startswith("t,c_1,")
    noise = (out / "noise.csv").read_text().splitlines()
    assert noise[0].startswith("t,z_1")

    assert main(["fiber", "--config", str(cfg_file), "--out", str(out)]) == 0
    sweep = (out / "fiber_sweep.csv").read_text().splitlines()
    assert sweep[0].endswith("iterations,residual")
    assert len(sweep) == 4  # header + sweep_count rows


def test_cli_approx_passes_checks(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert main(["approx", "--config", str(cfg_file), "--out", str(out)]) == 0
    rep = json.loads((out / "expansion.json").read_text())
    assert rep["passed"] is True
    assert rep["fd_check"]["rel_error"] <= 1e-3
    assert 1.8 <= rep["slope"] <= 2.2


def test_cli_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_cli_bad_config_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("alpha = 2.0", encoding="utf-8")
    assert main(["gap", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "alpha" in capsys.readouterr().err


def test_cli_seed_override(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(out), "--seed", "5"]) == 0
    manifest = (out / "manifest.txt").read_text()
    assert "seeds = 5" in manifest


def test_cli_simulate_nodal_basis(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL_CFG + "output_basis = nodal\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(p), "--out", str(out)]) == 0
    assert (out / "trajectory.csv").read_text().splitlines()[0].startswith("t,u_0,")


def test_cli_verify_zero_preset_passes(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL_CFG + "nonlinearity = zero\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["verify", "--config", str(p), "--out", str(out)]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["passed"] is True


def test_per_mode_intensities_and_table_coefficients():
    from foliage.scenarios import build_problem

    cfg = loads_config(
        SMALL_CFG
        + "q_values = 2.0 1.0 0.5 0.25 0.1 0.05 0.02 0.01\n"
        + "coeffs = table\na_x = 0.0 1.0\na_y = 1.0 2.0\na0_x = 0.0 1.0\na0_y = 0.5 0.5\n"
    )
    pr = build_problem(cfg)
    path = pr.path(0)
    assert path.spec.q[0] == 2.0 and path.spec.q[7] == 0.01
    assert np.all(path.spec.q[8:] == 0.0)
    assert pr.model.lambdas[0] > 0.0
    with pytest.raises(ConfigError, match="q_values"):
        loads_config("q_values = 1.0")


def test_verify_outputs_are_byte_identical_across_runs(cfg_file, tmp_path):
    out1, out2 = tmp_path / "v1", tmp_path / "v2"
    assert main(["verify", "--config", str(cfg_file), "--out", str(out1)]) == 0
    assert main(["verify", "--config", str(cfg_file), "--out", str(out2)]) == 0
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2 and len(files1) >= 6
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel
