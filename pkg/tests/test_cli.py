import json

import numpy as np
import pytest

from bosonforge import cli
from bosonforge.config import ConfigError, RunConfig, parse_overrides
from bosonforge.pipeline import read_csv
from bosonforge.targets import BinomialSpec, GkpSpec

QUICK_OPT = [
    "--seed", "5", "--space.dim", "12", "--optimizer.n_starts", "1", "--optimizer.t_grid_us", "[600]",
    "--optimizer.n_seg_opt", "30", "--optimizer.n_seg_out", "90", "--optimizer.maxiter", "800",
]


def test_parse_overrides_types():
    out = parse_overrides(["--seed", "3", "--noise.gamma", "18.5", "--gates.db", "[9, 10]", "--output", "x"])
    assert out == {"seed": 3, "noise": {"gamma": 18.5}, "gates": {"db": [9, 10]}, "output": "x"}
    with pytest.raises(ConfigError):
        parse_overrides(["--seed"])
    with pytest.raises(ConfigError):
        parse_overrides(["seed", "3"])


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 1\ntarget: {kind: gkp, lattice: hexagonal, delta: 0.301}\nspace: {dim: 40}\n")
    cfg = RunConfig.load(p, parse_overrides(["--space.dim", "50"]), task="tomography")
    assert cfg["space"]["dim"] == 50
    spec = cfg.target_spec()
    assert isinstance(spec, GkpSpec) and spec.delta == 0.301
    assert RunConfig.load(p, task="tomography").hash() != cfg.hash()


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.load(overrides={"optimizer": {"bogus": 1}}, task="analyze")
    with pytest.raises(ConfigError):
        RunConfig.load(overrides={"target": {"state": "nope"}}, task="analyze")


def test_stochastic_tasks_need_seed():
    with pytest.raises(ConfigError):
        RunConfig.load(task="optimize")
    assert RunConfig.load(overrides={"seed": 0}, task="optimize").seed == 0
    assert RunConfig.load(task="analyze").target_spec() == BinomialSpec(1, 1, "+Z")


def test_cli_invalid_config_exit_code(tmp_path, capsys):
    assert cli.main(["optimize", "--output", str(tmp_path)]) == cli.EXIT_INVALID
    assert cli.main(["analyze", "--inputs.rho", str(tmp_path / "missing.npy")]) == cli.EXIT_INVALID
    assert cli.main(["analyze", "--config", str(tmp_path / "none.yaml")]) == cli.EXIT_INVALID
    assert "invalid configuration" in capsys.readouterr().err


@pytest.fixture(scope="module")
def optimize_runs(tmp_path_factory):
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"opt{k}")
        code = cli.main(["optimize", *QUICK_OPT, "--output", str(out)])
        runs.append((code, out))
    return runs


def test_cli_optimize_artifacts(optimize_runs):
    code, out = optimize_runs[0]
    assert code == cli.EXIT_OK
    rep = json.loads((out / "optimizer_report.json").read_text())
    assert rep["f_th"] >= 0.999 and rep["converged"]
    assert rep["provenance"]["config_hash"]
    wf = json.loads((out / "waveform.json").read_text())
    assert wf["meta"]["config_hash"] == rep["provenance"]["config_hash"]


def test_cli_optimize_is_deterministic(optimize_runs):
    (_, a), (_, b) = optimize_runs
    for name in ("waveform.json", "optimizer_report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_propagate(optimize_runs, tmp_path):
    _, src = optimize_runs[0]
    args = ["propagate", "--space.dim", "12", "--inputs.waveform", str(src / "waveform.json"), "--output", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_OK
    rep = json.loads((tmp_path / "propagate_report.json").read_text())
    assert rep["fidelity"] >= 0.999
    args += ["--noise.gamma", "18", "--noise.delta_hz", "18"]
    assert cli.main(args) == cli.EXIT_OK
    assert json.loads((tmp_path / "propagate_report.json").read_text())["fidelity"] < rep["fidelity"]


def test_cli_tomography_reconstruct_analyze(tmp_path):
    base = ["--space.dim", "20", "--sdf.quadrant_n", "15"]
    assert cli.main(["tomography", "--seed", "1", *base, "--output", str(tmp_path)]) == cli.EXIT_OK
    rows = read_csv(tmp_path / "chi_grid.csv")
    assert len(rows) == 29**2
    assert (tmp_path / "chi_grid.csv").read_text().startswith("# bosonforge")
    assert cli.main(["reconstruct", *base, "--reconstruct.dims", "[20, 24]",
                     "--inputs.grid", str(tmp_path / "chi_grid.csv"), "--output", str(tmp_path)]) == cli.EXIT_OK
    rep = json.loads((tmp_path / "reconstruction_report.json").read_text())
    assert rep["fidelity"] >= 0.999
    assert cli.main(["analyze", "--inputs.rho", str(tmp_path / "rho.npy"), "--output", str(tmp_path)]) == cli.EXIT_OK
    assert json.loads((tmp_path / "metrics_report.json").read_text())["fidelity"] >= 0.999
    assert cli.main(["analyze", "--inputs.grid", str(tmp_path / "chi_grid.csv"), "--output", str(tmp_path)]) == cli.EXIT_OK
    assert json.loads((tmp_path / "metrics_report.json").read_text())["pseudo_fidelity"] == pytest.approx(1.0, abs=1e-9)


def test_cli_tomography_with_shots_is_seeded(tmp_path):
    args = ["tomography", "--space.dim", "20", "--sdf.quadrant_n", "6", "--sdf.shots", "100"]
    assert cli.main([*args, "--seed", "2", "--output", str(tmp_path / "a")]) == cli.EXIT_OK
    assert cli.main([*args, "--seed", "2", "--output", str(tmp_path / "b")]) == cli.EXIT_OK
    assert cli.main([*args, "--seed", "3", "--output", str(tmp_path / "c")]) == cli.EXIT_OK
    a, b, c = (np.array([float(r["re_chi"]) for r in read_csv(tmp_path / k / "chi_quadrant.csv")]) for k in "abc")
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_cli_compare_gates_deneve_only(tmp_path):
    args = ["compare-gates", "--seed", "0", "--gates.db", "[10, 11]", "--gates.optimized", "false", "--output", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_OK
    rows = read_csv(tmp_path / "comparison.csv")
    assert [r["method"] for r in rows] == ["deneve", "deneve"]
    assert all(float(r["infidelity"]) < 0.1 for r in rows)
