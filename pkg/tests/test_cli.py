import re

import numpy as np
import pytest

from sreinforce import cli, trainer

TINY = ["--set", "gp.population_size=40", "--set", "gp.tournament_size=5", "--set", "gp.generations=2"]


@pytest.fixture
def run_dir(tmp_path):
    out = tmp_path / "run"
    code = cli.main(["train", "--preset", "cartpole", "--e-max", "1", "--seeds", "2", "--out", str(out)])
    assert code == 0
    return out


def test_single_episode_run_artifacts(run_dir, capsys):
    assert (run_dir / "config.ini").is_file()
    assert (run_dir / "returns.svg").is_file()
    for seed in (0, 1):
        rows = trainer.read_log(run_dir / f"seed_{seed}" / "log.csv")
        assert len(rows) == 1
        assert (run_dir / f"seed_{seed}" / "checkpoint.npz").is_file()
    assert not list(run_dir.rglob("*.tmp*"))


def test_summary_line_printed(tmp_path, capsys):
    cli.main(["train", "--preset", "cartpole", "--e-max", "2", "--seeds", "2", "--out", str(tmp_path / "r")])
    out = capsys.readouterr().out
    assert re.search(r"^reward -?\d+\.\d ± \d+\.\d$", out, re.M)


def test_refuses_overwrite(run_dir, capsys):
    argv = ["train", "--preset", "cartpole", "--e-max", "1", "--seeds", "1", "--out", str(run_dir)]
    assert cli.main(argv) == cli.EXIT_USAGE
    assert "--force" in capsys.readouterr().err
    assert cli.main(argv + ["--force"]) == 0


def test_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("SYMPOL_OUT_DIR", str(tmp_path))
    assert cli.main(["train", "--preset", "cartpole", "--e-max", "1", "--seeds", "1", "--baseline"]) == 0
    assert (tmp_path / "cartpole-baseline" / "seed_0" / "log.csv").is_file()


def test_identical_invocations_give_identical_logs(tmp_path):
    argv = ["train", "--preset", "cartpole", "--seeds", "1", "--e-max", "30", *TINY,
            "--set", "trainer.e_tf=10", "--set", "trainer.e_is_start=20", "--set", "trainer.e_ts=30",
            "--set", "trainer.e_delta=5"]
    assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(argv + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "seed_0" / "log.csv").read_bytes()
    b = (tmp_path / "b" / "seed_0" / "log.csv").read_bytes()
    assert a == b
    assert (tmp_path / "a" / "seed_0" / "policy.txt").read_text() == (tmp_path / "b" / "seed_0" / "policy.txt").read_text()


def test_parallel_seeds_match_serial(tmp_path):
    base = ["train", "--preset", "cartpole", "--seeds", "2", "--e-max", "5"]
    assert cli.main(base + ["--out", str(tmp_path / "serial")]) == 0
    assert cli.main(base + ["--jobs", "2", "--out", str(tmp_path / "par")]) == 0
    for seed in (0, 1):
        name = f"seed_{seed}/log.csv"
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["train"],
        ["train", "--preset", "cartpole", "--set", "trainer.bogus=1"],
        ["train", "--preset", "cartpole", "--config", "x.ini"],
        ["train", "--config", "missing.ini"],
        ["train", "--preset", "cartpole", "--seeds", "0"],
        ["frobnicate"],
        ["eval", "--env", "cartpole"],
        ["eval", "--env", "cartpole", "--policy", "missing.txt"],
    ],
)
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == cli.EXIT_USAGE
    assert not (tmp_path / "runs").exists()


def _write_xy(path, rng, f):
    X = rng.uniform(-1, 1, size=(200, 2))
    rows = ["s0,s1,y"] + [f"{a!r},{b!r},{f(a, b)!r}" for a, b in X.tolist()]
    path.write_text("\n".join(rows) + "\n")


def test_fit_sr_recovers_identity(tmp_path, capsys):
    path = tmp_path / "xy.csv"
    _write_xy(path, np.random.default_rng(0), lambda a, b: a + 2 * b)
    assert cli.main(["fit-sr", str(path), "--basis", "add,sub,mul"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("expression: ")
    mse = float(re.search(r"raw_mse: (\S+)", out).group(1))
    assert mse < 1e-6


def test_fit_sr_rejects_bad_header(tmp_path):
    path = tmp_path / "xy.csv"
    path.write_text("a,b,y\n1,2,3\n4,5,6\n")
    assert cli.main(["fit-sr", str(path)]) == cli.EXIT_USAGE


def test_fit_sr_rejects_bad_probabilities(tmp_path):
    path = tmp_path / "xy.csv"
    _write_xy(path, np.random.default_rng(0), lambda a, b: a)
    assert cli.main(["fit-sr", str(path), "--p-crossover", "0.99"]) == cli.EXIT_USAGE


def test_eval_both_policy_kinds(run_dir, tmp_path, capsys):
    policy = tmp_path / "policy.txt"
    policy.write_text("pi(a0) = 0.52 - 2*s2 - 0.595*s3\npi(a1) = 0.48 + 2*s2 + 0.595*s3\n")
    assert cli.main(["eval", "--policy", str(policy), "--env", "cartpole", "--episodes", "5"]) == 0
    assert cli.main(["eval", "--checkpoint", str(run_dir / "seed_0" / "checkpoint.npz"),
                     "--env", "cartpole", "--episodes", "5", "--greedy"]) == 0
    out = capsys.readouterr().out
    assert out.count("return ") == 2


def test_eval_rejects_dimension_mismatch(run_dir):
    ckpt = str(run_dir / "seed_0" / "checkpoint.npz")
    assert cli.main(["eval", "--checkpoint", ckpt, "--env", "acrobot"]) == cli.EXIT_USAGE


def test_diag_variance(run_dir, tmp_path, capsys):
    policy = tmp_path / "policy.txt"
    policy.write_text("pi(a0) = 0.5\npi(a1) = 0.5\n")
    code = cli.main(["diag-variance", "--checkpoint", str(run_dir / "seed_0" / "checkpoint.npz"),
                     "--policy", str(policy), "--env", "cartpole", "--batches", "20"])
    assert code == 0
    out = capsys.readouterr().out
    assert "tr(Var[g_mc])" in out and "tr(Var[g_is])" in out and "ratio" in out


def test_plot(run_dir, tmp_path):
    svg = tmp_path / "p.svg"
    logs = [f"sr={run_dir / 'seed_0' / 'log.csv'}", f"sr={run_dir / 'seed_1' / 'log.csv'}"]
    assert cli.main(["plot", *logs, "--out", str(svg)]) == 0
    assert "</svg>" in svg.read_text()


def test_module_entry_point():
    import subprocess
    import sys

    done = subprocess.run([sys.executable, "-m", "sreinforce", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "fit-sr" in done.stdout
