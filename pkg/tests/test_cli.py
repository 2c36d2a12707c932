import numpy as np
import pytest

from kpid import io
from kpid.cli import main, resolve_config, CliError
from kpid.operator import load_model
from conftest import random_dataset


def run(*args):
    return main([str(a) for a in args])


def data_rows(path):
    return [l for l in path.read_text().splitlines() if l and not l.startswith("#")]


def strip_comments(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


class TestFormats:
    def test_dataset_roundtrip_bitwise(self, tmp_path, rng):
        data = random_dataset(rng, 7, n_aug=5, m=1, p=3)
        io.write_dataset(tmp_path / "d.csv", data, {"rng": "philox"})
        first = (tmp_path / "d.csv").read_text().splitlines()[0]
        assert first == "# kpid-dataset v1, n=2, p=3, m=1"
        back = io.read_dataset(tmp_path / "d.csv")
        for name in "XUY":
            np.testing.assert_array_equal(getattr(back, name), getattr(data, name))
        assert io.read_dataset_meta(tmp_path / "d.csv") == {"rng": "philox"}

    def test_bad_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            io.read_dataset(tmp_path / "d.csv")

    def test_keyvalue_and_dat(self, tmp_path):
        io.write_keyvalue(tmp_path / "kv", {"a": 0.1, "b": [1.0, -1.0]}, ["note"])
        assert io.read_keyvalue(tmp_path / "kv") == {"a": "0.10000000000000001", "b": "1,-1"}
        io.write_dat(tmp_path / "t.dat", np.array([[0.0, 1.0], [0.5, 2.0]]), ["x y"])
        np.testing.assert_array_equal(io.read_dat(tmp_path / "t.dat"), [[0, 1], [0.5, 2]])


class TestConfig:
    def test_file_then_flags(self, tmp_path):
        (tmp_path / "cfg").write_text("system=pole\nsamples=40\neps=1e-4\n")
        cfg = resolve_config(tmp_path / "cfg", {"samples": "50"})
        assert (cfg.system, cfg.samples, cfg.eps) == ("pole", 50, 1e-4)
        assert cfg.mesh_spacing == "0.05"

    def test_duffing_defaults(self):
        cfg = resolve_config()
        assert (cfg.width, cfg.eps, cfg.dt, cfg.samples) == (20.0, 1e-6, 0.1, 20000)
        assert (cfg.state_box, cfg.control_box, cfg.mesh_spacing) == ("-3:3", "-2:2", "0.5")

    def test_unknown_key(self, tmp_path):
        (tmp_path / "cfg").write_text("bogus=1\n")
        with pytest.raises(CliError):
            resolve_config(tmp_path / "cfg")


class TestGenerate:
    def test_smoke_row_count(self, tmp_path):
        assert run("generate", "--out-dir", tmp_path, "--samples", 10, "--what", "train") == 0
        assert len(data_rows(tmp_path / "train.csv")) == 10
        assert (tmp_path / "config.resolved").exists()

    def test_same_seed_identical(self, tmp_path):
        for d in ("a", "b"):
            run("generate", "--out-dir", tmp_path / d, "--samples", 25)
        for name in ("train.csv", "query.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_default_dimensions(self, tmp_path):
        assert run("generate", "--out-dir", tmp_path, "--what", "train") == 0
        path = tmp_path / "train.csv"
        assert path.read_text().splitlines()[0] == "# kpid-dataset v1, n=2, p=3, m=1"
        assert len(data_rows(path)) == 20000


class TestTrainIdentifyRollout:
    def test_single_snapshot_model(self, tmp_path):
        data = random_dataset(np.random.default_rng(0), 1, n_aug=2, p=1)
        io.write_dataset(tmp_path / "train.csv", data)
        assert run("train", "--out-dir", tmp_path, "--system", "pole") == 0
        assert load_model(tmp_path / "model").Sigma.shape == (1,)
        report = io.read_keyvalue(tmp_path / "train_report")
        assert float(report["reconstruction_residual"]) <= 1e-8
        assert float(report["roundtrip_error"]) <= 1e-12

    @pytest.fixture
    def pole_run(self, tmp_path):
        run("generate", "--out-dir", tmp_path, "--system", "pole", "--samples", 200)
        run("train", "--out-dir", tmp_path, "--system", "pole")
        return tmp_path

    def test_identify_single_node(self, pole_run, capsys):
        rc = run("identify", "--out-dir", pole_run, "--system", "pole",
                 "--mesh-lower", 0.55, "--mesh-upper", 0.55)
        assert rc == 0
        assert io.read_keyvalue(pole_run / "result")["best_node"] == "0.55000000000000004"
        assert "best_node=" in capsys.readouterr().out

    def test_identify_recovers_pole(self, pole_run):
        run("identify", "--out-dir", pole_run, "--system", "pole")
        node = float(io.read_keyvalue(pole_run / "result")["best_node"])
        assert node == pytest.approx(0.7, abs=1e-12)
        table = io.read_dat(pole_run / "mse_vs_distance.dat")
        assert table.shape == (13, 2) and table[0, 0] < 1e-12

    def test_rollout_zero_steps(self, pole_run):
        assert run("rollout", "--out-dir", pole_run, "--system", "pole",
                   "--query-steps", 0) == 0
        for name in ("trajectory_true.dat", "trajectory_pred.dat", "trajectory_error.dat"):
            table = io.read_dat(pole_run / name)
            assert table.shape == (1, 3)

    def test_rollout_columns(self, pole_run):
        run("rollout", "--out-dir", pole_run, "--system", "pole", "--query-steps", 5)
        true = io.read_dat(pole_run / "trajectory_true.dat")
        assert true.shape == (6, 1 + 2)
        np.testing.assert_allclose(true[:, 0], 0.1 * np.arange(6), rtol=1e-15)
        np.testing.assert_array_equal(true[:, 2], 0.7)


def test_sweep_idempotent(tmp_path):
    for d in ("a", "b"):
        assert run("sweep", "--out-dir", tmp_path / d, "--system", "pole",
                   "--samples", 150) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.is_file())
    assert {"result", "result_offgrid", "mse_vs_distance.dat",
            "mse_vs_distance_offgrid.dat", "trajectory_true.dat", "trajectory_pred.dat",
            "trajectory_error.dat", "train_report", "config.resolved"} <= set(names)
    for name in names:
        a, b = tmp_path / "a" / name, tmp_path / "b" / name
        if name == "config.resolved":
            continue
        assert strip_comments(a) == strip_comments(b), name
    assert not (tmp_path / "a" / ".lock").exists()


def test_missing_input_fails_with_one_line(tmp_path, capsys):
    assert run("train", "--out-dir", tmp_path) != 0
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: CliError:")


def test_locked_output_dir(tmp_path, capsys):
    (tmp_path / ".lock").write_text("123")
    assert run("generate", "--out-dir", tmp_path, "--samples", 3) != 0
    assert "locked" in capsys.readouterr().err
