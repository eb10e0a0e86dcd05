import numpy as np
import pytest
import yaml

from sparsedom import cli
from sparsedom.errors import ConfigError

SMALL = {"cloud": {"resolution": [32, 128]}, "samples": {"pairs": 2, "cz": 3}, "weights": {"tests": 2}}


def write_config(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def summary(out):
    lines = (out / "summary").read_text().splitlines()
    return dict(line.split(" = ", 1) for line in lines)


class TestConfig:
    def test_defaults_validate(self):
        cfg = cli.load_config()
        assert cfg["exponents"] == {"r": 2.0, "s": 3.0}

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="grid.spacing"):
            cli.load_config(write_config(tmp_path, {"grid": {"spacing": 3}}))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            cli.load_config(preset="torus")

    @pytest.mark.parametrize("patch", [
        {"grid": {"delta": 1.5}},
        {"weights": {"r": 2.0, "p": 2.0}},
        {"operator": {"curve": "spiral"}},
        {"cloud": {"metric": "taxicab"}},
        {"sigma": 1.0},
    ])
    def test_invalid_values(self, tmp_path, patch):
        with pytest.raises(ConfigError):
            cli.load_config(write_config(tmp_path, patch))

    def test_seed_and_output_override(self, tmp_path):
        cfg = cli.load_config(seed=7, output=tmp_path / "x")
        assert cfg["seed"] == 7 and cfg["output"] == str(tmp_path / "x")


class TestMain:
    def test_interval_grid(self, tmp_path, capsys):
        out = tmp_path / "grid"
        assert cli.main(["grid", "--preset", "interval", "-o", str(out)]) == 0
        s = summary(out)
        assert s["grid.axioms"] == "6/6" and s["status"] == "pass"
        assert s["grid.cubes_per_generation"] == "1 2 4 8 16 32 64"
        assert (out / "grid.txt").exists()
        assert "status = pass" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path, capsys):
        path = write_config(tmp_path, {"bogus": 1})
        assert cli.main(["grid", "--config", path, "-o", str(tmp_path / "o")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_failing_invariant_exit(self, tmp_path):
        out = tmp_path / "w"
        # the Whitney upper bound is not met by fringe atoms (see the decisions log)
        assert cli.main(["whitney", "--config", write_config(tmp_path, SMALL), "-o", str(out)]) == 1
        s = summary(out)
        assert s["status"] == "fail"
        assert s["invariant.whitney.cover"] == "pass" and s["invariant.whitney.disjoint"] == "pass"

    def test_deterministic_summary(self, tmp_path):
        path = write_config(tmp_path, SMALL)
        for name in ("a", "b"):
            cli.main(["cz", "--config", path, "-o", str(tmp_path / name)])
        assert (tmp_path / "a" / "summary").read_bytes() == (tmp_path / "b" / "summary").read_bytes()
        assert (tmp_path / "a" / "cz.csv").read_bytes() == (tmp_path / "b" / "cz.csv").read_bytes()

    def test_zero_f1(self, tmp_path):
        cfg = dict(SMALL, samples={"pairs": 1, "cz": 1, "zero_f1": True})
        out = tmp_path / "z"
        assert cli.main(["sparse", "--config", write_config(tmp_path, cfg), "-o", str(out)]) == 0
        s = summary(out)
        assert float(s["sparse.max_C_emp"]) == 0.0

    def test_sparse_and_weights(self, tmp_path):
        out = tmp_path / "sw"
        path = write_config(tmp_path, SMALL)
        cli.main(["sparse", "--config", path, "-o", str(out)])
        s = summary(out)
        assert s["invariant.sparse.verify_sparse"] == "pass"
        assert np.isfinite(float(s["sparse.max_C_emp"]))
        cli.main(["weights", "--config", path, "-o", str(out)])
        s = summary(out)
        assert s["invariant.weights.constant_weight"] == "pass" and s["invariant.weights.duality"] == "pass"
        assert (out / "weights.csv").read_text().startswith("quantity,value")

    def test_kernel(self, tmp_path):
        out = tmp_path / "k"
        assert cli.main(["kernel", "--config", write_config(tmp_path, SMALL), "-o", str(out)]) == 0
        assert (out / "kernel.csv").exists()
