import json
from pathlib import Path

import pytest

from drenv.cli import EXIT_OK, EXIT_PROPERTY, EXIT_RUNTIME, EXIT_VALIDATION, config_hash, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def tiny_scan(tmp_path):
    return write_json(tmp_path / "scan.json", {
        "spec": str(CONFIGS / "specs" / "half_orthant_d2.json"),
        "grid": ["0.3", "0.6", "0.9"], "window_radius": 2, "depths": [20, 40], "samples": 6,
    })


class TestExitCodes:
    def test_fixture_pass(self, capsys):
        assert main(["fixture-funnyb"]) == EXIT_OK
        assert "PASS: B_o = 22-vertex loop (5/5 seeds)" in capsys.readouterr().out

    def test_missing_seed_is_validation(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["cluster", "--spec", str(CONFIGS / "specs" / "orthant_d2.json"), "--out", str(tmp_path)])
        assert exc.value.code == EXIT_VALIDATION
        assert "--seed" in capsys.readouterr().err

    def test_invalid_spec_names_clause(self, tmp_path, capsys):
        # the orthant fails Condition 2, which the scan needs
        cfg = write_json(tmp_path / "bad.json", {"spec": str(CONFIGS / "specs" / "orthant_d2.json"),
                                                 "grid": ["0.5"], "samples": 2, "depths": [10, 20]})
        rc = main(["pcscan", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o"), "--workers", "1"])
        assert rc == EXIT_VALIDATION
        assert "F_1 == E" in capsys.readouterr().err

    def test_malformed_spec(self, tmp_path):
        spec = write_json(tmp_path / "s.json", {"dimension": 2, "E": [["+1", "+9"]], "F": [["-1"]], "p": "0.5"})
        assert main(["cluster", "--spec", str(spec), "--seed", "1", "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_missing_config(self, tmp_path):
        rc = main(["inclusions", "--config", str(tmp_path / "nope.json"), "--seed", "1", "--out", str(tmp_path)])
        assert rc == EXIT_VALIDATION

    def test_resource_limit_is_runtime(self, tmp_path):
        rc = main(["cluster", "--spec", str(CONFIGS / "specs" / "half_orthant_d3.json"), "--seed", "1",
                   "--radius", "5000", "--out", str(tmp_path)])
        assert rc == EXIT_RUNTIME

    def test_barrier_failure_is_property(self, tmp_path):
        spec = write_json(tmp_path / "s.json", {"dimension": 2, "E": [["+1", "+2"]],
                                                "F": [["+1", "+2", "-1", "-2"]], "p": "0.97"})
        rc = main(["barrier", "--spec", str(spec), "--seed", "3", "--window-radius", "2",
                   "--depths", "20,40", "--out", str(tmp_path)])
        assert rc in (EXIT_OK, EXIT_PROPERTY)
        assert json.loads((tmp_path / "manifest.json").read_text())["status"] in ("pass", "fail", "incomplete")


class TestOutputs:
    def test_scan_is_byte_deterministic(self, tiny_scan, tmp_path):
        outs = []
        for run, workers in (("a", "1"), ("b", "2")):
            out = tmp_path / run
            assert main(["pcscan", "--config", str(tiny_scan), "--seed", "7", "--out", str(out),
                         "--workers", workers]) == EXIT_OK
            outs.append(((out / "pcscan.csv").read_bytes(), (out / "pcscan_crossings.csv").read_bytes()))
        assert outs[0] == outs[1]

    def test_manifest_and_index(self, tiny_scan, tmp_path):
        main(["pcscan", "--config", str(tiny_scan), "--seed", "7", "--out", str(tmp_path), "--workers", "1"])
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["command"] == "pcscan" and man["base_seed"] == 7 and man["status"] == "ok"
        assert set(man["outputs"]) == {"pcscan.csv", "pcscan_crossings.csv"}
        index = json.loads((tmp_path / "index.json").read_text())
        assert index[man["config_hash"]]["outputs"] == man["outputs"]

    def test_index_accumulates(self, tmp_path):
        spec = str(CONFIGS / "specs" / "orthant_d2.json")
        for seed in ("1", "2"):
            main(["cluster", "--spec", spec, "--seed", seed, "--radius", "5", "--out", str(tmp_path)])
        assert len(json.loads((tmp_path / "index.json").read_text())) == 2

    def test_config_hash_stable(self):
        assert config_hash({"a": 1, "b": [2]}) == config_hash({"b": [2], "a": 1})

    def test_cluster_then_render(self, tmp_path, capsys):
        spec = str(CONFIGS / "specs" / "orthant_d2.json")
        assert main(["cluster", "--spec", spec, "--seed", "1", "--radius", "10", "--out", str(tmp_path)]) == 0
        img = tmp_path / "c.svg"
        assert main(["render", "--grid", str(tmp_path / "forward_cluster.grid"), "--output", str(img)]) == 0
        assert img.read_bytes().startswith(b"<svg") or b"<svg" in img.read_bytes()[:200]
        assert "sha256" in capsys.readouterr().out

    def test_lfield_csv(self, tmp_path):
        spec = str(CONFIGS / "specs" / "half_orthant_d2.json")
        assert main(["lfield", "--spec", spec, "--seed", "1", "--window-radius", "2",
                     "--depths", "20,40", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "lfield.csv").read_text().splitlines()
        assert len(lines) == 1 + 5

    def test_inline_spec(self, tmp_path):
        cfg = write_json(tmp_path / "inc.json", {
            "spec": json.loads((CONFIGS / "specs" / "orthant_d2.json").read_text()),
            "box_radius": 5, "samples": 3})
        assert main(["inclusions", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path),
                     "--workers", "1"]) == EXIT_OK
