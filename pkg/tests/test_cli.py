import csv
import json

import numpy as np
import pytest
import yaml
from scipy.spatial.distance import pdist, squareform

from h2s import cli
from h2s.embedding import build_embedding
from h2s.errors import ConvergenceError, StageError, ValidationError

ARTIFACTS = (
    "model.json",
    "embedding.json",
    "inference.json",
    "scene.svg",
    "scene.json",
    "diagrams/values.svg",
    "diagrams/significance.svg",
    "diagrams/pairwise.svg",
)


def write_config(tmp_path, out: str = "out", **sections) -> str:
    config = {
        "input": {"scenario": {"kind": "TOUCHING", "dimension": 20, "samples_per_class": 30, "seed": 1}},
        "embedding": {"starts": 2},
        "inference": {"n_resamples": 100},
        "output": {"dir": str(tmp_path / out)},
    }
    for key, value in sections.items():
        config[key] = {**config.get(key, {}), **value}
    path = tmp_path / f"{out}.yaml"
    path.write_text(yaml.safe_dump(config))
    return str(path)


class TestRun:
    def test_writes_every_artifact(self, tmp_path) -> None:
        assert cli.main(["run", "--config", write_config(tmp_path)]) == 0
        out = tmp_path / "out"
        for name in ARTIFACTS:
            assert (out / name).exists(), name
        manifest = json.loads((out / "run.json").read_text())
        assert set(manifest["versions"]) == {"h2s", "numpy", "scipy", "statsmodels", "pyyaml", "python"}
        assert manifest["seed"] == 0
        assert (out / "h2s.log").exists()

    def test_artifacts_carry_stage_hashes(self, tmp_path) -> None:
        cli.main(["run", "--config", write_config(tmp_path)])
        model = json.loads((tmp_path / "out" / "model.json").read_text())
        assert model["stage"] == "fit"
        assert len(model["config_hash"]) == 64
        assert model["estimator"] == "ADAPTIVE"

    def test_svgs_carry_render_hash(self, tmp_path) -> None:
        cli.main(["run", "--config", write_config(tmp_path)])
        out = tmp_path / "out"
        render_hash = json.loads((out / "scene.json").read_text())["config_hash"]
        for name in ("scene.svg", "diagrams/values.svg", "diagrams/significance.svg", "diagrams/pairwise.svg"):
            assert f'<metadata class="config-hash">{render_hash}</metadata>' in (out / name).read_text(), name

    def test_rerun_is_a_no_op(self, tmp_path) -> None:
        config = write_config(tmp_path)
        cli.main(["run", "--config", config])
        stamps = {name: (tmp_path / "out" / name).stat().st_mtime_ns for name in ARTIFACTS}
        cli.main(["run", "--config", config])
        assert stamps == {name: (tmp_path / "out" / name).stat().st_mtime_ns for name in ARTIFACTS}

    def test_deterministic(self, tmp_path) -> None:
        cli.main(["run", "--config", write_config(tmp_path, out="first")])
        cli.main(["run", "--config", write_config(tmp_path, out="second")])
        for name in ARTIFACTS:
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes(), name

    def test_without_inference(self, tmp_path) -> None:
        assert cli.main(["run", "--config", write_config(tmp_path), "--no-inference"]) == 0
        out = tmp_path / "out"
        assert not (out / "inference.json").exists()
        assert not (out / "diagrams" / "significance.svg").exists()
        assert (out / "scene.svg").exists()

    def test_touching_scenario_is_near_tangent(self, tmp_path) -> None:
        scenario = {"kind": "TOUCHING", "dimension": 200, "samples_per_class": 100, "seed": 3}
        config = write_config(tmp_path, input={"scenario": scenario}, inference={"enabled": False})
        assert cli.main(["run", "--config", config]) == 0
        embedding = json.loads((tmp_path / "out" / "embedding.json").read_text())["embedding"]
        radius = np.mean(embedding["radii"])
        assert abs(embedding["achieved"]["margins"][0][1]) <= 0.3 * radius
        svg = (tmp_path / "out" / "scene.svg").read_text()
        assert svg.count('<circle class="sphere"') == 2

    def test_flags_override_config(self, tmp_path) -> None:
        config = write_config(tmp_path, inference={"enabled": False})
        assert cli.main(["run", "--config", config, "--dim", "3", "--estimator", "dcc", "--seed", "5"]) == 0
        out = tmp_path / "out"
        assert json.loads((out / "model.json").read_text())["estimator"] == "DCC"
        assert json.loads((out / "embedding.json").read_text())["embedding"]["dim"] == 3
        assert json.loads((out / "run.json").read_text())["seed"] == 5


class TestStages:
    def test_stages_compose(self, tmp_path) -> None:
        config = write_config(tmp_path)
        for stage in ("fit", "embed", "infer", "render"):
            assert cli.main([stage, "--config", config]) == 0, stage
        assert (tmp_path / "out" / "diagrams" / "pairwise.svg").exists()

    def test_embed_needs_fit(self, tmp_path, capsys) -> None:
        assert cli.main(["embed", "--config", write_config(tmp_path)]) == 2
        assert "run `h2s fit` first" in capsys.readouterr().err

    def test_render_needs_embed(self, tmp_path, capsys) -> None:
        config = write_config(tmp_path)
        cli.main(["fit", "--config", config])
        assert cli.main(["render", "--config", config]) == 2
        assert "[render]" in capsys.readouterr().err

    def test_non_convergence_exit_code(self, tmp_path, monkeypatch) -> None:
        def stuck(target, n, weights, seed, starts):
            centers = np.zeros((target.n_classes, n))
            centers[:, 0] = np.arange(target.n_classes)
            return build_embedding(target, centers, target.radii, weights, converged=False)

        monkeypatch.setattr(cli, "optimize", stuck)
        config = write_config(tmp_path)
        cli.main(["fit", "--config", config])
        assert cli.main(["embed", "--config", config]) == 3
        embedding = json.loads((tmp_path / "out" / "embedding.json").read_text())["embedding"]
        assert embedding["converged"] is False

    def test_failed_stage_removes_partial_artifacts(self, tmp_path, monkeypatch, capsys) -> None:
        def broken(*args, **kwargs):
            raise RuntimeError("disk full")

        config = write_config(tmp_path, inference={"enabled": False})
        cli.main(["run", "--config", config])
        (tmp_path / "out" / "scene.json").unlink()
        (tmp_path / "out" / "scene.svg").unlink()
        monkeypatch.setattr(cli, "render_values_diagram", broken)
        assert cli.main(["render", "--config", config]) == 1
        assert not (tmp_path / "out" / "scene.svg").exists()
        assert "[render] disk full" in capsys.readouterr().err

    def test_mds_only(self, tmp_path) -> None:
        config = write_config(tmp_path, inference={"enabled": False})
        assert cli.main(["run", "--config", config, "--mds-only"]) == 0
        assert json.loads((tmp_path / "out" / "embedding.json").read_text())["embedding"]["method"] == "mds"


class TestValidation:
    @pytest.mark.parametrize(
        "flags",
        [
            pytest.param(["--dim", "4"], id="dim"),
            pytest.param(["--estimator", "nope"], id="estimator"),
            pytest.param(["--alpha-level", "2"], id="alpha_level"),
            pytest.param(["--resamples", "0"], id="resamples"),
        ],
    )
    def test_bad_flags(self, tmp_path, flags) -> None:
        assert cli.main(["run", "--config", write_config(tmp_path), *flags]) == 2

    def test_missing_config(self, tmp_path) -> None:
        assert cli.main(["fit", "--config", str(tmp_path / "absent.yaml"), "--out", str(tmp_path / "out")]) == 2

    def test_missing_input_file(self, tmp_path) -> None:
        assert cli.main(["fit", "--input", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "out")]) == 2

    @pytest.mark.parametrize(
        "flags",
        [
            pytest.param(["--dims", "4,x"], id="dims"),
            pytest.param(["--sizes", "ten"], id="sizes"),
            pytest.param(["--distributions", "BALL,TORUS"], id="distribution"),
        ],
    )
    def test_bad_bench_lists(self, tmp_path, capsys, flags) -> None:
        assert cli.main(["bench", "--repetitions", "1", "--out", str(tmp_path), *flags]) == 2
        err = capsys.readouterr().err
        assert err.startswith("h2s: ")
        assert "Traceback" not in err

    def test_unexpected_error_exits_one(self, tmp_path, monkeypatch, capsys) -> None:
        def broken(args):
            raise KeyError("boom")

        monkeypatch.setattr(cli, "cmd_simulate", broken)
        assert cli.main(["simulate", "--out", str(tmp_path)]) == 1
        assert "h2s: 'boom'" in capsys.readouterr().err

    @pytest.mark.parametrize(
        ("error", "code"),
        [
            (ValidationError("bad"), 2),
            (ConvergenceError("stuck"), 3),
            (StageError("fit", ValidationError("bad")), 2),
            (StageError("embed", ConvergenceError("stuck")), 3),
            (StageError("render", OSError("disk")), 1),
        ],
    )
    def test_exit_codes(self, error, code) -> None:
        assert cli.exit_code(error) == code


class TestInputs:
    def test_simulate_then_run(self, tmp_path) -> None:
        sim = tmp_path / "sim"
        assert cli.main(["simulate", "--kind", "CONCENTRIC", "--dimension", "10", "--samples", "25", "--out", str(sim)]) == 0
        truth = json.loads((sim / "truth.json").read_text())
        assert [s["radius"] for s in truth["ensemble"]["spheres"]] == [1.0, 0.5]
        args = ["run", "--input", str(sim / "data.csv"), "--out", str(tmp_path / "out"), "--resamples", "100"]
        assert cli.main(args) == 0
        assert (tmp_path / "out" / "inference.json").exists()

    def test_distance_input(self, tmp_path) -> None:
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(size=(20, 6)), rng.normal(size=(20, 6)) + 4.0])
        np.savetxt(tmp_path / "d.csv", squareform(pdist(X)), delimiter=",", fmt="%.17g")
        (tmp_path / "labels.txt").write_text("\n".join(["a"] * 20 + ["b"] * 20) + "\n")
        args = [
            "run",
            "--input", str(tmp_path / "d.csv"),
            "--format", "distance",
            "--labels", str(tmp_path / "labels.txt"),
            "--dimension", "6",
            "--estimator", "DIST",
            "--out", str(tmp_path / "out"),
        ]
        assert cli.main(args) == 0
        out = tmp_path / "out"
        assert json.loads((out / "model.json").read_text())["ensemble"] is None
        assert not (out / "inference.json").exists()
        assert (out / "scene.svg").exists()

    def test_distance_input_rejects_point_estimator(self, tmp_path) -> None:
        np.savetxt(tmp_path / "d.csv", squareform(pdist(np.arange(6.0)[:, None])), delimiter=",")
        (tmp_path / "labels.txt").write_text("a\na\na\nb\nb\nb\n")
        args = ["fit", "--input", str(tmp_path / "d.csv"), "--format", "distance", "--labels", str(tmp_path / "labels.txt"),
                "--dimension", "1", "--out", str(tmp_path / "out")]
        assert cli.main(args) == 2


class TestTools:
    def test_bench(self, tmp_path) -> None:
        args = ["bench", "--estimators", "ADAPTIVE,DCC", "--distributions", "BALL", "--dims", "4", "--sizes", "30",
                "--repetitions", "3", "--out", str(tmp_path)]
        assert cli.main(args) == 0
        with open(tmp_path / "bench.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [row["name"] for row in rows] == ["ADAPTIVE", "DCC"]
        assert (tmp_path / "bench.json").exists()

    def test_bench_convergence(self, tmp_path) -> None:
        args = ["bench", "--mode", "convergence", "--distributions", "BALL", "--dims", "8", "--sizes", "50",
                "--repetitions", "2", "--out", str(tmp_path)]
        assert cli.main(args) == 0
        assert (tmp_path / "convergence.csv").exists()

    def test_bench_calibration(self, tmp_path) -> None:
        args = ["bench", "--mode", "calibration", "--test", "SEPARATION", "--distributions", "BALL", "--dims", "2",
                "--sizes", "20", "--simulations", "3", "--resamples", "100", "--out", str(tmp_path)]
        assert cli.main(args) == 0
        with open(tmp_path / "calibration.csv", newline="") as f:
            assert next(csv.DictReader(f))["name"] == "SEPARATION"

    def test_derive_tables_feed_fitting(self, tmp_path) -> None:
        assert cli.main(["derive-tables", "--repetitions", "1", "--out", str(tmp_path)]) == 0
        tables = json.loads((tmp_path / "tables.json").read_text())
        assert set(tables) == {"xi", "inv_zeta"}
        config = write_config(tmp_path, inference={"enabled": False})
        assert cli.main(["fit", "--config", config, "--tables", str(tmp_path / "tables.json")]) == 0
