import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

import layerfit  # noqa: E402
from conftest import TINY_OVERRIDES  # noqa: E402
from core_utils import read_json, sha256_file, write_json  # noqa: E402


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated dataset and a trained tiny checkpoint shared by the command tests."""
    root = str(tmp_path_factory.mktemp("cli"))
    config = os.path.join(root, "tiny.json")
    write_json(config, TINY_OVERRIDES)
    data, run = os.path.join(root, "data"), os.path.join(root, "run")
    assert layerfit.main(["gen-data", "--config", config, "--out", data, "--seed", "5"]) == 0
    assert layerfit.main(["train", "--config", config, "--data", data, "--out", run]) == 0
    return {"root": root, "config": config, "data": data, "run": run,
            "checkpoint": os.path.join(run, "model.lft")}


def _infer(workspace, out, *extra):
    return layerfit.main(["infer", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                          "--out", out, "--sampler", "ddim", *extra])


class TestPipelineCommands:
    def test_gen_data_outputs(self, workspace):
        manifest = read_json(os.path.join(workspace["data"], "manifest.json"))
        assert manifest["count"] == 6 and manifest["seed"] == 5
        assert os.path.isfile(os.path.join(workspace["data"], "run.json"))

    def test_train_outputs(self, workspace):
        run = workspace["run"]
        for name in ("model.lft", "config.json", "loss.csv", "metrics.json", "layerfit.log", "run.json"):
            assert os.path.isfile(os.path.join(run, name)), name
        assert read_json(os.path.join(run, "config.json"))["model"]["timesteps"] == 50

    def test_infer_then_eval(self, workspace):
        out = os.path.join(workspace["root"], "infer")
        assert _infer(workspace, out) == 0
        manifest = read_json(os.path.join(out, "manifest.json"))
        assert manifest["checkpoint_sha256"] == sha256_file(workspace["checkpoint"])
        assert manifest["sampler"] == "ddim" and manifest["timesteps"] == 50
        assert all(os.path.isfile(os.path.join(out, "gen", f"{i}.png")) for i in manifest["ids"])

        report_dir = os.path.join(workspace["root"], "eval")
        assert layerfit.main(["eval", "--gen", os.path.join(out, "gen"), "--gt", workspace["data"],
                              "--masks", workspace["data"], "--out", report_dir, "--norm", "raw"]) == 0
        report = read_json(os.path.join(report_dir, "report.json"))
        assert report["corpus"]["count"] == len(manifest["ids"])
        assert report["settings"]["norm"] == "raw"

    def test_infer_is_reproducible(self, workspace):
        outs = [os.path.join(workspace["root"], f"repeat{k}") for k in range(2)]
        for out in outs:
            assert layerfit.main(["infer", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                                  "--out", out, "--seed", "3", "--scale", "2.5"]) == 0
        ids = read_json(os.path.join(outs[0], "manifest.json"))["ids"]
        for sample_id in ids:
            first, second = (sha256_file(os.path.join(o, "gen", f"{sample_id}.png")) for o in outs)
            assert first == second

    def test_sweep_scale(self, workspace):
        out = os.path.join(workspace["root"], "sweep")
        assert layerfit.main(["sweep-scale", "--checkpoint", workspace["checkpoint"], "--data", workspace["data"],
                              "--out", out, "--scales", "0,1"]) == 0
        summary = read_json(os.path.join(out, "summary.json"))
        assert [row["scale"] for row in summary["scales"]] == [0.0, 1.0]
        assert os.path.isfile(os.path.join(out, "summary.csv"))
        assert os.path.isdir(os.path.join(out, "s0", "gen"))

    def test_gradcheck_subset(self, tmp_path):
        out = str(tmp_path)
        assert layerfit.main(["gradcheck", "--suite", "add", "--suite", "matmul", "--seeds", "2",
                              "--out", out]) == 0
        results = read_json(os.path.join(out, "gradcheck.json"))
        assert set(results["summary"]) == {"add", "matmul"}
        assert all(entry["passed"] for entry in results["summary"].values())

    def test_gradcheck_builds_networks_from_config(self, tmp_path):
        root = str(tmp_path)
        config = os.path.join(root, "gol.json")
        write_json(config, {"model": {"gol_channels": [2, 2, 3, 3, 4], "gol_mapping_channels": 2}})
        runs = {}
        for name, extra in (("tiny", []), ("configured", ["--config", config])):
            out = os.path.join(root, name)
            assert layerfit.main(["gradcheck", "--suite", "gol", "--seeds", "1", "--max-coords", "2",
                                  "--out", out, *extra]) == 0
            runs[name] = read_json(os.path.join(out, "gradcheck.json"))
        assert runs["configured"]["model"]["gol_channels"] == [2, 2, 3, 3, 4]
        assert runs["tiny"]["model"]["gol_channels"] == [2, 2, 3, 3, 3]
        assert runs["configured"]["summary"]["gol"]["passed"]


class TestExitCodes:
    def test_bad_config(self, tmp_path):
        config = os.path.join(str(tmp_path), "bad.json")
        write_json(config, {"data": {"image_size": 48}})
        assert layerfit.main(["gen-data", "--config", config, "--out", os.path.join(str(tmp_path), "d")]) == 2

    def test_missing_dataset(self, tmp_path):
        assert layerfit.main(["train", "--data", os.path.join(str(tmp_path), "nothing"),
                              "--out", os.path.join(str(tmp_path), "run")]) == 3

    def test_missing_checkpoint(self, workspace, tmp_path):
        assert layerfit.main(["infer", "--checkpoint", os.path.join(str(tmp_path), "none.lft"),
                              "--data", workspace["data"], "--out", str(tmp_path)]) == 4

    def test_output_inside_dataset(self, workspace):
        assert _infer(workspace, os.path.join(workspace["data"], "gen_here")) == 1

    def test_eval_output_inside_dataset(self, workspace, tmp_path):
        before = sorted(os.listdir(workspace["data"]))
        for out in (workspace["data"], os.path.join(workspace["data"], "eval_here")):
            assert layerfit.main(["eval", "--gen", str(tmp_path), "--gt", workspace["data"],
                                  "--masks", workspace["data"], "--out", out]) == 1
        assert sorted(os.listdir(workspace["data"])) == before

    def test_eval_output_inside_mask_directory(self, workspace, tmp_path):
        masks = os.path.join(str(tmp_path), "masks")
        os.makedirs(masks)
        assert layerfit.main(["eval", "--gen", str(tmp_path), "--gt", workspace["data"],
                              "--masks", masks, "--out", os.path.join(masks, "report")]) == 1
        assert os.listdir(masks) == []

    def test_unknown_gradcheck_suite(self):
        assert layerfit.main(["gradcheck", "--suite", "nonexistent", "--seeds", "1"]) == 1
