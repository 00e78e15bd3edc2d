"""
Desk-scale direction checks. Each trains several small models and takes
3-seed medians; run with LAYERFIT_SLOW=1.
"""

import csv
import os

import numpy as np
import pytest

from config import build_run_config
from tryon.commands import run_inference
from tryon.dataset.storage import save
from tryon.dataset.synth import SynthConfig, generate
from tryon.gmf.pipeline import TryOnModel
from tryon.gmf.trainer import Trainer
from tryon.metrics.evaluate import evaluate_directories

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("acceptance"))
    samples = generate(SynthConfig(size=64, seed=0, train_fraction=0.8), 640, progress=False)
    save(samples, os.path.join(root, "data"))
    train = [s for s in samples if s.split == "train"]
    test = [s for s in samples if s.split == "test"][:32]
    return {"root": root, "data": os.path.join(root, "data"), "train": train, "test": test, "runs": {}}


def _train(corpus, ablation, seed, steps=2000):
    key = (ablation, seed, steps)
    if key in corpus["runs"]:
        return corpus["runs"][key]
    config = build_run_config({"train": {"ablation": ablation, "steps": steps, "seed": seed, "log_every": 500},
                               "model": {"init_seed": seed}, "sample": {"sampler": "ddim", "ddim_steps": 25}})
    run_dir = os.path.join(corpus["root"], f"{ablation}-{seed}-{steps}")
    model = TryOnModel(config)
    summary = Trainer(model, config, run_dir).train(corpus["train"], corpus["test"])
    corpus["runs"][key] = (model, config, summary, run_dir)
    return corpus["runs"][key]


def _score(corpus, model, config, run_dir, scale):
    out = os.path.join(run_dir, f"s{scale:g}")
    run_inference(model, corpus["test"], out, {**config["sample"], "scale": scale},
                  os.path.join(run_dir, "model.lft"))
    return evaluate_directories(os.path.join(out, "gen"), corpus["data"], corpus["data"], out)["corpus"]


def test_denoising_loss_halves(tmp_path):
    config = build_run_config({"data": {"image_size": 32},
                               "train": {"steps": 5000, "batch_size": 8, "log_every": 1000}})
    samples = generate(SynthConfig(size=32, seed=3), 256, progress=False)
    trainer = Trainer(TryOnModel(config, ablation="base"), config, str(tmp_path))
    trainer.train(samples)
    losses = np.array([r["l_gmf"] for r in trainer.history])
    moving = np.convolve(losses, np.ones(100) / 100, mode="valid")
    assert moving.min() < 0.5 * moving[0]


def test_supervised_occlusion_beats_unsupervised(corpus):
    supervised = [_train(corpus, "gol+locc", seed)[2].held_out["occlusion_mae"] for seed in SEEDS]
    unsupervised = [_train(corpus, "gol", seed)[2].held_out["occlusion_mae"] for seed in SEEDS]
    assert np.median(supervised) < np.median(unsupervised)


def test_occlusion_learner_does_not_cost_ssim(corpus):
    full, base = [], []
    for seed in SEEDS:
        model, config, _, run_dir = _train(corpus, "gol+locc", seed)
        full.append(_score(corpus, model, config, run_dir, 2.5)["ssim"])
        model, config, _, run_dir = _train(corpus, "base", seed)
        base.append(_score(corpus, model, config, run_dir, 2.5)["ssim"])
    assert np.median(full) >= np.median(base)


def test_guidance_improves_lacd(corpus):
    guided, unguided = [], []
    for seed in SEEDS:
        model, config, _, run_dir = _train(corpus, "gol+locc", seed)
        guided.append(_score(corpus, model, config, run_dir, 2.5)["lacd"])
        unguided.append(_score(corpus, model, config, run_dir, 0.0)["lacd"])
    assert np.median(guided) <= np.median(unguided)


def test_loss_csv_matches_history(corpus):
    _, _, summary, run_dir = _train(corpus, "gol+locc", 0, steps=20)
    with open(os.path.join(run_dir, "loss.csv")) as f:
        totals = [float(r["total"]) for r in csv.DictReader(f)]
    assert totals[0] == pytest.approx(summary.initial_loss)
    assert totals[-1] == pytest.approx(summary.final_loss)
