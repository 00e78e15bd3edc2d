"""
Training loop for the try-on model.

Stages:
    joint  occlusion learner + denoiser on L_GMF + λ2·L_OCC
    gol    occlusion learner alone on L_OCC

Writes `loss.csv`, `model.lft` (plus `config.json` beside it) and
`metrics.json` with held-out occlusion-map accuracy.
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from core_utils import write_csv, write_json
from ..dataset.quadruplet import Batch, Quadruplet
from ..error_handling import DataError, UsageError
from ..gol import attention_map, occlusion_contrast, occlusion_map_mae
from ..numeric.optim import AdamW
from ..numeric.tensor import no_grad
from .pipeline import TryOnModel, denoise_loss, gol_loss

logger = logging.getLogger(__name__)

LOSS_FIELDS = ["step", "total", "l_gmf", "l_occ"]


@dataclass
class TrainSummary:
    stage: str
    ablation: str
    steps: int
    initial_loss: float
    final_loss: float
    trainable_values: int
    checkpoint: str
    held_out: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def held_out_occlusion(model: TryOnModel, samples: Sequence[Quadruplet], batch_size: int = 16) -> Dict[str, float]:
    """Mean occlusion-map MAE and visible-minus-occluded contrast over `samples`."""
    if not samples:
        return {}
    maes, contrasts = [], []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            batch = Batch.stack(samples[start:start + batch_size])
            a = attention_map(batch.inner, batch.outer, model.gol).numpy()
            for k in range(len(batch)):
                maes.append(occlusion_map_mae(a[k], batch.inner_visibility[k]))
                contrasts.append(occlusion_contrast(a[k], batch.inner_visibility[k], batch.layer_inner[k]))
    contrasts = [c for c in contrasts if np.isfinite(c)]
    return {
        "occlusion_mae": float(np.mean(maes)),
        "occlusion_contrast": float(np.mean(contrasts)) if contrasts else float("nan"),
        "samples": len(samples),
    }


class Trainer:
    """
    Runs one training stage and writes its artifacts into `run_dir`.
    """

    def __init__(self, model: TryOnModel, config: dict, run_dir: str, stage: Optional[str] = None):
        self.model = model
        self.config = config
        self.train_config = config["train"]
        self.run_dir = run_dir
        self.stage = stage or self.train_config["stage"]
        if self.stage not in ("joint", "gol"):
            raise UsageError(f"Unknown training stage '{self.stage}'")
        if self.stage == "gol" and not model.uses_gol:
            raise UsageError("The gol stage needs the occlusion learner; it cannot run with the base ablation")
        self.rng = np.random.default_rng(self.train_config["seed"])
        self.params = model.trainable(self.stage, self.train_config["trainable"])
        self.optimizer = AdamW(
            self.params,
            learning_rate=self.train_config["learning_rate"],
            beta1=self.train_config["beta1"],
            beta2=self.train_config["beta2"],
            eps=self.train_config["eps"],
            weight_decay=self.train_config["weight_decay"],
        )
        self.history: List[Dict[str, float]] = []

    @property
    def checkpoint_path(self) -> str:
        return os.path.join(self.run_dir, "model.lft")

    def _fit_codec(self, samples: Sequence[Quadruplet]):
        steps = self.train_config["codec_fit_steps"]
        if self.model.codec.mode != "learned" or steps == 0:
            return
        images = np.concatenate([np.stack([s.person for s in samples]),
                                 np.stack([s.inner for s in samples]),
                                 np.stack([s.outer for s in samples])])
        self.model.codec.fit(images, steps, self.rng, batch_size=self.train_config["batch_size"])

    def step(self, batch: Batch) -> Dict[str, float]:
        self.optimizer.zero_grad()
        if self.stage == "gol":
            loss = gol_loss(batch, self.model)
            record = {"total": loss.item(), "l_gmf": 0.0, "l_occ": loss.item()}
        else:
            breakdown = denoise_loss(batch, self.model, self.rng)
            loss = breakdown.total
            record = {"total": loss.item(), "l_gmf": breakdown.gmf, "l_occ": breakdown.occ}
        loss.backward()
        self.optimizer.step()
        return record

    def save(self, path: Optional[str] = None) -> str:
        path = path or self.checkpoint_path
        self.model.save(path)
        write_json(os.path.join(os.path.dirname(path), "config.json"), self.config)
        return path

    def train(self, train_samples: Sequence[Quadruplet], test_samples: Sequence[Quadruplet] = ()) -> TrainSummary:
        """
        Run the configured number of steps on `train_samples`.

        Raises:
            DataError: when there are no training samples
        """
        if not train_samples:
            raise DataError("No training samples", code="LFT-E300",
                            suggestions=["Check the dataset split in manifest.json"])
        steps = self.train_config["steps"]
        batch_size = min(self.train_config["batch_size"], len(train_samples))
        log_every = self.train_config["log_every"]
        checkpoint_every = self.train_config["checkpoint_every"]
        logger.info(f"Training stage={self.stage} ablation={self.model.ablation} steps={steps} "
                    f"batch={batch_size} params={int(np.sum([p.tensor.size for p in self.params]))}")

        if self.stage == "joint":
            self._fit_codec(train_samples)

        progress = tqdm(range(1, steps + 1), desc=f"train[{self.stage}]", unit="step")
        for step in progress:
            index = self.rng.choice(len(train_samples), size=batch_size, replace=False)
            record = self.step(Batch.stack([train_samples[i] for i in index]))
            record["step"] = step
            self.history.append(record)
            progress.set_postfix(loss=f"{record['total']:.4f}")
            if step % log_every == 0:
                logger.info(f"step {step}: total={record['total']:.5f} "
                            f"l_gmf={record['l_gmf']:.5f} l_occ={record['l_occ']:.5f}")
            if checkpoint_every and step % checkpoint_every == 0 and step < steps:
                self.model.save(os.path.join(self.run_dir, f"model_step{step}.lft"))

        write_csv(os.path.join(self.run_dir, "loss.csv"), LOSS_FIELDS, self.history)
        checkpoint = self.save()
        held_out = held_out_occlusion(self.model, test_samples) if self.model.uses_gol else {}
        summary = TrainSummary(
            stage=self.stage,
            ablation=self.model.ablation,
            steps=steps,
            initial_loss=self.history[0]["total"] if self.history else float("nan"),
            final_loss=self.history[-1]["total"] if self.history else float("nan"),
            trainable_values=int(np.sum([p.tensor.size for p in self.params])),
            checkpoint=checkpoint,
            held_out=held_out,
        )
        write_json(os.path.join(self.run_dir, "metrics.json"), summary.to_dict())
        if held_out:
            logger.info(f"Held-out occlusion MAE {held_out['occlusion_mae']:.4f}, "
                        f"contrast {held_out['occlusion_contrast']:.4f}")
        return summary
