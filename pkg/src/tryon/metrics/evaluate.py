"""
Batch evaluation of generated try-on images against ground truth.

Generated images are `<gen>/<id>.png`. Ground truth is `<gt>/<id>.png` or a
sample directory holding `person.png`. Layer masks are
`<masks>/<id>/layer_<k>.png` (k = 1 inner .. N outer) or a dataset sample
directory, whose visible inner region and outer region are the two layers.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from config import thread_cap
from core_utils import write_csv, write_json
from ..dataset.storage import read_image, read_mask
from ..error_handling import DataError
from .lacd import lacd
from .regions import derive_regions
from .ssim import ssim

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")


@dataclass
class SampleScore:
    id: str
    lacd: float
    lacd_layers: List[float]
    lacd_raw: float
    lacd_per_pixel: float
    ssim: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lacd": self.lacd,
            "lacd_layers": self.lacd_layers,
            "lacd_raw": self.lacd_raw,
            "lacd_per_pixel": self.lacd_per_pixel,
            "ssim": self.ssim,
        }


def find_sample_dir(root: str, sample_id: str) -> Optional[str]:
    """`<root>/<id>` or `<root>/<split>/<id>`, whichever exists."""
    for candidate in [os.path.join(root, sample_id)] + [os.path.join(root, s, sample_id) for s in SPLITS]:
        if os.path.isdir(candidate):
            return candidate
    return None


def ground_truth_path(gt_dir: str, sample_id: str) -> str:
    flat = os.path.join(gt_dir, f"{sample_id}.png")
    if os.path.isfile(flat):
        return flat
    sample_dir = find_sample_dir(gt_dir, sample_id)
    if sample_dir and os.path.isfile(os.path.join(sample_dir, "person.png")):
        return os.path.join(sample_dir, "person.png")
    raise DataError(f"No ground truth for sample '{sample_id}' under {gt_dir}", code="LFT-E302",
                    context={"sample": sample_id})


def layer_mask_paths(masks_dir: str, sample_id: str) -> List[str]:
    sample_dir = find_sample_dir(masks_dir, sample_id)
    if sample_dir is None:
        raise DataError(f"No mask directory for sample '{sample_id}' under {masks_dir}", code="LFT-E302",
                        context={"sample": sample_id})
    numbered = []
    k = 1
    while os.path.isfile(os.path.join(sample_dir, f"layer_{k}.png")):
        numbered.append(os.path.join(sample_dir, f"layer_{k}.png"))
        k += 1
    if numbered:
        return numbered
    dataset_layers = [os.path.join(sample_dir, "inner_visible.png"), os.path.join(sample_dir, "layer_outer.png")]
    if all(os.path.isfile(p) for p in dataset_layers):
        return dataset_layers
    raise DataError(f"Sample '{sample_id}' has no layer masks in {sample_dir}", code="LFT-E302",
                    context={"sample": sample_id},
                    suggestions=["Provide layer_1.png .. layer_N.png, inner first"])


def score_sample(sample_id: str, gen_path: str, gt_path: str, mask_paths: List[str],
                 lambda1: float, band_radius: int, norm: str) -> SampleScore:
    x_gen = read_image(gen_path)
    x_gt = read_image(gt_path)
    regions = derive_regions([read_mask(p) for p in mask_paths], band_radius)
    raw = lacd(x_gt, x_gen, regions, lambda1, norm="raw")
    per_pixel = lacd(x_gt, x_gen, regions, lambda1, norm="per-pixel")
    chosen = raw if norm == "raw" else per_pixel
    return SampleScore(sample_id, chosen.lacd, chosen.layers, raw.lacd, per_pixel.lacd, ssim(x_gt, x_gen))


def evaluate_directories(gen_dir: str, gt_dir: str, masks_dir: str, out_dir: str, lambda1: float = 3.0,
                         band_radius: int = 3, norm: str = "per-pixel", threads: Optional[int] = None) -> Dict:
    """
    Score every generated image and write `report.json` and `report.csv`.

    Returns:
        Dict: the JSON report
    """
    if not os.path.isdir(gen_dir):
        raise DataError(f"Generated image directory not found: {gen_dir}", code="LFT-E301")
    ids = sorted(os.path.splitext(name)[0] for name in os.listdir(gen_dir) if name.endswith(".png"))
    if not ids:
        raise DataError(f"No generated PNG files in {gen_dir}", code="LFT-E301")

    jobs = [(i, os.path.join(gen_dir, f"{i}.png"), ground_truth_path(gt_dir, i), layer_mask_paths(masks_dir, i))
            for i in ids]
    workers = threads or thread_cap()
    logger.info(f"Scoring {len(jobs)} samples with {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        scores = list(pool.map(lambda job: score_sample(*job, lambda1, band_radius, norm), jobs))

    n_layers = max(len(s.lacd_layers) for s in scores)
    corpus = {
        "count": len(scores),
        "lacd": float(np.mean([s.lacd for s in scores])),
        "lacd_raw": float(np.mean([s.lacd_raw for s in scores])),
        "lacd_per_pixel": float(np.mean([s.lacd_per_pixel for s in scores])),
        "ssim": float(np.mean([s.ssim for s in scores])),
    }
    report = {
        "settings": {"lambda1": lambda1, "band_radius": band_radius, "norm": norm,
                     "gen": gen_dir, "gt": gt_dir, "masks": masks_dir},
        "samples": [s.to_dict() for s in scores],
        "corpus": corpus,
    }
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "report.json"), report)
    fields = ["id", "lacd", "lacd_raw", "lacd_per_pixel", "ssim"] + [f"lacd_layer_{k + 1}" for k in range(n_layers)]
    rows = []
    for s in scores:
        row = {"id": s.id, "lacd": s.lacd, "lacd_raw": s.lacd_raw, "lacd_per_pixel": s.lacd_per_pixel, "ssim": s.ssim}
        row.update({f"lacd_layer_{k + 1}": v for k, v in enumerate(s.lacd_layers)})
        rows.append(row)
    write_csv(os.path.join(out_dir, "report.csv"), fields, rows)
    logger.info(f"Corpus LACD {corpus['lacd']:.4f} ({norm}), SSIM {corpus['ssim']:.4f}")
    return report
