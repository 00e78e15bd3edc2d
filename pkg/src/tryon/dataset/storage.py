"""
Dataset persistence.

Layout:
    <root>/manifest.json
    <root>/<split>/<id>/{inner,outer,person,agnostic,mask_upper,inner_crop,
                         layer_inner,layer_outer,inner_visible}.png

Images are 8-bit RGB PNGs and masks 8-bit grayscale (nonzero = inside), so
arrays quantised to multiples of 1/255 round-trip exactly.
"""

import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError
from tqdm import tqdm

from core_utils import read_json, write_json
from ..error_handling import DataError, InputError
from .quadruplet import IMAGE_ROLES, MASK_ROLES, ROLE_FILES, Quadruplet

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _open(path: str) -> Image.Image:
    if not os.path.isfile(path):
        raise DataError(f"File not found: {path}", code="LFT-E301")
    try:
        image = Image.open(path)
        image.load()
        return image
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"Unreadable image {path}: {e}", code="LFT-E303") from e


def read_image(path: str) -> np.ndarray:
    """PNG -> float64 (3, H, W) in [0, 1]."""
    array = np.asarray(_open(path).convert("RGB"), dtype=np.float64) / 255.0
    return np.transpose(array, (2, 0, 1))


def read_mask(path: str) -> np.ndarray:
    """PNG -> float64 (H, W) in {0, 1}."""
    return (np.asarray(_open(path).convert("L")) > 0).astype(np.float64)


def _to_bytes(array: np.ndarray, path: str) -> np.ndarray:
    scaled = np.asarray(array, dtype=np.float64) * 255.0
    levels = np.round(scaled)
    if np.any(np.abs(scaled - levels) > 1e-6) or levels.min() < 0 or levels.max() > 255:
        raise InputError(f"Refusing to write {path}: values are not multiples of 1/255 in [0, 1]",
                         code="LFT-E801", suggestions=["Quantise with np.round(x * 255) / 255 first"])
    return levels.astype(np.uint8)


def write_image(path: str, image: np.ndarray):
    Image.fromarray(np.transpose(_to_bytes(image, path), (1, 2, 0))).save(path)


def write_mask(path: str, mask: np.ndarray):
    Image.fromarray(((np.asarray(mask) > 0) * 255).astype(np.uint8)).save(path)


def sample_dir(root: str, sample: Quadruplet) -> str:
    return os.path.join(root, sample.split, sample.id)


def save(samples: Sequence[Quadruplet], root: str, config: Optional[Dict[str, Any]] = None,
         seed: Optional[int] = None):
    """Write every sample and the manifest under `root`."""
    os.makedirs(root, exist_ok=True)
    for sample in tqdm(samples, desc="save", unit="sample", leave=False):
        directory = sample_dir(root, sample)
        os.makedirs(directory, exist_ok=True)
        for role in IMAGE_ROLES:
            write_image(os.path.join(directory, ROLE_FILES[role]), sample.role(role))
        for role in MASK_ROLES:
            write_mask(os.path.join(directory, ROLE_FILES[role]), sample.role(role))
    manifest = {
        "count": len(samples),
        "ids": [s.id for s in samples],
        "splits": {s.id: s.split for s in samples},
        "meta": {s.id: s.meta for s in samples},
        "config": config or {},
        "seed": seed,
    }
    write_json(os.path.join(root, MANIFEST), manifest)
    logger.info(f"Saved {len(samples)} samples to {root}")


def read_manifest(root: str) -> Dict[str, Any]:
    path = os.path.join(root, MANIFEST)
    if not os.path.isfile(path):
        raise DataError(f"No {MANIFEST} in {root}", code="LFT-E301",
                        suggestions=["Point --data at a directory written by gen-data"])
    return read_json(path)


def _load_one(root: str, sample_id: str, split: str, meta: Dict[str, Any]) -> Quadruplet:
    directory = os.path.join(root, split, sample_id)
    missing = [role for role, name in ROLE_FILES.items() if not os.path.isfile(os.path.join(directory, name))]
    if missing:
        raise DataError(f"Sample '{sample_id}' is missing {', '.join(missing)}", code="LFT-E302",
                        context={"sample": sample_id, "missing": missing})
    arrays = {role: read_image(os.path.join(directory, ROLE_FILES[role])) for role in IMAGE_ROLES}
    arrays.update({role: read_mask(os.path.join(directory, ROLE_FILES[role])) for role in MASK_ROLES})
    return Quadruplet(id=sample_id, split=split, meta=dict(meta), **arrays)


def load_report(root: str, split: Optional[str] = None) -> Tuple[List[Quadruplet], Dict[str, str]]:
    """
    Load the samples listed in the manifest, optionally one split only.

    Returns:
        (loaded samples, {sample id: failure message})
    """
    manifest = read_manifest(root)
    samples, failures = [], {}
    for sample_id in manifest["ids"]:
        sample_split = manifest["splits"].get(sample_id, "train")
        if split is not None and sample_split != split:
            continue
        try:
            samples.append(_load_one(root, sample_id, sample_split, manifest.get("meta", {}).get(sample_id, {})))
        except DataError as e:
            failures[sample_id] = str(e)
            logger.warning(f"Skipping sample {sample_id}: {e}")
    return samples, failures


def load(root: str, split: Optional[str] = None, strict: bool = False) -> List[Quadruplet]:
    """
    Load a saved dataset; with `strict`, any failing sample is an error.

    Raises:
        DataError: strict mode and at least one sample failed
    """
    samples, failures = load_report(root, split)
    if strict and failures:
        raise DataError(
            f"{len(failures)} sample(s) failed to load from {root}",
            code="LFT-E302",
            details="\n".join(f"{k}: {v}" for k, v in sorted(failures.items())),
            context={"failed": sorted(failures)},
        )
    return samples
