"""
Quadruplet sample model and batching.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

# Role name -> file name inside a sample directory.
ROLE_FILES = {
    "inner": "inner.png",
    "outer": "outer.png",
    "person": "person.png",
    "agnostic": "agnostic.png",
    "upper_mask": "mask_upper.png",
    "inner_crop": "inner_crop.png",
    "layer_inner": "layer_inner.png",
    "layer_outer": "layer_outer.png",
    "inner_visibility": "inner_visible.png",
}

IMAGE_ROLES = ("inner", "outer", "person", "agnostic", "inner_crop")
MASK_ROLES = ("upper_mask", "layer_inner", "layer_outer", "inner_visibility")


@dataclass
class Quadruplet:
    """
    One sample: inner garment g_i, outer garment g_o, dressed person x_p,
    clothing-agnostic person x_a, plus the oracle masks.

    Images are float64 (3, H, W) in [0, 1]; masks are float64 (H, W) in {0, 1}.
    `upper_mask` is 1 on the region to regenerate, which is blanked in x_a.
    """
    id: str
    inner: np.ndarray
    outer: np.ndarray
    person: np.ndarray
    agnostic: np.ndarray
    upper_mask: np.ndarray
    inner_crop: np.ndarray
    layer_inner: np.ndarray
    layer_outer: np.ndarray
    inner_visibility: np.ndarray
    split: str = "train"
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def layer_masks(self) -> List[np.ndarray]:
        """Layer regions ordered inner -> outer."""
        return [self.layer_inner, self.layer_outer]

    @property
    def size(self):
        return self.person.shape[1], self.person.shape[2]

    def role(self, name: str) -> np.ndarray:
        return getattr(self, name)


def _is_binary(mask: np.ndarray) -> bool:
    return bool(np.all((mask == 0.0) | (mask == 1.0)))


def check_invariants(sample: Quadruplet) -> List[str]:
    """Return a description of every violated invariant (empty when the sample is valid)."""
    problems = []
    height, width = sample.size
    for role in IMAGE_ROLES:
        image = sample.role(role)
        if image.shape != (3, height, width):
            problems.append(f"{role} has shape {image.shape}, expected {(3, height, width)}")
        elif image.min() < 0.0 or image.max() > 1.0:
            problems.append(f"{role} has values outside [0, 1]")
    for role in MASK_ROLES:
        mask = sample.role(role)
        if mask.shape != (height, width):
            problems.append(f"{role} has shape {mask.shape}, expected {(height, width)}")
        elif not _is_binary(mask):
            problems.append(f"{role} is not binary")
    if problems:
        return problems

    keep = 1.0 - sample.upper_mask
    if not np.array_equal(sample.agnostic, sample.person * keep):
        problems.append("agnostic != person * (1 - upper_mask)")
    visible, inner, outer = (sample.inner_visibility > 0), (sample.layer_inner > 0), (sample.layer_outer > 0)
    if np.any(visible & ~inner):
        problems.append("inner_visibility is not a subset of the inner layer")
    if not np.array_equal(visible, inner & ~outer):
        problems.append("inner_visibility != inner layer minus outer layer")
    if not np.array_equal(sample.inner_crop, sample.person * sample.inner_visibility):
        problems.append("inner_crop != person * inner_visibility")
    if np.any(sample.inner_crop[:, ~visible] != 0.0):
        problems.append("inner_crop is nonzero outside inner_visibility")
    if np.any((inner | outer) & (sample.upper_mask <= 0)):
        problems.append("garment layers extend outside the upper-body mask")
    return problems


@dataclass
class Batch:
    """Samples stacked along a leading axis."""
    ids: List[str]
    agnostic: np.ndarray
    outer: np.ndarray
    inner: np.ndarray
    inner_crop: np.ndarray
    person: np.ndarray
    upper_mask: np.ndarray
    inner_visibility: np.ndarray
    layer_inner: np.ndarray

    def __len__(self):
        return len(self.ids)

    @classmethod
    def stack(cls, samples: Sequence[Quadruplet]) -> "Batch":
        return cls(
            ids=[s.id for s in samples],
            agnostic=np.stack([s.agnostic for s in samples]),
            outer=np.stack([s.outer for s in samples]),
            inner=np.stack([s.inner for s in samples]),
            inner_crop=np.stack([s.inner_crop for s in samples]),
            person=np.stack([s.person for s in samples]),
            upper_mask=np.stack([s.upper_mask for s in samples]),
            inner_visibility=np.stack([s.inner_visibility for s in samples]),
            layer_inner=np.stack([s.layer_inner for s in samples]),
        )
