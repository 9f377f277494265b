# decouple.py

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage as ndi

DECOUPLED_DIR = "decoupled"
RECONSTRUCTION_TOL = 1e-6

# 8-connectivity
COMPONENT_STRUCTURE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DecoupledLabel:
    """
    GT mask split into an interior map and a boundary map.

    interior + boundary == gt pixelwise; both are zero on background.
    """
    gt: np.ndarray        # uint8 H x W in {0, 1}
    interior: np.ndarray  # float32 H x W in [0, 1]
    boundary: np.ndarray  # float32 H x W in [0, 1]

    def reconstruction_error(self) -> float:
        recon = self.interior.astype(np.float64) + self.boundary.astype(np.float64)
        return float(np.abs(recon - self.gt).max()) if self.gt.size else 0.0


def distance_to_background(mask: np.ndarray) -> np.ndarray:
    """
    Exact Euclidean distance from each foreground pixel to the nearest background pixel.

    Background pixels get 0. When there is no background at all every pixel
    gets max(H, W) as a sentinel.
    """
    fg = np.asarray(mask).astype(bool)
    if not fg.any():
        return np.zeros(fg.shape, dtype=np.float64)
    if fg.all():
        return np.full(fg.shape, float(max(fg.shape)), dtype=np.float64)
    return ndi.distance_transform_edt(fg)


def decouple(mask: np.ndarray) -> DecoupledLabel:
    """
    Per 8-connected component c: interior = d / max_c(d), boundary = 1 - interior.
    A single-pixel component therefore has interior 1 and boundary 0.
    """
    gt = np.asarray(mask).astype(np.uint8)
    dist = distance_to_background(gt)

    labels, count = ndi.label(gt, structure=COMPONENT_STRUCTURE)
    interior = np.zeros(gt.shape, dtype=np.float64)
    if count:
        dmax = np.asarray(ndi.maximum(dist, labels, index=np.arange(1, count + 1)), dtype=np.float64)
        fg = labels > 0
        interior[fg] = dist[fg] / dmax[labels[fg] - 1]

    boundary = gt.astype(np.float64) - interior
    return DecoupledLabel(
        gt=gt,
        interior=interior.astype(np.float32),
        boundary=boundary.astype(np.float32),
    )


# ---------- CACHE FILES ----------

def cache_path(root: str, sample_id: str) -> str:
    return os.path.join(root, DECOUPLED_DIR, f"{sample_id}.npz")


def save_decoupled(root: str, sample_id: str, label: DecoupledLabel) -> str:
    """Write interior/boundary maps as float32 row-major arrays in an .npz container."""
    path = cache_path(root, sample_id)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    np.savez(
        path,
        interior=np.ascontiguousarray(label.interior, dtype=np.float32),
        boundary=np.ascontiguousarray(label.boundary, dtype=np.float32),
    )
    return path


def load_decoupled(root: str, sample_id: str, gt: np.ndarray) -> Optional[DecoupledLabel]:
    """
    Cached label for sample_id, or None when no cache matches the mask: wrong
    shape, or interior + boundary no longer reconstructs it (mask rewritten).
    """
    path = cache_path(root, sample_id)
    if not os.path.isfile(path):
        return None
    with np.load(path) as data:
        interior = data["interior"].astype(np.float32)
        boundary = data["boundary"].astype(np.float32)
    if interior.shape != gt.shape or boundary.shape != gt.shape:
        return None
    label = DecoupledLabel(gt=np.asarray(gt, dtype=np.uint8), interior=interior, boundary=boundary)
    if label.reconstruction_error() > RECONSTRUCTION_TOL:
        print(f"[warn] stale decoupled cache for '{sample_id}'; recomputing")
        return None
    return label
