# overlay.py

import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage as ndi

from decouple import COMPONENT_STRUCTURE
from errors import DataError

# detected target: red, false alarm: yellow, missed detection: green
CATEGORY_COLORS: Dict[str, Tuple[int, int, int]] = {
    "detected": (255, 0, 0),
    "false_alarm": (255, 255, 0),
    "missed": (0, 255, 0),
}

CIRCLE_MARGIN = 3.0


@dataclass
class Annotation:
    category: str
    center: Tuple[float, float]  # (row, col)
    radius: float


def _bounding_circle(region: np.ndarray) -> Tuple[Tuple[float, float], float]:
    rows, cols = np.nonzero(region)
    r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
    center = ((r0 + r1) / 2.0, (c0 + c1) / 2.0)
    radius = math.hypot(r1 - r0, c1 - c0) / 2.0 + CIRCLE_MARGIN
    return center, radius


def classify_components(pred: np.ndarray, gt: np.ndarray) -> List[Annotation]:
    """
    One category per 8-connected component of pred | gt: "detected" when it
    holds both predicted and GT pixels, "false_alarm" for prediction only,
    "missed" for GT only.
    """
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise DataError(f"prediction {pred.shape} and ground truth {gt.shape} differ")

    labels, count = ndi.label(pred | gt, structure=COMPONENT_STRUCTURE)
    annotations: List[Annotation] = []
    for k in range(1, count + 1):
        region = labels == k
        has_pred, has_gt = pred[region].any(), gt[region].any()
        if has_pred and has_gt:
            category = "detected"
        elif has_pred:
            category = "false_alarm"
        else:
            category = "missed"
        annotations.append(Annotation(category, *_bounding_circle(region)))
    return annotations


def _dotted_circle(draw: ImageDraw.ImageDraw, center: Tuple[float, float], radius: float, color) -> None:
    cy, cx = center
    box = [cx - radius, cy - radius, cx + radius, cy + radius]
    for start in range(0, 360, 30):
        draw.arc(box, start, start + 15, fill=color, width=1)


def render_overlay(base: np.ndarray, annotations: List[Annotation]) -> np.ndarray:
    """RGB uint8 image: grayscale base with one dotted circle per annotation."""
    gray = np.round(np.clip(base, 0.0, 1.0) * 255.0).astype(np.uint8)
    canvas = Image.fromarray(gray, mode="L").convert("RGB")
    draw = ImageDraw.Draw(canvas)
    for a in annotations:
        _dotted_circle(draw, a.center, a.radius, CATEGORY_COLORS[a.category])
    return np.asarray(canvas)


def _read_binary(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def _read_gray(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def _index_dir(directory: str, suffix: str = "") -> Dict[str, str]:
    out = {}
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() != ".png":
            continue
        if suffix:
            if not stem.endswith(suffix):
                continue
            stem = stem[: -len(suffix)]
        out[stem] = os.path.join(directory, name)
    return out


def compare_dirs(pred_dir: str, gt_dir: str, out_dir: str, image_dir: Optional[str] = None) -> Dict[str, List[Annotation]]:
    """
    Write <out_dir>/<id>_overlay.png for every id.

    gt_dir is either a folder of mask PNGs or a dataset root with masks/
    (and images/, used as the overlay base when present). Predictions are
    read from <id>_fused.png, falling back to <id>.png.
    """
    if os.path.isdir(os.path.join(gt_dir, "masks")):
        image_dir = image_dir or os.path.join(gt_dir, "images")
        gt_dir = os.path.join(gt_dir, "masks")

    gt_files = _index_dir(gt_dir)
    pred_files = _index_dir(pred_dir, "_fused") or _index_dir(pred_dir)
    if set(gt_files) != set(pred_files):
        missing = sorted(set(gt_files) ^ set(pred_files))
        raise DataError(f"prediction and ground-truth ids differ: {', '.join(missing)}")

    os.makedirs(out_dir, exist_ok=True)
    results: Dict[str, List[Annotation]] = {}
    for sample_id in sorted(gt_files):
        pred = _read_binary(pred_files[sample_id])
        gt = _read_binary(gt_files[sample_id])
        annotations = classify_components(pred, gt)

        base_path = os.path.join(image_dir, f"{sample_id}.png") if image_dir else None
        base = _read_gray(base_path) if base_path and os.path.isfile(base_path) else 0.25 * (pred | gt)
        if base.shape != pred.shape:
            base = 0.25 * (pred | gt)
        Image.fromarray(render_overlay(base, annotations)).save(os.path.join(out_dir, f"{sample_id}_overlay.png"))
        results[sample_id] = annotations
    print(f"[info] Wrote {len(results)} overlay(s) to {out_dir}")
    return results
