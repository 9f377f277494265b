# data.py

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage as ndi
from scipy.optimize import brentq

from config import SynthConfig
from errors import DataError, DomainError, LoadError, ShapeError, SynthesisError

IMAGES_DIR = "images"
MASKS_DIR = "masks"
SPLITS_DIR = "splits"

BACKGROUND_RANGE = (0.1, 0.6)
MAX_PLACEMENT_TRIES = 200


@dataclass(frozen=True)
class Sample:
    """
    Grayscale infrared image paired with its binary target mask.

    image: float32 H x W in [0, 1]
    mask:  uint8 H x W with values in {0, 1}
    Both arrays are made read-only so a Sample can be handed between threads.
    """
    id: str
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.image.ndim != 2 or self.image.shape != self.mask.shape:
            raise ShapeError(
                f"sample '{self.id}': image {self.image.shape} and mask {self.mask.shape} must be equal 2-D shapes"
            )
        if not np.all(np.isfinite(self.image)) or self.image.min() < 0.0 or self.image.max() > 1.0:
            raise DataError(f"sample '{self.id}': image pixels must be finite and lie in [0, 1]")
        if not np.isin(self.mask, (0, 1)).all():
            raise DataError(f"sample '{self.id}': mask values must be exactly 0 or 1")
        self.image.setflags(write=False)
        self.mask.setflags(write=False)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


def make_sample(sample_id: str, image: np.ndarray, mask: np.ndarray) -> Sample:
    return Sample(
        id=sample_id,
        image=np.ascontiguousarray(image, dtype=np.float32),
        mask=np.ascontiguousarray(mask, dtype=np.uint8),
    )


# ---------- SIRST LAYOUT: LOADING ----------

def read_split(root: str, split: str) -> List[str]:
    """Ids listed in <root>/splits/<split>.txt, in file order."""
    path = os.path.join(root, SPLITS_DIR, f"{split}.txt")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"split file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def _load_one(root: str, sample_id: str, size: Tuple[int, int], mask_tolerance: int) -> Sample:
    image_path = os.path.join(root, IMAGES_DIR, f"{sample_id}.png")
    mask_path = os.path.join(root, MASKS_DIR, f"{sample_id}.png")
    if not os.path.isfile(image_path):
        raise LoadError(sample_id, f"image file missing: {image_path}")
    if not os.path.isfile(mask_path):
        raise LoadError(sample_id, f"mask file missing: {mask_path}")

    height, width = size
    with Image.open(image_path) as im:
        im = im.convert("L")
        if im.size != (width, height):
            im = im.resize((width, height), Image.BILINEAR)
        image = np.asarray(im, dtype=np.float32) / 255.0

    with Image.open(mask_path) as mk:
        raw = np.asarray(mk.convert("L"), dtype=np.uint8)
    ambiguous = (raw > mask_tolerance) & (raw < 255 - mask_tolerance)
    if ambiguous.any():
        raise DataError(
            f"sample '{sample_id}': {int(ambiguous.sum())} mask pixel(s) are neither ~0 nor ~255"
        )
    mask = (raw >= 128).astype(np.uint8)
    if mask.shape != (height, width):
        mask = np.asarray(Image.fromarray(mask).resize((width, height), Image.NEAREST), dtype=np.uint8)

    return make_sample(sample_id, image, mask)


def load_dataset(
    root: str,
    split: str,
    size: Tuple[int, int] = (256, 256),
    mask_tolerance: int = 32,
    num_workers: int = 0,
) -> List[Sample]:
    """
    Load a split from the public SIRST layout:

        <root>/images/<id>.png, <root>/masks/<id>.png, <root>/splits/<split>.txt

    Images are scaled to [0, 1] and resized bilinearly; masks are binarized
    at 128 and resized nearest-neighbor. Samples come back in split-file order.
    """
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset root not found: {root}")
    ids = read_split(root, split)

    if num_workers > 0 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            return list(pool.map(lambda i: _load_one(root, i, size, mask_tolerance), ids))
    return [_load_one(root, i, size, mask_tolerance) for i in ids]


# ---------- SIRST LAYOUT: WRITING ----------

def ensure_layout(root: str) -> None:
    for sub in (IMAGES_DIR, MASKS_DIR, SPLITS_DIR):
        os.makedirs(os.path.join(root, sub), exist_ok=True)


def save_sample(root: str, sample: Sample) -> None:
    """Write a sample as 8-bit PNGs (mask 0/255, lossless)."""
    ensure_layout(root)
    image = np.round(sample.image * 255.0).astype(np.uint8)
    Image.fromarray(image, mode="L").save(os.path.join(root, IMAGES_DIR, f"{sample.id}.png"))
    mask = (sample.mask * 255).astype(np.uint8)
    Image.fromarray(mask, mode="L").save(os.path.join(root, MASKS_DIR, f"{sample.id}.png"))


def write_split(root: str, split: str, ids: Sequence[str]) -> None:
    ensure_layout(root)
    path = os.path.join(root, SPLITS_DIR, f"{split}.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sample_id in ids:
            f.write(f"{sample_id}\n")


def write_dataset(root: str, splits: Dict[str, Sequence[Sample]]) -> None:
    for split, samples in splits.items():
        for sample in samples:
            save_sample(root, sample)
        write_split(root, split, [s.id for s in samples])


# ---------- SIGNAL-TO-CLUTTER RATIO ----------

def scr(image: np.ndarray, mask: np.ndarray) -> float:
    """
    Signal-to-clutter ratio: (mean of target pixels - mean of background) / std of background.
    """
    image = np.asarray(image, dtype=np.float64)
    fg = np.asarray(mask).astype(bool)
    if image.shape != fg.shape:
        raise ShapeError(f"scr: image {image.shape} and mask {fg.shape} differ")
    if not fg.any():
        raise DomainError("scr: mask has no foreground pixel")
    if fg.all():
        raise DomainError("scr: mask has no background pixel")

    background = image[~fg]
    sigma_b = float(background.std())
    if sigma_b == 0.0:
        raise DomainError("scr: background variance is zero")
    return float((image[fg].mean() - background.mean()) / sigma_b)


# ---------- SYNTHETIC SCENES ----------

def _clutter(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    field = rng.standard_normal((cfg.height, cfg.width))
    if cfg.clutter_smoothness > 0:
        field = ndi.gaussian_filter(field, sigma=cfg.clutter_smoothness, mode="reflect")
    lo, hi = BACKGROUND_RANGE
    span = field.max() - field.min()
    if span == 0:
        return np.full_like(field, (lo + hi) / 2.0)
    return lo + (field - field.min()) / span * (hi - lo)


def _place_targets(rng: np.random.Generator, cfg: SynthConfig) -> List[Tuple[int, int, float]]:
    """Non-overlapping (cy, cx, radius) triples; the 2 px gap keeps 8-connected components apart."""
    placed: List[Tuple[int, int, float]] = []
    r_min, r_max = cfg.target_radius_range
    for k in range(cfg.num_targets):
        for _ in range(MAX_PLACEMENT_TRIES):
            r = float(rng.uniform(r_min, r_max))
            margin = int(math.ceil(r)) + 1
            if cfg.height - margin <= margin or cfg.width - margin <= margin:
                continue
            cy = int(rng.integers(margin, cfg.height - margin))
            cx = int(rng.integers(margin, cfg.width - margin))
            if all(math.hypot(cy - py, cx - px) > r + pr + 2.0 for py, px, pr in placed):
                placed.append((cy, cx, r))
                break
        else:
            raise SynthesisError(
                f"could not place target {k + 1}/{cfg.num_targets} without overlap "
                f"after {MAX_PLACEMENT_TRIES} tries"
            )
    return placed


def _solve_amplitude(background: np.ndarray, blobs: np.ndarray, mask: np.ndarray, target: float) -> float:
    """Smallest amplitude a with scr(clip(background + a * blobs), mask) == target."""

    def gap(a: float) -> float:
        return scr(np.clip(background + a * blobs, 0.0, 1.0), mask) - target

    lo = 0.0
    if gap(lo) >= 0:
        raise SynthesisError(f"background clutter alone already reaches SCR {target}")
    a = 0.01
    while a <= 16.0:
        if gap(a) >= 0:
            return float(brentq(gap, lo, a, xtol=1e-10))
        lo, a = a, a * 1.25
    raise SynthesisError(f"target SCR {target} is unreachable with intensities clipped to [0, 1]")


def synthesize_sample(cfg: SynthConfig, sample_id: str | None = None) -> Sample:
    """
    Deterministic synthetic infrared scene.

    Background is Gaussian-smoothed white noise rescaled to [0.1, 0.6]. Each
    target is a 2-D Gaussian blob whose half-peak contour is a disc of the
    drawn radius; the mask is that half-peak region. A shared amplitude is
    solved so the realized SCR matches cfg.target_scr.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    background = _clutter(rng, cfg)
    targets = _place_targets(rng, cfg)

    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width]
    blobs = np.zeros((cfg.height, cfg.width), dtype=np.float64)
    mask = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    for cy, cx, r in targets:
        sigma = r / math.sqrt(2.0 * math.log(2.0))
        g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
        blobs += g
        mask[g > 0.5] = 1

    image = background
    if targets:
        amplitude = _solve_amplitude(background, blobs, mask, cfg.target_scr)
        image = np.clip(background + amplitude * blobs, 0.0, 1.0)

    return make_sample(sample_id or f"synth_{cfg.seed:06d}", image, mask)


def synthesize_dataset(cfg: SynthConfig) -> Dict[str, List[Sample]]:
    """
    num_samples training scenes and test_samples test scenes, ids synth_0000...
    Scene k uses its own seed derived from cfg.seed, so a split is reproducible
    independent of the other.
    """
    cfg.validate()
    total = cfg.num_samples + cfg.test_samples
    samples = [
        synthesize_sample(replace(cfg, seed=cfg.seed * 100_003 + k), sample_id=f"synth_{k:04d}")
        for k in range(total)
    ]
    splits = {"train": samples[:cfg.num_samples]}
    if cfg.test_samples:
        splits["test"] = samples[cfg.num_samples:]
    return splits
