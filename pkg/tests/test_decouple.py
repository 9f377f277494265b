import time

import numpy as np
import pytest
from scipy import ndimage as ndi

from data import make_sample
from decouple import (
    COMPONENT_STRUCTURE,
    cache_path,
    decouple,
    distance_to_background,
    load_decoupled,
    save_decoupled,
)
from train import DecoupledDataset


def brute_force_distance(mask: np.ndarray) -> np.ndarray:
    fg = mask.astype(bool)
    out = np.zeros(mask.shape, dtype=np.float64)
    background = np.argwhere(~fg)
    if len(background) == 0:
        out[:] = max(mask.shape)
        return out
    for r, c in np.argwhere(fg):
        out[r, c] = np.sqrt(((background - (r, c)) ** 2).sum(axis=1)).min()
    return out


def blob_mask(rng: np.random.Generator, size: int, components: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=np.uint8)
    for _ in range(components):
        r = int(rng.integers(1, max(2, size // 8)))
        cy, cx = rng.integers(0, size, size=2)
        mask[max(0, cy - r):cy + r + 1, max(0, cx - r):cx + r + 1] = 1
    return mask


def test_all_background_gives_zeros():
    assert not distance_to_background(np.zeros((6, 7))).any()


def test_single_pixel_distance_is_one():
    mask = np.zeros((5, 5), dtype=np.uint8)
    mask[2, 2] = 1
    d = distance_to_background(mask)
    assert d[2, 2] == 1.0
    assert d.sum() == 1.0


def test_all_foreground_uses_sentinel():
    d = distance_to_background(np.ones((4, 9)))
    assert np.all(d == 9.0)


def test_square_matches_brute_force():
    mask = np.zeros((9, 9), dtype=np.uint8)
    mask[2:7, 2:7] = 1
    assert np.allclose(distance_to_background(mask), brute_force_distance(mask), atol=1e-9)


def test_random_masks_match_brute_force(rng):
    start = time.time()
    for _ in range(200):
        h, w = rng.integers(1, 17, size=2)
        mask = (rng.random((h, w)) < rng.random()).astype(np.uint8)
        assert np.allclose(distance_to_background(mask), brute_force_distance(mask), atol=1e-9)
    assert time.time() - start < 30


def test_empty_mask_decouples_to_zeros():
    label = decouple(np.zeros((8, 8)))
    assert not label.interior.any() and not label.boundary.any()


def test_single_pixel_target():
    mask = np.zeros((7, 7), dtype=np.uint8)
    mask[3, 3] = 1
    label = decouple(mask)
    assert label.interior[3, 3] == 1.0
    assert label.boundary[3, 3] == 0.0


def test_per_component_normalization():
    mask = np.zeros((24, 24), dtype=np.uint8)
    mask[2:5, 2:5] = 1      # 3x3
    mask[10:21, 10:21] = 1  # 11x11
    label = decouple(mask)
    labels, count = ndi.label(mask, structure=COMPONENT_STRUCTURE)
    assert count == 2
    for k in (1, 2):
        assert label.interior[labels == k].max() == pytest.approx(1.0)
    assert label.interior[3, 3] == pytest.approx(1.0)
    assert label.interior[15, 15] == pytest.approx(1.0)


def test_reconstruction_identity(rng):
    start = time.time()
    for _ in range(100):
        size = int(rng.integers(32, 257))
        mask = blob_mask(rng, size, int(rng.integers(0, 6)))
        label = decouple(mask)
        assert label.reconstruction_error() <= 1e-6
        background = mask == 0
        assert not label.interior[background].any()
        assert not label.boundary[background].any()
        assert label.interior.min() >= 0.0 and label.interior.max() <= 1.0
        assert label.boundary.min() >= 0.0 and label.boundary.max() <= 1.0
    assert time.time() - start < 10


def test_interior_support_equals_gt():
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[4:12, 3:9] = 1
    label = decouple(mask)
    assert np.array_equal(label.interior > 0, mask > 0)


def test_interior_grows_towards_the_center():
    mask = np.zeros((21, 21), dtype=np.uint8)
    mask[3:18, 3:18] = 1
    interior = decouple(mask).interior
    row = interior[10, 3:11]
    assert np.all(np.diff(row) >= 0)


@pytest.mark.parametrize("dy, dx", [(0, 0), (3, -2), (-4, 5)])
def test_translation_equivariance(dy, dx):
    mask = np.zeros((32, 32), dtype=np.uint8)
    mask[10:16, 12:19] = 1
    mask[20, 8] = 1
    base = decouple(mask)
    shifted = decouple(np.roll(mask, (dy, dx), axis=(0, 1)))
    assert np.allclose(shifted.interior, np.roll(base.interior, (dy, dx), axis=(0, 1)))
    assert np.allclose(shifted.boundary, np.roll(base.boundary, (dy, dx), axis=(0, 1)))


def test_cache_round_trip(tmp_path):
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[5:9, 5:11] = 1
    label = decouple(mask)
    path = save_decoupled(str(tmp_path), "s1", label)
    assert path == cache_path(str(tmp_path), "s1")

    loaded = load_decoupled(str(tmp_path), "s1", mask)
    assert np.array_equal(loaded.interior, label.interior)
    assert np.array_equal(loaded.boundary, label.boundary)
    assert load_decoupled(str(tmp_path), "s1", np.zeros((8, 8))) is None
    assert load_decoupled(str(tmp_path), "missing", mask) is None



def test_stale_cache_is_ignored(tmp_path):
    old = np.zeros((16, 16), dtype=np.uint8)
    old[2:6, 2:6] = 1
    save_decoupled(str(tmp_path), "s1", decouple(old))

    new = np.zeros_like(old)
    new[9:14, 8:12] = 1
    assert load_decoupled(str(tmp_path), "s1", new) is None


def test_dataset_recomputes_stale_cache(tmp_path):
    old = np.zeros((32, 32), dtype=np.uint8)
    old[2:6, 2:6] = 1
    save_decoupled(str(tmp_path), "s1", decouple(old))

    new = np.zeros_like(old)
    new[20:25, 10:14] = 1
    dataset = DecoupledDataset([make_sample("s1", np.zeros((32, 32), dtype=np.float32), new)], cache_root=str(tmp_path))
    assert dataset.labels[0].reconstruction_error() <= 1e-6
    assert np.array_equal(dataset.labels[0].interior, decouple(new).interior)
    assert load_decoupled(str(tmp_path), "s1", new) is not None
