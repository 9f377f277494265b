import numpy as np
import pytest
from PIL import Image
from scipy import ndimage as ndi

from errors import DataError
from overlay import CATEGORY_COLORS, classify_components, compare_dirs, render_overlay


def two_targets() -> np.ndarray:
    gt = np.zeros((64, 64), dtype=np.uint8)
    gt[10:14, 10:14] = 1
    gt[40:43, 45:48] = 1
    return gt


def categories(annotations):
    return sorted(a.category for a in annotations)


def test_perfect_prediction_is_all_red():
    gt = two_targets()
    assert categories(classify_components(gt, gt)) == ["detected", "detected"]


def test_empty_prediction_is_all_green():
    gt = two_targets()
    assert categories(classify_components(np.zeros_like(gt), gt)) == ["missed", "missed"]


def test_one_of_each():
    gt = two_targets()
    pred = np.zeros_like(gt)
    pred[11:13, 11:15] = 1   # overlaps the first target
    pred[25:28, 25:28] = 1   # spurious
    annotations = classify_components(pred, gt)
    assert categories(annotations) == ["detected", "false_alarm", "missed"]

    detected = next(a for a in annotations if a.category == "detected")
    assert detected.center == pytest.approx((11.5, 12.0))


def test_single_pixel_overlap_counts_as_detection():
    gt = np.zeros((16, 16), dtype=np.uint8)
    gt[4:8, 4:8] = 1
    pred = np.zeros_like(gt)
    pred[7:10, 7:10] = 1
    assert categories(classify_components(pred, gt)) == ["detected"]


def test_target_hit_by_two_blobs_gets_one_circle():
    gt = np.zeros((32, 32), dtype=np.uint8)
    gt[10:20, 10:20] = 1
    pred = np.zeros_like(gt)
    pred[11:13, 11:13] = 1
    pred[16:18, 16:18] = 1
    annotations = classify_components(pred, gt)
    assert categories(annotations) == ["detected"]
    assert annotations[0].center == pytest.approx((14.5, 14.5))


def test_each_union_component_gets_exactly_one_category(rng):
    for _ in range(50):
        pred = (rng.random((24, 24)) > 0.9).astype(np.uint8)
        gt = (rng.random((24, 24)) > 0.9).astype(np.uint8)
        count = ndi.label(pred | gt, structure=np.ones((3, 3)))[1]
        assert len(classify_components(pred, gt)) == count


def test_shape_mismatch_is_a_data_error():
    with pytest.raises(DataError):
        classify_components(np.zeros((4, 4)), np.zeros((5, 5)))


def colored_components(rgb: np.ndarray, color) -> int:
    hit = np.all(rgb == np.array(color, dtype=np.uint8), axis=-1)
    # dashes of one circle are joined by a small closing
    joined = ndi.binary_closing(hit, structure=np.ones((3, 3)), iterations=4)
    return ndi.label(joined)[1]


def test_rendered_overlay_draws_one_circle_per_category():
    gt = two_targets()
    pred = np.zeros_like(gt)
    pred[11:13, 11:15] = 1
    pred[25:28, 25:28] = 1
    rgb = render_overlay(np.zeros(gt.shape), classify_components(pred, gt))
    assert rgb.shape == (64, 64, 3) and rgb.dtype == np.uint8
    for color in CATEGORY_COLORS.values():
        assert colored_components(rgb, color) == 1


def write_masks(directory, masks, suffix=""):
    directory.mkdir(parents=True, exist_ok=True)
    for sample_id, mask in masks.items():
        Image.fromarray((mask * 255).astype(np.uint8)).save(directory / f"{sample_id}{suffix}.png")


def test_compare_dirs_writes_overlays(tmp_path):
    gt = two_targets()
    write_masks(tmp_path / "gt" / "masks", {"a": gt, "b": gt})
    write_masks(tmp_path / "pred", {"a": gt, "b": np.zeros_like(gt)}, suffix="_fused")
    results = compare_dirs(str(tmp_path / "pred"), str(tmp_path / "gt"), str(tmp_path / "out"))

    assert categories(results["a"]) == ["detected", "detected"]
    assert categories(results["b"]) == ["missed", "missed"]
    assert (tmp_path / "out" / "a_overlay.png").exists()
    with Image.open(tmp_path / "out" / "b_overlay.png") as im:
        assert im.mode == "RGB" and im.size == (64, 64)


def test_compare_dirs_rejects_id_mismatch(tmp_path):
    gt = two_targets()
    write_masks(tmp_path / "gt", {"a": gt})
    write_masks(tmp_path / "pred", {"z": gt})
    with pytest.raises(DataError, match="a, z"):
        compare_dirs(str(tmp_path / "pred"), str(tmp_path / "gt"), str(tmp_path / "out"))
