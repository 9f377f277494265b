import numpy as np
import pytest
import torch

from config import LossWeights
from decouple import decouple
from errors import ConfigError, ShapeError
from gradcheck import check_input
from losses import EPS, LabelBatch, bce_loss, soft_iou_loss, total_loss
from model import ModelOutputs


def sample_outputs(batch: int = 2, size: int = 8, streams=("interior", "boundary")) -> ModelOutputs:
    maps = {name: torch.rand(batch, 1, size, size) * 0.98 + 0.01 for name in ("fused",) + tuple(streams)}
    return ModelOutputs(fused_map=maps["fused"], interior_map=maps.get("interior"), boundary_map=maps.get("boundary"))


def sample_labels(batch: int = 2, size: int = 8) -> LabelBatch:
    rng = np.random.default_rng(0)
    masks = [(rng.random((size, size)) > 0.7).astype(np.uint8) for _ in range(batch)]
    return LabelBatch.from_labels([decouple(m) for m in masks])


def test_perfect_prediction_has_near_zero_loss():
    target = torch.zeros(1, 1, 4, 4)
    target[..., 1:3, 1:3] = 1
    assert soft_iou_loss(target, target).item() <= 1e-6


def test_disjoint_prediction_has_loss_near_one():
    target = torch.zeros(1, 1, 4, 4)
    target[..., :2, :] = 1
    assert soft_iou_loss(1 - target, target).item() == pytest.approx(1.0, abs=1e-6)


def test_hard_maps_give_one_minus_iou():
    rng = np.random.default_rng(3)
    p = torch.from_numpy((rng.random((8, 8)) > 0.5).astype(np.float64))
    t = torch.from_numpy((rng.random((8, 8)) > 0.5).astype(np.float64))
    inter = (p * t).sum()
    iou = inter / (p.sum() + t.sum() - inter)
    assert soft_iou_loss(p, t).item() == pytest.approx(1 - iou.item(), abs=1e-6)


def test_soft_iou_gradient_float64():
    target = torch.rand(1, 1, 4, 4, dtype=torch.float64)
    pred = torch.rand(1, 1, 4, 4, dtype=torch.float64) * 0.9 + 0.05
    checks = check_input(lambda p: soft_iou_loss(p, target), pred, num_checks=16)
    assert max(p.relative_error for p in checks) <= 1e-6


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        soft_iou_loss(torch.rand(1, 1, 4, 4), torch.rand(1, 1, 4, 5))


def test_constant_prediction_grid_search_prefers_the_target():
    target = torch.zeros(1, 1, 8, 8)
    target[..., 2:6, 2:6] = 1
    for loss in (soft_iou_loss, bce_loss):
        values = {p: loss(torch.full_like(target, p), target).item() for p in np.arange(0.1, 1.0, 0.1)}
        assert min(values.values()) >= 0.0
        assert loss(target.clamp(EPS, 1 - EPS), target).item() < min(values.values())


def test_fused_only_weights_equal_plain_soft_iou():
    out, labels = sample_outputs(), sample_labels()
    total, _ = total_loss(out, labels, LossWeights(1.0, 0.0, 0.0))
    assert total.item() == soft_iou_loss(out.fused_map, labels.gt).item()


def test_total_loss_is_linear_in_weights():
    out, labels = sample_outputs(), sample_labels()
    lf = soft_iou_loss(out.fused_map, labels.gt).item()
    li = soft_iou_loss(out.interior_map, labels.interior).item()
    lb = soft_iou_loss(out.boundary_map, labels.boundary).item()

    total, parts = total_loss(out, labels, LossWeights(0.5, 2.0, 1.5))
    assert total.item() == pytest.approx(0.5 * lf + 2.0 * li + 1.5 * lb, rel=1e-6)
    assert parts == pytest.approx({"fused": lf, "interior": li, "boundary": lb})

    doubled, _ = total_loss(out, labels, LossWeights(1.0, 4.0, 3.0))
    assert doubled.item() == pytest.approx(2 * total.item(), rel=1e-6)


def test_removed_stream_is_excluded_exactly():
    full_out, labels = sample_outputs(), sample_labels()
    single = ModelOutputs(fused_map=full_out.fused_map, interior_map=full_out.interior_map)
    w = LossWeights().for_variant("no_boundary")
    assert w.w_boundary == 0.0

    single_total, parts = total_loss(single, labels, w)
    zeroed_total, _ = total_loss(full_out, labels, w)
    assert single_total.item() == zeroed_total.item()
    assert parts["boundary"] == 0.0


def test_positive_weight_on_absent_stream_is_a_config_error():
    out = sample_outputs(streams=("interior",))
    with pytest.raises(ConfigError):
        total_loss(out, sample_labels(), LossWeights())


def test_bce_kind():
    out, labels = sample_outputs(), sample_labels()
    total, parts = total_loss(out, labels, LossWeights(1.0, 0.0, 0.0, kind="bce"))
    assert total.item() == pytest.approx(bce_loss(out.fused_map, labels.gt).item())
    assert total.item() > 0


def test_label_batch_shapes():
    labels = sample_labels(batch=3, size=8)
    assert labels.gt.shape == labels.interior.shape == labels.boundary.shape == (3, 1, 8, 8)
    assert torch.allclose(labels.interior + labels.boundary, labels.gt, atol=1e-6)
