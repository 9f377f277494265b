# losses.py

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from config import LossWeights
from decouple import DecoupledLabel
from errors import ConfigError, ShapeError
from model import ModelOutputs

EPS = 1e-6


@dataclass
class LabelBatch:
    """Decoupled supervision as (N, 1, H, W) float tensors."""
    gt: torch.Tensor
    interior: torch.Tensor
    boundary: torch.Tensor

    @classmethod
    def from_labels(cls, labels: Sequence[DecoupledLabel], dtype: torch.dtype = torch.float32) -> "LabelBatch":
        def stack(arrays):
            return torch.from_numpy(np.stack([np.asarray(a, dtype=np.float32) for a in arrays])[:, None]).to(dtype)

        return cls(
            gt=stack([l.gt for l in labels]),
            interior=stack([l.interior for l in labels]),
            boundary=stack([l.boundary for l in labels]),
        )

    def target(self, stream: str) -> torch.Tensor:
        return {"fused": self.gt, "interior": self.interior, "boundary": self.boundary}[stream]

    def to(self, device) -> "LabelBatch":
        return LabelBatch(self.gt.to(device), self.interior.to(device), self.boundary.to(device))


def _check_shapes(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")


def soft_iou_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """1 - sum(p*t) / (sum(p) + sum(t) - sum(p*t) + eps), pooled over the whole batch."""
    _check_shapes(pred, target)
    inter = (pred * target).sum()
    union = pred.sum() + target.sum() - inter
    return 1.0 - inter / (union + eps)


def bce_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    _check_shapes(pred, target)
    return F.binary_cross_entropy(pred.clamp(eps, 1.0 - eps), target)


LOSSES = {"soft_iou": soft_iou_loss, "bce": bce_loss}

STREAM_WEIGHTS = (("fused", "w_fused"), ("interior", "w_interior"), ("boundary", "w_boundary"))


def total_loss(
    outputs: ModelOutputs,
    labels: LabelBatch,
    w: LossWeights,
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """
    w_fused * L(fused, gt) + w_interior * L(interior_map, interior) + w_boundary * L(boundary_map, boundary).

    Absent streams contribute nothing; a positive weight on an absent stream
    is a configuration error. Deep-supervision side maps, when present, add
    their mean loss under the stream's weight.
    Returns the total and the per-stream (unweighted) values.
    """
    loss_fn = LOSSES.get(w.kind)
    if loss_fn is None:
        raise ConfigError(f"unknown loss kind '{w.kind}'")

    total = outputs.fused_map.new_zeros(())
    parts: Dict[str, float] = {}
    for stream, attr in STREAM_WEIGHTS:
        weight = getattr(w, attr)
        pred = outputs.stream_map(stream)
        if pred is None:
            if weight > 0:
                raise ConfigError(f"loss weight {attr}={weight} is set but the model has no {stream} stream")
            parts[stream] = 0.0
            continue

        target = labels.target(stream)
        value = loss_fn(pred, target)
        side = outputs.side_maps.get(stream, [])
        if side:
            value = value + torch.stack([loss_fn(s, target) for s in side]).mean()
        parts[stream] = float(value.detach())
        if weight > 0:
            total = total + weight * value
    return total, parts
