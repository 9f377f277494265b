# backbone.py

from collections import OrderedDict
from typing import List, Optional

import torch
from torch import nn

from config import BackboneConfig
from errors import ShapeError


def check_input_size(height: int, width: int) -> None:
    """The encoder halves resolution five times, so both dims must be multiples of 32."""
    if height % 32 or width % 32 or height <= 0 or width <= 0:
        raise ShapeError(f"input {height}x{width} is not divisible by 32")


def init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            if m.bias is not None:
                nn.init.constant_(m.bias, 0)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.constant_(m.weight, 1)
            nn.init.constant_(m.bias, 0)


class BasicBlock(nn.Module):
    """Two 3x3 conv-BN layers with an identity (or 1x1 projected) shortcut."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)

        self.shortcut: Optional[nn.Module] = None
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.shortcut is None else self.shortcut(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


def _stem(in_channels: int, out_channels: int, blocks: int) -> nn.Sequential:
    layers: "OrderedDict[str, nn.Module]" = OrderedDict()
    layers["conv"] = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1, bias=False)
    layers["bn"] = nn.BatchNorm2d(out_channels)
    layers["relu"] = nn.ReLU(inplace=True)
    for b in range(blocks):
        layers[f"block{b}"] = BasicBlock(out_channels, out_channels)
    return nn.Sequential(layers)


def _stage(in_channels: int, out_channels: int, blocks: int) -> nn.Sequential:
    layers: "OrderedDict[str, nn.Module]" = OrderedDict()
    for b in range(blocks):
        layers[f"block{b}"] = BasicBlock(in_channels if b == 0 else out_channels, out_channels, stride=2 if b == 0 else 1)
    return nn.Sequential(layers)


class Backbone(nn.Module):
    """
    Residual encoder producing the feature pyramid F_1..F_depth.

    Stage 1 is a stride-2 stem (plus cfg.blocks_per_stage[0] residual blocks),
    so F_1 is at H/2; every later stage starts with a stride-2 block. F_i
    therefore has shape (N, C_i, H / 2^i, W / 2^i).
    """

    def __init__(self, cfg: BackboneConfig, depth: int = 5, in_channels: int = 1):
        super().__init__()
        cfg.validate()
        if not 1 <= depth <= 5:
            raise ShapeError(f"backbone depth must lie in 1..5, got {depth}")
        self.depth = depth
        self.channels = list(cfg.stage_channels[:depth])

        stages: "OrderedDict[str, nn.Module]" = OrderedDict()
        stages["stage1"] = _stem(in_channels, cfg.stage_channels[0], cfg.blocks_per_stage[0])
        for i in range(1, depth):
            stages[f"stage{i + 1}"] = _stage(cfg.stage_channels[i - 1], cfg.stage_channels[i], cfg.blocks_per_stage[i])
        self.stages = nn.ModuleDict(stages)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        check_input_size(x.shape[-2], x.shape[-1])
        pyramid: List[torch.Tensor] = []
        for stage in self.stages.values():
            x = stage(x)
            pyramid.append(x)
        return pyramid


def load_encoder_weights(encoder: nn.Module, path: str) -> None:
    """Load externally supplied weights; keys must match the encoder's own state dict."""
    state = torch.load(path, map_location="cpu")
    if isinstance(state, dict) and "parameters" in state:
        state = state["parameters"]
    missing, unexpected = encoder.load_state_dict(state, strict=False)
    print(f"[info] Loaded encoder weights from {path} (missing={len(missing)}, unexpected={len(unexpected)})")


class StreamProjection(nn.Module):
    """Per-level 1x1 conv + BN + ReLU mapping C_i channels to the decoder width D."""

    def __init__(self, in_channels: List[int], width: int):
        super().__init__()
        self.width = width
        self.levels = nn.ModuleList(
            nn.Sequential(
                OrderedDict(
                    conv=nn.Conv2d(c, width, 1, bias=False),
                    bn=nn.BatchNorm2d(width),
                    relu=nn.ReLU(inplace=True),
                )
            )
            for c in in_channels
        )
        init_weights(self)

    def forward(self, pyramid: List[torch.Tensor]) -> List[torch.Tensor]:
        if len(pyramid) != len(self.levels):
            raise ShapeError(f"projection expects {len(self.levels)} levels, got {len(pyramid)}")
        return [proj(f) for proj, f in zip(self.levels, pyramid)]

    @torch.no_grad()
    def reset_to_identity(self) -> None:
        """Identity conv and BN that cancels its default running statistics (eval mode)."""
        for level in self.levels:
            conv, bn = level.conv, level.bn
            if conv.in_channels != conv.out_channels:
                raise ShapeError("identity projection needs D == C_i")
            conv.weight.zero_()
            conv.weight[:, :, 0, 0].copy_(torch.eye(conv.out_channels))
            bn.reset_running_stats()
            bn.weight.fill_((1.0 + bn.eps) ** 0.5)
            bn.bias.zero_()


def project_stream(projection: StreamProjection, pyramid: List[torch.Tensor]) -> List[torch.Tensor]:
    return projection(pyramid)
