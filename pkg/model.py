# model.py

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from backbone import Backbone, StreamProjection, check_input_size, init_weights, load_encoder_weights
from config import FOREGROUND_PRIOR_LOGIT, VARIANTS, ModelConfig
from errors import ConfigError, ShapeError
from mnim import MNIM

# variant -> (decoder kind, active streams)
VARIANT_LAYOUT: Dict[str, Tuple[str, Tuple[str, ...]]] = {
    "full": ("mnim", ("interior", "boundary")),
    "no_interior": ("mnim", ("boundary",)),
    "no_boundary": ("mnim", ("interior",)),
    "unet_decoder": ("unet", ("interior", "boundary")),
    "unetpp_decoder": ("unetpp", ("interior", "boundary")),
    "dnanet_decoder": ("dnanet", ("interior", "boundary")),
}


@dataclass
class ModelOutputs:
    """Sigmoid maps at full input resolution, shape (N, 1, H, W). Absent streams are None."""
    fused_map: torch.Tensor
    interior_map: Optional[torch.Tensor] = None
    boundary_map: Optional[torch.Tensor] = None
    # deep supervision: stream -> maps from rows 2..L
    side_maps: Dict[str, List[torch.Tensor]] = field(default_factory=dict)

    def stream_map(self, stream: str) -> Optional[torch.Tensor]:
        return {"fused": self.fused_map, "interior": self.interior_map, "boundary": self.boundary_map}[stream]


def _conv1x1(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        OrderedDict(
            conv=nn.Conv2d(in_channels, out_channels, 1, bias=False),
            bn=nn.BatchNorm2d(out_channels),
            relu=nn.ReLU(inplace=True),
        )
    )


def _upsample_to(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class PredictionHead(nn.Module):
    """
    1x1 conv to one logit channel, bilinear resize of the logits to the
    requested size, then sigmoid. Resizing logits rather than probabilities
    keeps the 0.5 contour free to fall between low-resolution pixel centres.
    """

    def __init__(self, in_channels: int, bias_init: float = FOREGROUND_PRIOR_LOGIT):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, 1, 1)
        nn.init.normal_(self.conv.weight, std=0.01)
        nn.init.constant_(self.conv.bias, bias_init)

    def forward(self, x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
        return torch.sigmoid(_upsample_to(self.conv(x), size))


class StreamDecoder(nn.Module):
    """One interior- or boundary-stream: encoder, projection to width D, nested decoder, head."""

    def __init__(self, cfg: ModelConfig, decoder: str, shared_encoder: Optional[Backbone] = None):
        super().__init__()
        self.mnim = MNIM(cfg.mnim, decoder)
        depth = self.mnim.seed_levels
        self.encoder = shared_encoder if shared_encoder is not None else Backbone(cfg.backbone, depth)
        self.projection = StreamProjection(self.encoder.channels, cfg.mnim.node_width)
        self.head = PredictionHead(cfg.mnim.node_width, cfg.head_bias_init)
        self.side_heads: Optional[nn.ModuleList] = None
        if cfg.deep_supervision and cfg.mnim.levels > 1:
            self.side_heads = nn.ModuleList(
                PredictionHead(cfg.mnim.node_width, cfg.head_bias_init) for _ in range(cfg.mnim.levels - 1)
            )

    def forward(self, images: torch.Tensor) -> Tuple[List[torch.Tensor], torch.Tensor, List[torch.Tensor]]:
        size = tuple(images.shape[-2:])
        pyramid = self.encoder(images)
        outputs = self.mnim(self.projection(pyramid))
        stream_map = self.head(outputs[0], size)
        side = []
        if self.side_heads is not None:
            side = [h(o, size) for h, o in zip(self.side_heads, outputs[1:])]
        return outputs, stream_map, side


class IBFM(nn.Module):
    """
    Interior-boundary fusion:
      1. resize every O^I_i, O^B_i to level-1 resolution
      2. C_i = 1x1 conv(O^I_i || O^B_i)
      3. G   = 1x1 conv(C_1 || ... || C_L)
      4. E   = 1x1 conv(g_1 * C_1 || ... || g_L * C_L), g_i = sigmoid(1x1 conv(C_i))
      5. out = sigmoid(1x1 conv(G + E) upsampled x2 to input resolution)
    """

    def __init__(self, levels: int, in_width: int, width: int, gate: str = "sigmoid", bias_init: float = FOREGROUND_PRIOR_LOGIT):
        super().__init__()
        self.levels = levels
        self.level_reduce = nn.ModuleList(_conv1x1(2 * in_width, width) for _ in range(levels))
        self.global_reduce = _conv1x1(levels * width, width)
        self.gates: Optional[nn.ModuleList] = None
        if gate == "sigmoid":
            self.gates = nn.ModuleList(nn.Conv2d(width, 1, 1) for _ in range(levels))
        self.enhance = _conv1x1(levels * width, width)
        self.head = PredictionHead(width, bias_init)
        init_weights(self.level_reduce)
        init_weights(self.global_reduce)
        init_weights(self.enhance)

    def fuse_features(self, interior: List[torch.Tensor], boundary: List[torch.Tensor]) -> List[torch.Tensor]:
        """The per-level fused features C_1..C_L at level-1 resolution."""
        if len(interior) != self.levels or len(boundary) != self.levels:
            raise ShapeError(
                f"IBFM expects {self.levels} levels per stream, got {len(interior)} and {len(boundary)}"
            )
        size = tuple(interior[0].shape[-2:])
        return [
            reduce(torch.cat([_upsample_to(i, size), _upsample_to(b, size)], dim=1))
            for reduce, i, b in zip(self.level_reduce, interior, boundary)
        ]

    def forward(self, interior: List[torch.Tensor], boundary: List[torch.Tensor], out_size: Tuple[int, int]) -> torch.Tensor:
        fused = self.fuse_features(interior, boundary)
        g = self.global_reduce(torch.cat(fused, dim=1))
        if self.gates is not None:
            weighted = [c * torch.sigmoid(gate(c)) for gate, c in zip(self.gates, fused)]
        else:
            weighted = fused
        e = self.enhance(torch.cat(weighted, dim=1))
        return self.head(g + e, out_size)


def ibfm_fuse(ibfm: IBFM, interior_feats: List[torch.Tensor], boundary_feats: List[torch.Tensor]) -> torch.Tensor:
    """Fused map at twice the level-1 resolution, i.e. the full input resolution."""
    h, w = interior_feats[0].shape[-2:]
    return ibfm(interior_feats, boundary_feats, (2 * h, 2 * w))


class ISmallNet(nn.Module):
    """Two encoders, interior/boundary nested decoders and the fusion decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.decoder, self.active_streams = VARIANT_LAYOUT[cfg.variant]

        streams: "OrderedDict[str, nn.Module]" = OrderedDict()
        shared: Optional[Backbone] = None
        for name in self.active_streams:
            stream = StreamDecoder(cfg, self.decoder, shared_encoder=shared)
            if cfg.backbone.share_encoders:
                shared = stream.encoder
            streams[name] = stream
        self.streams = nn.ModuleDict(streams)
        if cfg.backbone.pretrained:
            for encoder in {id(s.encoder): s.encoder for s in self.streams.values()}.values():
                load_encoder_weights(encoder, cfg.backbone.pretrained)
        self.ibfm = IBFM(cfg.mnim.levels, cfg.mnim.node_width, cfg.head_width, cfg.ibfm_gate, cfg.head_bias_init)

    def encode(self, images: torch.Tensor, stream: str) -> List[torch.Tensor]:
        """Feature pyramid F_1..F_L of one stream's encoder."""
        return self.streams[stream].encoder(images)

    def forward(self, images: torch.Tensor) -> ModelOutputs:
        check_input_size(images.shape[-2], images.shape[-1])
        size = tuple(images.shape[-2:])

        feats: Dict[str, List[torch.Tensor]] = {}
        maps: Dict[str, torch.Tensor] = {}
        side: Dict[str, List[torch.Tensor]] = {}
        for name, stream in self.streams.items():
            feats[name], maps[name], side_maps = stream(images)
            if side_maps:
                side[name] = side_maps

        interior = feats.get("interior", feats.get("boundary"))
        boundary = feats.get("boundary", feats.get("interior"))
        fused = self.ibfm(interior, boundary, size)

        return ModelOutputs(
            fused_map=fused,
            interior_map=maps.get("interior"),
            boundary_map=maps.get("boundary"),
            side_maps=side,
        )


def build_variant(cfg: ModelConfig) -> ISmallNet:
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"unknown variant '{cfg.variant}'; valid names: {', '.join(VARIANTS)}")
    return ISmallNet(cfg)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def prediction_to_uint8(prob: np.ndarray) -> np.ndarray:
    """8-bit export value round(255 * p)."""
    return np.round(np.clip(prob, 0.0, 1.0) * 255.0).astype(np.uint8)
