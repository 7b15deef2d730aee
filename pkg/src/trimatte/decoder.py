"""Detail-capture decoder and the complete matting model.

A lightweight convolution stream extracts detail maps D0 (full resolution)
through D3 (1/8) straight from the 4-channel input. The decoder starts from
the backbone feature map and alternates 2x bilinear upsampling with a 3x3
fusion convolution over the concatenated detail map of the matching scale,
ending in a 1-channel sigmoid head.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import ViTBackbone, _kaiming_, _normal_, _ones_, _zeros_
from .config import BackboneConfig

CONVSTREAM_WIDTHS = (32, 48, 96, 192)
FUSION_WIDTHS = (256, 128, 64, 32)


class ConvBNReLU(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, stride=stride, padding=1)
        self.norm = nn.BatchNorm2d(cout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.norm(self.conv(x)))


class ConvStream(nn.Module):
    """Produces detail maps at resolutions 1, 1/2, ..., 1/2^(levels-1)."""

    def __init__(self, in_channels: int, levels: int):
        super().__init__()
        widths = CONVSTREAM_WIDTHS[:levels]
        stages = [ConvBNReLU(in_channels, widths[0], stride=1)]
        for prev, cur in zip(widths, widths[1:]):
            stages.append(ConvBNReLU(prev, cur, stride=2))
        self.stages = nn.ModuleList(stages)
        self.widths = widths

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        maps = []
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return maps


class FusionBlock(nn.Module):
    """Upsample the running feature 2x, concat a detail map, 3x3 conv."""

    def __init__(self, cin: int, detail: int, cout: int):
        super().__init__()
        self.block = ConvBNReLU(cin + detail, cout, stride=1)

    def forward(self, x: torch.Tensor, detail: torch.Tensor | None) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if detail is not None:
            x = torch.cat([x, detail], dim=1)
        return self.block(x)


class MattingHead(nn.Module):
    def __init__(self, cin: int):
        super().__init__()
        self.conv = nn.Conv2d(cin, 1, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.conv(x))


class MattingModel(nn.Module):
    """Backbone plus detail-capture decoder; maps (B,4,H,W) to (B,1,H,W).

    detail_levels limits how many of the finest detail maps the decoder
    consumes (None = all); coarser fusion stages then run without a skip.
    """

    def __init__(self, cfg: BackboneConfig, detail_levels: int | None = None):
        super().__init__()
        self.cfg = cfg
        downs = int(math.log2(cfg.patch_size))
        if detail_levels is None:
            detail_levels = downs
        if not 0 <= detail_levels <= downs:
            raise ValueError(f"detail_levels must be in [0, {downs}]")
        self.detail_levels = detail_levels
        self.backbone = ViTBackbone(cfg)
        self.convstream = ConvStream(cfg.in_channels, downs)
        fusion_widths = FUSION_WIDTHS[-downs:]
        fusions = []
        prev = cfg.embed_dim
        for stage, cout in enumerate(fusion_widths):
            scale = downs - 1 - stage  # detail map index used at this stage
            detail = self.convstream.widths[scale] if scale < detail_levels else 0
            fusions.append(FusionBlock(prev, detail, cout))
            prev = cout
        self.fusion = nn.ModuleList(fusions)
        self.head = MattingHead(prev)

    def init_weights(self, seed: int) -> None:
        """Deterministic init: one seed fixes every parameter."""
        gen = torch.Generator().manual_seed(seed)
        self.backbone.init_weights(gen)
        for module in (self.convstream, self.fusion, self.head):
            for name, p in module.named_parameters():
                if p.dim() >= 2:
                    _kaiming_(p, gen)
                elif name.endswith("weight"):
                    _ones_(p)
                else:
                    _zeros_(p)

    def forward(self, x: torch.Tensor, strategy: str = "normal") -> torch.Tensor:
        details = self.convstream(x)
        feat = self.backbone(x, strategy=strategy)
        downs = len(details)
        for stage, fusion in enumerate(self.fusion):
            scale = downs - 1 - stage
            detail = details[scale] if scale < self.detail_levels else None
            feat = fusion(feat, detail)
        return self.head(feat)


def build_model(cfg: BackboneConfig, seed: int = 0,
                detail_levels: int | None = None) -> MattingModel:
    model = MattingModel(cfg, detail_levels=detail_levels)
    model.init_weights(seed)
    return model
