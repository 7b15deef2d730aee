"""Plain vision-transformer backbone adapted for matting.

The input is an (image, trimap) stack of 4 channels. Blocks run in m groups
of n: within a group the first n-1 blocks attend inside k x k windows and
the last attends globally, optionally followed by a residual convolution
neck. The backbone emits a single feature map at the patch stride.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import GLOBAL, WINDOW, BackboneConfig
from .exceptions import IndivisibleResolution

GRID = "grid"
GRID_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _normal_(tensor: torch.Tensor, std: float, gen: torch.Generator) -> None:
    with torch.no_grad():
        tensor.copy_(torch.randn(tensor.shape, generator=gen, dtype=tensor.dtype) * std)


def _zeros_(tensor: torch.Tensor) -> None:
    with torch.no_grad():
        tensor.zero_()


def _ones_(tensor: torch.Tensor) -> None:
    with torch.no_grad():
        tensor.fill_(1.0)


def _kaiming_(tensor: torch.Tensor, gen: torch.Generator) -> None:
    fan_in = tensor.shape[1] * (tensor.shape[2] * tensor.shape[3] if tensor.dim() == 4 else 1)
    _normal_(tensor, math.sqrt(2.0 / fan_in), gen)


class LayerNorm2d(nn.Module):
    """LayerNorm over the channel dimension of an (B, C, H, W) tensor."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=1, keepdim=True)
        var = (x - mean).pow(2).mean(dim=1, keepdim=True)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class Attention(nn.Module):
    """Multi-head self-attention over a flat token sequence."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        attn = (q * self.scale) @ k.transpose(-2, -1)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


def window_partition(x: torch.Tensor, k: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """(B, H, W, C) -> (B*nw, k*k, C), zero-padding bottom/right to tile."""
    b, h, w, c = x.shape
    pad_h = (k - h % k) % k
    pad_w = (k - w % k) % k
    if pad_h or pad_w:
        x = F.pad(x, (0, 0, 0, pad_w, 0, pad_h))
    hp, wp = h + pad_h, w + pad_w
    x = x.view(b, hp // k, k, wp // k, k, c)
    windows = x.permute(0, 1, 3, 2, 4, 5).reshape(-1, k * k, c)
    return windows, (hp, wp)


def window_unpartition(
    windows: torch.Tensor, k: int, padded: tuple[int, int], size: tuple[int, int]
) -> torch.Tensor:
    """Inverse of window_partition, cropping any padding."""
    hp, wp = padded
    h, w = size
    b = windows.shape[0] // (hp // k * (wp // k))
    x = windows.view(b, hp // k, wp // k, k, k, -1)
    x = x.permute(0, 1, 3, 2, 4, 5).reshape(b, hp, wp, -1)
    return x[:, :h, :w, :].contiguous()


def grid_partition(x: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
    """Splits a token grid into 4 parity groups stacked along the batch dim.

    (B, H, W, C) -> (4B, ceil(H/2), ceil(W/2), C). Odd grids are replicate-
    padded to even before grouping. Group order: (even,even), (even,odd),
    (odd,even), (odd,odd) row/column offsets.
    """
    b, h, w, c = x.shape
    pad_h, pad_w = h % 2, w % 2
    if pad_h or pad_w:
        x = x.permute(0, 3, 1, 2)
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
        x = x.permute(0, 2, 3, 1)
    groups = [x[:, i::2, j::2, :] for i, j in GRID_OFFSETS]
    return torch.cat(groups, dim=0), (h, w)


def grid_unpartition(groups: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Inverse of grid_partition; crops replicate padding."""
    h, w = size
    b4, gh, gw, c = groups.shape
    b = b4 // 4
    out = groups.new_empty((b, gh * 2, gw * 2, c))
    for idx, (i, j) in enumerate(GRID_OFFSETS):
        out[:, i::2, j::2, :] = groups[idx * b:(idx + 1) * b]
    return out[:, :h, :w, :].contiguous()


class Block(nn.Module):
    """Pre-norm transformer block; attention scope chosen per call."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int, window_size: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, dim * mlp_ratio)
        self.window_size = window_size

    def _attend(self, x: torch.Tensor, mode: str) -> torch.Tensor:
        b, h, w, c = x.shape
        if mode == WINDOW:
            k = self.window_size
            windows, padded = window_partition(x, k)
            windows = self.attn(windows)
            return window_unpartition(windows, k, padded, (h, w))
        if mode == GLOBAL:
            return self.attn(x.reshape(b, h * w, c)).reshape(b, h, w, c)
        if mode == GRID:
            groups, size = grid_partition(x)
            gb, gh, gw, _ = groups.shape
            groups = self.attn(groups.reshape(gb, gh * gw, c)).reshape(gb, gh, gw, c)
            return grid_unpartition(groups, size)
        raise ValueError(f"unknown attention mode {mode!r}")

    def forward(self, x: torch.Tensor, mode: str) -> torch.Tensor:
        x = x + self._attend(self.norm1(x), mode)
        return x + self.mlp(self.norm2(x))


def make_neck(kind: str, dim: int) -> nn.Module | None:
    if kind == "none":
        return None
    if kind == "naive":
        return NaiveNeck(dim)
    if kind == "residual":
        return ResidualNeck(dim)
    if kind == "convnext":
        return ConvNeXtNeck(dim)
    raise ValueError(f"unknown neck kind {kind!r}")


class NaiveNeck(nn.Module):
    """x + relu(norm(conv3x3(x)))."""

    def __init__(self, dim: int):
        super().__init__()
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)
        self.norm = LayerNorm2d(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + F.relu(self.norm(self.conv(x)))


class ResidualNeck(nn.Module):
    """Bottleneck 1x1 -> 3x3 -> 1x1 with mid width dim/2, residual add."""

    def __init__(self, dim: int):
        super().__init__()
        mid = dim // 2
        self.conv1 = nn.Conv2d(dim, mid, 1)
        self.norm1 = LayerNorm2d(mid)
        self.conv2 = nn.Conv2d(mid, mid, 3, padding=1)
        self.norm2 = LayerNorm2d(mid)
        self.conv3 = nn.Conv2d(mid, dim, 1)
        self.norm3 = LayerNorm2d(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.relu(self.norm1(self.conv1(x)))
        y = F.relu(self.norm2(self.conv2(y)))
        return x + self.norm3(self.conv3(y))


class ConvNeXtNeck(nn.Module):
    """Depthwise 7x7, channel LayerNorm, pointwise expand 4x, GELU, project."""

    def __init__(self, dim: int):
        super().__init__()
        self.dwconv = nn.Conv2d(dim, dim, 7, padding=3, groups=dim)
        self.norm = LayerNorm2d(dim)
        self.pw1 = nn.Conv2d(dim, dim * 4, 1)
        self.pw2 = nn.Conv2d(dim * 4, dim, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm(self.dwconv(x))
        return x + self.pw2(F.gelu(self.pw1(y)))


def inflate_patch_kernel(kernel3: torch.Tensor) -> torch.Tensor:
    """(D, 3, P, P) patch kernel -> (D, 4, P, P) with a zero trimap slice.

    Zero weights make the expanded model reproduce the source model exactly
    on any input whose fourth channel is arbitrary.
    """
    d, c, p, q = kernel3.shape
    if c != 3:
        raise ValueError(f"expected a 3-channel kernel, got {c}")
    zeros = kernel3.new_zeros((d, 1, p, q))
    return torch.cat([kernel3, zeros], dim=1)


class ViTBackbone(nn.Module):
    """Token encoder producing one feature map at the patch stride."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.patch_embed = nn.Conv2d(cfg.in_channels, d, cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.pos_grid, cfg.pos_grid, d))
        self.blocks = nn.ModuleList(
            Block(d, cfg.num_heads, cfg.mlp_ratio, cfg.window_size)
            for _ in range(cfg.depth)
        )
        self.kinds = cfg.schedule()
        neck_count = self.kinds.count(GLOBAL) if cfg.neck_kind != "none" else 0
        self.necks = nn.ModuleList(make_neck(cfg.neck_kind, d) for _ in range(neck_count))

    def init_weights(self, gen: torch.Generator) -> None:
        _normal_(self.patch_embed.weight, 0.02, gen)
        _zeros_(self.patch_embed.bias)
        _normal_(self.pos_embed, 0.02, gen)
        for block in self.blocks:
            for norm in (block.norm1, block.norm2):
                _ones_(norm.weight)
                _zeros_(norm.bias)
            for lin in (block.attn.qkv, block.attn.proj, block.mlp.fc1, block.mlp.fc2):
                _normal_(lin.weight, 0.02, gen)
                _zeros_(lin.bias)
        for neck in self.necks:
            for name, p in neck.named_parameters():
                if p.dim() >= 2:
                    _kaiming_(p, gen)
                elif "weight" in name:
                    _ones_(p)
                else:
                    _zeros_(p)

    def resized_pos_embed(self, gh: int, gw: int) -> torch.Tensor:
        """Positional table resampled to the token grid; identity when equal."""
        pos = self.pos_embed
        if pos.shape[1] == gh and pos.shape[2] == gw:
            return pos
        pos = pos.permute(0, 3, 1, 2)
        pos = F.interpolate(pos, size=(gh, gw), mode="bilinear", align_corners=False)
        return pos.permute(0, 2, 3, 1)

    def forward(self, x: torch.Tensor, strategy: str = "normal") -> torch.Tensor:
        """(B, in_channels, H, W) -> (B, embed_dim, H/P, W/P).

        strategy "grid" replaces every global attention with four
        independent parity-subsampled attentions.
        """
        if strategy not in ("normal", "grid"):
            raise ValueError(f"unknown strategy {strategy!r}")
        p = self.cfg.patch_size
        if x.shape[-2] % p or x.shape[-1] % p:
            raise IndivisibleResolution(
                f"input {tuple(x.shape[-2:])} not divisible by patch size {p}"
            )
        x = self.patch_embed(x).permute(0, 2, 3, 1)
        x = x + self.resized_pos_embed(x.shape[1], x.shape[2])
        neck_idx = 0
        for block, kind in zip(self.blocks, self.kinds):
            mode = kind
            if kind == GLOBAL and strategy == "grid":
                mode = GRID
            x = block(x, mode)
            if kind == GLOBAL and neck_idx < len(self.necks):
                y = x.permute(0, 3, 1, 2)
                x = self.necks[neck_idx](y).permute(0, 2, 3, 1)
                neck_idx += 1
        return x.permute(0, 3, 1, 2).contiguous()
