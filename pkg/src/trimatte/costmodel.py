"""Analytical cost model: FLOPs, parameters and activation memory.

Counting convention: one multiply-accumulate = one FLOP, matmuls and
convolutions only (bias adds, norms and activations excluded). Attention
formulas are the contract everything else follows:

    global window over N tokens: 4*N*C^2 + 2*N^2*C
    k x k local windows:         4*N*C^2 + 2*N*k^2*C

Ratios between configurations are insensitive to the convention; absolute
totals under this one line up with published full-model figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import GLOBAL, WINDOW, BackboneConfig, schedule_with_globals
from .decoder import CONVSTREAM_WIDTHS, FUSION_WIDTHS
from .exceptions import IndivisibleResolution

GRID = "grid"
DTYPE_BYTES = 4  # float32 activations


@dataclass(frozen=True)
class CostReport:
    flops: int
    params: int
    peak_attention_activation_bytes: int
    breakdown: list[tuple[str, int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "flops": self.flops,
            "params": self.params,
            "peak_attention_activation_bytes": self.peak_attention_activation_bytes,
            "breakdown": [{"name": n, "flops": f} for n, f in self.breakdown],
        }


@dataclass(frozen=True)
class MemoryReport:
    score_bytes: int
    plane_bytes: int
    total_bytes: int

    def as_dict(self) -> dict:
        return {"score_bytes": self.score_bytes, "plane_bytes": self.plane_bytes,
                "total_bytes": self.total_bytes}


def attention_flops(n_tokens: int, dim: int, num_heads: int, kind: str,
                    window: int | None = None) -> int:
    """FLOPs of one attention layer over n_tokens.

    num_heads does not change the count (head splits preserve the matmul
    volume); it is part of the signature because memory does depend on it.
    """
    proj = 4 * n_tokens * dim * dim
    if kind == GLOBAL:
        return proj + 2 * n_tokens * n_tokens * dim
    if kind == WINDOW:
        if not window or window < 1:
            raise ValueError("window kind needs a window size")
        return proj + 2 * n_tokens * window * window * dim
    if kind == GRID:
        # 4 independent global attentions over N/4 tokens each.
        quarter = n_tokens // 4
        return proj + 4 * 2 * quarter * quarter * dim
    raise ValueError(f"unknown attention kind {kind!r}")


def _conv_flops(cin: int, cout: int, ksize: int, out_pixels: int,
                groups: int = 1) -> int:
    return ksize * ksize * (cin // groups) * cout * out_pixels


def _mlp_flops(n_tokens: int, dim: int, mlp_ratio: int) -> int:
    return 2 * n_tokens * dim * dim * mlp_ratio


def _neck_flops(kind: str, dim: int, pixels: int) -> int:
    if kind == "none":
        return 0
    if kind == "naive":
        return _conv_flops(dim, dim, 3, pixels)
    if kind == "residual":
        mid = dim // 2
        return (_conv_flops(dim, mid, 1, pixels)
                + _conv_flops(mid, mid, 3, pixels)
                + _conv_flops(mid, dim, 1, pixels))
    if kind == "convnext":
        return (_conv_flops(dim, dim, 7, pixels, groups=dim)
                + _conv_flops(dim, dim * 4, 1, pixels)
                + _conv_flops(dim * 4, dim, 1, pixels))
    raise ValueError(f"unknown neck kind {kind!r}")


def _fusion_plan(cfg: BackboneConfig, detail_levels: int | None = None
                 ) -> list[tuple[int, int, int]]:
    """(in_channels, detail_channels, out_channels) per fusion stage,
    mirroring the decoder construction."""
    downs = int(math.log2(cfg.patch_size))
    if detail_levels is None:
        detail_levels = downs
    widths = CONVSTREAM_WIDTHS[:downs]
    fusion_widths = FUSION_WIDTHS[-downs:]
    plan = []
    prev = cfg.embed_dim
    for stage, cout in enumerate(fusion_widths):
        scale = downs - 1 - stage
        detail = widths[scale] if scale < detail_levels else 0
        plan.append((prev, detail, cout))
        prev = cout
    return plan


def _dcm_flops(cfg: BackboneConfig, height: int, width: int,
               detail_levels: int | None = None) -> list[tuple[str, int]]:
    downs = int(math.log2(cfg.patch_size))
    widths = CONVSTREAM_WIDTHS[:downs]
    parts = []
    cin = cfg.in_channels
    for i, cout in enumerate(widths):
        pixels = (height >> i) * (width >> i)
        parts.append((f"decoder.convstream.{i}", _conv_flops(cin, cout, 3, pixels)))
        cin = cout
    for stage, (prev, detail, cout) in enumerate(_fusion_plan(cfg, detail_levels)):
        shift = downs - 1 - stage
        pixels = (height >> shift) * (width >> shift)
        parts.append((f"decoder.fusion.{stage}",
                      _conv_flops(prev + detail, cout, 3, pixels)))
    parts.append(("decoder.head", _conv_flops(FUSION_WIDTHS[-1], 1, 3, height * width)))
    return parts


def _sfp_flops(cfg: BackboneConfig, height: int, width: int) -> list[tuple[str, int]]:
    """Simple-feature-pyramid style decoder for comparison: one independent
    stride-2 deconvolution stack (4x4 kernels, full width) per scale, a 1x1
    reduction to the fusion width, then the same fusion chain and head."""
    downs = int(math.log2(cfg.patch_size))
    dim = cfg.embed_dim
    widths = CONVSTREAM_WIDTHS[:downs]
    parts = []
    for i, cout in enumerate(widths):
        ups = downs - i  # number of 2x deconvolutions from the token grid
        total = 0
        for step in range(1, ups + 1):
            shift = downs - step
            pixels = (height >> shift) * (width >> shift)
            total += _conv_flops(dim, dim, 4, pixels) // 4  # stride-2: k^2/s^2 taps
        pixels = (height >> i) * (width >> i)
        total += _conv_flops(dim, cout, 1, pixels)
        parts.append((f"decoder.sfp.{i}", total))
    for stage, (prev, detail, cout) in enumerate(_fusion_plan(cfg)):
        shift = downs - 1 - stage
        pixels = (height >> shift) * (width >> shift)
        parts.append((f"decoder.fusion.{stage}",
                      _conv_flops(prev + detail, cout, 3, pixels)))
    parts.append(("decoder.head", _conv_flops(FUSION_WIDTHS[-1], 1, 3, height * width)))
    return parts


def model_flops(cfg: BackboneConfig, resolution: tuple[int, int],
                decoder: str = "dcm", num_global: int | None = None,
                strategy: str = "normal",
                detail_levels: int | None = None) -> CostReport:
    """Whole-model FLOPs with a per-component breakdown.

    num_global overrides the group schedule with an even spread of that many
    global blocks (window elsewhere); necks still follow each global block.
    """
    height, width = resolution
    p = cfg.patch_size
    if height % p or width % p:
        raise IndivisibleResolution(f"{height}x{width} not divisible by patch {p}")
    if decoder not in ("dcm", "sfp"):
        raise ValueError(f"unknown decoder {decoder!r}")
    gh, gw = height // p, width // p
    n = gh * gw
    if strategy == "grid":
        n_grid = (gh + gh % 2) * (gw + gw % 2)
    elif strategy == "normal":
        n_grid = n
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    kinds = schedule_with_globals(cfg.depth, num_global) if num_global is not None \
        else cfg.schedule()

    parts: list[tuple[str, int]] = []
    parts.append(("patch_embed",
                  _conv_flops(cfg.in_channels, cfg.embed_dim, p, n)))
    neck_idx = 0
    for i, kind in enumerate(kinds):
        if kind == GLOBAL and strategy == "grid":
            attn = attention_flops(n_grid, cfg.embed_dim, cfg.num_heads, GRID)
        else:
            attn = attention_flops(n, cfg.embed_dim, cfg.num_heads, kind,
                                   window=cfg.window_size)
        flops = attn + _mlp_flops(n, cfg.embed_dim, cfg.mlp_ratio)
        parts.append((f"block.{i:02d} [{kind}]", flops))
        if kind == GLOBAL and cfg.neck_kind != "none":
            parts.append((f"neck.{neck_idx}",
                          _neck_flops(cfg.neck_kind, cfg.embed_dim, n)))
            neck_idx += 1
    if decoder == "dcm":
        parts.extend(_dcm_flops(cfg, height, width, detail_levels))
    else:
        parts.extend(_sfp_flops(cfg, height, width))

    mem = attention_memory(n, cfg.embed_dim, cfg.num_heads,
                           "grid_sample" if strategy == "grid" else "normal",
                           grid=(gh, gw))
    return CostReport(
        flops=sum(f for _, f in parts),
        params=model_params(cfg, decoder=decoder, detail_levels=detail_levels),
        peak_attention_activation_bytes=mem.total_bytes,
        breakdown=parts,
    )


def _neck_params(kind: str, dim: int) -> int:
    if kind == "none":
        return 0
    if kind == "naive":
        return (9 * dim * dim + dim) + 2 * dim
    if kind == "residual":
        mid = dim // 2
        conv = (dim * mid + mid) + (9 * mid * mid + mid) + (mid * dim + dim)
        norms = 2 * mid + 2 * mid + 2 * dim
        return conv + norms
    if kind == "convnext":
        return ((49 * dim + dim) + 2 * dim
                + (dim * 4 * dim + 4 * dim) + (4 * dim * dim + dim))
    raise ValueError(f"unknown neck kind {kind!r}")


def _conv_bn_params(cin: int, cout: int, ksize: int = 3) -> int:
    return ksize * ksize * cin * cout + cout + 2 * cout


def backbone_params(cfg: BackboneConfig) -> int:
    d = cfg.embed_dim
    patch = cfg.in_channels * cfg.patch_size ** 2 * d + d
    pos = cfg.pos_grid * cfg.pos_grid * d
    hidden = d * cfg.mlp_ratio
    block = (2 * d                       # norm1
             + d * 3 * d + 3 * d        # qkv
             + d * d + d                # proj
             + 2 * d                    # norm2
             + d * hidden + hidden      # fc1
             + hidden * d + d)          # fc2
    necks = cfg.num_groups * _neck_params(cfg.neck_kind, d) \
        if cfg.neck_kind != "none" else 0
    return patch + pos + cfg.depth * block + necks


def dcm_params(cfg: BackboneConfig, detail_levels: int | None = None) -> int:
    downs = int(math.log2(cfg.patch_size))
    widths = CONVSTREAM_WIDTHS[:downs]
    total = 0
    cin = cfg.in_channels
    for cout in widths:
        total += _conv_bn_params(cin, cout)
        cin = cout
    for prev, detail, cout in _fusion_plan(cfg, detail_levels):
        total += _conv_bn_params(prev + detail, cout)
    total += 9 * FUSION_WIDTHS[-1] * 1 + 1  # head
    return total


def sfp_params(cfg: BackboneConfig) -> int:
    downs = int(math.log2(cfg.patch_size))
    dim = cfg.embed_dim
    widths = CONVSTREAM_WIDTHS[:downs]
    total = 0
    for i, cout in enumerate(widths):
        ups = downs - i
        total += ups * (16 * dim * dim + dim)  # 4x4 deconvs
        total += dim * cout + cout             # 1x1 reduction
    for prev, detail, cout in _fusion_plan(cfg):
        total += _conv_bn_params(prev + detail, cout)
    total += 9 * FUSION_WIDTHS[-1] * 1 + 1
    return total


def model_params(cfg: BackboneConfig, decoder: str = "dcm",
                 detail_levels: int | None = None) -> int:
    """Analytic parameter count; must equal the instantiated model's count."""
    if decoder == "dcm":
        return backbone_params(cfg) + dcm_params(cfg, detail_levels)
    if decoder == "sfp":
        return backbone_params(cfg) + sfp_params(cfg)
    raise ValueError(f"unknown decoder {decoder!r}")


def attention_memory(n_tokens: int, dim: int, num_heads: int,
                     strategy: str = "normal", dtype_bytes: int = DTYPE_BYTES,
                     grid: tuple[int, int] | None = None) -> MemoryReport:
    """Live activation bytes while one global attention executes.

    score_bytes covers the heads x N x N attention matrix; grid_sample runs
    4 groups of N/4 tokens so its score memory is exactly a quarter. Token
    grids with odd dims are padded to even before grouping. plane_bytes
    covers the token map, the qkv triple and the attention output.
    """
    if strategy not in ("normal", "grid_sample"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if grid is not None:
        gh, gw = grid
        padded = (gh + gh % 2) * (gw + gw % 2)
    else:
        padded = n_tokens if n_tokens % 4 == 0 else n_tokens + (4 - n_tokens % 4)
    if strategy == "normal":
        scores = num_heads * n_tokens * n_tokens * dtype_bytes
    else:
        quarter = padded // 4
        scores = 4 * num_heads * quarter * quarter * dtype_bytes
    planes = (n_tokens * dim + 3 * n_tokens * dim + n_tokens * dim) * dtype_bytes
    return MemoryReport(score_bytes=scores, plane_bytes=planes,
                        total_bytes=scores + planes)


def inference_memory(cfg: BackboneConfig, resolution: tuple[int, int],
                     strategy: str = "normal",
                     dtype_bytes: int = DTYPE_BYTES) -> dict:
    """Stage-peak activation model over the whole network.

    Each stage accounts the buffers alive at once (inputs, outputs, and for
    attention the score matrix); the peak is the max over stages. Weights
    and runtime overheads are out of scope, so this tracks relative, not
    absolute, memory.
    """
    height, width = resolution
    p = cfg.patch_size
    if height % p or width % p:
        raise IndivisibleResolution(f"{height}x{width} not divisible by patch {p}")
    gh, gw = height // p, width // p
    n = gh * gw
    d = cfg.embed_dim
    stages: dict[str, int] = {}
    px = height * width
    stages["patch_embed"] = (cfg.in_channels * px + n * d) * dtype_bytes

    attn_strategy = "grid_sample" if strategy == "grid" else "normal"
    mem_global = attention_memory(n, d, cfg.num_heads, attn_strategy,
                                  dtype_bytes, grid=(gh, gw))
    k = cfg.window_size
    n_win = (math.ceil(gh / k) * k) * (math.ceil(gw / k) * k)
    win_scores = (n_win // (k * k)) * cfg.num_heads * (k * k) ** 2 * dtype_bytes
    win_planes = (n_win * d * 5) * dtype_bytes
    for i, kind in enumerate(cfg.schedule()):
        if kind == GLOBAL:
            stages[f"block.{i:02d}.attn"] = mem_global.total_bytes
        else:
            stages[f"block.{i:02d}.attn"] = win_scores + win_planes
        stages[f"block.{i:02d}.mlp"] = (n * d * (2 + cfg.mlp_ratio)) * dtype_bytes

    downs = int(math.log2(p))
    widths = CONVSTREAM_WIDTHS[:downs]
    cin = cfg.in_channels
    for i, cout in enumerate(widths):
        pixels_in = (height >> max(i - 1, 0)) * (width >> max(i - 1, 0))
        pixels_out = (height >> i) * (width >> i)
        stages[f"convstream.{i}"] = (cin * pixels_in + cout * pixels_out) * dtype_bytes
        cin = cout
    for stage, (prev, detail, cout) in enumerate(_fusion_plan(cfg)):
        shift = downs - 1 - stage
        pixels = (height >> shift) * (width >> shift)
        stages[f"fusion.{stage}"] = (prev + detail + cout) * pixels * dtype_bytes
    stages["head"] = (FUSION_WIDTHS[-1] + 1) * px * dtype_bytes

    peak_name, peak = max(stages.items(), key=lambda kv: kv[1])
    return {"peak_bytes": peak, "peak_stage": peak_name, "stages": stages}
