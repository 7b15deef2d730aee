"""Training losses.

The objective is the sum of three terms: an L1 loss averaged separately
over unknown and known trimap regions, a Laplacian pyramid loss with
per-level weights 1, 2, 4, 8, 16, and a first-difference gradient penalty.
All terms run in torch and are differentiable almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import ShapeMismatch, TooSmall

# 5-tap binomial blur used for pyramid construction.
_BLUR_TAPS = (1.0, 4.0, 6.0, 4.0, 1.0)
LAPLACIAN_LEVELS = 5


@dataclass(frozen=True)
class LossBreakdown:
    separate_l1: float
    laplacian: float
    gradient_penalty: float
    total: float


def _as4d(x) -> torch.Tensor:
    """Accepts (H,W), (H,W,1), (1,H,W) or (B,1,H,W); returns (B,1,H,W)."""
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    if x.dim() == 3:
        x = x[None] if x.shape[0] == 1 else x[..., 0][None, None]
    elif x.dim() == 2:
        x = x[None, None]
    if x.dim() != 4 or x.shape[1] != 1:
        raise ShapeMismatch(f"expected a single-channel map, got shape {tuple(x.shape)}")
    if not x.dtype.is_floating_point:
        x = x.float()
    return x


def _pair(pred, gt) -> tuple[torch.Tensor, torch.Tensor]:
    p, g = _as4d(pred), _as4d(gt)
    if p.shape != g.shape:
        raise ShapeMismatch(f"shape {tuple(p.shape)} vs {tuple(g.shape)}")
    return p, g


def separate_l1(pred, gt, trimap) -> torch.Tensor:
    """Mean |pred-gt| over the unknown region plus mean over the known one.

    An empty region contributes zero.
    """
    p, g = _pair(pred, gt)
    t = _as4d(trimap)
    if t.shape != p.shape:
        raise ShapeMismatch(f"trimap shape {tuple(t.shape)} vs pred {tuple(p.shape)}")
    diff = (p - g).abs()
    unknown = (t - 0.5).abs() < 1e-6
    known = ~unknown
    terms = []
    for mask in (unknown, known):
        count = int(mask.sum())
        if count:
            terms.append(diff[mask].sum() / count)
    if not terms:
        return diff.sum() * 0.0
    total = terms[0]
    for extra in terms[1:]:
        total = total + extra
    return total


def _blur(x: torch.Tensor) -> torch.Tensor:
    taps = torch.tensor(_BLUR_TAPS, dtype=x.dtype, device=x.device)
    taps = taps / taps.sum()
    x = F.pad(x, (2, 2, 2, 2), mode="replicate")
    x = F.conv2d(x, taps.view(1, 1, 1, 5))
    return F.conv2d(x, taps.view(1, 1, 5, 1))


def _down(x: torch.Tensor) -> torch.Tensor:
    return _blur(x)[..., ::2, ::2]


def _up(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def laplacian_pyramid(x, levels: int = LAPLACIAN_LEVELS) -> list[torch.Tensor]:
    """Band-pass decomposition: levels-1 difference maps plus the coarsest
    blurred map. Iterated upsample+add reconstructs the input exactly.
    """
    if levels < 1:
        raise TooSmall("levels must be >= 1")
    x = _as4d(x)
    if min(x.shape[-2:]) < 2 ** (levels - 1):
        raise TooSmall(
            f"dims {tuple(x.shape[-2:])} too small for {levels} pyramid levels"
        )
    gauss = [x]
    for _ in range(levels - 1):
        gauss.append(_down(gauss[-1]))
    bands = []
    for i in range(levels - 1):
        up = _up(gauss[i + 1], gauss[i].shape[-2:])
        bands.append(gauss[i] - up)
    bands.append(gauss[-1])
    return bands


def reconstruct_pyramid(bands: list[torch.Tensor]) -> torch.Tensor:
    """Inverse of laplacian_pyramid."""
    acc = bands[-1]
    for band in reversed(bands[:-1]):
        acc = _up(acc, band.shape[-2:]) + band
    return acc


def laplacian_loss(pred, gt, levels: int = LAPLACIAN_LEVELS) -> torch.Tensor:
    """sum_s 2^(s-1) * mean|band_s(pred) - band_s(gt)| for s = 1..levels."""
    p, g = _pair(pred, gt)
    bands_p = laplacian_pyramid(p, levels)
    bands_g = laplacian_pyramid(g, levels)
    loss = None
    for s, (bp, bg) in enumerate(zip(bands_p, bands_g)):
        term = (2 ** s) * (bp - bg).abs().mean()
        loss = term if loss is None else loss + term
    return loss


def gradient_penalty_loss(pred, gt) -> torch.Tensor:
    """Mean absolute difference of forward-difference gradients.

    Replicate boundary: the last row/column difference is zero.
    """
    p, g = _pair(pred, gt)

    def grads(x):
        dx = x[..., :, 1:] - x[..., :, :-1]
        dy = x[..., 1:, :] - x[..., :-1, :]
        dx = F.pad(dx, (0, 1, 0, 0))
        dy = F.pad(dy, (0, 0, 0, 1))
        return dx, dy

    px, py = grads(p)
    gx, gy = grads(g)
    return ((px - gx).abs() + (py - gy).abs()).mean()


def total_loss(pred, gt, trimap) -> tuple[torch.Tensor, LossBreakdown]:
    """Sum of the three terms; returns the differentiable scalar plus a
    float breakdown for logging."""
    l1 = separate_l1(pred, gt, trimap)
    lap = laplacian_loss(pred, gt)
    gp = gradient_penalty_loss(pred, gt)
    total = l1 + lap + gp
    parts = (float(l1.detach()), float(lap.detach()), float(gp.detach()))
    return total, LossBreakdown(*parts, total=parts[0] + parts[1] + parts[2])
