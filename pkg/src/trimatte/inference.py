"""Forward inference with selectable attention strategy.

Inputs of arbitrary size are replicate-padded to the required multiple
(16, or 32 under grid sampling so the token grid stays even), run through
the model, and cropped back. Grid sampling splits each global attention
into four parity-subsampled groups; window blocks are untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

# Re-exported: the token-level grid ops live next to the attention code.
from .backbone import grid_partition, grid_unpartition  # noqa: F401
from .decoder import MattingModel
from .planes import MattingInput, Plane

NORMAL = "normal"
GRID_SAMPLE = "grid_sample"


def pad_multiple(patch_size: int, strategy: str) -> int:
    base = math.lcm(16, patch_size)
    return base * 2 if strategy == GRID_SAMPLE else base


@dataclass
class InferenceRequest:
    input: MattingInput
    strategy: str = NORMAL
    pad_policy: str = "replicate"

    def __post_init__(self) -> None:
        if self.strategy not in (NORMAL, GRID_SAMPLE):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.pad_policy != "replicate":
            raise ValueError("only replicate padding is supported")


def infer(model: MattingModel, request: InferenceRequest) -> Plane:
    """Runs the model on one input; output dims equal input dims."""
    stack = request.input.stacked()  # (H, W, 4)
    h, w = stack.shape[:2]
    x = torch.from_numpy(stack.transpose(2, 0, 1))[None]
    mult = pad_multiple(model.cfg.patch_size, request.strategy)
    pad_h = (mult - h % mult) % mult
    pad_w = (mult - w % mult) % mult
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
    strategy = "grid" if request.strategy == GRID_SAMPLE else "normal"
    model.eval()
    with torch.no_grad():
        alpha = model(x, strategy=strategy)
    out = alpha[0, 0, :h, :w].numpy()
    return Plane(out[:, :, None])


def infer_alpha(model: MattingModel, image: Plane, trimap: Plane,
                strategy: str = NORMAL) -> Plane:
    return infer(model, InferenceRequest(MattingInput(image, trimap), strategy))
