"""Optimization loop: AdamW with stepped LR drops and layerwise decay.

Learning rate steps down to 0.1x at epoch 30 and 0.05x at epoch 90 (epochs
configurable). Transformer block i of L gets an LR multiplier decay^(L-i);
the patch/positional embeddings sit one step below the first block; necks
and the decoder train at full rate. Weight decay skips positional
embeddings and every one-dimensional tensor (norm scales, biases).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .data import MattingSample, augment
from .decoder import MattingModel
from .exceptions import CheckpointError, NonFiniteLoss
from .losses import LossBreakdown, total_loss
from .planes import make_rng
from . import checkpoint as ckpt

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def lr_at(epoch: int, base_lr: float, drops: tuple[int, int] = (30, 90)) -> float:
    """Piecewise-constant schedule: 1x, then 0.1x, then 0.05x."""
    if epoch < drops[0]:
        return base_lr
    if epoch < drops[1]:
        return 0.1 * base_lr
    return 0.05 * base_lr


def layerwise_multipliers(num_layers: int, decay: float = 0.65) -> list[float]:
    """LR multiplier for block i (0-indexed): decay^(num_layers - i)."""
    return [decay ** (num_layers - i) for i in range(num_layers)]


def _param_scale(name: str, depth: int, decay: float) -> float:
    if name.startswith("backbone.blocks."):
        layer = int(name.split(".")[2])
        return decay ** (depth - layer)
    if name.startswith(("backbone.patch_embed.", "backbone.pos_embed")):
        return decay ** (depth + 1)
    return 1.0


def _decayable(name: str, param: torch.Tensor) -> bool:
    if name == "backbone.pos_embed":
        return False
    return param.dim() > 1


def build_optimizer(model: MattingModel, cfg: RunConfig) -> torch.optim.AdamW:
    """AdamW over (lr-scale, decay) parameter groups.

    Each group carries its lr multiplier in "lr_scale" so the schedule can
    reset absolute rates per epoch.
    """
    depth = model.cfg.depth
    groups: dict[tuple[float, bool], dict] = {}
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        scale = _param_scale(name, depth, cfg.layer_decay)
        decayed = _decayable(name, param)
        key = (scale, decayed)
        if key not in groups:
            groups[key] = {
                "params": [],
                "lr": cfg.base_lr * scale,
                "lr_scale": scale,
                "weight_decay": cfg.weight_decay if decayed else 0.0,
            }
        groups[key]["params"].append(param)
    ordered = [groups[k] for k in sorted(groups, key=lambda k: (-k[0], not k[1]))]
    return torch.optim.AdamW(ordered, lr=cfg.base_lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def set_epoch_lr(optimizer: torch.optim.Optimizer, epoch: int, cfg: RunConfig) -> float:
    rate = lr_at(epoch, cfg.base_lr, cfg.lr_drop_epochs)
    for group in optimizer.param_groups:
        group["lr"] = rate * group["lr_scale"]
    return rate


def batch_tensors(samples: list[MattingSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stacks composites/alphas/trimaps into (B,4,H,W)/(B,1,H,W)/(B,1,H,W)."""
    xs, gts, tris = [], [], []
    for s in samples:
        if s.trimap is None:
            raise ValueError("training samples need a trimap; augment first")
        comp = s.composite().data
        stack = np.concatenate([comp, s.trimap.data], axis=2)
        xs.append(torch.from_numpy(stack.transpose(2, 0, 1)))
        gts.append(torch.from_numpy(s.alpha.data.transpose(2, 0, 1)))
        tris.append(torch.from_numpy(s.trimap.data.transpose(2, 0, 1)))
    return torch.stack(xs), torch.stack(gts), torch.stack(tris)


def train_step(model: MattingModel, batch, optimizer: torch.optim.Optimizer
               ) -> LossBreakdown:
    """One forward/backward/update; returns the pre-update loss values."""
    x, gt, tri = batch
    model.train()
    pred = model(x)
    loss, breakdown = total_loss(pred, gt, tri)
    if not math.isfinite(breakdown.total):
        raise NonFiniteLoss(
            f"non-finite loss: l1={breakdown.separate_l1} "
            f"lap={breakdown.laplacian} gp={breakdown.gradient_penalty}"
        )
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return breakdown


class Trainer:
    """Owns the model, optimizer, data RNG and epoch bookkeeping."""

    def __init__(self, model: MattingModel, cfg: RunConfig,
                 rng: np.random.Generator | None = None):
        self.model = model
        self.cfg = cfg
        self.optimizer = build_optimizer(model, cfg)
        self.rng = rng if rng is not None else make_rng(cfg.seed)
        self.step_count = 0

    def _epoch(self, steps_per_epoch: int) -> int:
        return self.step_count // max(1, steps_per_epoch)

    def _draw_batch(self, samples: list[MattingSample], do_augment: bool
                    ) -> list[MattingSample]:
        idx = self.rng.integers(0, len(samples), size=self.cfg.batch_size)
        if do_augment:
            return [augment(samples[i], self.cfg.crop_size, self.cfg.augment,
                            self.rng) for i in idx]
        return [samples[i] for i in idx]

    def run(self, samples: list[MattingSample], steps: int,
            do_augment: bool = True, log_path: Path | None = None,
            quiet: bool = True) -> list[LossBreakdown]:
        """Runs a fixed number of steps; epoch = one nominal dataset pass."""
        steps_per_epoch = max(1, len(samples) // self.cfg.batch_size)
        history = []
        log_fh = open(log_path, "a") if log_path else None
        try:
            for _ in range(steps):
                epoch = self._epoch(steps_per_epoch)
                rate = set_epoch_lr(self.optimizer, epoch, self.cfg)
                batch = batch_tensors(self._draw_batch(samples, do_augment))
                breakdown = train_step(self.model, batch, self.optimizer)
                self.step_count += 1
                history.append(breakdown)
                if log_fh and self.step_count % steps_per_epoch == 0:
                    record = {
                        "step": self.step_count, "epoch": epoch, "lr": rate,
                        "l1": breakdown.separate_l1, "lap": breakdown.laplacian,
                        "gp": breakdown.gradient_penalty, "total": breakdown.total,
                        "time": time.time(),
                    }
                    log_fh.write(json.dumps(record) + "\n")
                    log_fh.flush()
                if not quiet and self.step_count % 50 == 0:
                    print(f"step {self.step_count}: loss {breakdown.total:.4f}")
        finally:
            if log_fh:
                log_fh.close()
        return history

    def save(self, path) -> None:
        """Model + optimizer moments + counters + data-RNG state."""
        extra: dict[str, np.ndarray] = {}
        name_of = {id(p): ckpt._archive_key(n)
                   for n, p in self.model.named_parameters()}
        for group in self.optimizer.param_groups:
            for p in group["params"]:
                state = self.optimizer.state.get(p)
                if not state:
                    continue
                base = "opt." + name_of[id(p)]
                extra[base + ".exp_avg"] = state["exp_avg"].numpy()
                extra[base + ".exp_avg_sq"] = state["exp_avg_sq"].numpy()
                extra[base + ".step"] = np.asarray(float(state["step"]), dtype=np.float32)
        meta = {
            "step_count": self.step_count,
            "rng_state": json.loads(json.dumps(self.rng.bit_generator.state)),
        }
        ckpt.save_model(path, self.model, self.cfg, extra=extra, extra_meta=meta)

    @classmethod
    def resume(cls, path) -> "Trainer":
        model, cfg, meta = ckpt.load_model(path)
        trainer = cls(model, cfg)
        trainer.step_count = int(meta.get("step_count", 0))
        if "rng_state" in meta:
            state = meta["rng_state"]
            state["state"] = {k: int(v) for k, v in state["state"].items()}
            trainer.rng.bit_generator.state = state
        tensors, _ = ckpt.load_archive(path)
        opt_names = {n for n in tensors if n.startswith("opt.")}
        if opt_names:
            trainer._restore_optimizer(tensors)
        return trainer

    def _restore_optimizer(self, tensors: dict[str, np.ndarray]) -> None:
        name_of = {id(p): ckpt._archive_key(n)
                   for n, p in self.model.named_parameters()}
        for group in self.optimizer.param_groups:
            for p in group["params"]:
                base = "opt." + name_of[id(p)]
                if base + ".exp_avg" not in tensors:
                    continue
                avg = torch.from_numpy(tensors[base + ".exp_avg"].copy())
                sq = torch.from_numpy(tensors[base + ".exp_avg_sq"].copy())
                if avg.shape != p.shape:
                    raise CheckpointError(f"optimizer state shape mismatch at {base}")
                self.optimizer.state[p] = {
                    "step": torch.tensor(float(tensors[base + ".step"])),
                    "exp_avg": avg.to(p.dtype),
                    "exp_avg_sq": sq.to(p.dtype),
                }


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_err: float
    worst_name: str
    checked: int

    def __str__(self) -> str:
        return (f"max rel err {self.max_rel_err:.3e} over {self.checked} "
                f"scalars (worst: {self.worst_name})")


def grad_check(model: MattingModel, sample: MattingSample, n_scalars: int = 200,
               step: float = 1e-5, seed: int = 0) -> GradCheckResult:
    """Analytic vs central finite-difference gradients of the total loss.

    Runs in float64 with the model in eval mode (batch-norm uses its frozen
    running stats, so repeated forwards are side-effect free). Checks a
    seeded random subset of parameter scalars.
    """
    model = model.double()
    model.eval()
    x, gt, tri = batch_tensors([sample])
    x, gt, tri = x.double(), gt.double(), tri.double()

    def loss_value() -> torch.Tensor:
        pred = model(x)
        value, _ = total_loss(pred, gt, tri)
        return value

    params = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    model.zero_grad(set_to_none=True)
    loss = loss_value()
    loss.backward()
    grads = {n: (p.grad.detach().clone() if p.grad is not None
                 else torch.zeros_like(p)) for n, p in params}

    rng = make_rng(seed)
    worst, worst_name = 0.0, ""
    with torch.no_grad():
        for _ in range(n_scalars):
            name, p = params[int(rng.integers(0, len(params)))]
            flat = p.view(-1)
            j = int(rng.integers(0, flat.numel()))
            orig = float(flat[j])
            flat[j] = orig + step
            up = float(loss_value())
            flat[j] = orig - step
            down = float(loss_value())
            flat[j] = orig
            fd = (up - down) / (2 * step)
            an = float(grads[name].view(-1)[j])
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            if rel > worst:
                worst, worst_name = rel, f"{name}[{j}]"
    return GradCheckResult(max_rel_err=worst, worst_name=worst_name,
                           checked=n_scalars)
