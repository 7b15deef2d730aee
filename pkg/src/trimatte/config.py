"""Model and run configuration.

A backbone is described by its group structure: m groups of n transformer
blocks, where the first n-1 blocks of each group use windowed attention and
the last uses global attention, optionally followed by a convolution neck.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, asdict, replace

from .exceptions import ConfigError

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

NECK_KINDS = ("none", "naive", "residual", "convnext")
GLOBAL = "global"
WINDOW = "window"


@dataclass(frozen=True)
class BackboneConfig:
    embed_dim: int = 384
    patch_size: int = 16
    num_groups: int = 4
    blocks_per_group: int = 3
    num_heads: int = 6
    mlp_ratio: int = 4
    window_size: int = 14
    neck_kind: str = "residual"
    in_channels: int = 4
    # Stored positional-embedding grid; bilinearly resized to the token grid.
    pos_grid: int = 14

    def __post_init__(self) -> None:
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.num_heads}"
            )
        if self.neck_kind not in NECK_KINDS:
            raise ConfigError(f"neck_kind {self.neck_kind!r} not in {NECK_KINDS}")
        for name in ("embed_dim", "patch_size", "num_groups", "blocks_per_group",
                     "num_heads", "mlp_ratio", "window_size", "pos_grid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.patch_size & (self.patch_size - 1):
            raise ConfigError("patch_size must be a power of two")
        if self.in_channels not in (3, 4):
            raise ConfigError("in_channels must be 3 or 4")

    @property
    def depth(self) -> int:
        return self.num_groups * self.blocks_per_group

    def schedule(self) -> list[str]:
        return attention_schedule(self.num_groups, self.blocks_per_group)


def attention_schedule(num_groups: int, blocks_per_group: int) -> list[str]:
    """Block kinds for m groups of n blocks: n-1 window then 1 global each."""
    if num_groups < 1 or blocks_per_group < 1:
        raise ConfigError("num_groups and blocks_per_group must be >= 1")
    group = [WINDOW] * (blocks_per_group - 1) + [GLOBAL]
    return group * num_groups


def schedule_with_globals(depth: int, num_global: int) -> list[str]:
    """Schedule with a given number of global blocks spread over the depth.

    When depth is divisible by num_global the globals close out equal groups;
    otherwise they are spaced evenly with the last block always global.
    """
    if not 0 <= num_global <= depth:
        raise ConfigError(f"num_global must be in [0, {depth}]")
    if num_global == 0:
        return [WINDOW] * depth
    kinds = [WINDOW] * depth
    for j in range(num_global):
        pos = (depth * (j + 1)) // num_global - 1
        kinds[pos] = GLOBAL
    return kinds


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 10.0
    scale_lo: float = 0.8
    scale_hi: float = 1.25
    shear_deg: float = 5.0
    flip_prob: float = 0.5
    # Fraction of the full hue circle.
    hue_delta: float = 0.1
    # Trimap morphology kernel sizes are drawn uniformly from this range.
    kernel_lo: int = 1
    kernel_hi: int = 30
    # A crop is accepted once at least this fraction of it is unknown.
    min_unknown_frac: float = 0.01
    crop_tries: int = 10

    def __post_init__(self) -> None:
        if not 0 < self.scale_lo <= self.scale_hi:
            raise ConfigError("need 0 < scale_lo <= scale_hi")
        if not 1 <= self.kernel_lo <= self.kernel_hi:
            raise ConfigError("need 1 <= kernel_lo <= kernel_hi")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError("flip_prob must be in [0, 1]")


@dataclass(frozen=True)
class RunConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    crop_size: int = 512
    batch_size: int = 4
    epochs: int = 100
    base_lr: float = 5e-4
    weight_decay: float = 0.1
    layer_decay: float = 0.65
    # Epochs at which the LR multiplier steps down to 0.1 then 0.05.
    lr_drop_epochs: tuple[int, int] = (30, 90)

    def __post_init__(self) -> None:
        if self.crop_size % self.backbone.patch_size != 0 or self.crop_size % 16 != 0:
            raise ConfigError(
                f"crop_size {self.crop_size} must be divisible by 16 and by "
                f"patch_size {self.backbone.patch_size}"
            )
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.base_lr <= 0 or self.weight_decay < 0:
            raise ConfigError("base_lr must be > 0 and weight_decay >= 0")
        if not 0 < self.layer_decay <= 1:
            raise ConfigError("layer_decay must be in (0, 1]")
        if len(self.lr_drop_epochs) != 2 or self.lr_drop_epochs[0] > self.lr_drop_epochs[1]:
            raise ConfigError("lr_drop_epochs must be two non-decreasing epochs")


VITS_BACKBONE = BackboneConfig()

TINY_BACKBONE = BackboneConfig(
    embed_dim=32,
    patch_size=8,
    num_groups=2,
    blocks_per_group=2,
    num_heads=2,
    mlp_ratio=4,
    window_size=4,
    neck_kind="residual",
    pos_grid=8,
)

PRESETS: dict[str, RunConfig] = {
    "vits": RunConfig(backbone=VITS_BACKBONE, crop_size=512),
    "tiny": RunConfig(
        backbone=TINY_BACKBONE,
        crop_size=64,
        batch_size=4,
        epochs=10,
        base_lr=1e-3,
        # Short desk runs should not hit the step-down epochs.
        lr_drop_epochs=(10_000, 20_000),
    ),
}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


def _take(cls, table: dict, **overrides):
    fields = cls.__dataclass_fields__
    kwargs = {}
    for key, value in table.items():
        if key not in fields:
            raise ConfigError(f"unknown {cls.__name__} key {key!r}")
        kwargs[key] = value
    kwargs.update(overrides)
    return cls(**kwargs)


def load_toml(path) -> RunConfig:
    """Builds a RunConfig from a TOML file.

    Layout: top-level run keys, with optional [backbone] and [augment]
    tables. Unknown keys are rejected.
    """
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    base = raw.pop("preset", None)
    backbone_tbl = raw.pop("backbone", {})
    augment_tbl = raw.pop("augment", {})
    if base is not None:
        cfg = preset(base)
        backbone = replace(cfg.backbone, **_checked_fields(BackboneConfig, backbone_tbl))
        augment = replace(cfg.augment, **_checked_fields(AugmentConfig, augment_tbl))
        run_kwargs = _checked_fields(RunConfig, raw)
        return replace(cfg, backbone=backbone, augment=augment, **run_kwargs)
    backbone = _take(BackboneConfig, backbone_tbl)
    augment = _take(AugmentConfig, augment_tbl)
    if "lr_drop_epochs" in raw:
        raw["lr_drop_epochs"] = tuple(raw["lr_drop_epochs"])
    return _take(RunConfig, raw, backbone=backbone, augment=augment)


def _checked_fields(cls, table: dict) -> dict:
    fields = cls.__dataclass_fields__
    out = {}
    for key, value in table.items():
        if key not in fields:
            raise ConfigError(f"unknown {cls.__name__} key {key!r}")
        if key == "lr_drop_epochs":
            value = tuple(value)
        out[key] = value
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    out = asdict(cfg)
    out["lr_drop_epochs"] = list(cfg.lr_drop_epochs)
    return out


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    backbone = BackboneConfig(**raw.pop("backbone"))
    augment = AugmentConfig(**raw.pop("augment"))
    if "lr_drop_epochs" in raw:
        raw["lr_drop_epochs"] = tuple(raw["lr_drop_epochs"])
    return RunConfig(backbone=backbone, augment=augment, **raw)
