"""Checkpoint archives.

An archive is a directory (or .zip) holding manifest.json plus one raw
little-endian buffer, weights.bin. The manifest maps each tensor name to
dtype, shape and byte offset. Tensor names are model-structural, not
torch-internal: patch_embed.kernel, pos_embed, blocks.{i}.attn.qkv.weight,
necks.{g}.*, convstream.{i}.*, fusion.{i}.*, head.* (full table in the
README). A 3-channel encoder-only archive is the hand-off format for
pretrained backbones; expanding it to the 4-channel matting input zero-fills
the extra patch-kernel slice so outputs are preserved.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from .backbone import ViTBackbone, inflate_patch_kernel
from .config import BackboneConfig, RunConfig, config_from_dict, config_to_dict
from .decoder import MattingModel
from .exceptions import CheckpointError, MissingParameter, ShapeMismatch

FORMAT_VERSION = 1
_MANIFEST = "manifest.json"
_BUFFER = "weights.bin"


def _archive_key(state_key: str) -> str:
    """torch state_dict key -> archive tensor name."""
    key = state_key
    if key == "backbone.patch_embed.weight":
        return "patch_embed.kernel"
    if key == "backbone.patch_embed.bias":
        return "patch_embed.bias"
    if key == "backbone.pos_embed":
        return "pos_embed"
    if key.startswith("backbone.blocks.") or key.startswith("backbone.necks."):
        return key[len("backbone."):]
    if key.startswith("convstream.stages."):
        return "convstream." + key[len("convstream.stages."):]
    if key.startswith("fusion."):
        return key.replace(".block.", ".", 1)
    return key  # head.*


def _state_key(archive_name: str) -> str:
    name = archive_name
    if name == "patch_embed.kernel":
        return "backbone.patch_embed.weight"
    if name == "patch_embed.bias":
        return "backbone.patch_embed.bias"
    if name == "pos_embed":
        return "backbone.pos_embed"
    if name.startswith("blocks.") or name.startswith("necks."):
        return "backbone." + name
    if name.startswith("convstream."):
        return "convstream.stages." + name[len("convstream."):]
    if name.startswith("fusion."):
        head, rest = name.split(".", 1)
        idx, tail = rest.split(".", 1)
        return f"fusion.{idx}.block.{tail}"
    return name


def model_to_tensors(model: torch.nn.Module) -> dict[str, np.ndarray]:
    out = {}
    for key, value in model.state_dict().items():
        out[_archive_key(key)] = value.detach().cpu().numpy()
    return out


def tensors_to_model(model: torch.nn.Module, tensors: dict[str, np.ndarray]) -> None:
    state = {}
    for key, current in model.state_dict().items():
        name = _archive_key(key)
        if name not in tensors:
            raise MissingParameter(f"checkpoint lacks tensor {name!r}")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(current.shape):
            raise ShapeMismatch(
                f"tensor {name!r}: checkpoint {tuple(arr.shape)} vs model "
                f"{tuple(current.shape)}"
            )
        # frombuffer views are read-only; torch needs a writable copy
        state[key] = torch.from_numpy(np.array(arr)).to(current.dtype)
    model.load_state_dict(state, strict=True)


def save_archive(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Writes manifest + buffer; a .zip suffix selects zip packaging."""
    entries = {}
    blob = io.BytesIO()
    offset = 0
    for name in sorted(tensors):
        src = np.asarray(tensors[name])
        arr = np.ascontiguousarray(src)  # note: promotes 0-dim to 1-dim
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes()
        entries[name] = {
            "dtype": dtype.str,
            "shape": list(src.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        blob.write(raw)
        offset += len(raw)
    manifest = json.dumps(
        {"format": FORMAT_VERSION, "meta": meta, "tensors": entries},
        indent=2, sort_keys=True,
    )
    path = Path(path)
    if path.suffix == ".zip":
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            zf.writestr(_MANIFEST, manifest)
            zf.writestr(_BUFFER, blob.getvalue())
    else:
        path.mkdir(parents=True, exist_ok=True)
        (path / _MANIFEST).write_text(manifest)
        (path / _BUFFER).write_bytes(blob.getvalue())


def load_archive(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        if path.is_file() and zipfile.is_zipfile(path):
            with zipfile.ZipFile(path) as zf:
                manifest = json.loads(zf.read(_MANIFEST))
                buffer = zf.read(_BUFFER)
        else:
            manifest = json.loads((path / _MANIFEST).read_text())
            buffer = (path / _BUFFER).read_bytes()
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint at {path}: {exc}") from exc
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r}")
    tensors = {}
    for name, entry in manifest["tensors"].items():
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(buffer):
            raise CheckpointError(f"tensor {name!r} overruns the buffer")
        arr = np.frombuffer(buffer, dtype=np.dtype(entry["dtype"]),
                            count=int(np.prod(entry["shape"], dtype=np.int64)) or 1,
                            offset=start)
        if len(entry["shape"]) == 0:
            arr = arr.reshape(())
        else:
            arr = arr.reshape(entry["shape"])
        tensors[name] = arr
    return tensors, manifest.get("meta", {})


def save_model(path, model: MattingModel, run_config: RunConfig,
               extra: dict[str, np.ndarray] | None = None,
               extra_meta: dict | None = None) -> None:
    tensors = model_to_tensors(model)
    if extra:
        tensors.update(extra)
    meta = {
        "kind": "matting",
        "config": config_to_dict(run_config),
        "detail_levels": model.detail_levels,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_archive(path, tensors, meta)


def load_model(path) -> tuple[MattingModel, RunConfig, dict]:
    """Rebuilds a matting model (and its run config) from an archive."""
    tensors, meta = load_archive(path)
    if meta.get("kind") != "matting":
        raise CheckpointError(f"archive at {path} is not a matting checkpoint")
    run_config = config_from_dict(meta["config"])
    model = MattingModel(run_config.backbone,
                         detail_levels=meta.get("detail_levels"))
    model_tensors = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    tensors_to_model(model, model_tensors)
    model.eval()
    return model, run_config, meta


# --- 3-channel pretrained encoder hand-off ---

def save_backbone(path, backbone: ViTBackbone, cfg: BackboneConfig) -> None:
    tensors = {}
    for key, value in backbone.state_dict().items():
        name = _archive_key("backbone." + key)
        tensors[name] = value.detach().cpu().numpy()
    save_archive(path, tensors, {"kind": "backbone", "backbone": asdict(cfg)})


def make_reference_backbone(cfg: BackboneConfig, seed: int) -> ViTBackbone:
    """A randomly initialized 3-channel encoder, used as a stand-in for an
    externally pretrained model."""
    ref_cfg = replace(cfg, in_channels=3, neck_kind="none")
    backbone = ViTBackbone(ref_cfg)
    backbone.init_weights(torch.Generator().manual_seed(seed))
    return backbone


_BACKBONE_TENSOR_SUFFIXES = (
    "norm1.weight", "norm1.bias", "attn.qkv.weight", "attn.qkv.bias",
    "attn.proj.weight", "attn.proj.bias", "norm2.weight", "norm2.bias",
    "mlp.fc1.weight", "mlp.fc1.bias", "mlp.fc2.weight", "mlp.fc2.bias",
)


def init_from_pretrained(pretrained_path, cfg: BackboneConfig, seed: int,
                         detail_levels: int | None = None) -> MattingModel:
    """Builds a 4-channel matting model from a 3-channel encoder archive.

    The patch kernel gains a zero fourth slice (so a zero trimap channel
    reproduces the encoder bit-for-bit on RGB); encoder tensors are copied
    exactly; the positional table is bilinearly resized if the stored grids
    differ; everything new (necks, decoder) draws from the seed.
    """
    tensors, meta = load_archive(pretrained_path)
    if meta.get("kind") not in ("backbone", None):
        raise CheckpointError("expected a 3-channel encoder archive")

    required = ["patch_embed.kernel", "patch_embed.bias", "pos_embed"]
    depth = cfg.depth
    for i in range(depth):
        required += [f"blocks.{i}.{suffix}" for suffix in _BACKBONE_TENSOR_SUFFIXES]
    for name in required:
        if name not in tensors:
            raise MissingParameter(f"pretrained archive lacks tensor {name!r}")

    kernel = torch.from_numpy(np.array(tensors["patch_embed.kernel"]))
    if kernel.dim() != 4 or kernel.shape[1] != 3:
        raise ShapeMismatch(
            f"pretrained patch kernel must be (D,3,P,P), got {tuple(kernel.shape)}"
        )
    if kernel.shape[0] != cfg.embed_dim or kernel.shape[2] != cfg.patch_size:
        raise ShapeMismatch(
            f"pretrained kernel {tuple(kernel.shape)} incompatible with config"
        )

    model = MattingModel(cfg, detail_levels=detail_levels)
    model.init_weights(seed)
    with torch.no_grad():
        model.backbone.patch_embed.weight.copy_(inflate_patch_kernel(kernel.float()))
        model.backbone.patch_embed.bias.copy_(
            torch.from_numpy(tensors["patch_embed.bias"].copy()).float())
        pos = torch.from_numpy(tensors["pos_embed"].copy()).float()
        target = model.backbone.pos_embed
        if pos.shape != target.shape:
            pos = pos.permute(0, 3, 1, 2)
            pos = torch.nn.functional.interpolate(
                pos, size=target.shape[1:3], mode="bilinear", align_corners=False)
            pos = pos.permute(0, 2, 3, 1)
        target.copy_(pos)
        for i in range(depth):
            block = model.backbone.blocks[i]
            for suffix in _BACKBONE_TENSOR_SUFFIXES:
                src = torch.from_numpy(tensors[f"blocks.{i}.{suffix}"].copy()).float()
                obj = block
                *parts, leaf = suffix.split(".")
                for part in parts:
                    obj = getattr(obj, part)
                dst = getattr(obj, leaf)
                if dst.shape != src.shape:
                    raise ShapeMismatch(f"blocks.{i}.{suffix}: {tuple(src.shape)} "
                                        f"vs {tuple(dst.shape)}")
                dst.copy_(src)
    return model
