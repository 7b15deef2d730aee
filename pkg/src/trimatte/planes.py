"""Core data planes: images, trimaps and alpha mattes.

All pixel data in this package is float32 in [0, 1], stored row-major as
(height, width, channels) numpy arrays.  Trimaps use exactly three values:
0 (background), 0.5 (unknown), 1 (foreground).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .exceptions import (
    CorruptImage,
    InvalidTrimapValue,
    NonFiniteData,
    ShapeMismatch,
)

TRIMAP_LEVELS = (0.0, 0.5, 1.0)
# Ingestion snaps anything this close to a canonical level; beyond it we
# refuse rather than guess.
SNAP_TOLERANCE = 1e-2
_HEADER = struct.Struct("<4sIII")
_MAGIC = b"PLN1"


@dataclass
class Plane:
    """A (height, width, channels) float32 raster."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeMismatch(f"plane must be 2-D or 3-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.isfinite(arr).all():
            raise NonFiniteData("plane contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_bytes(self) -> bytes:
        """Serialize to a little-endian buffer; round-trips bit-exactly."""
        h, w, c = self.data.shape
        payload = self.data.astype("<f4", copy=False).tobytes()
        return _HEADER.pack(_MAGIC, h, w, c) + payload

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Plane":
        if len(buf) < _HEADER.size:
            raise CorruptImage("plane buffer truncated")
        magic, h, w, c = _HEADER.unpack_from(buf)
        if magic != _MAGIC:
            raise CorruptImage("bad plane magic")
        expect = _HEADER.size + h * w * c * 4
        if len(buf) != expect:
            raise CorruptImage(f"plane buffer length {len(buf)} != {expect}")
        arr = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
        return cls(arr.copy())


def validate_matting_input(image: Plane, trimap: Plane) -> None:
    """Checks ingested image/trimap agreement; raises on violation."""
    if trimap.channels != 1:
        raise ShapeMismatch(f"trimap must have 1 channel, got {trimap.channels}")
    if image.channels != 3:
        raise ShapeMismatch(f"image must have 3 channels, got {image.channels}")
    if (image.height, image.width) != (trimap.height, trimap.width):
        raise ShapeMismatch(
            f"image {image.height}x{image.width} vs trimap "
            f"{trimap.height}x{trimap.width}"
        )
    for plane in (image, trimap):
        if not np.isfinite(plane.data).all():
            raise NonFiniteData("non-finite pixel values")
    if image.data.min() < 0.0 or image.data.max() > 1.0:
        raise NonFiniteData("image values outside [0, 1]")
    levels = np.asarray(TRIMAP_LEVELS, dtype=np.float32)
    dist = np.abs(trimap.data[..., 0][..., None] - levels).min(axis=-1)
    if dist.max() > 1e-6:
        bad = float(trimap.data[..., 0].flat[int(dist.argmax())])
        raise InvalidTrimapValue(f"trimap value {bad!r} not in {{0, 0.5, 1}}")


@dataclass
class MattingInput:
    """A validated (image, trimap) pair ready for the model."""

    image: Plane
    trimap: Plane

    def __post_init__(self) -> None:
        validate_matting_input(self.image, self.trimap)

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def width(self) -> int:
        return self.image.width

    def stacked(self) -> np.ndarray:
        """Returns the (H, W, 4) image+trimap stack fed to the network."""
        return np.concatenate([self.image.data, self.trimap.data], axis=2)


def snap_trimap(values: np.ndarray) -> np.ndarray:
    """Snaps near-canonical trimap values to exactly {0, 0.5, 1}.

    Values further than SNAP_TOLERANCE from every level raise
    InvalidTrimapValue.
    """
    arr = np.asarray(values, dtype=np.float32)
    levels = np.asarray(TRIMAP_LEVELS, dtype=np.float32)
    dist = np.abs(arr[..., None] - levels)
    nearest = dist.argmin(axis=-1)
    if dist.min(axis=-1).max() > SNAP_TOLERANCE:
        flat = dist.min(axis=-1)
        bad = float(arr.flat[int(flat.argmax())])
        raise InvalidTrimapValue(
            f"trimap value {bad!r} is more than {SNAP_TOLERANCE} from 0, 0.5 and 1"
        )
    return levels[nearest]


def _decode_to_array(img: Image.Image) -> np.ndarray:
    """PIL image -> float32 array in [0, 1], preserving 16-bit depth."""
    if img.mode in ("I", "I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float32) / 65535.0
    elif img.mode == "F":
        arr = np.asarray(img, dtype=np.float32)
    else:
        if img.mode not in ("L", "RGB", "RGBA", "LA"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
    return arr


def load_image(path) -> Plane:
    """Loads an RGB image file as a 3-channel Plane in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = _decode_to_array(img)
    except (OSError, ValueError) as exc:
        raise CorruptImage(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[2] == 4 or arr.shape[2] == 2:
        arr = arr[:, :, :3] if arr.shape[2] == 4 else np.repeat(arr[:, :, :1], 3, axis=2)
    return Plane(np.clip(arr, 0.0, 1.0))


def load_gray(path) -> Plane:
    """Loads a single-channel file (alpha or trimap source) in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = _decode_to_array(img)
    except (OSError, ValueError) as exc:
        raise CorruptImage(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return Plane(np.clip(arr, 0.0, 1.0)[:, :, None])


def load_trimap(path) -> Plane:
    """Loads a trimap file, snapping gray levels to {0, 0.5, 1}."""
    plane = load_gray(path)
    return Plane(snap_trimap(plane.data[..., 0])[:, :, None])


def trimap_from_bytes(buf: bytes) -> Plane:
    import io

    return load_trimap(io.BytesIO(buf))


def image_from_bytes(buf: bytes) -> Plane:
    import io

    return load_image(io.BytesIO(buf))


def save_gray(path, plane: Plane) -> None:
    """Writes a 1-channel plane as 8-bit grayscale PNG (round-half-up)."""
    if plane.channels != 1:
        raise ShapeMismatch("save_gray expects a 1-channel plane")
    arr = np.floor(plane.data[..., 0] * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def save_image(path, plane: Plane) -> None:
    """Writes a 3-channel plane as 8-bit RGB PNG."""
    if plane.channels != 3:
        raise ShapeMismatch("save_image expects a 3-channel plane")
    arr = np.floor(plane.data * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def encode_gray_png(plane: Plane) -> bytes:
    import io

    buf = io.BytesIO()
    save_gray(buf, plane)
    return buf.getvalue()


def encode_image_png(plane: Plane) -> bytes:
    import io

    buf = io.BytesIO()
    save_image(buf, plane)
    return buf.getvalue()


def make_rng(seed: int) -> np.random.Generator:
    """Single entry point for numpy randomness; same seed, same stream."""
    return np.random.default_rng(seed)
