"""Dataset synthesis and training-time augmentation.

Training samples are (fg, bg, alpha) triples. The composite image is the
convex blend alpha*fg + (1-alpha)*bg after the background is resized to
cover and center-cropped to the alpha dimensions. Trimaps are produced from
alpha by dilation/erosion with randomly sized square kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np

from .config import AugmentConfig
from .exceptions import DatasetError, MissingDirectory, ShapeMismatch
from .planes import Plane, load_gray, load_image, make_rng, save_gray, save_image


def composite(fg: Plane, bg: Plane, alpha: Plane) -> Plane:
    """alpha*fg + (1-alpha)*bg, exact at alpha==1, alpha==0 and fg==bg."""
    if (fg.height, fg.width) != (alpha.height, alpha.width) or \
            (bg.height, bg.width) != (alpha.height, alpha.width):
        raise ShapeMismatch(
            f"fg {fg.data.shape} / bg {bg.data.shape} / alpha {alpha.data.shape}"
        )
    a = alpha.data
    out = bg.data + a * (fg.data - bg.data)
    solid = (a == 1.0)[..., 0]
    out[solid] = fg.data[solid]
    return Plane(out)


def fit_background(bg: Plane, height: int, width: int) -> Plane:
    """Scales the background to cover (height, width), then center-crops."""
    if (bg.height, bg.width) == (height, width):
        return bg
    scale = max(height / bg.height, width / bg.width)
    nh = max(height, int(math.ceil(bg.height * scale)))
    nw = max(width, int(math.ceil(bg.width * scale)))
    resized = cv2.resize(bg.data, (nw, nh), interpolation=cv2.INTER_LINEAR)
    top = (nh - height) // 2
    left = (nw - width) // 2
    return Plane(resized[top:top + height, left:left + width])


def _odd(k: int) -> int:
    return k if k % 2 == 1 else k + 1


def generate_trimap(alpha: Plane, kernel_min: int = 1, kernel_max: int = 30,
                    rng: np.random.Generator | None = None) -> Plane:
    """Trimap from alpha by erosion (certain fg) and dilation (certain bg).

    Two kernel sizes are drawn uniformly from [kernel_min, kernel_max] and
    rounded up to odd. Certain foreground erodes the alpha==1 mask; certain
    background is the complement of the dilated alpha>0 mask; the rest is
    unknown (0.5). Borders replicate, so constant masks stay constant.
    """
    if rng is None:
        rng = make_rng(0)
    k_e = _odd(int(rng.integers(kernel_min, kernel_max + 1)))
    k_d = _odd(int(rng.integers(kernel_min, kernel_max + 1)))
    return trimap_with_kernels(alpha, k_e, k_d)


def trimap_with_kernels(alpha: Plane, k_e: int, k_d: int) -> Plane:
    a = alpha.data[..., 0]
    solid = (a >= 1.0).astype(np.uint8)
    any_fg = (a > 0.0).astype(np.uint8)
    se_e = np.ones((k_e, k_e), np.uint8)
    se_d = np.ones((k_d, k_d), np.uint8)
    certain_fg = cv2.erode(solid, se_e, borderType=cv2.BORDER_REPLICATE)
    dilated = cv2.dilate(any_fg, se_d, borderType=cv2.BORDER_REPLICATE)
    tri = np.full(a.shape, 0.5, dtype=np.float32)
    tri[dilated == 0] = 0.0
    tri[certain_fg == 1] = 1.0
    return Plane(tri[:, :, None])


@dataclass
class MattingSample:
    """A foreground/background/alpha triple with optional fixed trimap."""

    fg: Plane
    bg: Plane
    alpha: Plane
    trimap: Plane | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if (self.fg.height, self.fg.width) != (self.alpha.height, self.alpha.width):
            raise ShapeMismatch("fg and alpha dims differ")

    def fitted_bg(self) -> Plane:
        return fit_background(self.bg, self.alpha.height, self.alpha.width)

    def composite(self) -> Plane:
        return composite(self.fg, self.fitted_bg(), self.alpha)

    def with_trimap(self, rng: np.random.Generator, kernel_min: int = 1,
                    kernel_max: int = 30) -> "MattingSample":
        tri = generate_trimap(self.alpha, kernel_min, kernel_max, rng)
        return replace(self, trimap=tri)


def _affine_matrix(h: int, w: int, rotation: float, scale: float, shear: float,
                   flip: bool) -> np.ndarray:
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t_fwd = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]], dtype=np.float64)
    t_back = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    th = math.radians(rotation)
    rot = np.array([[math.cos(th), -math.sin(th), 0],
                    [math.sin(th), math.cos(th), 0], [0, 0, 1]])
    sh = math.tan(math.radians(shear))
    shear_m = np.array([[1, sh, 0], [0, 1, 0], [0, 0, 1]])
    scale_m = np.diag([scale, scale, 1.0])
    flip_m = np.diag([-1.0 if flip else 1.0, 1.0, 1.0])
    m = t_fwd @ rot @ shear_m @ scale_m @ flip_m @ t_back
    return m[:2].astype(np.float64)


def _warp(arr: np.ndarray, m: np.ndarray, h: int, w: int) -> np.ndarray:
    return cv2.warpAffine(
        arr, m, (w, h), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0,
    )


def _pad_to(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    ph, pw = max(0, h - arr.shape[0]), max(0, w - arr.shape[1])
    if not ph and not pw:
        return arr
    widths = [(0, ph), (0, pw)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, widths, mode="constant")


def _jitter_hue(fg: np.ndarray, delta: float) -> np.ndarray:
    hsv = cv2.cvtColor(fg, cv2.COLOR_RGB2HSV)
    hsv[..., 0] = (hsv[..., 0] + delta * 360.0) % 360.0
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(out, 0.0, 1.0)


def augment(sample: MattingSample, crop: int, cfg: AugmentConfig,
            rng: np.random.Generator) -> MattingSample:
    """Random affine + unknown-biased crop + hue jitter.

    The same warp is applied to fg and alpha; the trimap is regenerated from
    the cropped alpha so its values stay exact. Draw order (fixed for
    reproducibility): flip, rotation, scale, shear, k_e, k_d, crop origins,
    hue delta.
    """
    flip = bool(rng.random() < cfg.flip_prob)
    rotation = float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    scale = float(rng.uniform(cfg.scale_lo, cfg.scale_hi))
    shear = float(rng.uniform(-cfg.shear_deg, cfg.shear_deg))
    k_e = _odd(int(rng.integers(cfg.kernel_lo, cfg.kernel_hi + 1)))
    k_d = _odd(int(rng.integers(cfg.kernel_lo, cfg.kernel_hi + 1)))

    h, w = sample.alpha.height, sample.alpha.width
    identity = (not flip and rotation == 0.0 and scale == 1.0 and shear == 0.0)
    if identity:
        fg_w, al_w = sample.fg.data, sample.alpha.data[..., 0]
    else:
        m = _affine_matrix(h, w, rotation, scale, shear, flip)
        fg_w = _warp(sample.fg.data, m, h, w)
        al_w = _warp(sample.alpha.data[..., 0], m, h, w)
    al_w = np.clip(al_w, 0.0, 1.0)
    fg_w = np.clip(_pad_to(fg_w, crop, crop), 0.0, 1.0)
    al_w = _pad_to(al_w, crop, crop)

    hh, ww = al_w.shape
    origin = (0, 0)
    tri_c = None
    for _ in range(cfg.crop_tries):
        oy = int(rng.integers(0, hh - crop + 1))
        ox = int(rng.integers(0, ww - crop + 1))
        cand = Plane(al_w[oy:oy + crop, ox:ox + crop, None])
        tri = trimap_with_kernels(cand, k_e, k_d)
        origin, tri_c = (oy, ox), tri
        if float((tri.data == 0.5).mean()) >= cfg.min_unknown_frac:
            break
    oy, ox = origin
    fg_c = fg_w[oy:oy + crop, ox:ox + crop]
    al_c = al_w[oy:oy + crop, ox:ox + crop]

    delta = float(rng.uniform(-cfg.hue_delta, cfg.hue_delta))
    if delta != 0.0:
        fg_c = _jitter_hue(fg_c, delta)

    bg_c = fit_background(sample.bg, crop, crop)
    return MattingSample(Plane(fg_c), bg_c, Plane(al_c[:, :, None]),
                         trimap=tri_c, name=sample.name)


def _sorted_pngs(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.suffix.lower() == ".png")


def ingest_dataset(root) -> Iterator[MattingSample]:
    """Iterates samples from root/{fg,alpha,bg}/*.png.

    Sorted foreground names pair with sorted alpha names positionally; every
    foreground pairs with every background, foreground-major, so fg count F
    and bg count B yield F*B samples.
    """
    root = Path(root)
    for sub in ("fg", "alpha", "bg"):
        if not (root / sub).is_dir():
            raise MissingDirectory(f"missing dataset directory {root / sub}")
    fgs = _sorted_pngs(root / "fg")
    alphas = _sorted_pngs(root / "alpha")
    bgs = _sorted_pngs(root / "bg")
    if len(fgs) != len(alphas):
        raise DatasetError(f"{len(fgs)} foregrounds but {len(alphas)} alphas")
    if not fgs or not bgs:
        raise DatasetError("dataset has no foregrounds or no backgrounds")
    for fg_path, alpha_path in zip(fgs, alphas):
        for bg_path in bgs:
            yield MattingSample(
                fg=load_image(fg_path),
                bg=load_image(bg_path),
                alpha=load_gray(alpha_path),
                name=f"{fg_path.stem}+{bg_path.stem}",
            )


# --- procedural synthetic data (for tests and desk-scale training) ---

def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    coeff = rng.uniform(-1.0, 1.0, size=6)
    field = (coeff[0] + coeff[1] * xs + coeff[2] * ys + coeff[3] * xs * ys
             + coeff[4] * np.sin(2 * np.pi * xs) * 0.3
             + coeff[5] * np.sin(2 * np.pi * ys) * 0.3)
    lo, hi = field.min(), field.max()
    return ((field - lo) / (hi - lo + 1e-9)).astype(np.float32)


def synth_alpha(rng: np.random.Generator, size: int) -> Plane:
    """Soft blobby alpha with solid cores (exact 1) and empty borders."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    field = np.zeros((size, size), np.float32)
    for _ in range(int(rng.integers(1, 4))):
        cy = rng.uniform(0.25 * size, 0.75 * size)
        cx = rng.uniform(0.25 * size, 0.75 * size)
        r = rng.uniform(0.12 * size, 0.3 * size)
        d2 = ((ys - cy) ** 2 + (xs - cx) ** 2) / (r * r)
        field = np.maximum(field, np.exp(-d2))
    alpha = np.clip((field - 0.35) / 0.3, 0.0, 1.0)
    return Plane(alpha[:, :, None])


def synth_color(rng: np.random.Generator, size: int) -> Plane:
    planes = [c * _smooth_field(rng, size) for c in rng.uniform(0.3, 1.0, 3)]
    return Plane(np.clip(np.stack(planes, axis=2), 0.0, 1.0))


def synth_sample(rng: np.random.Generator, size: int) -> MattingSample:
    return MattingSample(
        fg=synth_color(rng, size),
        bg=synth_color(rng, size),
        alpha=synth_alpha(rng, size),
    )


def synthetic_samples(count: int, size: int, seed: int) -> list[MattingSample]:
    rng = make_rng(seed)
    return [synth_sample(rng, size) for _ in range(count)]


def build_synthetic_dataset(root, num_fg: int, num_bg: int, size: int,
                            seed: int) -> dict:
    """Writes a root/{fg,alpha,bg} PNG tree of procedural shapes."""
    root = Path(root)
    rng = make_rng(seed)
    for sub in ("fg", "alpha", "bg"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i in range(num_fg):
        save_image(root / "fg" / f"{i:04d}.png", synth_color(rng, size))
        save_gray(root / "alpha" / f"{i:04d}.png", synth_alpha(rng, size))
    for i in range(num_bg):
        save_image(root / "bg" / f"{i:04d}.png", synth_color(rng, size))
    return {"fg": num_fg, "bg": num_bg, "size": size, "samples": num_fg * num_bg}
