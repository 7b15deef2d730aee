"""Matting evaluation metrics: SAD, MSE, Grad and Conn.

Conventions (fixed so results are comparable across tools): SAD, Grad and
Conn are sums over the evaluation mask divided by 1000; MSE is the mask
mean scaled by 1000. All math runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import ShapeMismatch

UNKNOWN_ONLY = "unknown_only"
WHOLE_IMAGE = "whole_image"

GRAD_SIGMA = 1.4
# Derivative-of-Gaussian kernels are truncated at this many sigmas.
GRAD_TRUNCATE = 4.0
CONN_STEP = 0.1
CONN_THETA = 0.15

_FOUR_NEIGHBORHOOD = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


def _as2d(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D map, got shape {arr.shape}")
    return arr


def _triple(pred, gt, mask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p, g = _as2d(pred), _as2d(gt)
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred {p.shape} vs gt {g.shape}")
    if mask is None:
        m = np.ones(p.shape, dtype=bool)
    else:
        m = np.asarray(mask)
        if m.ndim == 3 and m.shape[2] == 1:
            m = m[..., 0]
        if m.shape != p.shape:
            raise ShapeMismatch(f"mask {m.shape} vs pred {p.shape}")
        m = m.astype(bool)
    return p, g, m


def sad(pred, gt, mask=None) -> float:
    """Sum of absolute differences over the mask, divided by 1000."""
    p, g, m = _triple(pred, gt, mask)
    return float(np.abs(p - g)[m].sum() / 1000.0)


def mse(pred, gt, mask=None) -> float:
    """Mean squared difference over the mask, scaled by 1000."""
    p, g, m = _triple(pred, gt, mask)
    if not m.any():
        return 0.0
    return float(1000.0 * np.square(p - g)[m].mean())


def _gauss(x: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-np.square(x) / (2.0 * sigma * sigma)) / (sigma * np.sqrt(2.0 * np.pi))


def _dgauss(x: np.ndarray, sigma: float) -> np.ndarray:
    return -x * _gauss(x, sigma) / (sigma * sigma)


def gaussian_derivative_kernels(sigma: float = GRAD_SIGMA) -> tuple[np.ndarray, np.ndarray]:
    """Normalized x/y derivative-of-Gaussian kernels (L2 norm 1)."""
    half = int(np.ceil(GRAD_TRUNCATE * sigma))
    coords = np.arange(-half, half + 1, dtype=np.float64)
    hx = np.outer(_gauss(coords, sigma), _dgauss(coords, sigma))
    hx = hx / np.sqrt(np.square(hx).sum())
    return hx, hx.T


def gradient_magnitude(x: np.ndarray, sigma: float = GRAD_SIGMA) -> np.ndarray:
    hx, hy = gaussian_derivative_kernels(sigma)
    gx = ndimage.convolve(x, hx, mode="nearest")
    gy = ndimage.convolve(x, hy, mode="nearest")
    return np.sqrt(gx * gx + gy * gy)


def grad_metric(pred, gt, mask=None) -> float:
    """Sum of squared gradient-magnitude differences over the mask, /1000.

    Gradients come from derivative-of-Gaussian filtering (sigma 1.4) over
    the full image with replicated borders; the mask applies to the sum.
    """
    p, g, m = _triple(pred, gt, mask)
    diff = gradient_magnitude(p) - gradient_magnitude(g)
    return float(np.square(diff)[m].sum() / 1000.0)


def _largest_component(binary: np.ndarray) -> np.ndarray:
    """Largest 4-connected foreground component (ties: lowest label, i.e.
    the component whose first pixel comes first in raster order)."""
    labels, count = ndimage.label(binary, structure=_FOUR_NEIGHBORHOOD)
    if count == 0:
        return np.zeros_like(binary, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    return labels == keep


def connectedness_maps(pred: np.ndarray, gt: np.ndarray,
                       step: float = CONN_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Degree-of-connectedness maps (phi) for pred and gt.

    Thresholds sweep 0.1..1.0; for each, the source is the largest
    4-connected component of the joint thresholded mask. A pixel's level is
    the last threshold before it fell out of the source (1 if it never did).
    phi = 1 - d where d = alpha - level when d >= 0.15, else 1.
    """
    thresholds = np.arange(0.0, 1.0 + step, step)
    level = -np.ones_like(gt)
    for i in range(1, len(thresholds)):
        joint = (pred >= thresholds[i]) & (gt >= thresholds[i])
        source = _largest_component(joint)
        dropped = (level == -1) & ~source
        level[dropped] = thresholds[i - 1]
    level[level == -1] = 1.0

    def phi(alpha):
        d = alpha - level
        return 1.0 - d * (d >= CONN_THETA)

    return phi(pred), phi(gt)


def conn_metric(pred, gt, mask=None) -> float:
    """Sum over the mask of |phi(pred) - phi(gt)|, divided by 1000."""
    p, g, m = _triple(pred, gt, mask)
    phi_p, phi_g = connectedness_maps(p, g)
    return float(np.abs(phi_p - phi_g)[m].sum() / 1000.0)


@dataclass(frozen=True)
class MetricsReport:
    sad: float
    mse: float
    grad: float
    conn: float
    region_mode: str

    def as_dict(self) -> dict:
        return {"sad": self.sad, "mse": self.mse, "grad": self.grad,
                "conn": self.conn, "region_mode": self.region_mode}


def evaluate(pred, gt, trimap, mode: str = UNKNOWN_ONLY) -> MetricsReport:
    """All four metrics over the unknown region or the whole image."""
    if mode not in (UNKNOWN_ONLY, WHOLE_IMAGE):
        raise ValueError(f"unknown region mode {mode!r}")
    p, g = _as2d(pred), _as2d(gt)
    if mode == UNKNOWN_ONLY:
        t = _as2d(trimap)
        if t.shape != p.shape:
            raise ShapeMismatch(f"trimap {t.shape} vs pred {p.shape}")
        mask = np.abs(t - 0.5) < 1e-6
    else:
        mask = np.ones(p.shape, dtype=bool)
    return MetricsReport(
        sad=sad(p, g, mask),
        mse=mse(p, g, mask),
        grad=grad_metric(p, g, mask),
        conn=conn_metric(p, g, mask),
        region_mode=mode,
    )
