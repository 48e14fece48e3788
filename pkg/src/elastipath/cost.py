"""Orientation-dependent cost from an image via an oriented-flux filter.

Per scale, the second-order Gaussian-derivative (Hessian) field of the image
is assembled into a 2x2 flux matrix; the response at orientation theta is the
negated quadratic form on the direction perpendicular to the heading, so a
bright tube aligned with the heading responds maximally.  The per-node score
g(x, theta) is the max over scales, clamped nonnegative, and the cost is
psi = exp(-alpha * g / max(g)), strictly positive as the solver requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .grid import LiftedGrid, ScalarField, make_grid


class CostError(ValueError):
    """Invalid input to the cost construction."""


@dataclass
class OrientationScore:
    """Nonnegative per-orientation responses g(x, theta) with g pi-periodic."""

    grid: LiftedGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise CostError(
                f"score shape {self.values.shape} does not match grid {self.grid.shape}")
        if np.any(self.values < 0.0) or not np.isfinite(self.values).all():
            raise CostError("orientation score must be finite and nonnegative")
        nt = self.grid.n_theta
        if nt % 2 == 0:
            half = nt // 2
            gap = np.max(np.abs(self.values[..., :half] - self.values[..., half:]))
            scale = max(1.0, float(np.max(self.values)))
            if gap > 1e-9 * scale:
                raise CostError(f"score violates pi-symmetry by {gap:.3e}")


def orientation_score_oof(image: np.ndarray, scales=(2.0, 3.0, 4.0),
                          n_theta: int = 72, h_x: float = 1.0) -> OrientationScore:
    """Multi-scale oriented-flux orientation score of a grayscale image.

    ``image`` is indexed [ix, iy] (transpose image-order input first).  Per
    scale r the flux matrix is r * Hessian(G_r * image) (second derivatives
    at standard deviation r, normalized by the circumference factor), and the
    response is the negated perpendicular quadratic form, clamped at zero.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise CostError(f"expected a 2-D image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise CostError("image must be finite")
    scales = list(scales)
    if not scales or any(s <= 0 for s in scales):
        raise CostError("need at least one positive scale")

    grid = make_grid(img.shape[0], img.shape[1], n_theta, h_x)
    img = img - img.mean()  # removes the truncated-kernel DC bias
    thetas = np.arange(n_theta) * grid.h_theta
    s2 = np.sin(thetas) ** 2
    c2 = np.cos(thetas) ** 2
    sc = np.sin(thetas) * np.cos(thetas)

    g = np.zeros(grid.shape)
    for r in scales:
        qxx = r * ndimage.gaussian_filter(img, r, order=(2, 0))
        qyy = r * ndimage.gaussian_filter(img, r, order=(0, 2))
        qxy = r * ndimage.gaussian_filter(img, r, order=(1, 1))
        # response(theta) = -(perp^T Q perp), perp = (-sin, cos)
        resp = -(qxx[..., None] * s2 - 2.0 * qxy[..., None] * sc
                 + qyy[..., None] * c2)
        np.maximum(g, resp, out=g)
    np.maximum(g, 0.0, out=g)
    return OrientationScore(grid, g)


def cost_from_score(score: OrientationScore, alpha: float) -> ScalarField:
    """psi = exp(-alpha * g / ||g||_inf), with psi = 1 when g vanishes."""
    if not (alpha > 0.0) or not math.isfinite(alpha):
        raise CostError(f"alpha must be positive, got {alpha}")
    gmax = float(np.max(score.values))
    if gmax <= 0.0:
        return ScalarField.full(score.grid, 1.0)
    return ScalarField(score.grid, np.exp(-alpha * score.values / gmax))


def read_image(path) -> np.ndarray:
    """Grayscale image as float in [0, 1], indexed [ix, iy] (x = column).

    8/16-bit grayscale PNG and binary PGM are read natively; multi-channel
    input is converted by luminance.
    """
    im = Image.open(path)
    if im.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(im, dtype=np.float64) / 65535.0
    elif im.mode == "I":
        arr = np.asarray(im, dtype=np.float64)
        if arr.max() > 255:
            arr = arr / 65535.0
        else:
            arr = arr / 255.0
    elif im.mode in ("L", "P"):
        arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    else:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
        arr = (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0
    return np.ascontiguousarray(arr.T)


def write_image(arr: np.ndarray, path) -> None:
    """Write an [ix, iy]-indexed float array in [0, 1] as 8-bit grayscale."""
    a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((a.T * 255.0).round().astype(np.uint8), mode="L").save(path)
