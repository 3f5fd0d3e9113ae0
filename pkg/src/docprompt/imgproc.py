"""Classical image-processing kernels.

All functions take unit-interval float images (``(H, W)`` gray or
``(H, W, 3)`` colour) and use replicate padding at the borders. Rank filters
are delegated to :mod:`scipy.ndimage`; the remaining kernels are written out
directly so that their border and rounding conventions are explicit.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputWarning, InvalidParam, ShapeMismatch

LUMA = np.array([0.299, 0.587, 0.114])
SOBEL_NORM = 4.0 * math.sqrt(2.0)


def _check_radius(radius: int) -> int:
    radius = int(radius)
    if radius < 1:
        raise InvalidParam(f"window radius must be >= 1, got {radius}")
    return radius


def _per_channel(fn, img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return fn(img)
    return np.stack([fn(img[:, :, c]) for c in range(img.shape[2])], axis=2)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img[:, :, 0] * LUMA[0] + img[:, :, 1] * LUMA[1] + img[:, :, 2] * LUMA[2]


def to_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img
    if img.ndim == 3:
        img = img[:, :, 0]
    return np.repeat(img[:, :, None], 3, axis=2)


def sobel_gradient(gray: np.ndarray) -> np.ndarray:
    """Sobel magnitude scaled into [0, 1] by the unit-input maximum 4*sqrt(2)."""
    if gray.ndim != 2:
        raise ShapeMismatch("sobel_gradient expects a single-channel image")
    p = np.pad(gray, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    return np.minimum(np.hypot(gx, gy) / SOBEL_NORM, 1.0)


def dilate(img: np.ndarray, radius: int) -> np.ndarray:
    """Grey dilation with a (2r+1)^2 square, i.e. a windowed maximum."""
    size = 2 * _check_radius(radius) + 1
    return _per_channel(lambda a: ndimage.maximum_filter(a, size=size, mode="nearest"), img)


def erode(img: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * _check_radius(radius) + 1
    return _per_channel(lambda a: ndimage.minimum_filter(a, size=size, mode="nearest"), img)


def median_filter(img: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * _check_radius(radius) + 1
    return _per_channel(lambda a: ndimage.median_filter(a, size=size, mode="nearest"), img)


def integral_images(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Summed-area tables of values and squared values, shape (H+1, W+1)."""
    g = np.asarray(gray, dtype=np.float64)
    h, w = g.shape
    s = np.zeros((h + 1, w + 1))
    s2 = np.zeros((h + 1, w + 1))
    s[1:, 1:] = g.cumsum(0).cumsum(1)
    s2[1:, 1:] = (g * g).cumsum(0).cumsum(1)
    return s, s2


def window_sum(table: np.ndarray, r0, c0, r1, c1):
    """Sum over rows [r0, r1) and columns [c0, c1) by four-corner lookup."""
    return table[r1, c1] - table[r0, c1] - table[r1, c0] + table[r0, c0]


def window_stats(gray: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed mean and population standard deviation, replicate padded."""
    r = _check_radius(radius)
    h, w = gray.shape
    s, s2 = integral_images(np.pad(gray, r, mode="edge"))
    n = float((2 * r + 1) ** 2)
    k = 2 * r + 1
    total = s[k : k + h, k : k + w] - s[:h, k : k + w] - s[k : k + h, :w] + s[:h, :w]
    total2 = s2[k : k + h, k : k + w] - s2[:h, k : k + w] - s2[k : k + h, :w] + s2[:h, :w]
    mean = total / n
    var = np.maximum(total2 / n - mean * mean, 0.0)
    return mean, np.sqrt(var)


def sauvola(gray: np.ndarray, radius: int = 12, k: float = 0.2, R: float = 0.5):
    """Sauvola local thresholding.

    Returns ``(binary, threshold)`` where ``binary`` is 1 on ink (pixel below
    the raw threshold) and ``threshold`` is the threshold clamped to [0, 1].
    """
    if k <= 0 or R <= 0:
        raise InvalidParam(f"sauvola needs k > 0 and R > 0 (got k={k}, R={R})")
    if gray.ndim != 2:
        raise ShapeMismatch("sauvola expects a single-channel image")
    mean, std = window_stats(gray, radius)
    t = mean * (1.0 + k * (std / R - 1.0))
    binary = (gray < t).astype(np.uint8)
    return binary, np.clip(t, 0.0, 1.0)


def otsu_threshold(gray: np.ndarray) -> float:
    """Otsu threshold on the 256-bin byte histogram, as a unit value.

    Pixels with byte value below ``t`` form the dark class. The smallest ``t``
    maximising between-class variance is returned as ``t / 255``. A constant
    image has no split; its own value is returned with a
    :class:`DegenerateInputWarning`.
    """
    b = np.rint(np.clip(gray, 0.0, 1.0) * 255.0).astype(np.int64).ravel()
    hist = np.bincount(b, minlength=256).astype(np.float64)
    if np.count_nonzero(hist) <= 1:
        warnings.warn("otsu_threshold: constant image", DegenerateInputWarning, stacklevel=2)
        return float(b[0]) / 255.0
    levels = np.arange(256, dtype=np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)[:-1]  # class of bins < t for t = 1..255
    m0 = np.cumsum(hist * levels)[:-1]
    w1 = total - w0
    m1 = (hist * levels).sum() - m0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (m0 / w0 - m1 / w1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -1.0)
    t = int(np.argmax(between)) + 1
    return t / 255.0


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise InvalidParam(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)

    def blur(a):
        a = ndimage.correlate1d(a, k, axis=0, mode="nearest")
        return ndimage.correlate1d(a, k, axis=1, mode="nearest")

    return _per_channel(blur, np.asarray(img, dtype=np.float64))


def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``img`` at float coordinates, clamped to the image border."""
    h, w = img.shape[:2]
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    if img.ndim == 3:
        fr = fr[..., None]
        fc = fc[..., None]
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def remap_bilinear(img: np.ndarray, bm: np.ndarray) -> np.ndarray:
    """Resample ``img`` at the absolute (row, col) coordinates stored in ``bm``."""
    bm = np.asarray(bm, dtype=np.float64)
    if bm.ndim != 3 or bm.shape[2] != 2:
        raise ShapeMismatch(f"backward map must be (H, W, 2), got {bm.shape}")
    return bilinear_sample(np.asarray(img, dtype=np.float64), bm[:, :, 0], bm[:, :, 1])


def identity_map(h: int, w: int) -> np.ndarray:
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return np.stack([rows, cols], axis=2)


def _aligned_coords(n_out: int, n_in: int) -> np.ndarray:
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(img: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling (corners map to corners)."""
    if h2 < 1 or w2 < 1:
        raise InvalidParam("target extents must be >= 1")
    h, w = img.shape[:2]
    if (h, w) == (h2, w2):
        return np.array(img, dtype=np.float64)
    rows, cols = np.meshgrid(_aligned_coords(h2, h), _aligned_coords(w2, w), indexing="ij")
    return bilinear_sample(np.asarray(img, dtype=np.float64), rows, cols)


_EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(binary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """8-connected labelling.

    Returns ``(labels, sizes)``: labels are dense from 1 with 0 for background,
    and ``sizes[k - 1]`` is the pixel count of label ``k``.
    """
    labels, n = ndimage.label(np.asarray(binary) != 0, structure=_EIGHT)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return labels.astype(np.int32), sizes


def fill_holes(binary: np.ndarray) -> np.ndarray:
    """Fill background regions that are not 4-connected to the image border."""
    fg = np.asarray(binary) != 0
    labels, _ = ndimage.label(~fg)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    outside = np.isin(labels, border[border > 0])
    return (~outside).astype(np.uint8)


def _zhang_suen_pass(p: np.ndarray, first: bool) -> np.ndarray:
    # p is zero padded by one pixel; returns the deletion mask for the interior
    n = p[:-2, 1:-1]
    ne = p[:-2, 2:]
    e = p[1:-1, 2:]
    se = p[2:, 2:]
    s = p[2:, 1:-1]
    sw = p[2:, :-2]
    w = p[1:-1, :-2]
    nw = p[:-2, :-2]
    ring = [n, ne, e, se, s, sw, w, nw, n]
    b = n + ne + e + se + s + sw + w + nw
    a = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.int32) for i in range(8))
    if first:
        c1 = (n * e * s) == 0
        c2 = (e * s * w) == 0
    else:
        c1 = (n * e * w) == 0
        c2 = (n * s * w) == 0
    return (p[1:-1, 1:-1] == 1) & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2


def skeletonize(binary: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning to a one-pixel-wide skeleton.

    Zhang-Suen erases 2x2 blocks and some two-pixel diagonals entirely; such a
    component keeps its first pixel in raster order so that no connected
    component disappears.
    """
    src = (np.asarray(binary) != 0).astype(np.int32)
    p = np.pad(src, 1)
    while True:
        changed = False
        for first in (True, False):
            kill = _zhang_suen_pass(p, first)
            if kill.any():
                p[1:-1, 1:-1][kill] = 0
                changed = True
        if not changed:
            break
    out = p[1:-1, 1:-1].astype(np.uint8)
    labels, sizes = connected_components(src)
    if len(sizes):
        kept = np.bincount(labels[out == 1].ravel(), minlength=len(sizes) + 1)[1:]
        for k in np.flatnonzero(kept == 0):
            r, c = np.argwhere(labels == k + 1)[0]
            out[r, c] = 1
    return out
