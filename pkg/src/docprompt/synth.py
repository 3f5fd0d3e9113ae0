"""Synthetic document pages and paired degradations for the five tasks.

Pages carry pseudo-text (stroke glyphs and rules, no fonts) on a light
background, so every generator can return exact ground truth. All randomness
comes from a :class:`~docprompt.rng.Rng`; a generator called twice with equal
configuration and equal generator state returns identical arrays.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import imgproc
from .core_io import save_image, write_tensor
from .errors import InvalidParam
from .rng import Rng, splitmix64
from .tasks import ALL_TASKS, TaskKind


@dataclass(frozen=True)
class SynthConfig:
    page_size: int = 256
    seed: int = 0
    warp_amplitude: float = 12.0
    warp_scale: int = 4
    shadow_strength: float = 0.5
    blur_sigma_range: tuple[float, float] = (0.5, 2.5)
    noise_std: float = 0.02
    stain_count_range: tuple[int, int] = (1, 4)
    # knobs below default to the documented degradation recipe; zero disables
    illum_strength: float = 0.15
    cast_range: tuple[float, float] = (0.85, 1.05)
    motion_prob: float = 0.5
    blur_noise_std: float = 0.01
    bleed_strength: float = 0.15
    contrast_max: float = 0.3
    scan_sigma_range: tuple[float, float] = (0.5, 1.0)
    scan_noise_std: float = 0.02
    # photographed pages are unevenly lit; dewarping targets keep that lighting.
    # Cast shadows are left out: they split the Otsu page mask used as a prompt.
    dewarp_shading: bool = True

    def __post_init__(self):
        if self.page_size < 64:
            raise InvalidParam("page_size must be >= 64")
        for name in ("blur_sigma_range", "stain_count_range", "cast_range", "scan_sigma_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise InvalidParam(f"{name} must be ordered and non-negative, got {(lo, hi)}")
        if min(self.warp_amplitude, self.shadow_strength, self.noise_std, self.illum_strength,
               self.blur_noise_std, self.bleed_strength, self.contrast_max, self.scan_noise_std) < 0:
            raise InvalidParam("amplitudes and strengths must be non-negative")
        if self.warp_scale < 2:
            raise InvalidParam("warp_scale must be >= 2")


@dataclass
class Sample:
    task: TaskKind
    input: np.ndarray
    target: np.ndarray  # image, backward map (H, W, 2) or ink map (H, W) uint8
    aux: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def derive_seed(seed: int, *keys: int) -> int:
    """Mix integer keys into a seed with splitmix64; used for per-sample streams."""
    state = seed & ((1 << 64) - 1)
    state, out = splitmix64(state)
    for k in keys:
        state, out = splitmix64(out ^ (k & ((1 << 64) - 1)))
    return out


# -- clean pages --------------------------------------------------------------

# Glyph segments on a unit box: (row0, col0, row1, col1) as fractions.
_SEGMENTS = (
    (0.0, 0.0, 1.0, 0.0),   # left bar
    (0.0, 1.0, 1.0, 1.0),   # right bar
    (0.0, 0.5, 1.0, 0.5),   # centre bar
    (0.0, 0.0, 0.0, 1.0),   # top
    (0.5, 0.0, 0.5, 1.0),   # middle
    (1.0, 0.0, 1.0, 1.0),   # bottom
    (0.0, 0.0, 1.0, 1.0),   # diagonal
    (1.0, 0.0, 0.0, 1.0),   # anti-diagonal
)


def _draw_segment(mask, r0, c0, r1, c1, width):
    n = int(max(abs(r1 - r0), abs(c1 - c0))) + 1
    rows = np.rint(np.linspace(r0, r1, n)).astype(int)
    cols = np.rint(np.linspace(c0, c1, n)).astype(int)
    h, w = mask.shape
    for dr in range(width):
        for dc in range(width):
            rr = np.clip(rows + dr, 0, h - 1)
            cc = np.clip(cols + dc, 0, w - 1)
            mask[rr, cc] = 1


def render_page(cfg: SynthConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Clean RGB page and its exact ink mask (1 = ink)."""
    n = cfg.page_size
    s = n / 256.0
    base = rng.uniform(0.88, 1.0)
    tint = np.array([base - rng.uniform(0.0, 0.03) for _ in range(3)])
    tint = np.clip(tint, 0.85, 1.0)
    ink_value = rng.uniform(0.0, 0.2)
    stroke = rng.integers(1, 3)

    mask = np.zeros((n, n), dtype=np.uint8)
    margin = int(round(rng.uniform(0.06, 0.12) * n))
    line_h = max(8, int(round(rng.integers(11, 16) * s)))
    glyph_h = line_h - max(3, int(round(4 * s)))
    row = margin
    while row + glyph_h < n - margin:
        if rng.next_f64() < 0.08:
            _draw_segment(mask, row + glyph_h // 2, margin, row + glyph_h // 2, n - margin - 1, stroke)
            row += line_h
            continue
        right = n - margin if rng.next_f64() < 0.8 else margin + int(rng.uniform(0.3, 0.9) * (n - 2 * margin))
        col = margin + (int(round(8 * s)) if rng.next_f64() < 0.15 else 0)
        while True:
            n_glyphs = rng.integers(2, 7)
            gw = max(3, int(round(rng.integers(4, 7) * s)))
            if col + n_glyphs * (gw + stroke + 1) >= right:
                break
            for _ in range(n_glyphs):
                for _ in range(rng.integers(2, 3)):
                    r0, c0, r1, c1 = _SEGMENTS[rng.next_range(len(_SEGMENTS))]
                    _draw_segment(mask,
                                  row + r0 * (glyph_h - stroke), col + c0 * (gw - stroke),
                                  row + r1 * (glyph_h - stroke), col + c1 * (gw - stroke), stroke)
                col += gw + stroke + 1
            col += max(3, int(round(rng.integers(4, 8) * s)))
        row += line_h + rng.integers(0, 3)

    page = np.broadcast_to(tint, (n, n, 3)).copy()
    page[mask == 1] = ink_value
    return page, mask


# -- geometric warp -------------------------------------------------------------

def gen_warp(cfg: SynthConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Smooth random displacement and its backward map.

    Returns ``(displacement, bm)``, both ``(H, W, 2)`` in (row, col) order.
    ``bm = identity + displacement``: output pixel ``q`` of the flattened
    page is read from ``q + displacement(q)`` in the distorted image.
    """
    n = cfg.page_size
    g = cfg.warp_scale
    ctrl = (rng.uniform_array((g, g, 2)) * 2.0 - 1.0) * cfg.warp_amplitude
    # edge control points never point out of the frame, so the backward map
    # stays inside the distorted image and the page border is pulled inward
    ctrl[0, :, 0] = np.abs(ctrl[0, :, 0])
    ctrl[-1, :, 0] = -np.abs(ctrl[-1, :, 0])
    ctrl[:, 0, 1] = np.abs(ctrl[:, 0, 1])
    ctrl[:, -1, 1] = -np.abs(ctrl[:, -1, 1])
    disp = imgproc.resize_bilinear(ctrl, n, n)
    return disp, imgproc.identity_map(n, n) + disp


def invert_displacement(disp: np.ndarray, iterations: int = 10) -> np.ndarray:
    """Fixed-point inverse: find e with e(p) = -disp(p + e(p))."""
    h, w = disp.shape[:2]
    ident = imgproc.identity_map(h, w)
    inv = -disp.copy()
    for _ in range(iterations):
        q = ident + inv
        inv = -imgproc.bilinear_sample(disp, q[:, :, 0], q[:, :, 1])
    return inv


def apply_warp(page: np.ndarray, disp: np.ndarray, backdrop: np.ndarray | float = 0.2):
    """Distort a flat page. Returns ``(distorted, document_mask)``.

    Distorted pixels whose source lies outside the flat page show ``backdrop``.
    """
    h, w = page.shape[:2]
    src = imgproc.identity_map(h, w) + invert_displacement(disp)
    inside = ((src[:, :, 0] >= -0.5) & (src[:, :, 0] <= h - 0.5)
              & (src[:, :, 1] >= -0.5) & (src[:, :, 1] <= w - 0.5))
    warped = imgproc.remap_bilinear(page, src)
    backdrop = np.broadcast_to(np.asarray(backdrop, dtype=np.float64), warped.shape)
    m = inside[..., None] if warped.ndim == 3 else inside
    return np.where(m, warped, backdrop), inside.astype(np.uint8)


# -- photometric degradations -------------------------------------------------------

def _soft_blob(n: int, rng: Rng, count: int, blur: float) -> np.ndarray:
    rows, cols = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    blob = np.zeros((n, n))
    for _ in range(count):
        if rng.next_f64() < 0.5:
            theta = rng.uniform(0.0, 2.0 * math.pi)
            offset = rng.uniform(-0.3, 0.3) * n
            d = (rows - n / 2) * math.cos(theta) + (cols - n / 2) * math.sin(theta)
            shape = d > offset
        else:
            cr, cc = rng.uniform(0, n), rng.uniform(0, n)
            ar, ac = rng.uniform(0.15, 0.5) * n, rng.uniform(0.15, 0.5) * n
            shape = ((rows - cr) / ar) ** 2 + ((cols - cc) / ac) ** 2 < 1.0
        blob = np.maximum(blob, shape.astype(np.float64))
    return np.clip(imgproc.gaussian_blur(blob, blur), 0.0, 1.0)


def gen_shadow(page: np.ndarray, cfg: SynthConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    n = page.shape[0]
    blob = _soft_blob(n, rng, rng.integers(1, 3), blur=n / 24.0)
    field = 1.0 - cfg.shadow_strength * blob
    return page * field[:, :, None], page


def _smooth_field(n: int, rng: Rng) -> np.ndarray:
    """Low-frequency field in [0, 1] from a 3x3 random control grid."""
    ctrl = rng.uniform_array((3, 3))
    f = imgproc.resize_bilinear(ctrl, n, n)
    lo, hi = f.min(), f.max()
    return (f - lo) / (hi - lo) if hi > lo else np.zeros((n, n))


def gen_illum(page: np.ndarray, cfg: SynthConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    n = page.shape[0]
    shading = 1.0 - cfg.illum_strength * _smooth_field(n, rng)
    lo, hi = cfg.cast_range
    gain = np.array([rng.uniform(lo, hi) for _ in range(3)])
    out = page * shading[:, :, None] * gain
    if cfg.noise_std > 0:
        out = out + cfg.noise_std * rng.normal_array(out.shape)
    return np.clip(out, 0.0, 1.0), page


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Normalised line kernel of the given length and angle (radians)."""
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = size // 2
    for t in np.linspace(-(length - 1) / 2, (length - 1) / 2, 4 * length):
        r = c + t * math.sin(angle)
        q = c + t * math.cos(angle)
        r0, q0 = int(math.floor(r)), int(math.floor(q))
        fr, fq = r - r0, q - q0
        for dr, wr in ((0, 1 - fr), (1, fr)):
            for dq, wq in ((0, 1 - fq), (1, fq)):
                if 0 <= r0 + dr < size and 0 <= q0 + dq < size:
                    k[r0 + dr, q0 + dq] += wr * wq
    return k / k.sum()


def gen_blur(page: np.ndarray, cfg: SynthConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = cfg.blur_sigma_range
    if rng.next_f64() < cfg.motion_prob:
        k = motion_kernel(rng.integers(3, 9), rng.uniform(0.0, math.pi))
        out = np.stack([ndimage.correlate(page[:, :, c], k, mode="nearest") for c in range(3)], axis=2)
    else:
        sigma = rng.uniform(lo, hi)
        out = imgproc.gaussian_blur(page, sigma) if sigma > 1e-3 else page.copy()
    if cfg.blur_noise_std > 0:
        out = out + cfg.blur_noise_std * rng.normal_array(out.shape)
    return np.clip(out, 0.0, 1.0), page


def gen_binarize_input(page: np.ndarray, ink: np.ndarray, cfg: SynthConfig,
                       rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Stains, bleed-through and contrast loss on top of a clean page, then a
    soft scan (Gaussian blur plus sensor noise). The target is the clean ink."""
    n = page.shape[0]
    out = page.copy()
    rows, cols = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    lo, hi = cfg.stain_count_range
    for _ in range(rng.integers(lo, hi) if hi > 0 else 0):
        cr, cc = rng.uniform(0, n), rng.uniform(0, n)
        ar, ac = rng.uniform(0.05, 0.25) * n, rng.uniform(0.05, 0.25) * n
        drop = rng.uniform(0.2, 0.5)
        tone = np.array([1.0, rng.uniform(0.7, 1.0), rng.uniform(0.4, 0.8)])
        e = np.clip(1.0 - (((rows - cr) / ar) ** 2 + ((cols - cc) / ac) ** 2), 0.0, 1.0)
        soft = np.minimum(1.0, 6.0 * np.sqrt(e))
        out = out - drop * soft[:, :, None] * tone
    if cfg.bleed_strength > 0:
        _, other = render_page(cfg, rng)
        ghost = imgproc.gaussian_blur(other[:, ::-1].astype(np.float64), 0.7)
        out = out * (1.0 - cfg.bleed_strength * ghost)[:, :, None]
    c = rng.uniform(0.0, cfg.contrast_max) if cfg.contrast_max > 0 else 0.0
    out = (1.0 - c) * out + c * 0.6
    lo, hi = cfg.scan_sigma_range
    sigma = rng.uniform(lo, hi) if hi > 0 else 0.0
    if sigma > 1e-3:
        out = imgproc.gaussian_blur(out, sigma)
    if cfg.scan_noise_std > 0:
        out = out + cfg.scan_noise_std * rng.normal_array(out.shape)
    return np.clip(out, 0.0, 1.0), ink.copy()


# -- samples and datasets -----------------------------------------------------------

# Optical softening of photographed (dewarp) pages; crisp one-pixel strokes
# cannot survive two bilinear resamplings.
CAMERA_SIGMA = 0.8

def backdrop_for(rng: Rng, n: int) -> np.ndarray:
    """Dark, slightly textured surface the distorted page is photographed on."""
    base = np.array([rng.uniform(0.05, 0.4) for _ in range(3)])
    tex = 0.03 * imgproc.gaussian_blur(rng.normal_array((n, n)), 2.0)
    return np.clip(base + tex[:, :, None], 0.0, 1.0)


def make_sample(task, cfg: SynthConfig, rng: Rng) -> Sample:
    task = TaskKind.parse(task)
    page, ink = render_page(cfg, rng)
    if task is TaskKind.DEWARP:
        flat = imgproc.gaussian_blur(page, CAMERA_SIGMA)
        if cfg.dewarp_shading:
            flat, _ = gen_illum(flat, cfg, rng)
        disp, bm = gen_warp(cfg, rng)
        distorted, mask = apply_warp(flat, disp, backdrop_for(rng, cfg.page_size))
        return Sample(task, distorted, bm, mask, {"flat": flat})
    if task is TaskKind.DESHADOW:
        x, y = gen_shadow(page, cfg, rng)
    elif task is TaskKind.APPEARANCE:
        x, y = gen_illum(page, cfg, rng)
    elif task is TaskKind.DEBLUR:
        x, y = gen_blur(page, cfg, rng)
    else:
        x, y = gen_binarize_input(page, ink, cfg, rng)
    return Sample(task, x, y)


def sample_paths(task: TaskKind, index: int) -> dict[str, str]:
    stem = f"{task.value}/{index:05d}"
    target = f"{stem}_target.drt1" if task is TaskKind.DEWARP else f"{stem}_target.png"
    out = {"input": f"{stem}_input.png", "target": target}
    if task is TaskKind.DEWARP:
        out["aux"] = f"{stem}_mask.png"
        out["flat"] = f"{stem}_flat.png"
    return out


def write_sample(sample: Sample, out_dir: str, index: int) -> dict[str, str]:
    from .dataset import save_target

    paths = sample_paths(sample.task, index)
    os.makedirs(os.path.join(out_dir, sample.task.value), exist_ok=True)
    save_image(sample.input, os.path.join(out_dir, paths["input"]))
    save_target(sample.task, sample.target, os.path.join(out_dir, paths["target"]))
    if sample.aux is not None:
        save_image(sample.aux.astype(np.float64), os.path.join(out_dir, paths["aux"]))
    if "flat" in sample.extras:
        save_image(sample.extras["flat"], os.path.join(out_dir, paths["flat"]))
    return paths


def make_dataset(cfg: SynthConfig, n_per_task: int, out_dir, tasks=ALL_TASKS) -> str:
    """Write ``n_per_task`` samples per task plus ``manifest.tsv``; returns its path."""
    from .dataset import Record, write_manifest

    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for task in tasks:
        t_idx = ALL_TASKS.index(task)
        for i in range(n_per_task):
            rng = Rng(derive_seed(cfg.seed, t_idx, i))
            paths = write_sample(make_sample(task, cfg, rng), out_dir, i)
            records.append(Record(task, paths["input"], paths["target"], paths.get("aux")))
    path = os.path.join(out_dir, "manifest.tsv")
    write_manifest(records, path)
    return path


def with_overrides(cfg: SynthConfig, **kw) -> SynthConfig:
    return dataclasses.replace(cfg, **kw)
