"""Task-specific prior-feature prompts and their fusion with the input image.

A prompt is always three unit-interval planes with the extents of the input:

============  =========================================================
task          planes
============  =========================================================
dewarp        document mask, x coordinate, y coordinate
deshadow      background estimate (R, G, B)
appearance    1 - |image - background| (R, G, B)
deblur        gradient magnitude, repeated three times
binarize      Sauvola ink map, Sauvola threshold map, gradient magnitude
============  =========================================================

The network input is the prompt stacked on top of the RGB image, giving a
``(6, H, W)`` tensor.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from . import imgproc
from .errors import DegenerateInputWarning, InvalidParam, ShapeMismatch
from .tasks import TaskKind

PROMPT_MODES = ("dtsprompt", "fixed", "none")

# Constant planes for the fixed-prompt ablation, equally spaced in [0, 1].
FIXED_VALUES = {
    TaskKind.DEWARP: 0.0,
    TaskKind.DESHADOW: 0.25,
    TaskKind.APPEARANCE: 0.5,
    TaskKind.DEBLUR: 0.75,
    TaskKind.BINARIZE: 1.0,
}

REFERENCE_SCALE = 256


@dataclass(frozen=True)
class PromptConfig:
    bg_dilate_radius: int = 5
    bg_median_radius: int = 7
    sauvola_radius: int = 12
    sauvola_k: float = 0.2
    sauvola_R: float = 0.5
    mask_blur_sigma: float = 2.0

    def __post_init__(self):
        for name in ("bg_dilate_radius", "bg_median_radius", "sauvola_radius"):
            if getattr(self, name) < 1:
                raise InvalidParam(f"{name} must be >= 1")
        if self.mask_blur_sigma <= 0:
            raise InvalidParam("mask_blur_sigma must be > 0")
        if self.sauvola_k <= 0 or self.sauvola_R <= 0:
            raise InvalidParam("sauvola_k and sauvola_R must be > 0")

    def scaled_to(self, h: int, w: int) -> "PromptConfig":
        """Scale the background radii with resolution, relative to 256 px."""
        f = min(h, w) / REFERENCE_SCALE
        return dataclasses.replace(
            self,
            bg_dilate_radius=max(1, int(round(self.bg_dilate_radius * f))),
            bg_median_radius=max(1, int(round(self.bg_median_radius * f))),
        )


@dataclass(frozen=True)
class DTSPrompt:
    planes: np.ndarray  # (3, H, W) float64 in [0, 1]
    task: TaskKind

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]


def coord_channels(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalised column (x) and row (y) coordinate planes."""
    xs = np.arange(w, dtype=np.float64) / (w - 1) if w > 1 else np.zeros(w)
    ys = np.arange(h, dtype=np.float64) / (h - 1) if h > 1 else np.zeros(h)
    return np.broadcast_to(xs[None, :], (h, w)).copy(), np.broadcast_to(ys[:, None], (h, w)).copy()


def document_mask(img: np.ndarray, cfg: PromptConfig = PromptConfig()) -> np.ndarray:
    """Heuristic page segmentation: Otsu split, largest component, holes filled.

    The page is assumed to cover the image centre: the Otsu class holding the
    majority of the central window is taken as the document.
    """
    gray = imgproc.gaussian_blur(imgproc.to_grayscale(img), cfg.mask_blur_sigma)
    h, w = gray.shape
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        t = imgproc.otsu_threshold(gray)
    if any(issubclass(c.category, DegenerateInputWarning) for c in caught):
        warnings.warn("document_mask: constant image, returning all-ones mask",
                      DegenerateInputWarning, stacklevel=2)
        return np.ones((h, w))
    bright = np.rint(np.clip(gray, 0, 1) * 255.0) >= np.rint(t * 255.0)
    # Majority vote over the central window; a single centre pixel may be ink.
    centre = bright[h // 4 : h - h // 4, w // 4 : w - w // 4]
    fg = bright if 2 * centre.sum() >= centre.size else ~bright
    labels, sizes = imgproc.connected_components(fg)
    if len(sizes) == 0:
        return np.ones((h, w))
    largest = labels == (int(np.argmax(sizes)) + 1)
    return imgproc.fill_holes(largest).astype(np.float64)


def background(img: np.ndarray, cfg: PromptConfig = PromptConfig()) -> np.ndarray:
    """Text-free background estimate: per-channel dilation then median."""
    rgb = imgproc.to_rgb(img)
    bg = imgproc.dilate(rgb, cfg.bg_dilate_radius)
    return imgproc.median_filter(bg, cfg.bg_median_radius)


def diff_map(img: np.ndarray, bg: np.ndarray) -> np.ndarray:
    rgb = imgproc.to_rgb(img)
    if rgb.shape != np.shape(bg):
        raise ShapeMismatch(f"image {rgb.shape} and background {np.shape(bg)} differ")
    return 1.0 - np.abs(rgb - bg)


def generate(img: np.ndarray, task, cfg: PromptConfig = PromptConfig()) -> DTSPrompt:
    task = TaskKind.parse(task)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if task is TaskKind.DEWARP:
        px, py = coord_channels(h, w)
        planes = [document_mask(img, cfg), px, py]
    elif task is TaskKind.DESHADOW:
        planes = list(np.moveaxis(background(img, cfg), 2, 0))
    elif task is TaskKind.APPEARANCE:
        planes = list(np.moveaxis(diff_map(img, background(img, cfg)), 2, 0))
    elif task is TaskKind.DEBLUR:
        g = imgproc.sobel_gradient(imgproc.to_grayscale(img))
        planes = [g, g, g]
    else:
        gray = imgproc.to_grayscale(img)
        ink, thresh = imgproc.sauvola(gray, cfg.sauvola_radius, cfg.sauvola_k, cfg.sauvola_R)
        planes = [ink.astype(np.float64), thresh, imgproc.sobel_gradient(gray)]
    return DTSPrompt(np.clip(np.stack(planes), 0.0, 1.0), task)


def fixed_prompt(task, h: int, w: int) -> DTSPrompt:
    task = TaskKind.parse(task)
    return DTSPrompt(np.full((3, h, w), FIXED_VALUES[task]), task)


def zero_prompt(task, h: int, w: int) -> DTSPrompt:
    return DTSPrompt(np.zeros((3, h, w)), TaskKind.parse(task))


def make_prompt(img: np.ndarray, task, mode: str = "dtsprompt",
                cfg: PromptConfig = PromptConfig()) -> DTSPrompt:
    """Prompt for one of the three conditioning modes used in training."""
    h, w = np.shape(img)[:2]
    if mode == "dtsprompt":
        return generate(img, task, cfg)
    if mode == "fixed":
        return fixed_prompt(task, h, w)
    if mode == "none":
        return zero_prompt(task, h, w)
    raise InvalidParam(f"unknown prompt mode {mode!r}; expected one of {PROMPT_MODES}")


def fuse(prompt: DTSPrompt, img: np.ndarray) -> np.ndarray:
    """Concatenate prompt planes and RGB image into a ``(6, H, W)`` array."""
    rgb = imgproc.to_rgb(img)
    if prompt.shape != rgb.shape[:2]:
        raise ShapeMismatch(f"prompt {prompt.shape} vs image {rgb.shape[:2]}")
    out = np.empty((6,) + rgb.shape[:2])
    out[:3] = prompt.planes
    out[3:] = np.moveaxis(rgb, 2, 0)
    return out
