"""Unified multi-task training, inference and checkpoints."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .. import imgproc, prompt
from ..core_io import read_tensor, to_bytes, write_tensor
from ..dataset import load_sample, read_manifest
from ..errors import EmptyTask, FormatError, InvalidParam, ShapeMismatch
from ..rng import Rng
from ..tasks import ALL_TASKS, TaskKind
from .autograd import add, mul_scalar
from .losses import compose_output, denormalize_bm, normalize_bm, task_loss
from .model import Model, build_model
from .optim import AdamW, cosine_lr

# Reference-scale recipe; the defaults below are scaled down for a CPU.
REFERENCE_PATCH = 256
REFERENCE_STEPS = 100_000
REFERENCE_BATCH = 80


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300
    pretrain_steps: int = 0
    batch: int = 4
    lr_max: float = 2e-4
    weight_decay: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    patch: int = 64
    task_weights: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    seed: int = 0
    prompt_mode: str = "dtsprompt"
    widths: tuple[int, ...] = (8, 16, 32)

    def __post_init__(self):
        if self.steps < self.pretrain_steps or self.pretrain_steps < 0:
            raise InvalidParam("need steps >= pretrain_steps >= 0")
        if self.batch < 1:
            raise InvalidParam("batch must be >= 1")
        if len(self.task_weights) != len(ALL_TASKS):
            raise InvalidParam(f"task_weights needs {len(ALL_TASKS)} entries")
        if min(self.task_weights) < 0 or abs(sum(self.task_weights) - 1.0) > 1e-9:
            raise InvalidParam("task_weights must be nonnegative and sum to 1")
        if self.prompt_mode not in prompt.PROMPT_MODES:
            raise InvalidParam(f"prompt_mode must be one of {prompt.PROMPT_MODES}")
        if self.patch < 8:
            raise InvalidParam("patch must be >= 8")
        if not 0 <= self.betas[0] < 1 or not 0 <= self.betas[1] < 1:
            raise InvalidParam("betas must lie in [0, 1)")


def sample_task(weights, rng: Rng) -> TaskKind:
    """Categorical draw by inverse CDF on one ``next_f64``."""
    u = rng.next_f64()
    acc = 0.0
    last = None
    for task, w in zip(ALL_TASKS, weights):
        if w <= 0:
            continue
        acc += w
        last = task
        if u < acc:
            return task
    return last


@dataclass
class TrainResult:
    model: Model
    log: list[str] = field(default_factory=list)

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log)


class _Pool:
    """Training samples kept compactly in memory (uint8 images, f32 maps)."""

    def __init__(self, samples):
        self.by_task = {t: [] for t in ALL_TASKS}
        for s in samples:
            img = to_bytes(imgproc.to_rgb(s.input))
            if s.task is TaskKind.DEWARP:
                tgt = np.asarray(s.target, dtype=np.float32)
            elif s.task is TaskKind.BINARIZE:
                tgt = (np.asarray(s.target) != 0).astype(np.uint8)
            else:
                tgt = to_bytes(imgproc.to_rgb(s.target))
            self.by_task[s.task].append((img, tgt))


def _fetch(task: TaskKind, img8, tgt, patch: int, rng: Rng):
    """Crop (or, for dewarping, resize) one sample to ``patch`` x ``patch``."""
    img = img8.astype(np.float64) / 255.0
    if task is TaskKind.DEWARP:
        x = imgproc.resize_bilinear(img, patch, patch)
        nbm = normalize_bm(tgt)
        y = np.stack([imgproc.resize_bilinear(p, patch, patch) for p in nbm])
        return x, y
    h, w = img.shape[:2]
    if h < patch or w < patch:
        raise ShapeMismatch(f"sample {h}x{w} smaller than patch {patch}")
    r = rng.next_range(h - patch + 1)
    c = rng.next_range(w - patch + 1)
    x = img[r : r + patch, c : c + patch]
    t = tgt[r : r + patch, c : c + patch]
    if task is TaskKind.BINARIZE:
        return x, t.astype(np.float64)
    return x, np.moveaxis(t.astype(np.float64) / 255.0, 2, 0)


def fused_input(img, task, mode: str, cfg: prompt.PromptConfig) -> np.ndarray:
    return prompt.fuse(prompt.make_prompt(img, task, mode, cfg), img)


def train(model: Model, manifest, cfg: TrainConfig,
          prompt_cfg: prompt.PromptConfig = prompt.PromptConfig(), samples=None) -> TrainResult:
    """Pretrain on dewarping, then train on tasks drawn by ``cfg.task_weights``.

    ``samples`` may be given instead of a manifest path (pass ``manifest=None``).
    """
    if samples is None:
        records, root = read_manifest(manifest)
        samples = (load_sample(r, root) for r in records)
    pool = _Pool(samples)
    needed = {t for t, w in zip(ALL_TASKS, cfg.task_weights) if w > 0 and cfg.steps > cfg.pretrain_steps}
    if cfg.pretrain_steps > 0:
        needed.add(TaskKind.DEWARP)
    for t in ALL_TASKS:
        if t in needed and not pool.by_task[t]:
            raise EmptyTask(f"no training samples for task {t.value!r}")

    rng = Rng(cfg.seed)
    opt = AdamW([p.tensor for p in model.params], cfg.weight_decay, cfg.betas, cfg.eps)
    dtype = model.params[0].value.dtype
    result = TrainResult(model)
    for step in range(cfg.steps):
        pretraining = step < cfg.pretrain_steps
        groups: dict[TaskKind, tuple[list, list]] = {}
        for _ in range(cfg.batch):
            task = TaskKind.DEWARP if pretraining else sample_task(cfg.task_weights, rng)
            items = pool.by_task[task]
            img8, tgt = items[rng.next_range(len(items))]
            x, y = _fetch(task, img8, tgt, cfg.patch, rng)
            xs, ys = groups.setdefault(task, ([], []))
            xs.append(fused_input(x, task, cfg.prompt_mode, prompt_cfg))
            ys.append(y)
        total, losses = None, []
        for task in ALL_TASKS:
            if task not in groups:
                continue
            xs, ys = groups[task]
            xb = np.stack(xs).astype(dtype)
            loss = task_loss(task, compose_output(task, model(xb), xb), np.stack(ys))
            part = mul_scalar(loss, len(xs) / cfg.batch)
            total = part if total is None else add(total, part)
            losses.append((task, float(loss.value)))
        model.zero_grad()
        total.backward()
        opt.step(cosine_lr(step, cfg.steps, cfg.lr_max))
        result.log.extend(f"{step}\t{t.value}\t{l:.8f}" for t, l in losses)
    model.train_patch = cfg.patch
    return result


def parse_loss_log(text: str) -> list[tuple[int, TaskKind, float]]:
    rows = []
    for line in text.splitlines():
        if line.strip():
            s, t, v = line.split("\t")
            rows.append((int(s), TaskKind.parse(t), float(v)))
    return rows


@dataclass
class Prediction:
    task: TaskKind
    output: np.ndarray  # backward map, ink map or restored image
    image: np.ndarray  # displayable result: dewarped page, ink-black map or restored image


def _forward_padded(model: Model, fused: np.ndarray, task: TaskKind) -> np.ndarray:
    """Replicate-pad ``(6, h, w)`` to the model's multiple, forward, crop back."""
    _, h, w = fused.shape
    m = model.multiple
    ph, pw = (-h) % m, (-w) % m
    x = np.pad(fused, ((0, 0), (0, ph), (0, pw)), mode="edge") if ph or pw else fused
    x = x[None].astype(model.params[0].value.dtype)
    out = compose_output(task, model(x), x).value[0]
    return out[:, :h, :w].astype(np.float64)


def predict(model: Model, img, task, prompt_mode: str = "dtsprompt",
            prompt_cfg: prompt.PromptConfig = prompt.PromptConfig(),
            dewarp_size: int | None = None) -> Prediction:
    """Run one restoration task.

    Dewarping runs at the training resolution: the input is resized to
    ``dewarp_size`` (the training patch by default), the normalised map is
    upsampled back and applied to the full-resolution input.
    """
    task = TaskKind.parse(task)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if task is TaskKind.DEWARP:
        s = dewarp_size or getattr(model, "train_patch", 64)
        small = imgproc.resize_bilinear(imgproc.to_rgb(img), s, s)
        out = _forward_padded(model, fused_input(small, task, prompt_mode, prompt_cfg), task)
        planes = np.stack([imgproc.resize_bilinear(out[c], h, w) for c in (0, 1)])
        bm = denormalize_bm(planes, h, w)
        return Prediction(task, bm, imgproc.remap_bilinear(img, bm))
    out = _forward_padded(model, fused_input(img, task, prompt_mode, prompt_cfg), task)
    if task is TaskKind.BINARIZE:
        ink = (out[0] > 0).astype(np.uint8)  # sigmoid(z) > 0.5
        return Prediction(task, ink, 1.0 - ink.astype(np.float64))
    restored = np.clip(np.moveaxis(out, 0, 2), 0.0, 1.0)
    return Prediction(task, restored, restored)


# --- checkpoints -----------------------------------------------------------

INDEX_FILE = "index.txt"
CONFIG_FILE = "config.txt"


def save_checkpoint(model: Model, directory, config_text: str = "") -> None:
    """One DRT1 file per parameter, an index and a flat config snapshot."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    lines = []
    for p in model.params:
        fname = p.name + ".drt1"
        write_tensor(p.value, os.path.join(directory, fname))
        lines.append(f"{p.name}\t{fname}\t{','.join(str(d) for d in p.value.shape)}")
    with open(os.path.join(directory, INDEX_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(directory, CONFIG_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_text)


def read_index(directory) -> list[tuple[str, str, tuple[int, ...]]]:
    path = os.path.join(os.fspath(directory), INDEX_FILE)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"checkpoint index not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}: malformed index line {line!r}")
            rows.append((parts[0], parts[1], tuple(int(d) for d in parts[2].split(","))))
    return rows


def load_checkpoint(directory, widths, train_patch: int = 64) -> Model:
    """Rebuild a model of the given widths and fill it from ``directory``."""
    directory = os.fspath(directory)
    model = build_model(widths)
    index = {name: (fname, shape) for name, fname, shape in read_index(directory)}
    for p in model.params:
        if p.name not in index:
            raise FormatError(f"checkpoint lacks parameter {p.name}")
        fname, shape = index[p.name]
        value = read_tensor(os.path.join(directory, fname))
        if value.shape != shape or value.shape != p.value.shape:
            raise ShapeMismatch(f"{p.name}: stored {value.shape}, index {shape}, model {p.value.shape}")
        p.tensor.value = value.astype(np.float32)
    model.train_patch = train_patch
    return model


def read_config_text(directory) -> str:
    path = os.path.join(os.fspath(directory), CONFIG_FILE)
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return dataclasses.replace(cfg, **kw)


def smoothed(values, window: int = 20) -> np.ndarray:
    """Trailing moving average (shorter at the start)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)

