"""Dataset manifests and task-typed target files.

A manifest is UTF-8 text, one record per line::

    task<TAB>input<TAB>target[<TAB>aux]

Paths are relative to the manifest's directory and ``#`` starts a comment.
Targets are stored per task: dewarp backward maps as DRT1 tensors of shape
``(H, W, 2)``; binarization ground truth as a PNG with ink black (0) on white;
every other task as an ordinary image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core_io import load_image, read_tensor, save_image, write_tensor
from .errors import FormatError
from .synth import Sample
from .tasks import TaskKind


@dataclass(frozen=True)
class Record:
    task: TaskKind
    input: str
    target: str
    aux: str | None = None


def read_manifest(path) -> tuple[list[Record], str]:
    """Return ``(records, root)`` where ``root`` is the manifest directory."""
    path = os.fspath(path)
    root = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise FormatError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields")
            try:
                task = TaskKind.parse(parts[0].strip())
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            aux = parts[3] if len(parts) == 4 and parts[3] else None
            records.append(Record(task, parts[1], parts[2], aux))
    return records, root


def write_manifest(records, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fields = [r.task.value, r.input, r.target] + ([r.aux] if r.aux else [])
            fh.write("\t".join(fields) + "\n")


def save_target(task: TaskKind, target, path) -> None:
    if task is TaskKind.DEWARP:
        write_tensor(np.asarray(target, dtype=np.float32), path)
    elif task is TaskKind.BINARIZE:
        save_image(1.0 - np.asarray(target, dtype=np.float64), path)
    else:
        save_image(target, path)


def load_target(task: TaskKind, path):
    if task is TaskKind.DEWARP:
        bm = read_tensor(path).astype(np.float64)
        if bm.ndim != 3 or bm.shape[2] != 2:
            raise FormatError(f"{path}: backward map must have shape (H, W, 2)")
        return bm
    img = load_image(path)
    if task is TaskKind.BINARIZE:
        gray = img if img.ndim == 2 else img.mean(axis=2)
        return (gray < 0.5).astype(np.uint8)
    return img


def flat_path(record: Record, root: str) -> str | None:
    """Flat ground-truth page stored beside a dewarp target, if any."""
    if record.task is not TaskKind.DEWARP:
        return None
    stem, _ = os.path.splitext(record.target)
    if stem.endswith("_target"):
        stem = stem[: -len("_target")]
    path = os.path.join(root, stem + "_flat.png")
    return path if os.path.isfile(path) else None


def load_sample(record: Record, root: str) -> Sample:
    """Load one record; a dewarp sample's flat page goes to ``extras["flat"]``."""
    inp = load_image(os.path.join(root, record.input))
    target = load_target(record.task, os.path.join(root, record.target))
    aux = None
    if record.aux:
        aux = load_image(os.path.join(root, record.aux))
    extras = {}
    fp = flat_path(record, root)
    if fp is not None:
        extras["flat"] = load_image(fp)
    return Sample(record.task, inp, target, aux, extras)


def load_all(manifest) -> list[Sample]:
    records, root = read_manifest(manifest)
    return [load_sample(r, root) for r in records]
