"""Image and tensor file formats.

Images live in memory as float64 arrays with values in [0, 1]: ``(H, W)`` for
grayscale and ``(H, W, 3)`` for RGB. On disk they are 8-bit PNG or binary
PGM/PPM. Tensors are written in the DRT1 layout::

    "DRT1" | dtype u8 (0 = f32) | ndim u8 | ndim x u32 LE extents | f32 LE payload
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError

DRT1_MAGIC = b"DRT1"
DTYPE_F32 = 0
MAX_NDIM = 8


def as_image(arr) -> np.ndarray:
    """Validate and normalise an array to the in-memory image convention."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise FormatError(f"expected (H, W) or (H, W, 3) image, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise FormatError("image extents must be >= 1")
    return a


def to_bytes(img: np.ndarray) -> np.ndarray:
    """Quantise to uint8 as ``round(clamp(v, 0, 1) * 255)``."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_bytes(b: np.ndarray) -> np.ndarray:
    return b.astype(np.float64) / 255.0


def load_image(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P5", b"P6"):
        return from_bytes(_read_pnm(path))
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise FormatError(f"{path}: unsupported bit depth (mode {mode})")
            if mode == "P":
                im = im.convert("RGBA")
                mode = "RGBA"
            if mode in ("RGBA", "LA"):
                # composite over white
                rgba = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
                alpha = rgba[:, :, 3:4]
                rgb = rgba[:, :, :3] * alpha + (1.0 - alpha)
                if mode == "LA":
                    return rgb[:, :, 0]
                return rgb
            if mode in ("1", "L"):
                return from_bytes(np.asarray(im.convert("L")))
            return from_bytes(np.asarray(im.convert("RGB")))
    except FormatError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc


def save_image(img, path) -> None:
    """Write an 8-bit image; the format follows the extension (.png, .pgm, .ppm)."""
    path = os.fspath(path)
    b = to_bytes(as_image(img))
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pgm", ".ppm", ".pnm"):
        _write_pnm(b, path)
        return
    PILImage.fromarray(b).save(path, format="PNG")


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PNM header")
    return data[start:pos], pos


def _read_pnm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"{path}: bad PNM header field {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (need 255)")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad extents {width}x{height}")
    pos += 1  # single whitespace after maxval
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = data[pos : pos + need]
    if len(payload) != need:
        raise FormatError(f"{path}: truncated PNM payload")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, 3)


def _write_pnm(b: np.ndarray, path: str) -> None:
    if b.ndim == 2:
        magic = b"P5"
    else:
        magic = b"P6"
    h, w = b.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(b).tobytes())


# -- DRT1 tensors ------------------------------------------------------------

def write_tensor(t, path) -> None:
    a = np.ascontiguousarray(np.asarray(t, dtype=np.float32))
    if a.ndim > MAX_NDIM:
        raise FormatError(f"DRT1 supports at most {MAX_NDIM} dims, got {a.ndim}")
    shape = a.shape if a.ndim else (1,)
    header = DRT1_MAGIC + struct.pack("<BB", DTYPE_F32, len(shape))
    header += struct.pack(f"<{len(shape)}I", *shape)
    with open(os.fspath(path), "wb") as fh:
        fh.write(header)
        fh.write(a.astype("<f4", copy=False).tobytes())


def read_tensor(path) -> np.ndarray:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 6 or data[:4] != DRT1_MAGIC:
        raise FormatError(f"{path}: not a DRT1 tensor file")
    dtype, ndim = data[4], data[5]
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if ndim > MAX_NDIM:
        raise FormatError(f"{path}: ndim {ndim} exceeds {MAX_NDIM}")
    end = 6 + 4 * ndim
    if len(data) < end:
        raise FormatError(f"{path}: truncated DRT1 header")
    shape = struct.unpack(f"<{ndim}I", data[6:end])
    count = 1
    for s in shape:
        count *= s
    if len(data) - end != 4 * count:
        raise FormatError(f"{path}: payload size does not match extents {shape}")
    return np.frombuffer(data[end:], dtype="<f4").astype(np.float32).reshape(shape)
