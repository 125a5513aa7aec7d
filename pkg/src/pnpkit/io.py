"""Image I/O: lossless ``.pnpk`` float64 files and 8-bit PNG.

``.pnpk`` layout: ``b"PNPK"``, then little-endian u32 height, width and
channel count, then ``h*w*c`` little-endian float64 values stored
channel-planar (all of channel 0, then channel 1, ...), row-major inside a
plane.
"""

from __future__ import annotations

import struct
from importlib import resources
from pathlib import Path

import numpy as np

MAGIC = b"PNPK"
_HEADER = struct.Struct("<4sIII")


def write_pnpk(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype="<f8")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected (h, w) or (h, w, c) image, got {img.shape}")
    h, w, c = img.shape
    planar = np.ascontiguousarray(img.transpose(2, 0, 1))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, h, w, c))
        fh.write(planar.tobytes())


def read_pnpk(path) -> np.ndarray:
    """Read a ``.pnpk`` file; single-channel images come back as ``(h, w)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, h, w, c = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    n = h * w * c
    if len(data) != _HEADER.size + 8 * n:
        raise ValueError(f"{path}: expected {n} float64 values")
    planar = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(c, h, w)
    img = planar.transpose(1, 2, 0).astype(np.float64)
    return img[:, :, 0] if c == 1 else img


def write_png(path, image: np.ndarray) -> None:
    """Quantize a [0, 1] image to 8 bits and save it (for viewing only)."""
    from PIL import Image

    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(img * 255).astype(np.uint8)).save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr


BUILTIN_IMAGES = ("squares", "disks", "camera", "astronaut")


def load_image(spec: str) -> np.ndarray:
    """Load a builtin image by name, or a ``.pnpk`` / ``.png`` file path."""
    if spec in BUILTIN_IMAGES:
        ref = resources.files("pnpkit") / "data" / f"{spec}.pnpk"
        with resources.as_file(ref) as p:
            return read_pnpk(p)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"no builtin image or file named {spec!r}")
    if path.suffix.lower() == ".pnpk":
        return read_pnpk(path)
    return read_png(path)
