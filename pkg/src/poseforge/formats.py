"""Binary PPM/PGM images and the raw depth raster; atomic file writes."""
from __future__ import annotations

import logging
import os
import re
import tempfile
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def encode_pgm(gray: np.ndarray) -> bytes:
    if gray.dtype == bool:
        gray = gray.astype(np.uint8) * 255
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode() + gray.tobytes()


def encode_depth(depth: np.ndarray) -> bytes:
    depth = np.ascontiguousarray(depth, dtype="<f4")
    h, w = depth.shape
    return f"DEPTH {w} {h}\n".encode() + depth.tobytes()


def write_ppm(path, rgb) -> None:
    atomic_write_bytes(path, encode_ppm(rgb))


def write_pgm(path, gray) -> None:
    atomic_write_bytes(path, encode_pgm(gray))


def write_depth(path, depth) -> None:
    atomic_write_bytes(path, encode_depth(depth))


_PNM_HEADER = re.compile(rb"^(P[56])\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s")


def decode_pnm(data: bytes) -> np.ndarray:
    m = _PNM_HEADER.match(data)
    if not m:
        raise ValueError("not a binary PPM/PGM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    body = data[m.end(): m.end() + w * h * channels]
    if len(body) != w * h * channels:
        raise ValueError("truncated image data")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)


def read_ppm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())


read_pgm = read_ppm


def read_depth(path) -> np.ndarray:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    tag, w, h = data[:nl].split()
    if tag != b"DEPTH":
        raise ValueError("missing DEPTH header")
    w, h = int(w), int(h)
    return np.frombuffer(data[nl + 1:], dtype="<f4", count=w * h).reshape(h, w).astype(np.float32)


def read_image(path) -> np.ndarray:
    """RGB uint8 array from a PPM/PGM or PNG file."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    img = read_ppm(path)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    return img


def list_background_images(directory) -> list:
    """Sorted image paths in ``directory``; other files are skipped with a warning."""
    out = []
    for p in sorted(Path(directory).iterdir()):
        if not p.is_file():
            continue
        if p.suffix.lower() in IMAGE_SUFFIXES:
            out.append(p)
        else:
            log.warning("ignoring non-image file in background directory: %s", p.name)
    return out
