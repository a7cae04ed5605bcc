"""Grayscale image plumbing: PGM/PPM files and bilinear resampling.

PGM/PPM are the only codecs supported (lossless, dependency-free). Images
are float64 arrays of shape (H, W) with values in [0, 1]. All resampling
uses the half-pixel-center convention: output pixel j samples the source
at (j + 0.5) * scale - 0.5, so a same-size resize is an exact copy.
"""

from __future__ import annotations

import numpy as np

from .errors import DataFormatError

# ITU-R 601 luma weights for PPM -> gray conversion
_LUMA = np.array([0.299, 0.587, 0.114])


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at fractional (y, x) positions in pixel-center coordinates.

    Coordinates are clamped to the image, which replicates border pixels.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(img, grid_y, grid_x)


def _read_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    # header tokens are whitespace-separated; '#' starts a comment to end of line
    tokens: list[int] = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError("truncated PNM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise DataFormatError(f"bad PNM header token {data[start:pos]!r}") from None
    return tokens, pos


def read_image(path) -> np.ndarray:
    """Read a PGM (P2/P5) or PPM (P3/P6) file as grayscale floats in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise DataFormatError(f"{path}: unsupported format {magic!r} (want PGM/PPM)")
    channels = 3 if magic in (b"P3", b"P6") else 1
    (w, h, maxval), pos = _read_tokens(data, 3, 2)
    if maxval != 255:
        raise DataFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    count = w * h * channels
    if magic in (b"P5", b"P6"):
        pos += 1  # single whitespace byte after maxval
        raw = data[pos : pos + count]
        if len(raw) < count:
            raise DataFormatError(f"{path}: truncated pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    else:
        values, _ = _read_tokens(data, count, pos)
        pixels = np.asarray(values, dtype=np.float64)
    pixels /= 255.0
    if channels == 3:
        pixels = pixels.reshape(h, w, 3) @ _LUMA
    else:
        pixels = pixels.reshape(h, w)
    return pixels


def write_pgm(path, img: np.ndarray) -> None:
    """Write floats in [0, 1] as a binary (P5) PGM with maxval 255."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale array, got shape {img.shape}")
    quantized = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(quantized.tobytes())
