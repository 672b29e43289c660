"""Image containers, file formats and the preprocessing blur.

Gray images are ``uint8`` arrays of shape ``(height, width)``. Float
rasters (disparity, depth) are float arrays of the same layout where any
non-finite value means "no data"; the canonical sentinel is ``-inf``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionError,
    DomainError,
    MalformedHeaderError,
    MissingFileError,
    ParseError,
    TruncatedDataError,
    UnsupportedBitDepthError,
)

INVALID = -np.inf

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def is_valid(values: np.ndarray) -> np.ndarray:
    return np.isfinite(values)


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and (arr.min() < 0 or arr.max() > 255):
            raise DomainError("integer image values must lie in [0, 255]")
        arr = np.clip(np.floor(np.asarray(arr, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)
    return arr


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luma ``round(0.299 R + 0.587 G + 0.114 B)`` with halves rounded up."""
    rgb = np.asarray(rgb, dtype=np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


# --- PGM -------------------------------------------------------------------


def _pnm_tokens(data: bytes, count: int, path) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the byte after the single
    whitespace character that terminates the last token.
    """
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise MalformedHeaderError(f"{path}: header ended early")
        tokens.append(data[start:i])
    if i >= n:
        raise MalformedHeaderError(f"{path}: no data after header")
    return tokens, i + 1


def _decode_pgm(data: bytes, path) -> np.ndarray:
    (magic, w, h, maxval), offset = _pnm_tokens(data, 4, path)
    if magic != b"P5":
        raise MalformedHeaderError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        width, height, maxv = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: non-integer header field") from exc
    if width < 1 or height < 1 or maxv < 1:
        raise MalformedHeaderError(f"{path}: bad dimensions {width}x{height} / maxval {maxv}")
    if maxv > 255:
        raise UnsupportedBitDepthError(f"{path}: 16-bit PGM (maxval {maxv}) is not supported")
    payload = data[offset : offset + width * height]
    if len(payload) < width * height:
        raise TruncatedDataError(
            f"{path}: expected {width * height} pixel bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def _decode_png(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
                raise UnsupportedBitDepthError(f"{path}: PNG mode {mode} is not 8-bit")
            im.load()
            if mode == "L":
                return np.array(im, dtype=np.uint8)
            if mode == "LA":
                return np.array(im, dtype=np.uint8)[..., 0].copy()
            if mode in ("1",):
                return np.array(im.convert("L"), dtype=np.uint8)
            return rgb_to_gray(np.array(im.convert("RGB"), dtype=np.uint8))
    except UnidentifiedImageError as exc:
        raise MalformedHeaderError(f"{path}: not a readable PNG") from exc
    except (OSError, SyntaxError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise TruncatedDataError(f"{path}: {exc}") from exc


def load_image(path) -> np.ndarray:
    """Load a PGM (P5) or PNG file as an 8-bit gray image.

    Color PNGs are converted with :func:`rgb_to_gray`.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"image not found: {path}")
    data = path.read_bytes()
    if data.startswith(_PNG_MAGIC):
        return _decode_png(path)
    if data[:1] == b"P":
        return _decode_pgm(data, path)
    raise MalformedHeaderError(f"{path}: unrecognized image format")


def save_pgm(img, path) -> None:
    img = as_gray(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


# --- PFM -------------------------------------------------------------------


def save_float_image(img, path) -> None:
    """Write a single-channel little-endian PFM (rows stored bottom-up).

    Values are stored as float32; non-finite values become ``-inf``.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
    out = np.where(np.isfinite(arr), arr, INVALID).astype("<f4")
    h, w = out.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        fh.write(np.ascontiguousarray(out[::-1]).tobytes())


def load_float_image(path) -> np.ndarray:
    """Read a single-channel PFM into a float32 array, top row first."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"float image not found: {path}")
    data = path.read_bytes()
    (magic, w, h, scale), offset = _pnm_tokens(data, 4, path)
    if magic != b"Pf":
        raise MalformedHeaderError(f"{path}: not a grayscale PFM (magic {magic!r})")
    try:
        width, height, scale = int(w), int(h), float(scale)
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: bad PFM header") from exc
    if width < 1 or height < 1 or scale == 0 or not math.isfinite(scale):
        raise MalformedHeaderError(f"{path}: bad PFM header")
    dtype = "<f4" if scale < 0 else ">f4"
    nbytes = 4 * width * height
    payload = data[offset : offset + nbytes]
    if len(payload) < nbytes:
        raise TruncatedDataError(f"{path}: expected {nbytes} bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width)[::-1]
    return arr.astype(np.float32)


def depth_preview(depth, z_min: float, z_max: float) -> np.ndarray:
    """Map ``[z_min, z_max]`` linearly onto ``[0, 255]``; invalid pixels become 0."""
    if not z_max > z_min:
        raise DomainError("z_max must exceed z_min")
    depth = np.asarray(depth, dtype=np.float64)
    ok = np.isfinite(depth)
    scaled = (np.where(ok, depth, z_min) - z_min) * (255.0 / (z_max - z_min))
    out = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    out[~ok] = 0
    return out


# --- smoothing -------------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled, normalized Gaussian with radius ``ceil(3 * sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    return w / w.sum()


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = kernel.size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    out = np.zeros_like(a)
    for i, w in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += w * padded[tuple(sl)]
    return out


def gaussian_smooth(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge replication.

    ``sigma == 0`` returns an unchanged copy. The result is rounded to the
    nearest integer and clamped to ``[0, 255]``.
    """
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise DomainError(f"sigma must be a non-negative number, got {sigma}")
    img = as_gray(img)
    if sigma == 0:
        return img.copy()
    kernel = gaussian_kernel(sigma)
    out = _convolve_axis(img.astype(np.float64), kernel, axis=1)
    out = _convolve_axis(out, kernel, axis=0)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)

