"""Log-compressed B-mode rendering to binary PGM (P5, 8-bit).

The envelope is normalized to its peak, compressed to
``clamp(20 log10(env / peak), -DR, 0)`` decibels, and mapped linearly onto
0..255 (half-up rounding, so -DR/2 dB lands on byte 128). Depth runs down
the image: PGM rows are axial samples, columns lateral positions.
"""

from __future__ import annotations

import warnings

import numpy as np

DEFAULT_DYNAMIC_RANGE_DB = 60.0


def compress_to_bytes(env, dynamic_range_db=DEFAULT_DYNAMIC_RANGE_DB):
    """Map an envelope image to display bytes; returns a uint8 array."""
    env = np.asarray(env, dtype=np.float64)
    if dynamic_range_db <= 0:
        raise ValueError("dynamic range must be positive")
    peak = env.max() if env.size else 0.0
    if peak <= 0.0:
        warnings.warn("all-zero envelope; rendering a black image", stacklevel=2)
        return np.zeros(env.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env / peak)
    db = np.clip(db, -dynamic_range_db, 0.0)
    scaled = 255.0 * (db + dynamic_range_db) / dynamic_range_db
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, pixels):
    """Write a 2D uint8 array as binary PGM, rows top to bottom."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError("PGM output needs a 2D image")
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def render(env, dynamic_range_db=DEFAULT_DYNAMIC_RANGE_DB, path=None):
    """Log-compress an envelope image and optionally write it as PGM.

    ``env`` is indexed (lateral, axial); the written image puts depth on
    the vertical axis. Returns the display bytes (axial x lateral).
    """
    pixels = compress_to_bytes(env, dynamic_range_db).T
    if path is not None:
        write_pgm(path, pixels)
    return pixels
