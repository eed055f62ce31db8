"""Image-quality metrics: envelope detection, FWHM resolution, and CNR.

Resolution is measured on the linear envelope (half maximum, about -6 dB in
amplitude); contrast on the envelope before log compression. Lateral
profiles follow the grid's first axis — the angular coordinate on polar
grids — and axial profiles its second.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .validation import check_finite

MIN_REGION_PIXELS = 25


class MetricError(ValueError):
    """Raised when a metric is undefined for the given data."""


def _image_data(image):
    if isinstance(image, np.ndarray):
        return image
    return image.data if hasattr(image, "data") else np.asarray(image, dtype=np.float64)


def envelope(image):
    """Envelope via the discrete analytic signal, per axial line (axis 1)."""
    data = _image_data(image)
    if data.ndim == 1:
        return np.abs(hilbert(data))
    return np.abs(hilbert(data, axis=1))


def _half_crossing(profile, peak, half, step):
    """Fractional index of the half-max crossing walking from ``peak`` by ``step``."""
    j = peak
    while 0 <= j + step < len(profile):
        j += step
        if profile[j] < half:
            inner = j - step  # neighbor on the peak side, >= half
            t = (half - profile[j]) / (profile[inner] - profile[j])
            return j + t * (inner - j)
    raise MetricError("no half-maximum crossing; profile is truncated")


def fwhm(profile, spacing):
    """Full width at half maximum of a sampled 1D profile.

    The crossings nearest the global peak are located by linear
    interpolation; the result is in the units of ``spacing``. A peak at an
    endpoint or a profile that never falls below half maximum is an error.
    """
    profile = np.asarray(profile, dtype=np.float64)
    check_finite(profile, "profile")
    if profile.ndim != 1 or profile.size < 3:
        raise MetricError("profile must be 1D with at least 3 samples")
    peak = int(np.argmax(profile))
    if peak in (0, profile.size - 1):
        raise MetricError("profile peak lies on an endpoint")
    half = profile[peak] / 2.0
    left = _half_crossing(profile, peak, half, -1)
    right = _half_crossing(profile, peak, half, +1)
    return float((right - left) * spacing)


@dataclass(frozen=True)
class RegionSpec:
    """Low/high intensity region pair for contrast evaluation."""

    low: object
    high: object

    def masks(self, grid):
        """Pixel masks on ``grid``; regions must not overlap and each must
        cover at least 25 pixels."""
        positions = grid.positions()
        low = self.low.contains(positions)
        high = self.high.contains(positions)
        if np.any(low & high):
            raise MetricError("low and high regions overlap")
        for name, mask in (("low", low), ("high", high)):
            if np.count_nonzero(mask) < MIN_REGION_PIXELS:
                raise MetricError(f"{name} region covers fewer than "
                                  f"{MIN_REGION_PIXELS} pixels")
        return low, high


def cnr(env, low_mask, high_mask):
    """Contrast-to-noise ratio in dB between two envelope regions.

    20 log10(|mean_low - mean_high| / sqrt((var_low + var_high) / 2)).
    Equal means or zero pooled variance are degenerate and raise
    :class:`MetricError`.
    """
    env = _image_data(env)
    low = env[np.asarray(low_mask, dtype=bool)]
    high = env[np.asarray(high_mask, dtype=bool)]
    if low.size == 0 or high.size == 0:
        raise MetricError("empty contrast region")
    contrast = abs(low.mean() - high.mean())
    spread = np.sqrt((low.var() + high.var()) / 2.0)
    if contrast == 0.0:
        raise MetricError("regions have identical means; CNR undefined")
    if spread == 0.0:
        raise MetricError("regions have zero variance; CNR undefined")
    return float(20.0 * np.log10(contrast / spread))


def cnr_regions(env, grid, spec):
    low, high = spec.masks(grid)
    return cnr(env, low, high)


def _nearest_index(axis, value):
    return int(np.argmin(np.abs(axis - value)))


def _climb_to_peak(env, i, j):
    """Walk uphill on the 3x3 neighborhood until a local maximum."""
    n0, n1 = env.shape
    while True:
        best = (env[i, j], i, j)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                a, b = i + di, j + dj
                if 0 <= a < n0 and 0 <= b < n1 and env[a, b] > best[0]:
                    best = (env[a, b], a, b)
        if (best[1], best[2]) == (i, j):
            return i, j
        i, j = best[1], best[2]


def beam_profile(env, grid, through, direction="lateral"):
    """Profile through the envelope peak nearest ``through``, in dB re peak.

    ``through`` is a point in grid coordinates (ax0, ax1). Returns
    ``(axis_values, profile_db)`` along the lateral (ax0) or axial (ax1)
    grid axis.
    """
    env = _image_data(env)
    i, j = _climb_to_peak(env, _nearest_index(grid.ax0, through[0]),
                          _nearest_index(grid.ax1, through[1]))
    if direction == "lateral":
        axis, line = grid.ax0, env[:, j]
    elif direction == "axial":
        axis, line = grid.ax1, env[i, :]
    else:
        raise MetricError(f"unknown profile direction: {direction!r}")
    peak = line.max()
    if peak <= 0.0:
        raise MetricError("profile peak is not positive")
    return axis, 20.0 * np.log10(np.maximum(line / peak, 1e-300))


def point_resolution(env, grid, through):
    """(lateral, axial) FWHM of the envelope peak nearest ``through``.

    Units are those of the grid axes: meters on Cartesian grids; radians
    laterally and meters axially on polar grids.
    """
    env = _image_data(env)
    i, j = _climb_to_peak(env, _nearest_index(grid.ax0, through[0]),
                          _nearest_index(grid.ax1, through[1]))
    d0, d1 = grid.spacing
    return fwhm(env[:, j], d0), fwhm(env[i, :], d1)
