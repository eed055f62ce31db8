"""Per-pixel beamformers on focused frames: DAS, iMAP, MV, and EBMV.

All four consume :class:`~beamforge.geometry.FocusedFrame` vectors
``y[x, z] in R^N`` and produce a real RF amplitude per pixel. The adaptive
pair (MV/EBMV) works on spatially smoothed length-``L`` subapertures and
combines them by averaging (the subaperture mean), so a constant signal maps
to itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import windows as _windows

from .parallel import map_chunks
from .validation import ConfigurationError, check_finite

PIXEL_CHUNK = 4096  # fixed pixel batch size; keeps results thread-count independent


@dataclass(eq=False)
class BeamformedImage:
    """Real RF amplitude per pixel plus provenance metadata."""

    data: np.ndarray
    grid: object
    source: str
    geometry_hash: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        check_finite(self.data, "beamformed image")
        if self.grid is not None and self.data.shape != self.grid.shape:
            raise ConfigurationError("image dims do not match the grid")


@dataclass(eq=False)
class ApodizationMap:
    """Per-pixel weight vectors, shape (n0, n1, L or N)."""

    weights: np.ndarray
    source: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        check_finite(self.weights, "apodization weights")


@dataclass(frozen=True)
class MVConfig:
    """Minimum-variance settings.

    ``subaperture_length`` defaults to N // 2 when left ``None``;
    ``diagonal_loading`` is the loading factor D applied as D * trace(R) * I;
    ``eigen_fraction`` k sets the EBMV signal subspace to ceil(k * L)
    dominant eigenvectors.
    """

    subaperture_length: int | None = None
    diagonal_loading: float = 0.01
    eigen_fraction: float = 0.5

    def __post_init__(self):
        if self.diagonal_loading < 0:
            raise ConfigurationError("diagonal loading must be >= 0")
        if not 0.0 < self.eigen_fraction <= 1.0:
            raise ConfigurationError("eigen fraction must be in (0, 1]")

    def resolve_length(self, n):
        length = self.subaperture_length if self.subaperture_length is not None else n // 2
        if not 1 <= length <= n:
            raise ConfigurationError(f"subaperture length {length} not in [1, {n}]")
        return length


def window_vector(name, n):
    """Fixed apodization window of length ``n``."""
    if name == "boxcar":
        return np.ones(n)
    if name in ("hanning", "hann"):
        return _windows.hann(n, sym=True)
    if name == "tukey":
        return _windows.tukey(n, alpha=0.5, sym=True)
    raise ConfigurationError(f"unknown window: {name!r}")


def das(frame, window="boxcar"):
    """Delay-and-sum: P = w^T y with a fixed window w."""
    w = window_vector(window, frame.aperture_size)
    image = frame.data @ w
    return (BeamformedImage(image, frame.grid, f"das_{window}", frame.geometry_hash),
            ApodizationMap(np.broadcast_to(w, frame.data.shape).copy(), f"das_{window}"))


def imap_estimate(y, iterations):
    """Iterative MAP amplitude estimate for channel vectors ``y`` (..., N).

    P_0 = 1^T y; each iteration sets sigma_x^2 = P^2,
    sigma_n^2 = mean((y - P)^2) and shrinks
    P <- sigma_x^2 / (N sigma_x^2 + sigma_n^2) * 1^T y.
    A pixel with both variances zero (all-zero y) stays exactly 0.
    """
    if iterations < 1:
        raise ConfigurationError("iMAP needs at least one iteration")
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1]
    das_sum = y.sum(axis=-1)
    p = das_sum.copy()
    for _ in range(iterations):
        sig_x = p * p
        sig_n = np.mean((y - p[..., None]) ** 2, axis=-1)
        denom = n * sig_x + sig_n
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(denom > 0.0, sig_x / denom * das_sum, 0.0)
    return p


def imap(frame, iterations=2):
    """iMAP beamformer (``iterations`` MAP shrinkage passes per pixel)."""
    image = imap_estimate(frame.data, iterations)
    return BeamformedImage(image, frame.grid, f"imap_{iterations}", frame.geometry_hash)


def smoothed_covariance(y, length):
    """Spatially smoothed covariance of one channel vector.

    R = (1/(N-L+1)) * sum_l  y_l y_l^T over all length-L subvectors y_l.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1]
    if not 1 <= length <= n:
        raise ConfigurationError(f"subaperture length {length} not in [1, {n}]")
    snaps = sliding_window_view(y, length, axis=-1)
    return snaps.T @ snaps / snaps.shape[0]


def mv_weights(covariance, loading):
    """Distortionless minimum-variance weights for one covariance matrix.

    Solves (R + D trace(R) I) u = 1 and normalizes w = u / sum(u), so
    sum(w) = 1 to machine precision. A degenerate matrix (zero trace, or a
    singular loaded matrix) falls back to uniform weights with a warning.
    """
    r = np.asarray(covariance, dtype=np.float64)
    length = r.shape[0]
    a = np.ones(length)
    loaded = r + loading * np.trace(r) * np.eye(length)
    try:
        u = np.linalg.solve(loaded, a)
    except np.linalg.LinAlgError:
        u = None
    if u is None or not np.all(np.isfinite(u)) or u.sum() == 0.0:
        warnings.warn("singular loaded covariance; using uniform weights", stacklevel=2)
        return a / length
    return u / u.sum()


def _signal_subspace_count(fraction, length):
    return int(math.ceil(fraction * length))


def ebmv_weights(covariance, loading, fraction):
    """Eigenspace-projected MV weights.

    Projects w_MV onto the span of the ceil(k * L) dominant eigenvectors of
    the loaded covariance. The projection is applied as printed — without
    renormalization — so the weight sum may drop below 1 when signal energy
    leaks outside the retained subspace.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError("eigen fraction must be in (0, 1]")
    r = np.asarray(covariance, dtype=np.float64)
    length = r.shape[0]
    w = mv_weights(r, loading)
    loaded = r + loading * np.trace(r) * np.eye(length)
    _, vectors = np.linalg.eigh(loaded)
    basis = vectors[:, length - _signal_subspace_count(fraction, length):]
    return basis @ (basis.T @ w)


def _mv_chunk(y_chunk, length, loading, fraction, eigen):
    """MV/EBMV for a (pixels, N) chunk; returns (P, weights, fallback count)."""
    snaps = sliding_window_view(y_chunk, length, axis=-1)  # (p, N-L+1, L)
    cov = np.einsum("pml,pmk->plk", snaps, snaps) / snaps.shape[1]
    trace = np.einsum("pll->p", cov)
    eye = np.eye(length)
    loaded = cov + (loading * trace)[:, None, None] * eye

    degenerate = trace == 0.0
    if np.any(degenerate):
        loaded[degenerate] = eye
    a = np.ones(length)
    try:
        u = np.linalg.solve(loaded, np.ones(loaded.shape[:1] + (length, 1)))[..., 0]
    except np.linalg.LinAlgError:
        u = np.empty((loaded.shape[0], length))
        for i in range(loaded.shape[0]):
            try:
                u[i] = np.linalg.solve(loaded[i], a)
            except np.linalg.LinAlgError:
                u[i] = np.nan
    bad = ~np.all(np.isfinite(u), axis=1)
    sums = np.where(bad, 1.0, u.sum(axis=1))
    bad |= sums == 0.0
    u[bad] = a
    sums[bad] = length
    w = u / sums[:, None]

    if eigen:
        keep = _signal_subspace_count(fraction, length)
        _, vectors = np.linalg.eigh(loaded)
        basis = vectors[:, :, length - keep:]
        w = np.einsum("plk,pk->pl", basis, np.einsum("plk,pl->pk", basis, w))

    out = np.einsum("pl,pl->p", w, snaps.mean(axis=1))
    return out, w, int(np.count_nonzero(bad | degenerate))


def mv_beamform(frame, cfg=None, eigen=False):
    """Minimum-variance (or eigenspace MV) beamforming of a focused frame.

    Per pixel: smoothed covariance, diagonal loading, MV weights (optionally
    eigenspace-projected), output P = mean over subapertures of w^T y_l.
    Returns the image and the per-pixel weight map (length L).
    """
    cfg = cfg or MVConfig()
    n = frame.aperture_size
    length = cfg.resolve_length(n)
    y = frame.data.reshape(-1, n)
    n_pixels = y.shape[0]

    out = np.empty(n_pixels)
    weights = np.empty((n_pixels, length))
    fallbacks = 0

    def run(start, stop):
        return _mv_chunk(y[start:stop], length, cfg.diagonal_loading,
                         cfg.eigen_fraction, eigen)

    for (start, stop), (p_chunk, w_chunk, n_bad) in map_chunks(run, n_pixels, PIXEL_CHUNK):
        out[start:stop] = p_chunk
        weights[start:stop] = w_chunk
        fallbacks += n_bad
    if fallbacks:
        warnings.warn(f"{fallbacks} pixels used uniform fallback weights", stacklevel=2)

    source = "ebmv" if eigen else "mv"
    image = BeamformedImage(out.reshape(frame.grid.shape), frame.grid, source,
                            frame.geometry_hash)
    return image, ApodizationMap(weights.reshape(frame.grid.shape + (length,)), source)
