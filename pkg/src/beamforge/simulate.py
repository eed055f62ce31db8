"""Synthetic channel-data generation: phantoms, pulse-echo model, masks.

The pulse-echo model is deliberately simple: every scatterer returns a
Gaussian-modulated cosine (center frequency f0, fractional bandwidth 0.6 at
-6 dB) delayed by the exact two-way time of flight and scaled by
``amplitude / (d_tx * d_rx)`` with each distance floored at one wavelength.
No attenuation, directivity, or nonlinearity is modeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import gausspulse

from .geometry import PlaneWave, RawChannelData, SyntheticAperture
from .validation import ConfigurationError, check_finite

PULSE_BANDWIDTH = 0.6  # fractional, at the -6 dB points
PULSE_BWR_DB = -6.0
_ENVELOPE_CUTOFF = 1e-8  # truncate the pulse where its envelope falls below this


@dataclass(frozen=True)
class Region:
    """Labeled evaluation region: a disk ``(cx, cz, r)`` or a rectangle
    ``(x0, x1, z0, z1)``, all in meters."""

    label: str
    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("disk", "rect"):
            raise ConfigurationError(f"unknown region kind: {self.kind!r}")
        n = 3 if self.kind == "disk" else 4
        if len(self.params) != n:
            raise ConfigurationError(f"{self.kind} region takes {n} parameters")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def contains(self, points):
        """Boolean membership for an (..., 2) array of (x, z) points."""
        points = np.asarray(points, dtype=np.float64)
        x, z = points[..., 0], points[..., 1]
        if self.kind == "disk":
            cx, cz, r = self.params
            return (x - cx) ** 2 + (z - cz) ** 2 <= r * r
        x0, x1, z0, z1 = self.params
        return (x >= x0) & (x <= x1) & (z >= z0) & (z <= z1)


@dataclass(eq=False)
class Phantom:
    """Scatterer collection with an imaging extent and evaluation regions.

    Attributes:
        positions: (S, 2) scatterer centers in meters.
        amplitudes: (S,) reflectivities.
        extent: (x_min, x_max, z_min, z_max) bounding box in meters.
        regions: labeled regions for metric evaluation, e.g. ``low``/``high``
            intensity patches for contrast measurements.
    """

    positions: np.ndarray
    amplitudes: np.ndarray
    extent: tuple
    regions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64).reshape(-1)
        if self.positions.shape[0] != self.amplitudes.shape[0]:
            raise ConfigurationError("positions and amplitudes disagree in length")
        check_finite(self.positions, "scatterer positions")
        check_finite(self.amplitudes, "scatterer amplitudes")
        self.extent = tuple(float(v) for v in self.extent)
        x0, x1, z0, z1 = self.extent
        if not (x0 < x1 and z0 < z1):
            raise ConfigurationError("extent must satisfy x_min < x_max and z_min < z_max")
        if self.positions.size:
            x, z = self.positions[:, 0], self.positions[:, 1]
            if np.any((x < x0) | (x > x1) | (z < z0) | (z > z1)):
                raise ConfigurationError("scatterer positions fall outside the extent")
        self.regions = tuple(self.regions)

    @property
    def num_scatterers(self):
        return self.positions.shape[0]

    def region(self, label):
        for r in self.regions:
            if r.label == label:
                return r
        raise KeyError(f"phantom has no region labeled {label!r}")

    def to_items(self):
        """Serialize to flat config items (see :mod:`beamforge.config`)."""
        items = {
            "extent_m": ", ".join(repr(float(v)) for v in self.extent),
            "scatterer_x": ", ".join(repr(float(v)) for v in self.positions[:, 0]),
            "scatterer_z": ", ".join(repr(float(v)) for v in self.positions[:, 1]),
            "scatterer_amp": ", ".join(repr(float(v)) for v in self.amplitudes),
        }
        for r in self.regions:
            items[f"region.{r.label}"] = ", ".join(
                [r.kind] + [repr(float(p)) for p in r.params])
        return items

    @classmethod
    def from_items(cls, items):
        def floats(text):
            text = text.strip()
            return [float(p) for p in text.split(",")] if text else []

        extent = tuple(floats(items["extent_m"]))
        x = floats(items.get("scatterer_x", ""))
        z = floats(items.get("scatterer_z", ""))
        amp = floats(items.get("scatterer_amp", ""))
        regions = []
        for key, value in items.items():
            if key.startswith("region."):
                parts = [p.strip() for p in value.split(",")]
                regions.append(Region(key[len("region."):], parts[0],
                                      tuple(float(p) for p in parts[1:])))
        return cls(np.column_stack([x, z]) if x else np.empty((0, 2)),
                   amp, extent, tuple(regions))


def point_phantom(points, amplitudes, extent, regions=()):
    """Phantom of discrete point scatterers."""
    return Phantom(np.asarray(points, dtype=np.float64).reshape(-1, 2),
                   amplitudes, extent, regions)


def make_speckle_phantom(extent, density, cyst_regions=(), rng_seed=0,
                         clear_disks=()):
    """Fully developed speckle with optional anechoic (scatterer-free) cysts.

    Scatterer count is Poisson with mean ``density`` (per mm^2) times the
    extent area; positions are uniform and amplitudes Rayleigh with unit
    mean. ``cyst_regions`` are disks ``(cx, cz, r)`` in meters; scatterers
    inside them are removed. Each cyst contributes a ``low`` evaluation disk
    (70% of its radius) and a matched ``high`` disk at the same depth in the
    surrounding speckle. ``clear_disks`` are also emptied of scatterers but
    get no evaluation regions (e.g. the dead zone around a catheter probe).
    """
    if density <= 0 and density != 0:
        raise ConfigurationError("density must be >= 0")
    x0, x1, z0, z1 = (float(v) for v in extent)
    area_mm2 = (x1 - x0) * (z1 - z0) * 1e6
    rng = np.random.default_rng(rng_seed)
    count = rng.poisson(density * area_mm2)
    xs = rng.uniform(x0, x1, count)
    zs = rng.uniform(z0, z1, count)
    amps = rng.rayleigh(math.sqrt(2.0 / math.pi), count)

    regions = []
    keep = np.ones(count, dtype=bool)
    for cx, cz, r in clear_disks:
        keep &= (xs - cx) ** 2 + (zs - cz) ** 2 > r * r
    for i, (cx, cz, r) in enumerate(cyst_regions):
        keep &= (xs - cx) ** 2 + (zs - cz) ** 2 > r * r
        suffix = "" if len(cyst_regions) == 1 else f"_{i}"
        regions.append(Region(f"cyst{suffix}", "disk", (cx, cz, r)))
        regions.append(Region(f"low{suffix}", "disk", (cx, cz, 0.7 * r)))
        # matched background patch at the same depth, on whichever side has room
        dx = 2.2 * r
        hx = cx + dx if cx + dx + 0.7 * r <= x1 else cx - dx
        regions.append(Region(f"high{suffix}", "disk", (hx, cz, 0.7 * r)))

    return Phantom(np.column_stack([xs[keep], zs[keep]]), amps[keep],
                   (x0, x1, z0, z1), tuple(regions))


def _pulse_half_width(geom):
    """Half-width (seconds) beyond which the pulse envelope is negligible."""
    ref = 10.0 ** (PULSE_BWR_DB / 20.0)
    a = -(np.pi * geom.center_frequency * PULSE_BANDWIDTH) ** 2 / (4.0 * np.log(ref))
    return math.sqrt(math.log(1.0 / _ENVELOPE_CUTOFF) / a)


def _transmit_positions(geom):
    """Transmit origin per event, or [None] for a plane wave."""
    if isinstance(geom.transmit, SyntheticAperture):
        return [geom.element_positions[e] for e in geom.transmit_elements()]
    return [None]


def _transmit_path(geom, tx_pos, points):
    if tx_pos is None:
        angle = geom.transmit.angle if isinstance(geom.transmit, PlaneWave) else 0.0
        return points[:, 0] * np.sin(angle) + points[:, 1] * np.cos(angle)
    return np.linalg.norm(points - tx_pos, axis=1)


def default_num_samples(phantom, geom):
    """Enough samples to cover the slowest round trip within the extent."""
    x0, x1, z0, z1 = phantom.extent
    corners = np.array([[x0, z0], [x0, z1], [x1, z0], [x1, z1]])
    t_max = 0.0
    for tx_pos in _transmit_positions(geom):
        tx_path = _transmit_path(geom, tx_pos, corners)
        for rx_pos in geom.element_positions:
            rx_path = np.linalg.norm(corners - rx_pos, axis=1)
            t_max = max(t_max, float(np.max(tx_path + rx_path)) / geom.sound_speed)
    t_max += 2.0 * _pulse_half_width(geom)
    return int(math.ceil(t_max * geom.sampling_frequency)) + 1


def simulate_channels(phantom, geom, noise_std=0.0, rng_seed=0, num_samples=None):
    """Simulate raw channel data for ``phantom`` under ``geom``.

    Scatterer echoes superpose linearly; white Gaussian noise of standard
    deviation ``noise_std`` is added afterwards. Output is deterministic
    given ``rng_seed``. Returns :class:`~beamforge.geometry.RawChannelData`
    of shape (num_transmits, num_elements, num_samples).
    """
    if num_samples is None:
        num_samples = default_num_samples(phantom, geom)
    fs = geom.sampling_frequency
    wavelength = geom.wavelength
    samples = np.zeros((geom.num_transmits, geom.num_elements, num_samples))

    if phantom.num_scatterers:
        points = phantom.positions
        amps = phantom.amplitudes
        half_w = int(math.ceil(_pulse_half_width(geom) * fs)) + 1
        offsets = np.arange(-half_w, half_w + 1)
        for t, tx_pos in enumerate(_transmit_positions(geom)):
            tx_path = _transmit_path(geom, tx_pos, points)
            tx_spread = np.maximum(tx_path, wavelength)
            for e in range(geom.num_elements):
                rx_path = np.linalg.norm(points - geom.element_positions[e], axis=1)
                tof = (tx_path + rx_path) / geom.sound_speed
                scale = amps / (tx_spread * np.maximum(rx_path, wavelength))
                center = np.round(tof * fs).astype(np.int64)
                idx = center[:, None] + offsets
                t_rel = idx / fs - tof[:, None]
                wave = gausspulse(t_rel, fc=geom.center_frequency,
                                  bw=PULSE_BANDWIDTH, bwr=PULSE_BWR_DB)
                wave *= scale[:, None]
                valid = (idx >= 0) & (idx < num_samples)
                samples[t, e] += np.bincount(idx[valid], weights=wave[valid],
                                             minlength=num_samples)

    if noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        samples += rng.normal(0.0, noise_std, samples.shape)
    return RawChannelData(samples)


@dataclass(frozen=True)
class SubsampleScheme:
    """Channel subsampling: ``kind`` is "random" (seeded, without
    replacement) or "deterministic" (elements nearest the transmitter);
    ``rate`` is the kept fraction in (0, 1]."""

    kind: str
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "deterministic"):
            raise ConfigurationError(f"unknown subsampling kind: {self.kind!r}")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigurationError("subsampling rate must be in (0, 1]")


def _index_distance(indices, reference, n, circular):
    d = np.abs(indices - reference)
    return np.minimum(d, n - d) if circular else d


def make_mask(scheme, geom, transmit_index=0):
    """Active-channel mask over one transmit's receive aperture.

    The mask length is the per-transmit receive aperture size (all elements
    for a plane wave). Exactly ``round(rate * N_rx)`` (at least 1) channels
    are active. Random masks draw uniformly without replacement, seeded by
    ``(scheme.seed, transmit_index)``; deterministic masks keep the elements
    nearest the transmitting element by array-index distance (wrapping on
    circular arrays, ties to the lower element index) and ignore the seed.
    For a plane wave the array center stands in for the transmitter.
    """
    if isinstance(geom.transmit, SyntheticAperture):
        elements = geom.receive_aperture_elements(geom.transmit_elements()[transmit_index])
        reference = float(geom.transmit_elements()[transmit_index])
    else:
        elements = np.arange(geom.num_elements)
        reference = (geom.num_elements - 1) / 2.0
    n_rx = elements.size
    keep = max(1, round(scheme.rate * n_rx))
    mask = np.zeros(n_rx, dtype=bool)
    if scheme.kind == "random":
        rng = np.random.default_rng([scheme.seed, transmit_index])
        mask[rng.choice(n_rx, size=keep, replace=False)] = True
        return mask
    dist = _index_distance(elements.astype(np.float64), reference,
                           geom.num_elements, geom.kind == "circular")
    order = np.lexsort((elements, dist))
    mask[order[:keep]] = True
    return mask


def frame_mask(scheme, geom):
    """Masks of every transmit concatenated in virtual-channel order."""
    if isinstance(geom.transmit, SyntheticAperture):
        return np.concatenate([make_mask(scheme, geom, t)
                               for t in range(geom.num_transmits)])
    return make_mask(scheme, geom, 0)
