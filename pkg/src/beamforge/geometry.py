"""Array geometries, imaging grids, time-of-flight, and receive focusing.

Conventions used throughout:

- positions are 2D points ``(x, z)`` in meters; linear arrays lie along the
  x axis at ``z = 0`` and image the half plane ``z > 0``; circular (IVUS
  style) arrays sit on a ring centered at the origin and image the annulus
  outside the ring
- a focused frame holds one time-of-flight corrected vector
  ``y[i, j] in R^N`` per pixel, where ``N`` is the receive aperture size
  (physical for plane wave, virtual for synthetic aperture)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .validation import ConfigurationError, check_finite

SOFT_TISSUE_SOUND_SPEED = 1540.0  # m/s


@dataclass(frozen=True)
class PlaneWave:
    """Single unfocused planar transmit steered ``angle`` radians off the z axis."""

    angle: float = 0.0


@dataclass(frozen=True)
class SyntheticAperture:
    """Sequential single-element transmits, each received on a small aperture.

    The virtual aperture is assembled by concatenating the
    ``receive_aperture`` channels of each of the ``num_transmits`` firings,
    in transmit order, so its size is ``num_transmits * receive_aperture``.
    """

    num_transmits: int
    receive_aperture: int


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Transducer array description.

    Attributes:
        element_positions: (N, 2) element centers in meters.
        kind: "linear" or "circular".
        pitch: center-to-center element spacing in meters.
        transmit: PlaneWave or SyntheticAperture scheme.
        sound_speed: propagation speed c in m/s.
        sampling_frequency: fs in Hz.
        center_frequency: pulse center frequency f0 in Hz.
    """

    element_positions: np.ndarray
    kind: str
    pitch: float
    transmit: PlaneWave | SyntheticAperture
    sound_speed: float = SOFT_TISSUE_SOUND_SPEED
    sampling_frequency: float = 25e6
    center_frequency: float = 6.25e6

    def __post_init__(self):
        pos = np.asarray(self.element_positions, dtype=np.float64)
        object.__setattr__(self, "element_positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 2:
            raise ConfigurationError("element_positions must be (N >= 2, 2)")
        check_finite(pos, "element_positions")
        if self.kind not in ("linear", "circular"):
            raise ConfigurationError(f"unknown array kind: {self.kind!r}")
        if self.pitch <= 0:
            raise ConfigurationError("pitch must be > 0")
        if self.sound_speed <= 0:
            raise ConfigurationError("sound_speed must be > 0")
        if self.sampling_frequency <= 2 * self.center_frequency:
            raise ConfigurationError("sampling_frequency must exceed 2*center_frequency")
        if isinstance(self.transmit, SyntheticAperture):
            if not 1 <= self.transmit.num_transmits <= pos.shape[0]:
                raise ConfigurationError("num_transmits must be in [1, N]")
            if not 1 <= self.transmit.receive_aperture <= pos.shape[0]:
                raise ConfigurationError("receive_aperture must be in [1, N]")

    @property
    def num_elements(self):
        return self.element_positions.shape[0]

    @property
    def wavelength(self):
        return self.sound_speed / self.center_frequency

    @property
    def ring_radius(self):
        """Radius of a circular array (distance of elements from the center)."""
        if self.kind != "circular":
            raise ConfigurationError("ring_radius is defined for circular arrays only")
        return float(np.linalg.norm(self.element_positions[0]))

    @property
    def num_transmits(self):
        if isinstance(self.transmit, SyntheticAperture):
            return self.transmit.num_transmits
        return 1

    @property
    def aperture_size(self):
        """Channel count N of a focused frame (virtual aperture for SA)."""
        if isinstance(self.transmit, SyntheticAperture):
            return self.transmit.num_transmits * self.transmit.receive_aperture
        return self.num_elements

    def transmit_elements(self):
        """Element indices that fire, evenly spread over the array (SA only)."""
        if not isinstance(self.transmit, SyntheticAperture):
            raise ConfigurationError("transmit_elements requires a synthetic-aperture scheme")
        t = self.transmit.num_transmits
        return np.round(np.arange(t) * self.num_elements / t).astype(int) % self.num_elements

    def receive_aperture_elements(self, tx_element):
        """Element indices of the receive aperture centered on ``tx_element``.

        The window takes one extra element on the low-index side when the
        aperture size is even; it wraps around for circular arrays and is
        shifted to stay in bounds for linear ones.
        """
        if not isinstance(self.transmit, SyntheticAperture):
            raise ConfigurationError("receive apertures require a synthetic-aperture scheme")
        a = self.transmit.receive_aperture
        lo = tx_element - (a - 1) // 2 - (1 if a % 2 == 0 else 0)
        idx = np.arange(lo, lo + a)
        if self.kind == "circular":
            return idx % self.num_elements
        return idx - min(0, idx[0]) - max(0, idx[-1] - (self.num_elements - 1))

    def channel_layout(self):
        """Per virtual channel: (transmit index, receive element index).

        Plane wave: one transmit, channels are the physical elements in order.
        Synthetic aperture: receive apertures concatenated in transmit order.
        """
        if isinstance(self.transmit, SyntheticAperture):
            tx_els = self.transmit_elements()
            tx_of = np.repeat(np.arange(self.num_transmits), self.transmit.receive_aperture)
            rx_of = np.concatenate([self.receive_aperture_elements(e) for e in tx_els])
            return tx_of, rx_of
        n = self.num_elements
        return np.zeros(n, dtype=int), np.arange(n)

    def content_hash(self):
        """Short stable digest of the geometry for image provenance metadata."""
        h = hashlib.sha1()
        h.update(self.kind.encode())
        h.update(repr(self.transmit).encode())
        for v in (self.pitch, self.sound_speed, self.sampling_frequency, self.center_frequency):
            h.update(np.float64(v).tobytes())
        h.update(np.ascontiguousarray(self.element_positions).tobytes())
        return h.hexdigest()[:12]


def linear_array(num_elements=64, pitch=0.3e-3, transmit=None, sound_speed=SOFT_TISSUE_SOUND_SPEED,
                 sampling_frequency=25e6, center_frequency=6.25e6):
    """Linear array centered on the origin, elements along x at z = 0."""
    x = (np.arange(num_elements) - (num_elements - 1) / 2.0) * pitch
    pos = np.column_stack([x, np.zeros(num_elements)])
    return ArrayGeometry(pos, "linear", pitch, transmit or PlaneWave(0.0),
                         sound_speed, sampling_frequency, center_frequency)


def circular_array(num_elements=32, pitch=0.114e-3, transmit=None,
                   sound_speed=SOFT_TISSUE_SOUND_SPEED,
                   sampling_frequency=40e6, center_frequency=10e6):
    """Ring array centered on the origin, equally spaced, radius fixed by pitch."""
    radius = num_elements * pitch / (2.0 * np.pi)
    phi = 2.0 * np.pi * np.arange(num_elements) / num_elements
    pos = np.column_stack([radius * np.sin(phi), radius * np.cos(phi)])
    return ArrayGeometry(pos, "circular", pitch, transmit or SyntheticAperture(8, 8),
                         sound_speed, sampling_frequency, center_frequency)


def preset(name):
    """Named array presets.

    ``pw_64``/``sa_32`` are the desk-scale defaults; ``pw_128``/``sa_64``
    are full-scale variants (128-element linear probe, 64-element IVUS ring).
    """
    if name == "pw_64":
        return linear_array(64, 0.3e-3, PlaneWave(0.0), 1540.0, 25e6, 6.25e6)
    if name == "pw_128":
        return linear_array(128, 0.3e-3, PlaneWave(0.0), 1540.0, 25e6, 6.25e6)
    if name == "sa_32":
        return circular_array(32, 0.114e-3, SyntheticAperture(8, 8), 1540.0, 40e6, 10e6)
    if name == "sa_64":
        return circular_array(64, 0.057e-3, SyntheticAperture(8, 14), 1540.0, 100e6, 20e6)
    raise ConfigurationError(f"unknown geometry preset: {name!r}")


@dataclass(frozen=True, eq=False)
class ImagingGrid:
    """Rectilinear pixel grid, Cartesian (x, z) or polar (angle, radius).

    ``ax0`` is the lateral axis (x in meters, or angle in radians) and
    ``ax1`` the axial axis (z or radius, meters). Images and focused frames
    are indexed ``[i0, i1]`` in the same order.
    """

    kind: str
    ax0: np.ndarray
    ax1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ax0", np.asarray(self.ax0, dtype=np.float64))
        object.__setattr__(self, "ax1", np.asarray(self.ax1, dtype=np.float64))
        if self.kind not in ("cartesian", "polar"):
            raise ConfigurationError(f"unknown grid kind: {self.kind!r}")
        for ax in (self.ax0, self.ax1):
            if ax.ndim != 1 or ax.size < 2:
                raise ConfigurationError("grid axes must be 1D with >= 2 samples")
            if np.any(np.diff(ax) <= 0):
                raise ConfigurationError("grid axes must be strictly increasing")

    @property
    def shape(self):
        return (self.ax0.size, self.ax1.size)

    @property
    def spacing(self):
        """(lateral, axial) sample spacing; lateral is radians for polar grids."""
        return (float(np.mean(np.diff(self.ax0))), float(np.mean(np.diff(self.ax1))))

    def positions(self):
        """Cartesian pixel centers, shape (n0, n1, 2)."""
        a0, a1 = np.meshgrid(self.ax0, self.ax1, indexing="ij")
        if self.kind == "cartesian":
            return np.stack([a0, a1], axis=-1)
        return np.stack([a1 * np.sin(a0), a1 * np.cos(a0)], axis=-1)


def cartesian_grid(x_limits, z_limits, num_x, num_z):
    return ImagingGrid("cartesian", np.linspace(*x_limits, num_x), np.linspace(*z_limits, num_z))


def polar_grid(angle_limits, radius_limits, num_angle, num_radius):
    return ImagingGrid("polar", np.linspace(*angle_limits, num_angle),
                       np.linspace(*radius_limits, num_radius))


def geometry_from_config(values):
    """Build an array from flat config items (the ``geometry.`` section).

    Supported keys: ``preset`` (overrides everything else), ``elements``,
    ``pitch_m``, ``f0_hz``, ``fs_hz``, ``c_mps``, ``kind``
    (linear|circular), ``transmit_scheme`` (``plane_wave``,
    ``plane_wave:<angle_rad>``, or
    ``synthetic_aperture:<num_transmits>:<receive_aperture>``).
    """
    if values.get("preset"):  # empty string = explicitly unset
        return preset(values["preset"])
    kind = values.get("kind", "linear")
    scheme = values.get("transmit_scheme", "plane_wave" if kind == "linear"
                        else "synthetic_aperture:8:8")
    parts = scheme.split(":")
    if parts[0] == "plane_wave":
        transmit = PlaneWave(float(parts[1]) if len(parts) > 1 else 0.0)
    elif parts[0] == "synthetic_aperture":
        if len(parts) != 3:
            raise ConfigurationError(
                "transmit_scheme synthetic_aperture needs :num_transmits:receive_aperture")
        transmit = SyntheticAperture(int(parts[1]), int(parts[2]))
    else:
        raise ConfigurationError(f"unknown transmit_scheme: {scheme!r}")
    build = linear_array if kind == "linear" else circular_array
    kwargs = {}
    if "c_mps" in values:
        kwargs["sound_speed"] = float(values["c_mps"])
    if "fs_hz" in values:
        kwargs["sampling_frequency"] = float(values["fs_hz"])
    if "f0_hz" in values:
        kwargs["center_frequency"] = float(values["f0_hz"])
    if "pitch_m" in values:
        kwargs["pitch"] = float(values["pitch_m"])
    return build(int(values.get("elements", 64)), transmit=transmit, **kwargs)


def grid_from_config(values):
    """Build an imaging grid from flat config items (the ``grid.`` section).

    Keys: ``kind`` (cartesian|polar), ``grid_x``/``grid_z`` sample counts,
    and ``extent_m`` = lateral_min, lateral_max, axial_min, axial_max (the
    lateral pair is in radians for polar grids).
    """
    kind = values.get("kind", "cartesian")
    extent = [float(p) for p in values["extent_m"].split(",")]
    if len(extent) != 4:
        raise ConfigurationError("extent_m needs 4 comma-separated values")
    n0 = int(values.get("grid_x", 64))
    n1 = int(values.get("grid_z", 64))
    if kind == "cartesian":
        return cartesian_grid((extent[0], extent[1]), (extent[2], extent[3]), n0, n1)
    if kind == "polar":
        return polar_grid((extent[0], extent[1]), (extent[2], extent[3]), n0, n1)
    raise ConfigurationError(f"unknown grid kind: {kind!r}")


@dataclass(eq=False)
class RawChannelData:
    """Recorded channel signals, shape (num_transmits, num_elements, num_samples).

    The time axis is uniform at 1/fs with t = 0 at the transmit instant.
    """

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 3:
            raise ConfigurationError("channel data must be (num_tx, num_rx, num_samples)")
        check_finite(self.samples, "channel data")

    @property
    def num_samples(self):
        return self.samples.shape[2]


@dataclass(eq=False)
class FocusedFrame:
    """Per-pixel time-of-flight corrected channel vectors.

    Attributes:
        data: (n0, n1, N) aligned samples, one length-N vector per pixel.
        grid: the imaging grid the frame was focused onto.
        tx_of_channel: (N,) transmit event index feeding each channel.
        rx_of_channel: (N,) physical receive element index of each channel.
        mask: (N,) active-channel flags; masked-out channels hold exact zeros.
    """

    data: np.ndarray
    grid: ImagingGrid
    tx_of_channel: np.ndarray
    rx_of_channel: np.ndarray
    mask: np.ndarray = None
    geometry_hash: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones(self.data.shape[-1], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        n = self.data.shape[-1]
        if self.data.ndim != 3 or self.data.shape[:2] != self.grid.shape:
            raise ConfigurationError("frame data must be (n0, n1, N) matching the grid")
        if not (self.mask.shape == (n,) and len(self.tx_of_channel) == n
                and len(self.rx_of_channel) == n):
            raise ConfigurationError("channel metadata length must match aperture size")

    @property
    def aperture_size(self):
        return self.data.shape[-1]

    @property
    def num_transmits(self):
        return int(self.tx_of_channel.max()) + 1

    def per_transmit(self):
        """View the channel axis as (num_transmits, channels_per_transmit).

        Requires a uniform channel count per transmit, which holds for every
        layout produced by :func:`focus`.
        """
        t = self.num_transmits
        n = self.aperture_size
        if n % t != 0:
            raise ConfigurationError("channel count is not uniform across transmits")
        a = n // t
        order = np.argsort(self.tx_of_channel, kind="stable")
        if not np.array_equal(order, np.arange(n)):
            raise ConfigurationError("channels must be grouped by transmit")
        data = self.data.reshape(self.data.shape[0], self.data.shape[1], t, a)
        return data, self.mask.reshape(t, a)


def time_of_flight(geom, tx_pos, rx_pos, r):
    """Two-way travel time from transmit to a focal point and back to a receiver.

    ``tx_pos=None`` selects the plane-wave transmit path, i.e. the travel
    distance of the steered wavefront to the point (depth z for angle 0).
    ``r`` may be a single point or an (..., 2) array; broadcasts over pixels.

    Returns seconds, same leading shape as ``r``.
    """
    r = np.asarray(r, dtype=np.float64)
    check_finite(r, "focal point")
    rx = np.asarray(rx_pos, dtype=np.float64)
    check_finite(rx, "receive position")
    rx_path = np.linalg.norm(r - rx, axis=-1)
    if tx_pos is None:
        angle = geom.transmit.angle if isinstance(geom.transmit, PlaneWave) else 0.0
        tx_path = r[..., 0] * np.sin(angle) + r[..., 1] * np.cos(angle)
    else:
        tx = np.asarray(tx_pos, dtype=np.float64)
        check_finite(tx, "transmit position")
        tx_path = np.linalg.norm(r - tx, axis=-1)
    return (tx_path + rx_path) / geom.sound_speed


def _sample_linear(channel, idx):
    """Linearly interpolate ``channel`` at fractional sample indices ``idx``.

    Indices outside [0, len-1] return 0.
    """
    n = channel.shape[-1]
    k = np.floor(idx).astype(np.int64)
    frac = idx - k
    valid = (k >= 0) & (k <= n - 2)
    k_safe = np.clip(k, 0, n - 2)
    out = (1.0 - frac) * channel[k_safe] + frac * channel[k_safe + 1]
    out[~valid] = 0.0
    # exact endpoint: idx == n-1 lands on the last sample
    at_end = idx == (n - 1)
    if np.any(at_end):
        out[at_end] = channel[n - 1]
    return out


def _front_of_array(geom, grid):
    pos = grid.positions()
    if geom.kind == "linear":
        return np.all(pos[..., 1] > 0)
    radii = np.linalg.norm(pos, axis=-1)
    return np.all(radii > geom.ring_radius)


def focus(raw, geom, grid):
    """Dynamically focus raw channel data onto an imaging grid.

    Each output channel is the raw signal of one (transmit, receive) pair
    sampled at its pixel-dependent round-trip delay with 2-tap linear
    interpolation; delays outside the recorded window yield 0.

    Returns a :class:`FocusedFrame` with aperture size N = num elements
    (plane wave) or num_transmits * receive_aperture (synthetic aperture).
    """
    samples = raw.samples
    if samples.shape[0] != geom.num_transmits or samples.shape[1] != geom.num_elements:
        raise ConfigurationError(
            f"channel data {samples.shape[:2]} does not match geometry "
            f"({geom.num_transmits} transmits, {geom.num_elements} elements)")
    if not _front_of_array(geom, grid):
        raise ConfigurationError("grid has pixels behind or inside the array")

    pos = grid.positions()
    fs = geom.sampling_frequency
    tx_of, rx_of = geom.channel_layout()
    n_channels = tx_of.size
    out = np.empty(grid.shape + (n_channels,), dtype=np.float64)

    if isinstance(geom.transmit, SyntheticAperture):
        tx_els = geom.transmit_elements()
        for c in range(n_channels):
            tx_pos = geom.element_positions[tx_els[tx_of[c]]]
            rx_pos = geom.element_positions[rx_of[c]]
            delay = time_of_flight(geom, tx_pos, rx_pos, pos)
            out[..., c] = _sample_linear(samples[tx_of[c], rx_of[c]], delay * fs)
    else:
        for c in range(n_channels):
            rx_pos = geom.element_positions[rx_of[c]]
            delay = time_of_flight(geom, None, rx_pos, pos)
            out[..., c] = _sample_linear(samples[0, rx_of[c]], delay * fs)

    return FocusedFrame(out, grid, tx_of, rx_of, geometry_hash=geom.content_hash())
