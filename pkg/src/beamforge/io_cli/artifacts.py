"""Packing of pipeline artifacts into the binary tensor container.

Raw channel recordings, focused frames, and beamformed images each map to a
small fixed set of named tensors; text fields (grid kind, image source,
geometry hash) travel as UTF-8 byte tensors. Loading validates that the
expected tensors are present and returns the fully constructed object.
"""

from __future__ import annotations

import numpy as np

from ..beamform import BeamformedImage
from ..geometry import FocusedFrame, ImagingGrid, RawChannelData
from ..validation import ConfigurationError
from .container import read_container, write_container


def _pack_text(text):
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def _unpack_text(tensor):
    return bytes(np.asarray(tensor, dtype=np.uint8)).decode("utf-8")


def _require(tensors, names, what):
    missing = [name for name in names if name not in tensors]
    if missing:
        raise ConfigurationError(f"{what} is missing tensors: {', '.join(missing)}")


def save_raw(path, raw):
    """Write raw channel data: one ``samples`` tensor (tx, rx, time)."""
    write_container(path, {"samples": raw.samples})


def load_raw(path):
    tensors = read_container(path)
    _require(tensors, ["samples"], "raw channel file")
    return RawChannelData(tensors["samples"])


def _grid_tensors(grid):
    return {"grid_kind": _pack_text(grid.kind),
            "grid_ax0": np.asarray(grid.ax0, dtype=np.float64),
            "grid_ax1": np.asarray(grid.ax1, dtype=np.float64)}


def _grid_from(tensors):
    return ImagingGrid(_unpack_text(tensors["grid_kind"]),
                       tensors["grid_ax0"], tensors["grid_ax1"])


_GRID_NAMES = ["grid_kind", "grid_ax0", "grid_ax1"]


def save_frame(path, frame):
    """Write a focused frame: pixel data, channel layout, mask, and grid."""
    tensors = {"data": frame.data,
               "tx_of_channel": np.asarray(frame.tx_of_channel, dtype=np.float64),
               "rx_of_channel": np.asarray(frame.rx_of_channel, dtype=np.float64),
               "mask": frame.mask.astype(np.uint8),
               "geometry_hash": _pack_text(frame.geometry_hash)}
    tensors.update(_grid_tensors(frame.grid))
    write_container(path, tensors)


def load_frame(path):
    tensors = read_container(path)
    _require(tensors, ["data", "tx_of_channel", "rx_of_channel", "mask",
                       "geometry_hash"] + _GRID_NAMES, "focused frame file")
    return FocusedFrame(tensors["data"], _grid_from(tensors),
                        tensors["tx_of_channel"].astype(np.int64),
                        tensors["rx_of_channel"].astype(np.int64),
                        mask=tensors["mask"].astype(bool),
                        geometry_hash=_unpack_text(tensors["geometry_hash"]))


def save_image(path, image):
    """Write a beamformed image with its grid and provenance strings."""
    tensors = {"data": image.data, "source": _pack_text(image.source),
               "geometry_hash": _pack_text(image.geometry_hash)}
    tensors.update(_grid_tensors(image.grid))
    write_container(path, tensors)


def load_image(path):
    tensors = read_container(path)
    _require(tensors, ["data", "source", "geometry_hash"] + _GRID_NAMES,
             "beamformed image file")
    return BeamformedImage(tensors["data"], _grid_from(tensors),
                           _unpack_text(tensors["source"]),
                           _unpack_text(tensors["geometry_hash"]))
