"""Persistence, rendering, and the command-line pipeline.

Submodules:

- :mod:`~beamforge.io_cli.container` — the binary named-tensor format
- :mod:`~beamforge.io_cli.config`   — flat key=value run configuration
- :mod:`~beamforge.io_cli.render`   — log compression and PGM output
- :mod:`~beamforge.io_cli.cli`      — the ``beamforge`` command
"""

from .config import RunConfig, load_config, merge_overrides, parse_config, save_config
from .container import read_container, write_container
from .render import compress_to_bytes, render, write_pgm

__all__ = [
    "RunConfig", "load_config", "merge_overrides", "parse_config", "save_config",
    "read_container", "write_container",
    "compress_to_bytes", "render", "write_pgm",
]
