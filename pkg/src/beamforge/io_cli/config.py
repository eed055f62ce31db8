"""Flat key=value run configuration with section prefixes.

Grammar (one setting per line)::

    # full-line comments start with '#'
    section.key = value        # keys are dot-prefixed by stage name
    geometry.elements = 64
    grid.extent_m = -0.004, 0.004, 0.010, 0.024

- whitespace around keys and values is ignored; blank lines are skipped
- values are stored verbatim as strings; typed accessors parse on demand
- a comma-separated value parses as a list of floats
- later assignments (and CLI overrides) win over earlier ones
"""

from __future__ import annotations

from ..validation import ConfigurationError

_REQUIRED = object()


def parse_config(text):
    """Parse config text into an ordered ``{key: value-string}`` dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        values[key] = value.strip()
    return values


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(values):
    """Render a config dict back to text (sorted for stable artifacts)."""
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


def save_config(values, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_config(values))


def merge_overrides(values, overrides):
    """Apply ``key=value`` override strings (e.g. from the command line)."""
    merged = dict(values)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        merged[key.strip()] = value.strip()
    return merged


class RunConfig:
    """Typed view over parsed key=value settings.

    Each run owns one fully resolved ``RunConfig``; :meth:`save` writes it
    next to the run's outputs so every artifact records its provenance.
    """

    def __init__(self, values=None):
        self.values = dict(values or {})

    @classmethod
    def from_file(cls, path, overrides=None):
        return cls(merge_overrides(load_config(path), overrides))

    def save(self, path):
        save_config(self.values, path)

    def set(self, key, value):
        self.values[key] = str(value)

    def _fetch(self, key, default):
        if key in self.values:
            return self.values[key]
        if default is _REQUIRED:
            raise ConfigurationError(f"missing required config key: {key}")
        return default

    def _parse(self, key, default, convert, what):
        value = self._fetch(key, default)
        if not isinstance(value, str):
            return value
        try:
            return convert(value)
        except ValueError:
            raise ConfigurationError(f"config key {key} is not {what}: {value!r}") from None

    def get_str(self, key, default=_REQUIRED):
        return self._fetch(key, default)

    def get_int(self, key, default=_REQUIRED):
        return self._parse(key, default, int, "an integer")

    def get_float(self, key, default=_REQUIRED):
        return self._parse(key, default, float, "a number")

    def get_bool(self, key, default=_REQUIRED):
        def convert(text):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)

        return self._parse(key, default, convert, "a boolean")

    def get_floats(self, key, default=_REQUIRED):
        return self._parse(key, default,
                           lambda text: [float(part) for part in text.split(",")],
                           "a comma-separated number list")

    def section(self, prefix):
        """All keys under ``prefix.``, with the prefix stripped."""
        dot = prefix + "."
        return {k[len(dot):]: v for k, v in self.values.items() if k.startswith(dot)}
