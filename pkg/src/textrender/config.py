"""Plain-text run configuration: one ``key = value`` per line.

Blank lines and ``#`` comments are ignored.  Values stay strings until a
consumer resolves them, so the same file can feed every subcommand.
Resolution order everywhere is: explicit command-line flag, then config
file entry, then built-in default.
"""

from .errors import ConfigError


def load_config(path):
    opts = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not eq or not key:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                                  f"got {raw.strip()!r}")
            opts[key] = val
    return opts


def resolve(flag_value, opts, key, default, cast=str):
    """Pick flag over config over default; cast config-file strings."""
    if flag_value is not None:
        return flag_value
    if key in opts:
        try:
            return cast(opts[key])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config key {key} = {opts[key]!r}: {e}") from e
    return default


def int_tuple(text):
    return tuple(int(c) for c in text.split(","))
