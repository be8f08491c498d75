"""Attention-based text style rendering toolkit.

Submodules are imported lazily so the command line interface can pin BLAS
thread counts through environment variables before numpy first loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "autodiff",
    "backend",
    "checkpoint",
    "cli",
    "config",
    "data",
    "encoders",
    "errors",
    "fusion",
    "kernels",
    "metrics",
    "modulation",
    "pngio",
    "renderer",
    "sampler",
    "synth",
    "training",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
