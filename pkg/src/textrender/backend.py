"""Kernel backend selection.

Two interchangeable implementations of the hot inner-loop kernels exist:
the compiled ``_fastcore`` extension and the pure numpy ``_slowcore``
module.  The compiled one is preferred when importable; set the
environment variable ``TEXTRENDER_BACKEND`` to ``python`` or ``compiled``
to force a choice (``compiled`` raises if the extension is missing).

Both backends are deterministic and agree to floating-point round-off;
``benchmarks/bench_backends.py`` compares their speed.
"""

import os

import numpy as np

from . import _slowcore
from .errors import ConfigError, ShapeError

try:
    from . import _fastcore
except ImportError:
    _fastcore = None

_BACKENDS = {}
_BACKENDS["python"] = _slowcore
if _fastcore is not None:
    _BACKENDS["compiled"] = _fastcore


def _initial():
    mode = os.environ.get("TEXTRENDER_BACKEND", "auto")
    if mode == "auto":
        return "compiled" if _fastcore is not None else "python"
    if mode not in _BACKENDS:
        raise ConfigError(f"TEXTRENDER_BACKEND={mode!r} unavailable; have {sorted(_BACKENDS)}")
    return mode


_active = _initial()


def active_backend():
    """Name of the backend in use: 'compiled' or 'python'."""
    return _active


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Switch backends (tests and benchmarks only)."""
    global _active
    if name not in _BACKENDS:
        raise ConfigError(f"backend {name!r} unavailable; have {sorted(_BACKENDS)}")
    _active = name


def _check_window(h, w, kh, kw, stride, out_h, out_w):
    # compiled kernels skip bounds checks, so reject bad geometry here
    if min(kh, kw, stride, out_h, out_w) < 1:
        raise ShapeError(f"window geometry must be positive, got "
                         f"k=({kh},{kw}) stride={stride} out=({out_h},{out_w})")
    need_h = (out_h - 1) * stride + kh
    need_w = (out_w - 1) * stride + kw
    if need_h > h or need_w > w:
        raise ShapeError(f"{out_h}x{out_w} windows of k=({kh},{kw}) "
                         f"stride={stride} need {need_h}x{need_w} input, got {h}x{w}")


def im2col(xp, kh, kw, stride, out_h, out_w):
    _check_window(xp.shape[0], xp.shape[1], kh, kw, stride, out_h, out_w)
    return _BACKENDS[_active].im2col(xp, kh, kw, stride, out_h, out_w)


def col2im_add(cols, h, w, c, kh, kw, stride, out_h, out_w):
    _check_window(h, w, kh, kw, stride, out_h, out_w)
    if cols.shape != (out_h * out_w, kh * kw * c):
        raise ShapeError(f"col matrix {cols.shape} does not match "
                         f"({out_h * out_w}, {kh * kw * c})")
    return _BACKENDS[_active].col2im_add(cols, h, w, c, kh, kw, stride, out_h, out_w)


def scatter_add_pixels(acc, iy, ix, vals):
    """acc[iy[n], ix[n], :] += vals[n, :], accumulating repeated indices."""
    c = acc.shape[-1]
    iy = np.ascontiguousarray(iy, dtype=np.intp).reshape(-1)
    ix = np.ascontiguousarray(ix, dtype=np.intp).reshape(-1)
    vals = np.ascontiguousarray(vals).reshape(-1, c)
    if not (iy.size == ix.size == vals.shape[0]):
        raise ShapeError(f"scatter lengths differ: {iy.size}, {ix.size}, {vals.shape[0]}")
    if iy.size and (iy.min() < 0 or iy.max() >= acc.shape[0]
                    or ix.min() < 0 or ix.max() >= acc.shape[1]):
        raise ShapeError(f"scatter indices out of range for {acc.shape[:2]} grid")
    return _BACKENDS[_active].scatter_add_pixels(acc, iy, ix, vals)


def thin_subiter(mask, phase):
    return _BACKENDS[_active].thin_subiter(mask, phase)
