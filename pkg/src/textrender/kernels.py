"""Dense (h, w, c) tensor kernels.

Tensors are plain numpy arrays laid out (height, width, channels), row
major.  Production paths run float32; gradient checking runs float64.
Every kernel here has a naive loop oracle in the test suite and must agree
with it to 1e-6 relative.

Convolution weights are (out_channels, kh, kw, in_channels) arrays.
Padding follows the "same" convention: output spatial size is
ceil(size / stride) and the input is zero padded, with the extra pixel of
any odd padding going to the bottom/right.
"""

import math

import numpy as np

from . import backend
from .errors import DomainError, ShapeError

# Above this many im2col elements the convolution is processed in row
# chunks to bound peak memory.
_CHUNK_ELEMS = 4_000_000


def ensure_hwc(x, name="tensor"):
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"{name} must be rank-3 (h, w, c), got shape {x.shape}")
    return x


def ensure_weight(w):
    w = np.asarray(w)
    if w.ndim != 4:
        raise ShapeError(f"conv weight must be (O, kh, kw, I), got shape {w.shape}")
    return w


def _out_size(size, k, stride, padding):
    if padding == "same":
        return -(-size // stride)
    if padding == "valid":
        if size < k:
            raise ShapeError(f"kernel {k} larger than input {size} for valid padding")
        return (size - k) // stride + 1
    raise DomainError(f"padding must be 'same' or 'valid', got {padding!r}")


def _pad_amounts(size, out, k, stride, padding):
    if padding == "valid":
        return 0, 0
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def conv_geometry(h, w, kh, kw, stride, padding):
    """(out_h, out_w, pad_top, pad_bottom, pad_left, pad_right)."""
    out_h = _out_size(h, kh, stride, padding)
    out_w = _out_size(w, kw, stride, padding)
    pt, pb = _pad_amounts(h, out_h, kh, stride, padding)
    pl, pr = _pad_amounts(w, out_w, kw, stride, padding)
    return out_h, out_w, pt, pb, pl, pr


def conv2d(x, w, stride=1, padding="same", bias=None):
    """2-D cross correlation of (h, w, I) input with (O, kh, kw, I) weight."""
    x = ensure_hwc(x, "conv input")
    w = ensure_weight(w)
    o, kh, kw, i = w.shape
    if x.shape[2] != i:
        raise ShapeError(f"conv channel mismatch: input has {x.shape[2]}, weight expects {i}")
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    h, wd = x.shape[:2]
    out_h, out_w, pt, pb, pl, pr = conv_geometry(h, wd, kh, kw, stride, padding)

    if kh == 1 and kw == 1 and padding == "same":
        # pure channel map, no patch gathering needed
        xs = x[::stride, ::stride, :]
        out = xs.reshape(-1, i) @ w.reshape(o, i).T
        out = out.reshape(out_h, out_w, o)
    else:
        xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0)))
        wmat = w.reshape(o, kh * kw * i).T
        out = np.empty((out_h, out_w, o), dtype=np.result_type(x, w))
        rows_per_chunk = max(1, _CHUNK_ELEMS // max(1, out_w * kh * kw * i))
        for y0 in range(0, out_h, rows_per_chunk):
            y1 = min(y0 + rows_per_chunk, out_h)
            sub = xp[y0 * stride: (y1 - 1) * stride + kh, :, :]
            cols = backend.im2col(np.ascontiguousarray(sub), kh, kw, stride, y1 - y0, out_w)
            out[y0:y1] = (cols @ wmat).reshape(y1 - y0, out_w, o)
    if bias is not None:
        out = out + np.asarray(bias).reshape(1, 1, o)
    return out


def conv2d_backward(x, w, grad, stride=1, padding="same", need_dx=True, need_dw=True):
    """Gradients of conv2d w.r.t. input and weight given output grad.

    Either half can be skipped (returned as None) to save work when one
    operand is frozen or detached.
    """
    x = ensure_hwc(x)
    w = ensure_weight(w)
    o, kh, kw, i = w.shape
    h, wd = x.shape[:2]
    out_h, out_w, pt, pb, pl, pr = conv_geometry(h, wd, kh, kw, stride, padding)
    if grad.shape != (out_h, out_w, o):
        raise ShapeError(f"conv grad shape {grad.shape} != {(out_h, out_w, o)}")

    if kh == 1 and kw == 1 and padding == "same":
        g2 = grad.reshape(-1, o)
        dx = dw = None
        if need_dw:
            xs = x[::stride, ::stride, :].reshape(-1, i)
            dw = (g2.T @ xs).reshape(o, 1, 1, i)
        if need_dx:
            dxs = (g2 @ w.reshape(o, i)).reshape(out_h, out_w, i)
            dx = np.zeros_like(x)
            dx[::stride, ::stride, :] = dxs
        return dx, dw

    xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0)))
    wmat = w.reshape(o, kh * kw * i)
    dw = np.zeros((o, kh * kw * i), dtype=w.dtype) if need_dw else None
    dxp = np.zeros_like(xp) if need_dx else None
    rows_per_chunk = max(1, _CHUNK_ELEMS // max(1, out_w * kh * kw * i))
    for y0 in range(0, out_h, rows_per_chunk):
        y1 = min(y0 + rows_per_chunk, out_h)
        sub = xp[y0 * stride: (y1 - 1) * stride + kh, :, :]
        gmat = grad[y0:y1].reshape(-1, o)
        if need_dw:
            cols = backend.im2col(np.ascontiguousarray(sub), kh, kw, stride,
                                  y1 - y0, out_w)
            dw += gmat.T @ cols
        if need_dx:
            dcols = np.ascontiguousarray(gmat @ wmat)
            dsub = backend.col2im_add(dcols, sub.shape[0], sub.shape[1], i,
                                      kh, kw, stride, y1 - y0, out_w)
            dxp[y0 * stride: (y1 - 1) * stride + kh, :, :] += dsub
    dx = None
    if need_dx:
        dx = np.ascontiguousarray(dxp[pt: pt + h, pl: pl + wd, :])
    if need_dw:
        dw = dw.reshape(o, kh, kw, i)
    return dx, dw


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis`` (max subtracted)."""
    x = np.asarray(x)
    if x.shape[axis] == 0:
        raise DomainError("softmax over an empty axis")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _lerp_coords(n_in, n_out):
    """Half-pixel-center source coordinates: floor index, next index, fraction."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    return i0, i1, f


def resize_bilinear(x, out_h, out_w):
    """Bilinear resample to (out_h, out_w); constants are preserved exactly.

    Interpolation is written in lerp form a + f*(b - a), so a constant image
    maps to the identical constant with no rounding.
    """
    x = ensure_hwc(x, "resize input")
    if out_h < 1 or out_w < 1:
        raise DomainError(f"target size must be >= 1, got {(out_h, out_w)}")
    y0, y1, fy = _lerp_coords(x.shape[0], out_h)
    x0, x1, fx = _lerp_coords(x.shape[1], out_w)
    fy = fy.astype(x.dtype)
    fx = fx.astype(x.dtype)
    a = x[y0, :, :]
    rows = a + fy[:, None, None] * (x[y1, :, :] - a)
    b = rows[:, x0, :]
    # middle-axis fancy indexing leaves a transposed memory layout and
    # ufuncs propagate it; downstream kernels want C order
    return np.ascontiguousarray(b + fx[None, :, None] * (rows[:, x1, :] - b))


def _lerp_matrix(n_in, n_out, dtype):
    """Dense (n_out, n_in) interpolation matrix of resize_bilinear's axis map."""
    i0, i1, f = _lerp_coords(n_in, n_out)
    rows = np.arange(n_out)
    m = np.zeros((n_out, n_in), dtype=dtype)
    np.add.at(m, (rows, i0), (1.0 - f).astype(dtype))
    np.add.at(m, (rows, i1), f.astype(dtype))
    return m


def resize_bilinear_backward(in_h, in_w, grad):
    """Transpose of resize_bilinear for a (out_h, out_w, c) grad.

    The resize is separable, so its transpose is two small matrix products
    instead of a scatter over output pixels.
    """
    out_h, out_w, c = grad.shape
    my = _lerp_matrix(in_h, out_h, grad.dtype)
    mx = _lerp_matrix(in_w, out_w, grad.dtype)
    t = np.tensordot(my, grad, axes=([0], [0]))
    dx = np.tensordot(t, mx, axes=([1], [0]))
    return np.ascontiguousarray(dx.transpose(0, 2, 1))


def pool_bins(n_in, n_out):
    """Adaptive partition boundaries: bin i covers [b[i], b[i+1])."""
    return [(i * n_in) // n_out for i in range(n_out + 1)]


def avg_pool_to(x, out_h, out_w):
    """Adaptive average pooling onto an (out_h, out_w) grid.

    Bins partition the input (floor boundaries).  A bin of constant value
    pools to exactly that value; the global 1x1 pool uses exact summation
    and is therefore invariant to any spatial permutation of the input.
    """
    x = ensure_hwc(x, "pool input")
    h, w, c = x.shape
    if out_h > h or out_w > w:
        raise DomainError(f"pool target {(out_h, out_w)} exceeds input {(h, w)}")
    if out_h < 1 or out_w < 1:
        raise DomainError(f"pool target must be >= 1, got {(out_h, out_w)}")
    if out_h == 1 and out_w == 1:
        flat = x.reshape(-1, c)
        mean = np.array([math.fsum(flat[:, ch].tolist()) for ch in range(c)],
                        dtype=np.float64) / (h * w)
        return mean.astype(x.dtype).reshape(1, 1, c)
    yb = pool_bins(h, out_h)
    xb = pool_bins(w, out_w)
    out = np.empty((out_h, out_w, c), dtype=x.dtype)
    for i in range(out_h):
        for j in range(out_w):
            cell = x[yb[i]:yb[i + 1], xb[j]:xb[j + 1], :]
            anchor = cell[0, 0, :]
            n = cell.shape[0] * cell.shape[1]
            out[i, j, :] = anchor + (cell - anchor).sum(axis=(0, 1)) / n
    return out


def avg_pool_to_backward(in_h, in_w, grad):
    """Distribute each bin's grad uniformly over the bin."""
    out_h, out_w, c = grad.shape
    yb = pool_bins(in_h, out_h)
    xb = pool_bins(in_w, out_w)
    dx = np.empty((in_h, in_w, c), dtype=grad.dtype)
    for i in range(out_h):
        for j in range(out_w):
            n = (yb[i + 1] - yb[i]) * (xb[j + 1] - xb[j])
            dx[yb[i]:yb[i + 1], xb[j]:xb[j + 1], :] = grad[i, j, :] / n
    return dx


def concat_channels(xs):
    """Concatenate along channels; all inputs must share (h, w)."""
    if not xs:
        raise DomainError("concat_channels of an empty list")
    xs = [ensure_hwc(x, "concat input") for x in xs]
    hw = xs[0].shape[:2]
    for x in xs[1:]:
        if x.shape[:2] != hw:
            raise ShapeError(f"concat spatial mismatch: {x.shape[:2]} != {hw}")
    return np.concatenate(xs, axis=2)


def leaky_relu(x, slope=0.2):
    x = np.asarray(x)
    return np.where(x > 0, x, x * np.asarray(slope, dtype=x.dtype))
