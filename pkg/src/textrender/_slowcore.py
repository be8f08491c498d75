"""Pure numpy implementations of the low-level kernels.

The compiled extension (``textrender._fastcore``) provides the same four
functions with identical semantics; ``textrender.backend`` picks one of the
two at import time.  Keep signatures and numerics in sync.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(xp, kh, kw, stride, out_h, out_w):
    """Gather conv patches from a padded (H, W, C) array.

    Returns a (out_h*out_w, kh*kw*C) matrix whose column order is
    (ky, kx, c) row-major, matching a (O, kh, kw, C) weight reshaped to
    (O, kh*kw*C).
    """
    h, w, c = xp.shape
    sy, sx, sc = xp.strides
    windows = as_strided(
        xp,
        shape=(out_h, out_w, kh, kw, c),
        strides=(stride * sy, stride * sx, sy, sx, sc),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(out_h * out_w, kh * kw * c)


def col2im_add(cols, h, w, c, kh, kw, stride, out_h, out_w):
    """Scatter-add an im2col gradient back onto the padded input shape."""
    r = cols.reshape(out_h, out_w, kh, kw, c)
    grad = np.zeros((h, w, c), dtype=cols.dtype)
    for ky in range(kh):
        ye = ky + (out_h - 1) * stride + 1
        for kx in range(kw):
            xe = kx + (out_w - 1) * stride + 1
            grad[ky:ye:stride, kx:xe:stride, :] += r[:, :, ky, kx, :]
    return grad


def scatter_add_pixels(acc, iy, ix, vals):
    """acc[iy[n], ix[n], :] += vals[n, :] with repeated indices accumulated.

    Inputs are pre-normalized by the backend dispatcher: iy/ix are 1-D intp
    arrays and vals is (n, c) contiguous.
    """
    np.add.at(acc, (iy, ix), vals)


def thin_subiter(mask, phase):
    """One parallel thinning subiteration; flags then deletes.

    ``mask`` is a uint8 (H, W) array modified in place.  ``phase`` 0 uses the
    (N*E*S, E*S*W) removal conditions, phase 1 uses (N*E*W, N*S*W).  Returns
    the number of deleted pixels.
    """
    p = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=np.uint8)
    p[1:-1, 1:-1] = mask
    n = p[0:-2, 1:-1]
    ne = p[0:-2, 2:]
    e = p[1:-1, 2:]
    se = p[2:, 2:]
    s = p[2:, 1:-1]
    sw = p[2:, 0:-2]
    w = p[1:-1, 0:-2]
    nw = p[0:-2, 0:-2]

    ring = (n, ne, e, se, s, sw, w, nw)
    b = np.zeros(mask.shape, dtype=np.int32)
    for q in ring:
        b += q
    a = np.zeros(mask.shape, dtype=np.int32)
    for i in range(8):
        cur = ring[i]
        nxt = ring[(i + 1) % 8]
        a += ((cur == 0) & (nxt == 1)).astype(np.int32)

    if phase == 0:
        c3 = (n * e * s) == 0
        c4 = (e * s * w) == 0
    else:
        c3 = (n * e * w) == 0
        c4 = (n * s * w) == 0

    flags = (mask == 1) & (b >= 2) & (b <= 6) & (a == 1) & c3 & c4
    count = int(np.count_nonzero(flags))
    if count:
        mask[flags] = 0
    return count
