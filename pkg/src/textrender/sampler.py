"""Half-resolution rendering by sampling style pixels.

Most pixels of a text image are background, and a background pixel can
usually be found near the same coordinate of the appearance image, so the
first rendering stage copies pixels instead of regressing them.  For each
coordinate a k x k grid of candidate pixels (step m, clamped at borders)
is read from the half-resolution appearance image, and a cross-attention
between a geometry-derived query and appearance-derived keys mixes the
candidates.  Softmax weights make every output pixel a convex combination
of real style pixels.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoders
from .errors import DomainError, ShapeError


@dataclass
class SamplingGrid:
    """k*k candidate offsets per axis with step m, centered on the query
    (biased up-left by one half-step when the span is even)."""
    k: int = 5
    m: int = 4

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"need at least one sample per axis, got k={self.k}")
        if self.m < 1:
            raise DomainError(f"sample step must be >= 1, got m={self.m}")

    @property
    def span(self):
        return (self.k - 1) * self.m + 1

    def offsets(self):
        lo = -((self.k - 1) * self.m) // 2
        return [(lo + dy * self.m, lo + dx * self.m)
                for dy in range(self.k) for dx in range(self.k)]

    def coords(self, h, w):
        """Clamped candidate coordinates: two (h, w, k*k) int arrays."""
        off = np.asarray(self.offsets())
        kk = off.shape[0]
        iy = np.clip(np.arange(h)[:, None] + off[None, :, 0], 0, h - 1)
        ix = np.clip(np.arange(w)[:, None] + off[None, :, 1], 0, w - 1)
        iy = np.broadcast_to(iy[:, None, :], (h, w, kk))
        ix = np.broadcast_to(ix[None, :, :], (h, w, kk))
        return np.ascontiguousarray(iy), np.ascontiguousarray(ix)


def init_sampler(rng, params, prefix, d_s, conv_init):
    conv_init(rng, params, f"{prefix}.q", d_s, 1, 1, encoders.CONTENT_BANK_CHANNELS)
    conv_init(rng, params, f"{prefix}.k", d_s, 1, 1, encoders.STYLE_BANK_CHANNELS)


def build_sampling_inputs(content_bank, style_bank):
    """Everything the sampler reads, at half resolution: the concatenated
    geometry maps, the concatenated appearance maps, and the appearance
    image itself."""
    h2, w2 = content_bank.half_shape
    if style_bank.half_shape != (h2, w2):
        raise ShapeError(f"bank size mismatch: {content_bank.half_shape} vs "
                         f"{style_bank.half_shape}")
    c_maps = list(content_bank.stages) + [content_bank.aux]
    c_cat = ad.concat([ad.resize_bilinear(t, h2, w2) for t in c_maps], axis=2)
    s_cat = ad.concat([ad.resize_bilinear(t, h2, w2) for t in style_bank.stages],
                      axis=2)
    img = ad.resize_bilinear(style_bank.image, h2, w2)
    return c_cat, s_cat, img


def render_sampled(c_cat, s_cat, img_half, grid, params, prefix="sam",
                   return_weights=False):
    """Attention-weighted pixel sampling at half resolution."""
    h, w = img_half.shape[:2]
    if c_cat.shape[:2] != (h, w) or s_cat.shape[:2] != (h, w):
        raise ShapeError("sampling inputs disagree on spatial size")
    q = ad.conv2d(c_cat, params[f"{prefix}.q.w"], bias=params[f"{prefix}.q.b"])
    kmap = ad.conv2d(s_cat, params[f"{prefix}.k.w"], bias=params[f"{prefix}.k.b"])
    d_s = q.shape[2]
    kk = grid.k * grid.k
    iy, ix = grid.coords(h, w)
    keys = ad.gather_pixels(kmap, iy, ix)      # (h, w, kk, d_s)
    vals = ad.gather_pixels(img_half, iy, ix)  # (h, w, kk, 3)
    scores = (keys * q.reshape(h, w, 1, d_s)).sum(axis=3) / float(np.sqrt(d_s))
    wts = ad.softmax(scores, axis=2)
    out = (vals * wts.reshape(h, w, kk, 1)).sum(axis=2)
    if return_weights:
        return out, wts
    return out
