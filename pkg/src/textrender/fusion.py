"""Style tensor construction for the modulated rendering stack.

Three strategies, one per system variant:

- broadcast vector: pool the concatenated appearance maps to a single
  vector per modulation site (spatially uniform style);
- plain tensor: resample + concatenate the appearance maps at the working
  size and project per site (spatially varying, alignment-sensitive);
- multi-scale attention: project the eighth-resolution concatenated maps
  into key/value maps, pool them to a 3-level pyramid, upsample every
  level back, and let each query pick its mix of the 4 scales.  A query
  at (j, k) reads the pyramid cell its 8x8 block maps to, so misaligned
  strokes can fall back on wider-area statistics instead of whatever
  pixel happens to sit underneath.
"""

import numpy as np

from . import autodiff as ad
from . import encoders
from .errors import ConfigError, ShapeError

PYRAMID_HEIGHTS = (4, 2, 1)


def build_style_cat(style_bank):
    """All appearance maps resampled to eighth resolution, stage order."""
    h8, w8 = style_bank.eighth_shape
    return ad.concat([ad.resize_bilinear(t, h8, w8) for t in style_bank.stages],
                     axis=2)


def content_cat_at(content_bank, h, w):
    """All geometry maps (including the full-res projection) at (h, w)."""
    maps = list(content_bank.stages) + [content_bank.aux]
    return ad.concat([ad.resize_bilinear(t, h, w) for t in maps], axis=2)


def style_cat_at(style_bank, h, w):
    """All appearance maps at (h, w) for the plain-tensor strategy."""
    return ad.concat([ad.resize_bilinear(t, h, w) for t in style_bank.stages],
                     axis=2)


def pyramid_sizes(h8, w8):
    """Pooled (height, width) per level; widths follow the aspect ratio,
    rounded up."""
    if h8 < PYRAMID_HEIGHTS[0]:
        raise ConfigError(
            f"pyramid needs height >= {PYRAMID_HEIGHTS[0]} before pooling, "
            f"got {h8} (input too small)")
    return [(oh, -(-oh * w8 // h8)) for oh in PYRAMID_HEIGHTS]


def build_pyramid(x):
    """The input plus 3 pooled-and-upsampled copies, coarsest 1 row high.

    Pooling uses adaptive bins so non-divisible sizes still partition
    exactly.
    """
    h8, w8 = x.shape[:2]
    levels = [x]
    for oh, ow in pyramid_sizes(h8, w8):
        pooled = ad.avg_pool_to(x, oh, ow)
        levels.append(ad.resize_bilinear(pooled, h8, w8))
    return levels


def _block_coords(qh, qw, h8, w8):
    by = np.arange(qh) * h8 // qh
    bx = np.arange(qw) * w8 // qw
    iy = np.broadcast_to(by[:, None], (qh, qw))
    ix = np.broadcast_to(bx[None, :], (qh, qw))
    return np.ascontiguousarray(iy), np.ascontiguousarray(ix)


def _level_weights(q, keys):
    qh, qw, d_f = q.shape
    h8, w8 = keys[0].shape[:2]
    iy, ix = _block_coords(qh, qw, h8, w8)
    ksel = [ad.gather_pixels(k, iy, ix).reshape(qh, qw, 1, d_f) for k in keys]
    kstack = ad.concat(ksel, axis=2)           # (qh, qw, levels, d_f)
    scores = (kstack * q.reshape(qh, qw, 1, d_f)).sum(axis=3)
    return ad.softmax(scores / float(np.sqrt(d_f)), axis=2)


def fuse(q, keys, values, return_weights=False):
    """Per-coordinate convex mix of the pyramid levels' value vectors.

    q: (qh, qw, d_f) at the consumer's working size; keys and values are
    same-length lists of eighth-resolution maps.  Every query inside an
    aligned block shares one key/value cell.
    """
    if len(keys) != len(values):
        raise ShapeError(f"{len(keys)} key levels vs {len(values)} value levels")
    qh, qw = q.shape[:2]
    h8, w8 = keys[0].shape[:2]
    wts = _level_weights(q, keys)
    iy, ix = _block_coords(qh, qw, h8, w8)
    c = values[0].shape[2]
    vsel = [ad.gather_pixels(v, iy, ix).reshape(qh, qw, 1, c) for v in values]
    vstack = ad.concat(vsel, axis=2)
    out = (vstack * wts.reshape(qh, qw, len(values), 1)).sum(axis=2)
    if return_weights:
        return out, wts
    return out


def attention_map(q, keys):
    """The fusion weights alone, (qh, qw, levels), rows summing to 1."""
    return _level_weights(q, keys)


def init_fused_site(rng, params, prefix, query_ch, out_ch, d_f, conv_init):
    conv_init(rng, params, f"{prefix}.q", d_f, 1, 1, query_ch)
    conv_init(rng, params, f"{prefix}.k", d_f, 1, 1,
              encoders.STYLE_BANK_CHANNELS)
    conv_init(rng, params, f"{prefix}.v", out_ch, 1, 1,
              encoders.STYLE_BANK_CHANNELS)


def fused_style(params, prefix, q_src, s_cat, return_weights=False):
    """One site's style tensor via pyramid attention over s_cat."""
    q = ad.conv2d(q_src, params[f"{prefix}.q.w"], bias=params[f"{prefix}.q.b"])
    k0 = ad.conv2d(s_cat, params[f"{prefix}.k.w"], bias=params[f"{prefix}.k.b"])
    v0 = ad.conv2d(s_cat, params[f"{prefix}.v.w"], bias=params[f"{prefix}.v.b"])
    return fuse(q, build_pyramid(k0), build_pyramid(v0),
                return_weights=return_weights)


def fused_attention(params, prefix, q_src, s_cat):
    """One site's level-selection weights alone, (qh, qw, levels)."""
    q = ad.conv2d(q_src, params[f"{prefix}.q.w"], bias=params[f"{prefix}.q.b"])
    k0 = ad.conv2d(s_cat, params[f"{prefix}.k.w"], bias=params[f"{prefix}.k.b"])
    return attention_map(q, build_pyramid(k0))


def plain_style(params, prefix, style_cat_ws):
    """One site's style tensor: a projection of the resampled concat."""
    return ad.conv2d(style_cat_ws, params[f"{prefix}.w"],
                     bias=params[f"{prefix}.b"])


def vector_style(params, prefix, s_cat, h, w):
    """One site's spatially-uniform style: project at eighth resolution,
    average over all positions, broadcast at the working size."""
    proj = ad.conv2d(s_cat, params[f"{prefix}.w"], bias=params[f"{prefix}.b"])
    vec = ad.avg_pool_to(proj, 1, 1)
    return ad.broadcast_to(vec, (h, w, proj.shape[2]))
