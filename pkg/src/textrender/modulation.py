"""Per-pixel style modulation around convolution.

A content tensor is multiplied elementwise by a same-shaped style tensor,
convolved, then divided by the per-pixel std the convolution would produce
on unit-variance content: out = conv(style * content, w) /
sqrt(conv(style^2, w^2) + eps).  The division keeps activations near unit
scale no matter how large the style values are, so the operator is
invariant to a global rescale of the style tensor (up to eps).  The guard
eps covers all-zero style windows; squares cannot cancel, so the
denominator stays >= sqrt(eps).
"""

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

EPS = 1e-8
LRELU_SLOPE = 0.2


def modconv(content, style, w, eps=EPS):
    """Modulate, convolve (3x3 or any same-pad kernel), demodulate."""
    if content.shape != style.shape:
        raise ShapeError(f"content {content.shape} vs style {style.shape}")
    num = ad.conv2d(content * style, w)
    den = ad.sqrt(ad.conv2d(style * style, w * w) + eps)
    return num / den


def init_stack(rng, params, prefix, plan, conv_init):
    """Weights for a modulated stack: plan = (in, mid..., last) channels.

    len(plan) - 1 modulated 3x3 layers, then a plain 1x1 projection to RGB.
    Modulated layers have no bias (the demodulation would just rescale it
    inconsistently); only the output projection does.
    """
    for i in range(len(plan) - 1):
        conv_init(rng, params, f"{prefix}.mod{i}", plan[i + 1], 3, 3, plan[i],
                  bias=False)
    conv_init(rng, params, f"{prefix}.out", 3, 1, 1, plan[-1])


def run_stack(params, prefix, content, style_for_site, eps=EPS):
    """Drive a modulated stack, asking ``style_for_site(i, x)`` for each
    site's style tensor (site i modulates a tensor with x's channels).

    The last site is a plain modulation (no demodulation) feeding the 1x1
    output projection, which has no activation.
    """
    n_layers = 0
    while f"{prefix}.mod{n_layers}.w" in params:
        n_layers += 1
    if n_layers == 0:
        raise ConfigError(f"no modulated layers under {prefix}")
    x = content
    for i in range(n_layers):
        s = style_for_site(i, x)
        x = ad.leaky_relu(modconv(x, s, params[f"{prefix}.mod{i}.w"], eps),
                          LRELU_SLOPE)
    s = style_for_site(n_layers, x)
    if s.shape != x.shape:
        raise ShapeError(f"final style {s.shape} vs tensor {x.shape}")
    return ad.conv2d(x * s, params[f"{prefix}.out.w"],
                     bias=params[f"{prefix}.out.b"])


def pixymod_render(params, prefix, content, styles, eps=EPS):
    """Run a modulated stack from a prebuilt style-tensor list.

    ``styles`` must hold one tensor per modulation site (modulated layers
    plus the final plain modulation).
    """
    n_layers = 0
    while f"{prefix}.mod{n_layers}.w" in params:
        n_layers += 1
    if len(styles) != n_layers + 1 or any(s is None for s in styles):
        raise ConfigError(
            f"need {n_layers + 1} style tensors for {prefix}, got "
            f"{sum(s is not None for s in styles)}")
    return run_stack(params, prefix, content, lambda i, x: styles[i], eps)


def fuse_stages(full, half, clamp=True):
    """Sum the full-resolution output with the upsampled half-resolution
    one; optionally clamp to [0, 1] for image output."""
    h, w = full.shape[:2]
    if half.shape[2:] != full.shape[2:]:
        raise ShapeError(f"channel mismatch {full.shape} vs {half.shape}")
    out = full + ad.resize_bilinear(half, h, w)
    return ad.clip01(out) if clamp else out
