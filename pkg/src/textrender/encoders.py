"""Two-branch feature encoders.

The geometry (skeleton) image and the appearance image each run through a
4-stage fully-convolutional encoder.  Every stage output is kept, not just
the last one: early maps carry stroke-scale detail, late maps carry layout,
and the rendering stages pick what they need from the whole bank.  The
geometry bank additionally keeps a full-resolution 256-channel projection
of the raw skeleton so thin strokes survive the downsampling stack, and
the appearance bank keeps the raw image itself for pixel sampling.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DomainError, ShapeError

STAGE_CHANNELS = (32, 64, 128, 256)
STAGE_STRIDES = (2, 2, 2, 1)
AUX_CHANNELS = 256
LRELU_SLOPE = 0.2
# channel totals across a bank, used by consumers to size projections
STYLE_BANK_CHANNELS = sum(STAGE_CHANNELS)
CONTENT_BANK_CHANNELS = sum(STAGE_CHANNELS) + AUX_CHANNELS


@dataclass
class FeatureBank:
    """Stage outputs plus the extras each branch carries.

    ``stages`` holds the four stage maps (H/2, H/4, H/8, H/8 for an H-high
    input).  ``image`` is the raw appearance image (appearance bank only);
    ``aux`` is the full-resolution skeleton projection (geometry bank only).
    """
    stages: list
    image: object = None
    aux: object = None

    @property
    def half_shape(self):
        return self.stages[0].shape[:2]

    @property
    def eighth_shape(self):
        return self.stages[3].shape[:2]


def conv_init(rng, params, name, out_ch, kh, kw, in_ch, bias=True):
    """Fan-in scaled normal weights; zero bias."""
    fan_in = kh * kw * in_ch
    params[name + ".w"] = rng.normal(
        0.0, 1.0 / np.sqrt(fan_in), (out_ch, kh, kw, in_ch)).astype(np.float32)
    if bias:
        params[name + ".b"] = np.zeros(out_ch, dtype=np.float32)


def init_encoder(rng, params, prefix, in_ch, highway_k, aux=False):
    """Weights for one encoder branch under dotted names ``prefix.*``."""
    prev = in_ch
    for n, (ch, _) in enumerate(zip(STAGE_CHANNELS, STAGE_STRIDES), start=1):
        conv_init(rng, params, f"{prefix}.s{n}.c1", ch, 3, 3, prev)
        conv_init(rng, params, f"{prefix}.s{n}.c2", ch, 3, 3, ch)
        conv_init(rng, params, f"{prefix}.s{n}.hw", ch, highway_k, highway_k, prev)
        prev = ch
    if aux:
        conv_init(rng, params, f"{prefix}.aux", AUX_CHANNELS, 1, 1, in_ch)


def _run_stages(params, prefix, x):
    outs = []
    for n, stride in enumerate(STAGE_STRIDES, start=1):
        a = ad.leaky_relu(
            ad.conv2d(x, params[f"{prefix}.s{n}.c1.w"], stride=stride,
                      bias=params[f"{prefix}.s{n}.c1.b"]), LRELU_SLOPE)
        a = ad.leaky_relu(
            ad.conv2d(a, params[f"{prefix}.s{n}.c2.w"],
                      bias=params[f"{prefix}.s{n}.c2.b"]), LRELU_SLOPE)
        hw = ad.conv2d(x, params[f"{prefix}.s{n}.hw.w"], stride=stride,
                       bias=params[f"{prefix}.s{n}.hw.b"])
        x = a + hw
        outs.append(x)
    return outs


def _check_size(shape, what):
    h, w = shape[:2]
    if h % 8 or w % 8:
        raise ShapeError(f"{what} size {h}x{w} must be divisible by 8")
    if h < 8 or w < 8:
        raise ShapeError(f"{what} size {h}x{w} too small")


def encode_content(params, skeleton, prefix="enc_c"):
    """Bank for a binary skeleton image ((h, w) or (h, w, 1), values 0/1)."""
    x = skeleton if isinstance(skeleton, ad.Var) else ad.Var(np.asarray(skeleton))
    if x.data.ndim == 2:
        x = x.reshape(*x.shape, 1)
    if x.data.ndim != 3 or x.shape[2] != 1:
        raise ShapeError(f"skeleton must be (h, w) or (h, w, 1), got {x.shape}")
    _check_size(x.shape, "skeleton")
    vals = np.unique(x.data)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise DomainError("skeleton pixels must be 0 or 1")
    stages = _run_stages(params, prefix, x)
    aux = ad.conv2d(x, params[f"{prefix}.aux.w"], bias=params[f"{prefix}.aux.b"])
    return FeatureBank(stages=stages, aux=aux)


def encode_style(params, image, prefix="enc_s"):
    """Bank for an RGB appearance image (h, w, 3); keeps the raw image."""
    x = image if isinstance(image, ad.Var) else ad.Var(np.asarray(image))
    if x.data.ndim != 3 or x.shape[2] != 3:
        raise ShapeError(f"appearance image must be (h, w, 3), got {x.shape}")
    _check_size(x.shape, "appearance image")
    stages = _run_stages(params, prefix, x)
    return FeatureBank(stages=stages, image=x)
