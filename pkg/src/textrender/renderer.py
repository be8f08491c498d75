"""Variant assembly: encoders plus the two rendering stages.

Every variant shares the encoder pair and the same two-stage layout (a
half-resolution stage and a full-resolution modulated stack, summed after
upsampling); they differ only in where the half-resolution image comes
from and how style tensors are built:

- baseline           both stages modulate with broadcast style vectors
- pixymod            both stages modulate with plain resampled style tensors
- pixymod+attnmusf   both stages modulate with multi-scale fused tensors
- pixymod+attnpixamp stage 1 samples style pixels, stage 2 plain tensors
- aprnet             stage 1 samples style pixels, stage 2 fused tensors
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoders, fusion, modulation, sampler
from .errors import ConfigError, ShapeError

VARIANTS = ("baseline", "pixymod", "pixymod+attnmusf", "pixymod+attnpixamp",
            "aprnet")
STAGE2_PLAN = (256, 128, 64, 64)
STAGE1_PLAN = (32, 64, 64)

# (stage1, stage2) style strategy per variant
_MODES = {
    "baseline": ("vector", "vector"),
    "pixymod": ("plain", "plain"),
    "pixymod+attnmusf": ("fused", "fused"),
    "pixymod+attnpixamp": ("sampled", "plain"),
    "aprnet": ("sampled", "fused"),
}


@dataclass
class RenderConfig:
    variant: str = "aprnet"
    k: int = 5
    m: int = 4
    d_s: int = 64
    d_f: int = 64
    eps: float = 1e-8
    stage1_plan: tuple = STAGE1_PLAN
    stage2_plan: tuple = STAGE2_PLAN

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; "
                              f"expected one of {', '.join(VARIANTS)}")
        for name in ("stage1_plan", "stage2_plan"):
            plan = tuple(int(c) for c in getattr(self, name))
            if len(plan) < 2 or any(c < 1 for c in plan):
                raise ConfigError(f"{name} needs >= 2 positive channel "
                                  f"counts, got {plan}")
            setattr(self, name, plan)

    @property
    def modes(self):
        return _MODES[self.variant]

    def grid(self):
        return sampler.SamplingGrid(self.k, self.m)


def _init_styles(rng, params, st, plan, mode, cfg):
    for i, ch in enumerate(plan):
        if mode == "vector":
            encoders.conv_init(rng, params, f"{st}.sv{i}", ch, 1, 1,
                               encoders.STYLE_BANK_CHANNELS)
        elif mode == "plain":
            encoders.conv_init(rng, params, f"{st}.st{i}", ch, 1, 1,
                               encoders.STYLE_BANK_CHANNELS)
        else:
            q_ch = encoders.CONTENT_BANK_CHANNELS if i == 0 else plan[i]
            fusion.init_fused_site(rng, params, f"{st}.sf{i}", q_ch, ch,
                                   cfg.d_f, encoders.conv_init)


def init_params(cfg, seed=0):
    """All trainable arrays for a variant, keyed by dotted names."""
    rng = np.random.default_rng(seed)
    params = {}
    encoders.init_encoder(rng, params, "enc_c", 1, highway_k=2, aux=True)
    encoders.init_encoder(rng, params, "enc_s", 3, highway_k=1)
    mode1, mode2 = cfg.modes
    modulation.init_stack(rng, params, "r2", cfg.stage2_plan,
                          encoders.conv_init)
    _init_styles(rng, params, "r2", cfg.stage2_plan, mode2, cfg)
    if mode1 == "sampled":
        sampler.init_sampler(rng, params, "sam", cfg.d_s, encoders.conv_init)
    else:
        modulation.init_stack(rng, params, "r1", cfg.stage1_plan,
                              encoders.conv_init)
        _init_styles(rng, params, "r1", cfg.stage1_plan, mode1, cfg)
    return params


def param_vars(params, trainable=True):
    return {k: ad.Var(v, requires_grad=trainable, name=k)
            for k, v in params.items()}


def _site_provider(params, st, mode, cb, sb, size, s_cat8):
    h, w = size
    if mode == "vector":
        return lambda i, x: fusion.vector_style(params, f"{st}.sv{i}",
                                                s_cat8, h, w)
    if mode == "plain":
        cat_ws = fusion.style_cat_at(sb, h, w)
        return lambda i, x: fusion.plain_style(params, f"{st}.st{i}", cat_ws)
    c_cat_ws = fusion.content_cat_at(cb, h, w)

    def provider(i, x):
        q_src = c_cat_ws if i == 0 else x
        return fusion.fused_style(params, f"{st}.sf{i}", q_src, s_cat8)

    return provider


def _as_skeleton(content):
    arr = content.data if isinstance(content, ad.Var) else np.asarray(content)
    if arr.ndim == 3 and arr.shape[2] == 3:
        # drawable skeleton image: all channels equal, keep one
        return ad.Var(np.ascontiguousarray(arr[:, :, :1]))
    return content if isinstance(content, ad.Var) else ad.Var(arr)


def render_vars(params, cfg, content, style):
    """Differentiable forward pass; returns the fused output plus both
    stage outputs, all unclamped."""
    cvar = _as_skeleton(content)
    svar = style if isinstance(style, ad.Var) else ad.Var(np.asarray(style))
    if cvar.shape[:2] != svar.shape[:2]:
        raise ShapeError(f"content {cvar.shape[:2]} vs style "
                         f"{svar.shape[:2]} size mismatch")
    cb = encoders.encode_content(params, cvar)
    sb = encoders.encode_style(params, svar)
    h, w = svar.shape[:2]
    mode1, mode2 = cfg.modes
    need_cat8 = "vector" in (mode1, mode2) or "fused" in (mode1, mode2)
    s_cat8 = fusion.build_style_cat(sb) if need_cat8 else None

    prov2 = _site_provider(params, "r2", mode2, cb, sb, (h, w), s_cat8)
    full = modulation.run_stack(params, "r2", cb.aux, prov2, cfg.eps)

    if mode1 == "sampled":
        c_cat, s_cat_half, img_half = sampler.build_sampling_inputs(cb, sb)
        half = sampler.render_sampled(c_cat, s_cat_half, img_half,
                                      cfg.grid(), params)
    else:
        size1 = cb.half_shape
        prov1 = _site_provider(params, "r1", mode1, cb, sb, size1, s_cat8)
        half = modulation.run_stack(params, "r1", cb.stages[0], prov1, cfg.eps)

    out = modulation.fuse_stages(full, half, clamp=False)
    return {"out": out, "full": full, "half": half}


def render(params, cfg, content, style):
    """Rendered image in [0, 1] as float32 (h, w, 3)."""
    out = render_vars(params, cfg, content, style)["out"]
    return np.clip(out.data, 0.0, 1.0).astype(np.float32)


def render_attention(params, cfg, content, style):
    """First-site level-selection weights as a float32 (h, w, 4) map.

    Only variants with a fused stage carry these weights; the map comes
    from the finest stage that has one (stage 2 when both do).
    """
    mode1, mode2 = cfg.modes
    if "fused" not in (mode1, mode2):
        raise ConfigError(f"variant {cfg.variant!r} has no fused stage "
                          "to inspect")
    cvar = _as_skeleton(content)
    svar = style if isinstance(style, ad.Var) else ad.Var(np.asarray(style))
    if cvar.shape[:2] != svar.shape[:2]:
        raise ShapeError(f"content {cvar.shape[:2]} vs style "
                         f"{svar.shape[:2]} size mismatch")
    cb = encoders.encode_content(params, cvar)
    sb = encoders.encode_style(params, svar)
    s_cat8 = fusion.build_style_cat(sb)
    st, size = ("r2", svar.shape[:2]) if mode2 == "fused" \
        else ("r1", cb.half_shape)
    q_src = fusion.content_cat_at(cb, *size)
    wts = fusion.fused_attention(params, f"{st}.sf0", q_src, s_cat8)
    return wts.data.astype(np.float32)
