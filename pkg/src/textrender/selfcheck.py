"""Built-in correctness checks, runnable without the test suite.

Two families: finite-difference gradient checks, one per operator and per
composite trainable path, and fast invariant checks for the numeric
contracts that can be verified from first principles (convexity, exact
self-similarity, determinism).  The command line's ``gradcheck`` and
``selftest`` subcommands print these as pass/fail tables.
"""

import math

import numpy as np

from . import autodiff as ad
from . import data, encoders, fusion, metrics, modulation, renderer
from . import sampler, training

GRAD_TOL = 1e-4

_GRAD_CASES = []


def _grad_case(name):
    def register(fn):
        _GRAD_CASES.append((name, fn))
        return fn
    return register


def _leaf(rng, shape, name, lo=-1.0, hi=1.0, signed_floor=None):
    x = rng.uniform(lo, hi, shape)
    if signed_floor is not None:
        # keep |x| away from a non-differentiable point at 0
        x = (np.abs(x) + signed_floor) * rng.choice([-1.0, 1.0], size=shape)
    return ad.Var(x, requires_grad=True, name=name)


@_grad_case("add")
def _(rng):
    a = _leaf(rng, (3, 4), "a")
    b = _leaf(rng, (3, 4), "b")
    return ad.gradcheck(lambda a, b: ad.vsum((a + b) * 0.5), [a, b])


@_grad_case("mul")
def _(rng):
    a = _leaf(rng, (3, 4), "a")
    b = _leaf(rng, (3, 4), "b")
    return ad.gradcheck(lambda a, b: ad.vsum(a * b), [a, b])


@_grad_case("div")
def _(rng):
    a = _leaf(rng, (3, 4), "a")
    b = _leaf(rng, (3, 4), "b", lo=0.5, hi=2.0)
    return ad.gradcheck(lambda a, b: ad.vsum(a / b), [a, b])


@_grad_case("sqrt")
def _(rng):
    a = _leaf(rng, (3, 4), "a", lo=0.5, hi=2.0)
    return ad.gradcheck(lambda a: ad.vsum(ad.sqrt(a)), [a])


@_grad_case("square")
def _(rng):
    a = _leaf(rng, (3, 4), "a")
    return ad.gradcheck(lambda a: ad.vsum(ad.square(a)), [a])


@_grad_case("absolute")
def _(rng):
    a = _leaf(rng, (3, 4), "a", signed_floor=0.2)
    return ad.gradcheck(lambda a: ad.vsum(ad.absolute(a)), [a])


@_grad_case("exp_log")
def _(rng):
    a = _leaf(rng, (3, 4), "a", lo=0.3, hi=1.5)
    return ad.gradcheck(lambda a: ad.vsum(ad.log(ad.exp(a) + 1.0)), [a])


@_grad_case("relu")
def _(rng):
    a = _leaf(rng, (4, 4), "a", signed_floor=0.2)
    return ad.gradcheck(lambda a: ad.vsum(ad.relu(a)), [a])


@_grad_case("leaky_relu")
def _(rng):
    a = _leaf(rng, (4, 4), "a", signed_floor=0.2)
    return ad.gradcheck(lambda a: ad.vsum(ad.leaky_relu(a, 0.2)), [a])


@_grad_case("clip01")
def _(rng):
    a = _leaf(rng, (4, 4), "a", lo=0.1, hi=0.9)
    return ad.gradcheck(lambda a: ad.vsum(ad.square(ad.clip01(a))), [a])


@_grad_case("softmax")
def _(rng):
    a = _leaf(rng, (3, 5), "a")
    t = rng.uniform(0, 1, (3, 5))
    return ad.gradcheck(
        lambda a: ad.vsum(ad.softmax(a, axis=1) * t), [a])


@_grad_case("vmean")
def _(rng):
    a = _leaf(rng, (3, 4), "a")
    return ad.gradcheck(lambda a: ad.vmean(ad.square(a)), [a])


@_grad_case("conv2d")
def _(rng):
    x = _leaf(rng, (5, 6, 2), "x")
    w = _leaf(rng, (3, 3, 3, 2), "w")
    b = _leaf(rng, (3,), "b")
    return ad.gradcheck(
        lambda x, w, b: ad.vsum(ad.square(ad.conv2d(x, w, bias=b))),
        [x, w, b])


@_grad_case("conv2d_stride2")
def _(rng):
    x = _leaf(rng, (6, 6, 2), "x")
    w = _leaf(rng, (2, 3, 3, 2), "w")
    return ad.gradcheck(
        lambda x, w: ad.vsum(ad.square(ad.conv2d(x, w, stride=2))), [x, w])


@_grad_case("resize_bilinear")
def _(rng):
    x = _leaf(rng, (3, 4, 2), "x")
    return ad.gradcheck(
        lambda x: ad.vsum(ad.square(ad.resize_bilinear(x, 5, 7))), [x])


@_grad_case("avg_pool_to")
def _(rng):
    x = _leaf(rng, (6, 9, 2), "x")
    return ad.gradcheck(
        lambda x: ad.vsum(ad.square(ad.avg_pool_to(x, 2, 3))), [x])


@_grad_case("gather_pixels")
def _(rng):
    x = _leaf(rng, (4, 5, 2), "x")
    iy = rng.integers(0, 4, (3, 3, 2))
    ix = rng.integers(0, 5, (3, 3, 2))
    return ad.gradcheck(
        lambda x: ad.vsum(ad.square(ad.gather_pixels(x, iy, ix))), [x])


@_grad_case("broadcast_concat_reshape")
def _(rng):
    a = _leaf(rng, (1, 1, 3), "a")
    b = _leaf(rng, (2, 4, 3), "b")

    def f(a, b):
        wide = ad.broadcast_to(a, (2, 4, 3))
        cat = ad.concat([wide, b], axis=2)
        return ad.vsum(ad.square(cat.reshape(2, 4, 6)))

    return ad.gradcheck(f, [a, b])


@_grad_case("modconv")
def _(rng):
    x = _leaf(rng, (4, 5, 2), "x")
    s = _leaf(rng, (4, 5, 2), "s", signed_floor=0.2)
    w = _leaf(rng, (2, 3, 3, 2), "w", signed_floor=0.1)
    return ad.gradcheck(
        lambda x, s, w: ad.vmean(ad.square(modulation.modconv(x, s, w))),
        [x, s, w])


@_grad_case("modconv_stack")
def _(rng):
    x = _leaf(rng, (4, 4, 2), "x")
    s0 = _leaf(rng, (4, 4, 2), "s0", signed_floor=0.2)
    s1 = _leaf(rng, (4, 4, 3), "s1", signed_floor=0.2)
    s2 = _leaf(rng, (4, 4, 3), "s2", signed_floor=0.2)
    w0 = _leaf(rng, (3, 3, 3, 2), "w0", signed_floor=0.1)
    w1 = _leaf(rng, (3, 3, 3, 3), "w1", signed_floor=0.1)
    wo = _leaf(rng, (3, 1, 1, 3), "wo")
    bo = _leaf(rng, (3,), "bo")

    def f(x, s0, s1, s2, w0, w1, wo, bo):
        params = {"st.mod0.w": w0, "st.mod1.w": w1,
                  "st.out.w": wo, "st.out.b": bo}
        styles = [s0, s1, s2]
        out = modulation.run_stack(params, "st", x,
                                   lambda i, _: styles[i], 1e-8)
        return ad.vmean(ad.square(out))

    return ad.gradcheck(f, [x, s0, s1, s2, w0, w1, wo, bo])


@_grad_case("sampled_attention")
def _(rng):
    d_s = 3
    qw = _leaf(rng, (d_s, 1, 1, 4), "qw")
    kw = _leaf(rng, (d_s, 1, 1, 5), "kw")
    c_cat = _leaf(rng, (3, 4, 4), "c_cat")
    s_cat = _leaf(rng, (3, 4, 5), "s_cat")
    img = _leaf(rng, (3, 4, 2), "img", lo=0.0, hi=1.0)
    grid = sampler.SamplingGrid(k=2, m=1)
    iy, ix = grid.coords(3, 4)

    def f(qw, kw, c_cat, s_cat, img):
        q = ad.conv2d(c_cat, qw)
        kmap = ad.conv2d(s_cat, kw)
        keys = ad.gather_pixels(kmap, iy, ix)
        vals = ad.gather_pixels(img, iy, ix)
        scores = (keys * q.reshape(3, 4, 1, d_s)).sum(axis=3) / np.sqrt(d_s)
        wts = ad.softmax(scores, axis=2)
        return ad.vmean(ad.square((vals * wts.reshape(3, 4, 4, 1)).sum(axis=2)))

    return ad.gradcheck(f, [qw, kw, c_cat, s_cat, img])


@_grad_case("fused_attention")
def _(rng):
    q = _leaf(rng, (4, 4, 3), "q")
    k0 = _leaf(rng, (2, 2, 3), "k0")
    v0 = _leaf(rng, (2, 2, 2), "v0")

    def f(q, k0, v0):
        keys = [k0, ad.resize_bilinear(ad.avg_pool_to(k0, 1, 1), 2, 2)]
        values = [v0, ad.resize_bilinear(ad.avg_pool_to(v0, 1, 1), 2, 2)]
        return ad.vmean(ad.square(fusion.fuse(q, keys, values)))

    return ad.gradcheck(f, [q, k0, v0])


@_grad_case("content_loss")
def _(rng):
    a = _leaf(rng, (4, 4, 3), "a", lo=0.0, hi=0.4)
    b = _leaf(rng, (4, 4, 3), "b", lo=0.6, hi=1.0)
    return ad.gradcheck(lambda a, b: training.content_loss(a, b), [a, b])


@_grad_case("perceptual_loss")
def _(rng):
    net = training.PerceptualNet()
    a = _leaf(rng, (8, 8, 3), "a", lo=0.0, hi=1.0)
    b = _leaf(rng, (8, 8, 3), "b", lo=0.0, hi=1.0)
    return ad.gradcheck(
        lambda a, b: training.perceptual_loss(a, b, net), [a, b])


def _tiny_disc(w1, b1, w2, b2):
    def disc(img):
        x = ad.leaky_relu(ad.conv2d(img, w1, stride=2, bias=b1), 0.2)
        return ad.conv2d(x, w2, stride=2, bias=b2)
    return disc


@_grad_case("adversarial_g_loss")
def _(rng):
    img = _leaf(rng, (8, 8, 3), "img", lo=0.0, hi=1.0)
    tgt = _leaf(rng, (8, 8, 3), "tgt", lo=0.0, hi=1.0)
    w1 = _leaf(rng, (4, 3, 3, 3), "w1")
    b1 = _leaf(rng, (4,), "b1")
    w2 = _leaf(rng, (1, 3, 3, 4), "w2")
    b2 = _leaf(rng, (1,), "b2")

    def f(img, tgt, w1, b1, w2, b2):
        g_loss, _ = training.adversarial_losses(
            _tiny_disc(w1, b1, w2, b2), img, tgt)
        return g_loss

    return ad.gradcheck(f, [img, tgt, w1, b1, w2, b2])


@_grad_case("adversarial_d_loss")
def _(rng):
    # the fake side is detached by contract, so the rendered image is a
    # constant here; the critic's own parameters are what train
    img = ad.Var(rng.uniform(0, 1, (8, 8, 3)))
    tgt = _leaf(rng, (8, 8, 3), "tgt", lo=0.0, hi=1.0)
    w1 = _leaf(rng, (4, 3, 3, 3), "w1")
    b1 = _leaf(rng, (4,), "b1")
    w2 = _leaf(rng, (1, 3, 3, 4), "w2")
    b2 = _leaf(rng, (1,), "b2")

    def f(tgt, w1, b1, w2, b2):
        _, d_loss = training.adversarial_losses(
            _tiny_disc(w1, b1, w2, b2), img, tgt)
        return d_loss

    return ad.gradcheck(f, [tgt, w1, b1, w2, b2])


@_grad_case("total_loss")
def _(rng):
    a = _leaf(rng, (4, 4, 3), "a", lo=0.0, hi=0.4)
    b = _leaf(rng, (4, 4, 3), "b", lo=0.6, hi=1.0)
    weights = training.LossWeights(content=10.0, perceptual=0.0,
                                   adversarial=0.0)
    return ad.gradcheck(
        lambda a, b: training.total_loss(
            training.content_loss(a, b), None, None, weights), [a, b])


def run_gradchecks(names=None, seed=0):
    """Run the named cases (all by default); [(name, ok, max_err)]."""
    rows = []
    for name, fn in _GRAD_CASES:
        if names is not None and name not in names:
            continue
        res = fn(np.random.default_rng(seed))
        rows.append((name, res.ok, res.max_error))
    return rows


def gradcheck_names():
    return [name for name, _ in _GRAD_CASES]


# ------------------------------------------------------- invariant checks


def _check_encoder_shapes():
    cfg = renderer.RenderConfig(variant="pixymod")
    params = renderer.init_params(cfg, seed=0)
    rng = np.random.default_rng(0)
    skel = (rng.random((32, 96, 1)) < 0.1).astype(np.float32)
    cb = encoders.encode_content(params, skel)
    want = [(16, 48, 32), (8, 24, 64), (4, 12, 128), (4, 12, 256)]
    ok = [s.shape for s in cb.stages] == want and cb.aux.shape == (32, 96, 256)
    return ok, f"stage shapes {[s.shape for s in cb.stages]}"


def _check_grid_span():
    g = sampler.SamplingGrid(k=5, m=4)
    off = np.asarray(g.offsets())
    ok = (g.span == 17 and off.shape == (25, 2)
          and off.min() == -8 and off.max() == 8)
    return ok, f"span {g.span}, {off.shape[0]} candidates"


def _check_demodulation():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((100, 100, 2))
    s = rng.uniform(0.5, 2.0, (100, 100, 2))
    w = rng.standard_normal((3, 3, 3, 2))
    out = modulation.modconv(ad.Var(x), ad.Var(s), w).data
    stds = out.reshape(-1, 3).std(axis=0)
    ok = bool(np.all(stds >= 0.9) and np.all(stds <= 1.1))
    return ok, f"output stds {np.round(stds, 3)}"


def _check_style_scale_invariance():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((6, 6, 3))
    s = rng.standard_normal((6, 6, 3))
    w = rng.standard_normal((2, 3, 3, 3))
    base = modulation.modconv(ad.Var(x), ad.Var(s), w).data
    worst = 0.0
    for alpha in (0.5, 2.0, 10.0):
        scaled = modulation.modconv(ad.Var(x), ad.Var(alpha * s), w).data
        worst = max(worst, float(np.abs(scaled - base).max()))
    return worst < 1e-5 * max(1.0, float(np.abs(base).max())), \
        f"max drift {worst:.2e}"


def _check_attention_convexity():
    rng = np.random.default_rng(9)
    params = {}
    sampler.init_sampler(rng, params, "sam", 8, encoders.conv_init)
    h, w = 12, 16
    c_cat = ad.Var(rng.standard_normal((h, w, encoders.CONTENT_BANK_CHANNELS)))
    s_cat = ad.Var(rng.standard_normal((h, w, encoders.STYLE_BANK_CHANNELS)))
    img = ad.Var(rng.uniform(0, 1, (h, w, 3)))
    grid = sampler.SamplingGrid(k=3, m=2)
    out = sampler.render_sampled(c_cat, s_cat, img, grid, params).data
    iy, ix = grid.coords(h, w)
    cand = img.data[iy, ix]
    ok = bool((out >= cand.min(axis=2) - 1e-6).all()
              and (out <= cand.max(axis=2) + 1e-6).all())
    return ok, "outputs inside candidate bounds"


def _check_uniform_fusion():
    rng = np.random.default_rng(10)
    q = ad.Var(rng.standard_normal((8, 8, 4)))
    k0 = ad.Var(rng.standard_normal((4, 4, 4)))
    amap = fusion.attention_map(q, [k0] * 4).data
    ok = bool(np.array_equal(amap, np.full((8, 8, 4), 0.25)))
    return ok, "identical keys give exactly uniform weights"


def _check_metric_fixed_points():
    rng = np.random.default_rng(11)
    a = rng.random((32, 48, 3))
    ok = (metrics.psnr(a, a) == 100.0
          and metrics.ssim(a, a) == 1.0
          and metrics.psnr(np.zeros((8, 8, 3)), np.ones((8, 8, 3))) == 0.0)
    b = rng.random((32, 48, 3))
    ok = ok and metrics.psnr(a, b) == metrics.psnr(b, a)
    ok = ok and metrics.ssim(a, b) == metrics.ssim(b, a)
    return bool(ok), "psnr/ssim fixed points and symmetry"


def _check_identity_shuffle():
    rng = np.random.default_rng(12)
    img = rng.random((64, 64, 3)).astype(np.float32)
    out, _ = data.single_crop(img, np.random.default_rng(0),
                              rotation_choices=(0,), swap_prob=0.0)
    return out.tobytes() == img.tobytes(), "identity policy is byte-exact"


def _check_triplet_determinism():
    rng = np.random.default_rng(13)
    src = rng.random((256, 768, 3)).astype(np.float32)
    t1 = data.make_triplet(src, np.random.default_rng(5))
    t2 = data.make_triplet(src, np.random.default_rng(5))
    ok = (t1.content.tobytes() == t2.content.tobytes()
          and t1.style.tobytes() == t2.style.tobytes()
          and t1.gt.tobytes() == t2.gt.tobytes())
    return ok, "same seed, same triplet"


def _check_render_variants():
    rng = np.random.default_rng(14)
    skel = (rng.random((32, 48, 1)) < 0.1).astype(np.float32)
    style = rng.random((32, 48, 3), dtype=np.float32)
    for variant in renderer.VARIANTS:
        cfg = renderer.RenderConfig(variant=variant)
        params = renderer.init_params(cfg, seed=0)
        out = renderer.render(params, cfg, skel, style)
        if out.shape != (32, 48, 3) or not np.isfinite(out).all() \
                or out.min() < 0 or out.max() > 1:
            return False, f"variant {variant} broke shape/range"
    return True, f"all {len(renderer.VARIANTS)} variants render"


def _check_checkpoint_roundtrip():
    import os
    import tempfile
    from . import checkpoint
    cfg = renderer.RenderConfig(variant="baseline")
    params = renderer.init_params(cfg, seed=1)
    fd, path = tempfile.mkstemp(suffix=".ckpt")
    os.close(fd)
    try:
        checkpoint.save_checkpoint(path, params, cfg)
        loaded, cfg2 = checkpoint.load_checkpoint(path)
        checkpoint.check_layout(loaded, cfg2)
        ok = (cfg2.variant == cfg.variant
              and all(loaded[k].tobytes() == params[k].tobytes()
                      for k in params))
    finally:
        os.unlink(path)
    return ok, "save/load is byte-exact"


INVARIANT_CHECKS = [
    ("encoder_shapes", _check_encoder_shapes),
    ("sampling_grid_span", _check_grid_span),
    ("demodulation_std", _check_demodulation),
    ("style_scale_invariance", _check_style_scale_invariance),
    ("attention_convexity", _check_attention_convexity),
    ("uniform_fusion_weights", _check_uniform_fusion),
    ("metric_fixed_points", _check_metric_fixed_points),
    ("identity_shuffle", _check_identity_shuffle),
    ("triplet_determinism", _check_triplet_determinism),
    ("render_all_variants", _check_render_variants),
    ("checkpoint_roundtrip", _check_checkpoint_roundtrip),
]


def run_selftest():
    """[(name, ok, detail)] for every invariant check."""
    rows = []
    for name, fn in INVARIANT_CHECKS:
        try:
            ok, detail = fn()
        except Exception as e:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(e).__name__}: {e}"
        rows.append((name, ok, detail))
    return rows
