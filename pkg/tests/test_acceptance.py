"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (visible with ``pytest -s``);
the assertion carries the same detail.  The toy-overfit check runs two
real training jobs and takes 15-20 minutes on one core; everything else
is seconds.
"""

import time

import numpy as np
import pytest

from textrender import autodiff as ad
from textrender import (data, encoders, fusion, metrics, modulation,
                        renderer, sampler, selfcheck, synth, training)

import oracles


def _line(num, ok, detail):
    print(f"criterion {num} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)


# 1. dimensional fidelity --------------------------------------------------


def test_criterion_1_dimensional_fidelity():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    img = synth.synth_image(rng, 160, 480)
    trip = data.make_triplet(img, rng, target_h=128, crop_w=384, patch=16)
    cfg = renderer.RenderConfig(variant="aprnet")
    params = renderer.param_vars(renderer.init_params(cfg, seed=0),
                                 trainable=False)

    cb = encoders.encode_content(params, trip.content[:, :, 0])
    sb = encoders.encode_style(params, trip.style)
    stage_shapes = [t.shape for t in sb.stages]
    want_stages = [(64, 192, 32), (32, 96, 64), (16, 48, 128), (16, 48, 256)]

    c_sam, s_sam, _ = sampler.build_sampling_inputs(cb, sb)
    s_cat = fusion.build_style_cat(sb)
    spp = fusion.pyramid_sizes(16, 48)
    took = time.monotonic() - t0

    ok = (stage_shapes == want_stages
          and [t.shape for t in cb.stages] == want_stages
          and cb.aux.shape == (128, 384, 256)
          and c_sam.shape == (64, 192, 736)
          and s_sam.shape == (64, 192, 480)
          and s_cat.shape == (16, 48, 480)
          and spp == [(4, 12), (2, 6), (1, 3)]
          and took < 10.0)
    detail = (f"stages {stage_shapes}, C_sam {c_sam.shape}, "
              f"S_sam {s_sam.shape}, S_cat {s_cat.shape}, SPP {spp}, "
              f"{took:.1f}s")
    _line(1, ok, detail)
    assert ok, detail


# 2. modulated convolution -------------------------------------------------


def test_criterion_2_modconv_correctness():
    t0 = time.monotonic()
    rng = np.random.default_rng(2)

    worst = 0.0
    for _ in range(120):
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        ci = int(rng.integers(1, 5))
        co = int(rng.integers(1, 5))
        k = int(rng.choice([1, 3]))
        x = rng.standard_normal((h, w, ci))
        s = rng.standard_normal((h, w, ci))
        wt = rng.standard_normal((co, k, k, ci))
        got = modulation.modconv(ad.Var(x), ad.Var(s), wt).data
        want = oracles.modconv_naive(x, wt, s)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)
        worst = max(worst, float(np.max(np.abs(got - want))))

    x = rng.standard_normal((6, 9, 3))
    s = 0.5 + rng.random((6, 9, 3))
    wt = rng.standard_normal((4, 3, 3, 3))
    base = modulation.modconv(ad.Var(x), ad.Var(s), wt).data
    scale_ok = True
    for alpha in (0.5, 2.0, 10.0):
        scaled = modulation.modconv(ad.Var(x), ad.Var(alpha * s), wt).data
        np.testing.assert_allclose(scaled, base, rtol=1e-5, atol=1e-6)
        scale_ok &= np.allclose(scaled, base, rtol=1e-5, atol=1e-6)

    x = rng.standard_normal((100, 100, 8))
    s = 0.5 + rng.random((100, 100, 8))
    wt = rng.standard_normal((8, 3, 3, 8))
    out = modulation.modconv(ad.Var(x), ad.Var(s), wt).data
    stds = out.reshape(-1, 8).std(axis=0)
    mc_ok = bool(np.all(stds >= 0.9) and np.all(stds <= 1.1))
    took = time.monotonic() - t0

    ok = scale_ok and mc_ok and took < 60.0
    detail = (f"120 loop-oracle instances (max abs err {worst:.2e}), "
              f"scale-invariant, output stds "
              f"[{stds.min():.3f}, {stds.max():.3f}], {took:.1f}s")
    _line(2, ok, detail)
    assert ok, detail


# 3. attention correctness -------------------------------------------------


def test_criterion_3_attention_correctness():
    rng = np.random.default_rng(3)

    # pixel-sampling attention vs the per-coordinate formula
    d_s = 8
    params = {}
    sampler.init_sampler(rng, params, "sam", d_s, encoders.conv_init)
    params = {k: ad.Var(v, requires_grad=False) for k, v in params.items()}
    h, w = 9, 13
    c_cat = ad.Var(rng.standard_normal((h, w, encoders.CONTENT_BANK_CHANNELS)))
    s_cat = ad.Var(rng.standard_normal((h, w, encoders.STYLE_BANK_CHANNELS)))
    img = ad.Var(rng.uniform(0, 1, (h, w, 3)))
    grid = sampler.SamplingGrid(k=3, m=2)
    got, wts = sampler.render_sampled(c_cat, s_cat, img, grid, params,
                                      return_weights=True)

    q = oracles.conv2d_naive(c_cat.data, params["sam.q.w"].data,
                             bias=params["sam.q.b"].data)
    kmap = oracles.conv2d_naive(s_cat.data, params["sam.k.w"].data,
                                bias=params["sam.k.b"].data)
    coords = oracles.sample_grid_naive(h, w, grid.k, grid.m)
    kk = grid.k * grid.k
    keys = np.zeros((h * w, kk, d_s))
    vals = np.zeros((h * w, kk, 3))
    for y in range(h):
        for x in range(w):
            for j in range(kk):
                sy, sx = coords[y, x, j]
                keys[y * w + x, j] = kmap[sy, sx]
                vals[y * w + x, j] = img.data[sy, sx]
    want, want_w = oracles.attention_naive(q.reshape(h * w, d_s), keys, vals)
    np.testing.assert_allclose(got.data, want.reshape(h, w, 3),
                               rtol=1e-5, atol=1e-5)

    # convexity: weights are a distribution, output inside candidate hull
    wdat = wts.data
    assert np.all(wdat >= 0) and np.allclose(wdat.sum(axis=2), 1.0)
    hull = vals.reshape(h, w, kk, 3)
    assert np.all(got.data >= hull.min(axis=2) - 1e-12)
    assert np.all(got.data <= hull.max(axis=2) + 1e-12)

    # k=1 degenerates to an exact copy
    out1 = sampler.render_sampled(c_cat, s_cat, img,
                                  sampler.SamplingGrid(k=1, m=1), params).data
    assert np.array_equal(out1, img.data)

    # default grid geometry
    g = sampler.SamplingGrid(k=5, m=4)
    offs = g.offsets()
    span_ok = (g.span == 17 and len(offs) == 25
               and max(abs(o) for pair in offs for o in pair) == 8)

    # pyramid fusion vs the same formula
    d_f, c = 6, 3
    h8, w8, qh, qw = 4, 6, 8, 12
    q2 = ad.Var(rng.standard_normal((qh, qw, d_f)))
    keys2 = [ad.Var(rng.standard_normal((h8, w8, d_f))) for _ in range(4)]
    vals2 = [ad.Var(rng.standard_normal((h8, w8, c))) for _ in range(4)]
    fused, fwts = fusion.fuse(q2, keys2, vals2, return_weights=True)
    kk2 = np.zeros((qh * qw, 4, d_f))
    vv2 = np.zeros((qh * qw, 4, c))
    for y in range(qh):
        for x in range(qw):
            sy, sx = y * h8 // qh, x * w8 // qw
            for lv in range(4):
                kk2[y * qw + x, lv] = keys2[lv].data[sy, sx]
                vv2[y * qw + x, lv] = vals2[lv].data[sy, sx]
    want2, want2_w = oracles.attention_naive(
        q2.data.reshape(qh * qw, d_f), kk2, vv2)
    np.testing.assert_allclose(fused.data, want2.reshape(qh, qw, c),
                               rtol=1e-5, atol=1e-6)
    fw = fwts.data
    assert np.all(fw >= 0) and np.allclose(fw.sum(axis=2), 1.0)

    ok = span_ok
    detail = ("both attentions match formula oracles at 1e-5, weights "
              f"convex, k=1 exact, default grid span {g.span} with "
              f"{len(offs)} candidates")
    _line(3, ok, detail)
    assert ok, detail


# 4. gradient suite --------------------------------------------------------


def test_criterion_4_gradient_suite():
    t0 = time.monotonic()
    rows = selfcheck.run_gradchecks()
    took = time.monotonic() - t0
    bad = [(n, e) for n, okk, e in rows if not okk]
    worst = max(e for _, _, e in rows)
    must = {"modconv", "modconv_stack", "sampled_attention", "fused_attention",
            "content_loss", "perceptual_loss", "adversarial_g_loss",
            "adversarial_d_loss", "total_loss"}
    have = {n for n, _, _ in rows}
    ok = not bad and must <= have and worst < 1e-4 and took < 300.0
    detail = (f"{len(rows)} finite-difference checks, max rel err "
              f"{worst:.2e}, {took:.1f}s" + (f", failures {bad}" if bad else ""))
    _line(4, ok, detail)
    assert ok, detail


# 5. patch-shuffle invariants ----------------------------------------------


def _canonical_patches(img, patch):
    h, w = img.shape[:2]
    out = []
    for y in range(0, h, patch):
        for x in range(0, w, patch):
            p = img[y:y + patch, x:x + patch]
            out.append(min(np.rot90(p, r).tobytes() for r in range(4)))
    return sorted(out)


def test_criterion_5_single_crop_invariants():
    t0 = time.monotonic()
    base_rng = np.random.default_rng(50)
    img = base_rng.random((24, 40, 3)).astype(np.float32)
    want = _canonical_patches(img, 8)
    for seed in range(1000):
        out, _ = data.single_crop(img, np.random.default_rng(seed), patch=8)
        if _canonical_patches(out, 8) != want:
            _line(5, False, f"multiset broken at seed {seed}")
            raise AssertionError(f"patch multiset changed at seed {seed}")

    ident, rec = data.single_crop(img, np.random.default_rng(0), patch=8,
                                  rotation_choices=(0,), swap_prob=0.0)
    identity_ok = ident.tobytes() == img.tobytes()
    assert not rec.rotation.any() and (rec.partner < 0).all()

    src = synth.synth_image(np.random.default_rng(7), 40, 80)
    t_a = data.make_triplet(src, np.random.default_rng(123), target_h=16,
                            crop_w=24, patch=8)
    t_b = data.make_triplet(src, np.random.default_rng(123), target_h=16,
                            crop_w=24, patch=8)
    t_c = data.make_triplet(src, np.random.default_rng(124), target_h=16,
                            crop_w=24, patch=8)
    det_ok = (t_a.content.tobytes() == t_b.content.tobytes()
              and t_a.style.tobytes() == t_b.style.tobytes()
              and t_a.gt.tobytes() == t_b.gt.tobytes()
              and t_a.style.tobytes() != t_c.style.tobytes())
    took = time.monotonic() - t0

    ok = identity_ok and det_ok
    detail = (f"multiset preserved on 1000 seeded shuffles, identity policy "
              f"byte-exact, triplets seed-deterministic, {took:.1f}s")
    _line(5, ok, detail)
    assert ok, detail


# 6. toy overfit -----------------------------------------------------------


def _fullset_content(params, cfg, trips):
    vals = []
    for t in trips:
        pv = renderer.param_vars(params, trainable=False)
        out = renderer.render_vars(pv, cfg, t.content, t.style)["out"].data
        vals.append(float(np.mean(np.abs(out - t.gt))))
    return float(np.mean(vals))


def test_criterion_6_toy_overfit():
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    src = synth.synth_image(rng, 40, 240)
    trips = [data.make_triplet(src, rng, target_h=32, crop_w=96, patch=16)
             for _ in range(8)]
    w = training.LossWeights(content=10.0, perceptual=1.0, adversarial=1.0)

    scores = {}
    for variant in ("aprnet", "baseline"):
        cfg = renderer.RenderConfig(variant=variant)
        res = training.train(cfg, trips, 1000, seed=0, weights=w, batch=1)
        if variant == "aprnet":
            # identical seed and batch order, so the short run is the
            # long run's exact prefix; content is measured over the whole
            # set rather than trusting one minibatch curve sample
            pre = training.train(cfg, trips, 10, seed=0, weights=w, batch=1)
            c10 = _fullset_content(pre.params, cfg, trips)
            c_end = _fullset_content(res.params, cfg, trips)
        scores[variant] = np.mean(
            [metrics.psnr(renderer.render(res.params, cfg, t.content,
                                          t.style), t.gt)
             for t in trips])
    took = time.monotonic() - t0

    drop = 1.0 - c_end / c10
    ok = (c_end <= 0.2 * c10 and scores["aprnet"] >= 25.0
          and scores["aprnet"] > scores["baseline"] and took < 1800.0)
    detail = (f"content {c10:.4f} -> {c_end:.4f} ({100 * drop:.1f}% drop), "
              f"psnr aprnet {scores['aprnet']:.2f} vs baseline "
              f"{scores['baseline']:.2f}, {took / 60:.1f} min")
    _line(6, ok, detail)
    assert ok, detail


# 7. metric sanity ---------------------------------------------------------


def test_criterion_7_metric_sanity(tmp_path):
    rng = np.random.default_rng(70)
    a = rng.random((16, 20, 3))
    psnr_ok = (metrics.psnr(a, a.copy()) == 100.0
               and metrics.psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == 0.0)
    b = rng.random((16, 20, 3))
    np.testing.assert_allclose(metrics.psnr(a, b), oracles.psnr_naive(a, b),
                               rtol=1e-12)
    ssim_ok = metrics.ssim(a, a.copy()) == 1.0
    np.testing.assert_allclose(metrics.ssim(a, b), oracles.ssim_naive(a, b),
                               rtol=1e-9)

    data.generate_dataset("synthetic:2", tmp_path, seed=3, target_h=16,
                          crop_w=24, patch=8)
    gts = iter([t.gt for t in data.load_triplets(tmp_path)])
    report = metrics.evaluate(tmp_path, lambda c, s: next(gts))
    eval_ok = (report["count"] == 2 and report["psnr"] == 100.0
               and report["ssim"] == 1.0)

    ok = psnr_ok and ssim_ok and eval_ok
    detail = (f"psnr/ssim trivial and oracle cases exact, identity evaluate "
              f"-> psnr {report['psnr']:.0f} / ssim {report['ssim']:.0f}")
    _line(7, ok, detail)
    assert ok, detail
