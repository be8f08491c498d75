import numpy as np
import pytest

from textrender import autodiff as ad
from textrender import encoders, fusion, sampler
from textrender.errors import ConfigError, DomainError, ShapeError

import oracles


def _bank(rng, h, w, image=False, aux=False):
    """Hand-built feature bank with random stage maps."""
    sizes = [(h // 2, w // 2), (h // 4, w // 4), (h // 8, w // 8),
             (h // 8, w // 8)]
    stages = [ad.Var(rng.standard_normal((sh, sw, c)))
              for (sh, sw), c in zip(sizes, encoders.STAGE_CHANNELS)]
    img = ad.Var(rng.uniform(0, 1, (h, w, 3))) if image else None
    ax = ad.Var(rng.standard_normal((h, w, encoders.AUX_CHANNELS))) \
        if aux else None
    return encoders.FeatureBank(stages, image=img, aux=ax)


# ---------------------------------------------------------------- sampler


def test_grid_offsets_match_oracle():
    for k, m in [(1, 1), (2, 1), (3, 2), (5, 4), (4, 3)]:
        g = sampler.SamplingGrid(k=k, m=m)
        iy, ix = g.coords(9, 13)
        want = oracles.sample_grid_naive(9, 13, k, m)
        np.testing.assert_array_equal(iy, want[:, :, :, 0])
        np.testing.assert_array_equal(ix, want[:, :, :, 1])


def test_grid_default_span():
    g = sampler.SamplingGrid()
    assert (g.k, g.m) == (5, 4)
    assert g.span == 17
    off = np.asarray(g.offsets())
    assert off.shape == (25, 2)
    # symmetric window, step 4 per axis
    assert off[:, 0].min() == -8 and off[:, 0].max() == 8
    assert sorted(set(off[:, 0])) == [-8, -4, 0, 4, 8]
    # interior pixel far from borders keeps all 25 distinct candidates
    iy, ix = g.coords(32, 96)
    pairs = set(zip(iy[16, 48].tolist(), ix[16, 48].tolist()))
    assert len(pairs) == 25


def test_grid_rejects_degenerate_parameters():
    with pytest.raises(DomainError):
        sampler.SamplingGrid(k=0)
    with pytest.raises(DomainError):
        sampler.SamplingGrid(k=5, m=0)
    with pytest.raises(DomainError):
        sampler.SamplingGrid(k=-2, m=4)


def _sampler_params(rng, d_s=8):
    params = {}
    sampler.init_sampler(rng, params, "sam", d_s, encoders.conv_init)
    return params


def _random_sampling_inputs(rng, h, w):
    c_cat = ad.Var(rng.standard_normal((h, w, encoders.CONTENT_BANK_CHANNELS)))
    s_cat = ad.Var(rng.standard_normal((h, w, encoders.STYLE_BANK_CHANNELS)))
    img = ad.Var(rng.uniform(0, 1, (h, w, 3)))
    return c_cat, s_cat, img


def test_single_candidate_copies_the_style_pixel():
    rng = np.random.default_rng(3)
    params = _sampler_params(rng)
    c_cat, s_cat, img = _random_sampling_inputs(rng, 6, 10)
    out = sampler.render_sampled(c_cat, s_cat, img,
                                 sampler.SamplingGrid(k=1, m=1), params).data
    # softmax over one candidate is exactly 1
    np.testing.assert_array_equal(out, img.data)


def test_sampled_render_matches_composition_oracle():
    rng = np.random.default_rng(4)
    d_s = 8
    params = _sampler_params(rng, d_s)
    h, w = 7, 11
    c_cat, s_cat, img = _random_sampling_inputs(rng, h, w)
    grid = sampler.SamplingGrid(k=2, m=1)
    got, wts = sampler.render_sampled(c_cat, s_cat, img, grid, params,
                                      return_weights=True)

    q = oracles.conv2d_naive(c_cat.data, params["sam.q.w"],
                             bias=params["sam.q.b"])
    kmap = oracles.conv2d_naive(s_cat.data, params["sam.k.w"],
                                bias=params["sam.k.b"])
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
    np.testing.assert_allclose(wts.data, want_w.reshape(h, w, kk),
                               rtol=1e-5, atol=1e-5)


def test_sampled_output_is_convex_in_candidates():
    rng = np.random.default_rng(5)
    params = _sampler_params(rng)
    h, w = 12, 16
    c_cat, s_cat, img = _random_sampling_inputs(rng, h, w)
    grid = sampler.SamplingGrid(k=3, m=2)
    out, wts = sampler.render_sampled(c_cat, s_cat, img, grid, params,
                                      return_weights=True)
    np.testing.assert_allclose(wts.data.sum(axis=2), 1.0, rtol=1e-6)
    assert (wts.data >= 0).all()
    iy, ix = grid.coords(h, w)
    cand = img.data[iy, ix]                  # (h, w, kk, 3)
    assert (out.data >= cand.min(axis=2) - 1e-6).all()
    assert (out.data <= cand.max(axis=2) + 1e-6).all()


def test_identical_candidates_reproduce_the_pixel():
    rng = np.random.default_rng(6)
    params = _sampler_params(rng)
    h, w = 5, 5
    c_cat, s_cat, _ = _random_sampling_inputs(rng, h, w)
    img = ad.Var(np.broadcast_to(np.array([0.2, 0.5, 0.9]), (h, w, 3)).copy())
    out = sampler.render_sampled(c_cat, s_cat, img,
                                 sampler.SamplingGrid(k=3, m=1), params).data
    np.testing.assert_allclose(out, img.data, atol=1e-6)


def test_build_sampling_inputs_shapes_and_mismatch():
    rng = np.random.default_rng(7)
    cb = _bank(rng, 16, 24, aux=True)
    sb = _bank(rng, 16, 24, image=True)
    c_cat, s_cat, img = sampler.build_sampling_inputs(cb, sb)
    assert c_cat.shape == (8, 12, encoders.CONTENT_BANK_CHANNELS)
    assert s_cat.shape == (8, 12, encoders.STYLE_BANK_CHANNELS)
    assert img.shape == (8, 12, 3)
    with pytest.raises(ShapeError):
        sampler.build_sampling_inputs(cb, _bank(rng, 32, 24, image=True))


def test_sampler_gradcheck():
    rng = np.random.default_rng(8)
    d_s = 3
    qw = ad.Var(rng.standard_normal((d_s, 1, 1, 4)), requires_grad=True)
    kw = ad.Var(rng.standard_normal((d_s, 1, 1, 5)), requires_grad=True)
    c_cat = ad.Var(rng.standard_normal((3, 4, 4)), requires_grad=True)
    s_cat = ad.Var(rng.standard_normal((3, 4, 5)), requires_grad=True)
    img = ad.Var(rng.uniform(0, 1, (3, 4, 2)), requires_grad=True)
    grid = sampler.SamplingGrid(k=2, m=1)
    iy, ix = grid.coords(3, 4)

    def f(qw, kw, c_cat, s_cat, img):
        q = ad.conv2d(c_cat, qw)
        kmap = ad.conv2d(s_cat, kw)
        keys = ad.gather_pixels(kmap, iy, ix)
        vals = ad.gather_pixels(img, iy, ix)
        scores = (keys * q.reshape(3, 4, 1, d_s)).sum(axis=3) / np.sqrt(d_s)
        wts = ad.softmax(scores, axis=2)
        out = (vals * wts.reshape(3, 4, 4, 1)).sum(axis=2)
        return ad.vmean(ad.square(out))

    res = ad.gradcheck(f, [qw, kw, c_cat, s_cat, img])
    assert res.ok, res.per_leaf


# ----------------------------------------------------------------- fusion


def test_style_cat_is_stage_order_at_eighth_res():
    rng = np.random.default_rng(10)
    sb = _bank(rng, 32, 48)
    cat = fusion.build_style_cat(sb)
    assert cat.shape == (4, 6, encoders.STYLE_BANK_CHANNELS)
    # last stage is already eighth-res, so its slice passes through
    np.testing.assert_array_equal(cat.data[:, :, -256:], sb.stages[3].data)


def test_content_cat_includes_aux():
    rng = np.random.default_rng(11)
    cb = _bank(rng, 32, 48, aux=True)
    cat = fusion.content_cat_at(cb, 16, 24)
    assert cat.shape == (16, 24, encoders.CONTENT_BANK_CHANNELS)


def test_pyramid_sizes_keep_aspect():
    assert fusion.pyramid_sizes(16, 48) == [(4, 12), (2, 6), (1, 3)]
    assert fusion.pyramid_sizes(4, 4) == [(4, 4), (2, 2), (1, 1)]
    # widths round up on non-divisible aspect
    assert fusion.pyramid_sizes(6, 7) == [(4, 5), (2, 3), (1, 2)]
    with pytest.raises(ConfigError):
        fusion.pyramid_sizes(3, 9)


def test_pyramid_levels_shapes_and_constant_input():
    rng = np.random.default_rng(12)
    x = ad.Var(rng.standard_normal((4, 12, 3)))
    levels = fusion.build_pyramid(x)
    assert len(levels) == 4
    for lv in levels:
        assert lv.shape == (4, 12, 3)
    np.testing.assert_array_equal(levels[0].data, x.data)
    # pooling and bilinear upsampling both preserve constants exactly
    c = ad.Var(np.full((8, 16, 2), 0.37))
    for lv in fusion.build_pyramid(c):
        np.testing.assert_array_equal(lv.data, c.data)


def test_coarsest_level_matches_pool_then_resize_oracle():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((8, 20, 2))
    levels = fusion.build_pyramid(ad.Var(x))
    pooled = oracles.avg_pool_naive(x, 1, 3)
    want = oracles.bilinear_naive(pooled, 8, 20)
    np.testing.assert_allclose(levels[3].data, want, rtol=1e-6, atol=1e-7)


def test_block_sharing_is_floor_division():
    # a query map 8x the key map resolution shares each key cell
    # across an aligned 8x8 block
    iy, ix = fusion._block_coords(32, 64, 4, 8)
    for j in (0, 7, 8, 15, 31):
        assert iy[j, 0] == j // 8
    for i in (0, 7, 8, 16, 63):
        assert ix[0, i] == i // 8
    # and 4x at the half-res working size
    iy2, _ = fusion._block_coords(16, 32, 4, 8)
    assert [iy2[j, 0] for j in (0, 3, 4, 15)] == [0, 0, 1, 3]


def test_fuse_matches_attention_oracle():
    rng = np.random.default_rng(14)
    d_f, c = 6, 3
    h8, w8, qh, qw = 4, 6, 8, 12
    q = ad.Var(rng.standard_normal((qh, qw, d_f)))
    keys = [ad.Var(rng.standard_normal((h8, w8, d_f))) for _ in range(4)]
    values = [ad.Var(rng.standard_normal((h8, w8, c))) for _ in range(4)]
    got, wts = fusion.fuse(q, keys, values, return_weights=True)

    kk = np.zeros((qh * qw, 4, d_f))
    vv = np.zeros((qh * qw, 4, c))
    for y in range(qh):
        for x in range(qw):
            sy, sx = y * h8 // qh, x * w8 // qw
            for lv in range(4):
                kk[y * qw + x, lv] = keys[lv].data[sy, sx]
                vv[y * qw + x, lv] = values[lv].data[sy, sx]
    want, want_w = oracles.attention_naive(
        q.data.reshape(qh * qw, d_f), kk, vv)
    np.testing.assert_allclose(got.data, want.reshape(qh, qw, c),
                               rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(wts.data, want_w.reshape(qh, qw, 4),
                               rtol=1e-5, atol=1e-6)


def test_fuse_level_count_mismatch():
    rng = np.random.default_rng(15)
    q = ad.Var(rng.standard_normal((4, 4, 2)))
    keys = [ad.Var(rng.standard_normal((4, 4, 2))) for _ in range(4)]
    values = [ad.Var(rng.standard_normal((4, 4, 3))) for _ in range(3)]
    with pytest.raises(ShapeError):
        fusion.fuse(q, keys, values)


def test_fuse_identical_values_passthrough():
    rng = np.random.default_rng(16)
    q = ad.Var(rng.standard_normal((8, 8, 4)))
    keys = [ad.Var(rng.standard_normal((4, 4, 4))) for _ in range(4)]
    v = rng.standard_normal((4, 4, 2))
    values = [ad.Var(v.copy()) for _ in range(4)]
    out = fusion.fuse(q, keys, values).data
    iy, ix = fusion._block_coords(8, 8, 4, 4)
    np.testing.assert_allclose(out, v[iy, ix], rtol=1e-6, atol=1e-7)


def test_saturated_scores_pick_one_level():
    # one key aligned with the query and scaled way up wins the softmax
    d_f = 4
    q = ad.Var(np.ones((4, 4, d_f)))
    cold = [ad.Var(np.full((4, 4, d_f), -50.0)) for _ in range(3)]
    hot = ad.Var(np.full((4, 4, d_f), 50.0))
    keys = cold[:2] + [hot] + cold[2:]
    values = [ad.Var(np.full((4, 4, 1), float(i))) for i in range(4)]
    out, wts = fusion.fuse(q, keys, values, return_weights=True)
    np.testing.assert_allclose(out.data, 2.0, atol=1e-6)
    np.testing.assert_allclose(wts.data[:, :, 2], 1.0, atol=1e-6)


def test_attention_map_rows_sum_to_one():
    rng = np.random.default_rng(17)
    q = ad.Var(rng.standard_normal((8, 12, 5)))
    keys = [ad.Var(rng.standard_normal((4, 6, 5))) for _ in range(4)]
    amap = fusion.attention_map(q, keys)
    assert amap.shape == (8, 12, 4)
    np.testing.assert_allclose(amap.data.sum(axis=2), 1.0, rtol=1e-6)
    # equal keys -> exactly uniform weights
    same = [keys[0]] * 4
    uni = fusion.attention_map(q, same)
    np.testing.assert_array_equal(uni.data, np.full((8, 12, 4), 0.25))
    # the map is the same tensor fuse mixes with
    values = [ad.Var(rng.standard_normal((4, 6, 2))) for _ in range(4)]
    _, wts = fusion.fuse(q, keys, values, return_weights=True)
    np.testing.assert_array_equal(amap.data, wts.data)


def test_fused_style_site_shapes():
    rng = np.random.default_rng(18)
    params = {}
    fusion.init_fused_site(rng, params, "sf", 64, 7, 16, encoders.conv_init)
    s_cat = ad.Var(rng.standard_normal((4, 12,
                                        encoders.STYLE_BANK_CHANNELS)))
    q_src = ad.Var(rng.standard_normal((16, 48, 64)))
    out = fusion.fused_style(params, "sf", q_src, s_cat)
    assert out.shape == (16, 48, 7)
    assert np.isfinite(out.data).all()


def test_vector_style_is_permutation_invariant():
    rng = np.random.default_rng(19)
    params = {}
    encoders.conv_init(rng, params, "sv", 5, 1, 1,
                       encoders.STYLE_BANK_CHANNELS)
    s_cat = rng.standard_normal((4, 6, encoders.STYLE_BANK_CHANNELS))
    a = fusion.vector_style(params, "sv", ad.Var(s_cat), 8, 12).data
    # same vector at every output position
    assert a.shape == (8, 12, 5)
    np.testing.assert_array_equal(a, np.broadcast_to(a[0, 0], a.shape))
    # spatial shuffling of the input cannot change the average
    perm = rng.permutation(24)
    shuffled = s_cat.reshape(24, -1)[perm].reshape(4, 6, -1)
    b = fusion.vector_style(params, "sv", ad.Var(shuffled), 8, 12).data
    np.testing.assert_array_equal(a, b)


def test_fusion_gradcheck():
    rng = np.random.default_rng(20)
    d_f = 3
    q = ad.Var(rng.standard_normal((4, 4, d_f)), requires_grad=True)
    k0 = ad.Var(rng.standard_normal((2, 2, d_f)), requires_grad=True)
    v0 = ad.Var(rng.standard_normal((2, 2, 2)), requires_grad=True)

    def f(q, k0, v0):
        # two-level pyramid stand-in: the map itself plus its global mean
        keys = [k0, ad.resize_bilinear(ad.avg_pool_to(k0, 1, 1), 2, 2)]
        values = [v0, ad.resize_bilinear(ad.avg_pool_to(v0, 1, 1), 2, 2)]
        return ad.vmean(ad.square(fusion.fuse(q, keys, values)))

    res = ad.gradcheck(f, [q, k0, v0])
    assert res.ok, res.per_leaf
