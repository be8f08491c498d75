import numpy as np
import pytest

from textrender import encoders
from textrender.errors import DomainError, ShapeError


def _params(seed=0):
    rng = np.random.default_rng(seed)
    params = {}
    encoders.init_encoder(rng, params, "enc_c", 1, highway_k=2, aux=True)
    encoders.init_encoder(rng, params, "enc_s", 3, highway_k=1)
    return params


def _skeleton(h, w, seed=1):
    rng = np.random.default_rng(seed)
    return (rng.random((h, w, 1)) < 0.1).astype(np.float32)


def test_stage_shapes_128x384():
    params = _params()
    cb = encoders.encode_content(params, _skeleton(128, 384))
    want = [(64, 192, 32), (32, 96, 64), (16, 48, 128), (16, 48, 256)]
    assert [s.shape for s in cb.stages] == want
    assert cb.aux.shape == (128, 384, 256)
    sb = encoders.encode_style(params,
                               np.random.default_rng(2).random((128, 384, 3),
                                                               dtype=np.float32))
    assert [s.shape for s in sb.stages] == want
    assert sb.image.shape == (128, 384, 3)
    assert sb.aux is None and cb.image is None


def test_stage_shapes_32x96():
    params = _params()
    cb = encoders.encode_content(params, _skeleton(32, 96))
    want = [(16, 48, 32), (8, 24, 64), (4, 12, 128), (4, 12, 256)]
    assert [s.shape for s in cb.stages] == want
    assert cb.aux.shape == (32, 96, 256)


def test_channel_sums():
    params = _params()
    for (h, w) in ((32, 96), (64, 64)):
        cb = encoders.encode_content(params, _skeleton(h, w))
        sb = encoders.encode_style(params,
                                   np.zeros((h, w, 3), dtype=np.float32))
        assert sum(s.shape[2] for s in sb.stages) == 480
        assert sum(s.shape[2] for s in cb.stages) + cb.aux.shape[2] == 736
    assert encoders.STYLE_BANK_CHANNELS == 480
    assert encoders.CONTENT_BANK_CHANNELS == 736


def test_zero_skeleton_finite_and_deterministic():
    params = _params()
    zero = np.zeros((32, 96, 1), dtype=np.float32)
    a = encoders.encode_content(params, zero)
    b = encoders.encode_content(params, zero)
    for s, t in zip(a.stages + [a.aux], b.stages + [b.aux]):
        assert np.isfinite(s.data).all()
        np.testing.assert_array_equal(s.data, t.data)


def test_one_pixel_reaches_stage1():
    params = _params()
    base = np.zeros((32, 96, 1), dtype=np.float32)
    s1_base = encoders.encode_content(params, base).stages[0].data
    poked = base.copy()
    poked[17, 40, 0] = 1.0
    s1_poke = encoders.encode_content(params, poked).stages[0].data
    assert np.any(s1_base != s1_poke)


def test_input_validation():
    params = _params()
    with pytest.raises(ShapeError):
        encoders.encode_content(params, _skeleton(30, 96))
    with pytest.raises(ShapeError):
        encoders.encode_content(params, np.zeros((32, 96, 3), dtype=np.float32))
    with pytest.raises(DomainError):
        encoders.encode_content(params, np.full((32, 96, 1), 0.5,
                                                dtype=np.float32))
    with pytest.raises(ShapeError):
        encoders.encode_style(params, np.zeros((32, 96, 1), dtype=np.float32))
    with pytest.raises(ShapeError):
        encoders.encode_style(params, np.zeros((32, 90, 3), dtype=np.float32))


def test_accepts_2d_skeleton():
    params = _params()
    flat = _skeleton(32, 96)[:, :, 0]
    cb = encoders.encode_content(params, flat)
    cb2 = encoders.encode_content(params, flat[:, :, None])
    np.testing.assert_array_equal(cb.stages[0].data, cb2.stages[0].data)


def test_init_is_seed_deterministic_and_fan_in_scaled():
    a, b = _params(7), _params(7)
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    w = a["enc_s.s2.c1.w"]  # 64 x 3 x 3 x 32
    assert w.shape == (64, 3, 3, 32)
    assert abs(w.std() * np.sqrt(9 * 32) - 1.0) < 0.1
    assert np.all(a["enc_s.s2.c1.b"] == 0)
    # content highway kernels are 2x2, style highway 1x1
    assert a["enc_c.s1.hw.w"].shape[1:3] == (2, 2)
    assert a["enc_s.s1.hw.w"].shape[1:3] == (1, 1)
