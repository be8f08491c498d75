import numpy as np
import pytest

from textrender import checkpoint, renderer
from textrender.errors import CodecError, ShapeError


def _small_cfg(**kw):
    base = dict(variant="pixymod", stage1_plan=(32, 8), stage2_plan=(256, 8))
    base.update(kw)
    return renderer.RenderConfig(**base)


def test_roundtrip_bytes_exact(tmp_path):
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=3)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    got, got_cfg = checkpoint.load_checkpoint(path)
    assert sorted(got) == sorted(params)
    for name in params:
        want = np.ascontiguousarray(params[name], dtype="<f4")
        assert got[name].shape == params[name].shape
        assert got[name].tobytes() == want.tobytes()
    assert got_cfg.variant == cfg.variant


def test_config_meta_roundtrip(tmp_path):
    cfg = _small_cfg(variant="aprnet", k=3, m=2, d_s=16, d_f=8, eps=1e-6)
    params = renderer.init_params(cfg, seed=0)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    _, got = checkpoint.load_checkpoint(path)
    assert (got.k, got.m, got.d_s, got.d_f) == (3, 2, 16, 8)
    assert got.eps == 1e-6
    assert got.stage1_plan == cfg.stage1_plan
    assert got.stage2_plan == cfg.stage2_plan


def test_header_is_readable_text(tmp_path):
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=0)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    blob = path.read_bytes()
    header = blob[: blob.find(b"\nEND\n")].decode("ascii")
    lines = header.splitlines()
    assert lines[0] == checkpoint.MAGIC
    assert lines[1] == "variant pixymod"
    # one name+dims line per tensor, in sorted order
    table = [ln for ln in lines if ln.split()[0] in params]
    assert [ln.split()[0] for ln in table] == sorted(params)
    for ln in table:
        name, *dims = ln.split()
        assert tuple(int(d) for d in dims) == params[name].shape


def test_payload_is_flat_le_float32(tmp_path):
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=1)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    blob = path.read_bytes()
    payload = blob[blob.find(b"\nEND\n") + len(b"\nEND\n"):]
    want = b"".join(
        np.ascontiguousarray(params[n], dtype="<f4").tobytes()
        for n in sorted(params))
    assert payload == want


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"PNGJUNK\x00\x01rest")
    with pytest.raises(CodecError):
        checkpoint.load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=0)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(CodecError, match="payload"):
        checkpoint.load_checkpoint(path)


def test_garbled_tensor_table_rejected(tmp_path):
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=0)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    text = path.read_bytes()
    bad = text.replace(b"tensors ", b"tensors notanumber ", 1)
    path.write_bytes(bad)
    with pytest.raises(CodecError):
        checkpoint.load_checkpoint(path)


def test_count_mismatch_rejected(tmp_path):
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=0)
    path = tmp_path / "w.ckpt"
    checkpoint.save_checkpoint(path, params, cfg)
    blob = path.read_bytes()
    n = len(params)
    bad = blob.replace(f"tensors {n}".encode(), f"tensors {n + 2}".encode(), 1)
    path.write_bytes(bad)
    with pytest.raises(CodecError, match="promises"):
        checkpoint.load_checkpoint(path)


def test_check_layout_flags_mismatches():
    cfg = _small_cfg()
    params = renderer.init_params(cfg, seed=0)
    checkpoint.check_layout(params, cfg)  # clean layout passes

    some = sorted(params)[0]
    missing = dict(params)
    del missing[some]
    with pytest.raises(ShapeError):
        checkpoint.check_layout(missing, cfg)

    extra = dict(params)
    extra["bogus.w"] = np.zeros((1, 1, 1, 1), dtype=np.float32)
    with pytest.raises(ShapeError):
        checkpoint.check_layout(extra, cfg)

    warped = dict(params)
    warped[some] = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(ShapeError):
        checkpoint.check_layout(warped, cfg)


def test_layout_catches_variant_swap(tmp_path):
    cfg = _small_cfg(variant="aprnet")
    params = renderer.init_params(cfg, seed=0)
    other = _small_cfg(variant="baseline")
    with pytest.raises(ShapeError):
        checkpoint.check_layout(params, other)
