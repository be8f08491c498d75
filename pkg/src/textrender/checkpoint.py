"""Weight checkpoint I/O.

A checkpoint is a plain-text header followed by a flat little-endian
float32 payload.  The header names the model variant and its grid and
projection sizes, then lists every tensor's name and shape in sorted
order; the payload is the tensors' raw values concatenated in that same
order.  Keeping the header readable makes checkpoints inspectable with
head(1) and diffable by name.
"""

import numpy as np

from .errors import CodecError, ShapeError

MAGIC = "TXTRCKPT 1"
_META_INT = ("k", "m", "d_s", "d_f")
_META_FLOAT = ("eps",)
_META_PLAN = ("stage1_plan", "stage2_plan")


def save_checkpoint(path, params, cfg):
    """Write params (dotted-name -> array) and the shaping config."""
    names = sorted(params)
    lines = [MAGIC, f"variant {cfg.variant}"]
    lines += [f"{f} {getattr(cfg, f)}" for f in _META_INT]
    lines += [f"{f} {getattr(cfg, f)!r}" for f in _META_FLOAT]
    lines += [f"{f} {','.join(str(c) for c in getattr(cfg, f))}"
              for f in _META_PLAN]
    lines.append(f"tensors {len(names)}")
    for n in names:
        dims = " ".join(str(d) for d in params[n].shape)
        lines.append(f"{n} {dims}")
    lines.append("END")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        for n in names:
            f.write(np.ascontiguousarray(params[n], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back; returns (params, RenderConfig).

    Every structural problem (bad magic, truncated payload, garbled
    shapes) raises CodecError so callers can distinguish file damage
    from configuration mistakes.
    """
    with open(path, "rb") as f:
        blob = f.read()
    sep = b"\nEND\n"
    cut = blob.find(sep)
    if not blob.startswith(MAGIC.encode("ascii")) or cut < 0:
        raise CodecError(f"{path}: not a weight checkpoint")
    try:
        header = blob[:cut].decode("ascii").splitlines()
    except UnicodeDecodeError as e:
        raise CodecError(f"{path}: header is not ascii text") from e

    meta = {}
    i = 1
    while i < len(header) and not header[i].startswith("tensors "):
        key, _, val = header[i].partition(" ")
        meta[key] = val
        i += 1
    if i == len(header):
        raise CodecError(f"{path}: header has no tensor table")
    try:
        n_tensors = int(header[i].split()[1])
        entries = []
        for line in header[i + 1:]:
            parts = line.split()
            entries.append((parts[0], tuple(int(d) for d in parts[1:])))
    except (IndexError, ValueError) as e:
        raise CodecError(f"{path}: malformed tensor table") from e
    if len(entries) != n_tensors:
        raise CodecError(f"{path}: header promises {n_tensors} tensors, "
                         f"lists {len(entries)}")

    payload = np.frombuffer(blob[cut + len(sep):], dtype="<f4")
    total = sum(int(np.prod(shape)) for _, shape in entries)
    if payload.size != total:
        raise CodecError(f"{path}: payload holds {payload.size} values, "
                         f"header needs {total}")
    params = {}
    pos = 0
    for name, shape in entries:
        n = int(np.prod(shape))
        params[name] = payload[pos:pos + n].reshape(shape).copy()
        pos += n

    from .renderer import RenderConfig
    try:
        kw = {f: int(meta[f]) for f in _META_INT if f in meta}
        kw.update({f: float(meta[f]) for f in _META_FLOAT if f in meta})
        kw.update({f: tuple(int(c) for c in meta[f].split(","))
                   for f in _META_PLAN if f in meta})
        cfg = RenderConfig(variant=meta.get("variant", ""), **kw)
    except (KeyError, ValueError) as e:
        raise CodecError(f"{path}: bad config header: {e}") from e
    return params, cfg


def check_layout(params, cfg):
    """Verify params carry exactly the tensors cfg's model expects."""
    from .renderer import init_params
    want = init_params(cfg, seed=0)
    missing = sorted(want.keys() - params.keys())
    extra = sorted(params.keys() - want.keys())
    if missing or extra:
        raise ShapeError(f"checkpoint does not fit variant "
                         f"{cfg.variant!r}: missing {missing[:4]}, "
                         f"unexpected {extra[:4]}")
    for name, ref in want.items():
        if params[name].shape != ref.shape:
            raise ShapeError(f"tensor {name} has shape "
                             f"{params[name].shape}, expected {ref.shape}")
