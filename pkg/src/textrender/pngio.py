"""Minimal PNG reader/writer built on zlib.

Reads 8-bit grayscale, RGB and RGBA (color types 0, 2, 6) with all five
scanline filters; writes 8-bit RGB or RGBA with filter 0.  Interlacing,
palettes and 16-bit depths are rejected.  Keeping this in-package lets the
test suite use an unrelated decoder as a cross-check instead of depending
on one for correctness.
"""

import struct
import zlib

import numpy as np

from .errors import CodecError

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_CHANNELS = {0: 1, 2: 3, 6: 4}


def _chunks(blob):
    pos = 8
    while pos < len(blob):
        if pos + 8 > len(blob):
            raise CodecError("truncated chunk header")
        length, ctype = struct.unpack(">I4s", blob[pos:pos + 8])
        data = blob[pos + 8: pos + 8 + length]
        if len(data) != length or pos + 12 + length > len(blob):
            raise CodecError(f"truncated {ctype!r} chunk")
        crc = struct.unpack(">I", blob[pos + 8 + length: pos + 12 + length])[0]
        if zlib.crc32(ctype + data) & 0xFFFFFFFF != crc:
            raise CodecError(f"bad CRC in {ctype!r} chunk")
        yield ctype, data
        pos += 12 + length


def _unfilter(raw, h, w, ch):
    stride = w * ch
    img = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    pos = 0
    for row in range(h):
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).copy()
        pos += 1 + stride
        if ftype == 0:
            pass
        elif ftype == 1:
            vals = line.tolist()
            for x in range(ch, stride):
                vals[x] = (vals[x] + vals[x - ch]) & 0xFF
            line = np.asarray(vals, dtype=np.uint8)
        elif ftype == 2:
            line += prev
        elif ftype == 3:
            vals = line.tolist()
            up = prev.tolist()
            for x in range(stride):
                left = vals[x - ch] if x >= ch else 0
                vals[x] = (vals[x] + ((left + up[x]) >> 1)) & 0xFF
            line = np.asarray(vals, dtype=np.uint8)
        elif ftype == 4:
            vals = line.tolist()
            up = prev.tolist()
            for x in range(stride):
                a = vals[x - ch] if x >= ch else 0
                b = up[x]
                c = up[x - ch] if x >= ch else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                vals[x] = (vals[x] + pred) & 0xFF
            line = np.asarray(vals, dtype=np.uint8)
        else:
            raise CodecError(f"unknown scanline filter {ftype}")
        img[row] = line
        prev = line
    return img.reshape(h, w, ch)


def read_png(path):
    """Decode a PNG file to a (h, w, c) uint8 array, c in {1, 3, 4}."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _SIGNATURE:
        raise CodecError(f"{path}: not a PNG file")
    header = None
    idat = []
    for ctype, data in _chunks(blob):
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", data)
        elif ctype == b"IDAT":
            idat.append(data)
        elif ctype == b"IEND":
            break
    if header is None:
        raise CodecError(f"{path}: missing IHDR")
    w, h, depth, ctype_id, comp, filt, interlace = header
    if depth != 8:
        raise CodecError(f"{path}: only 8-bit depth supported, got {depth}")
    if ctype_id not in _CHANNELS:
        raise CodecError(f"{path}: unsupported color type {ctype_id}")
    if comp != 0 or filt != 0:
        raise CodecError(f"{path}: nonstandard compression/filter method")
    if interlace != 0:
        raise CodecError(f"{path}: interlaced PNGs not supported")
    if not idat:
        raise CodecError(f"{path}: no image data")
    ch = _CHANNELS[ctype_id]
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as e:
        raise CodecError(f"{path}: corrupt image data ({e})") from e
    if len(raw) != h * (w * ch + 1):
        raise CodecError(f"{path}: image data has wrong length")
    return _unfilter(raw, h, w, ch)


def _chunk(ctype, data):
    return (struct.pack(">I", len(data)) + ctype + data
            + struct.pack(">I", zlib.crc32(ctype + data) & 0xFFFFFFFF))


def write_png(path, img):
    """Encode a (h, w, 3|4) uint8 array as RGB or RGBA PNG."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise CodecError(f"write_png needs uint8 data, got {img.dtype}")
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise CodecError(f"write_png needs (h, w, 3|4) data, got shape {img.shape}")
    h, w, ch = img.shape
    ctype_id = 2 if ch == 3 else 6
    ihdr = struct.pack(">IIBBBBB", w, h, 8, ctype_id, 0, 0, 0)
    body = np.zeros((h, 1 + w * ch), dtype=np.uint8)
    body[:, 1:] = img.reshape(h, w * ch)
    idat = zlib.compress(body.tobytes(), 6)
    with open(path, "wb") as f:
        f.write(_SIGNATURE)
        f.write(_chunk(b"IHDR", ihdr))
        f.write(_chunk(b"IDAT", idat))
        f.write(_chunk(b"IEND", b""))


def load_image01(path):
    """Read a PNG as float32 RGB in [0, 1]; grayscale is replicated, alpha dropped."""
    raw = read_png(path)
    if raw.shape[2] == 1:
        raw = np.repeat(raw, 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    return raw.astype(np.float32) / 255.0


def save_image01(path, img):
    """Write a float image in [0, 1] (values clamped) as 8-bit RGB/RGBA PNG."""
    img = np.asarray(img)
    quant = np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    write_png(path, quant)
