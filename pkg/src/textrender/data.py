"""Training data shaping.

Each training example is a triplet derived from one ground-truth text
image: the geometry input is its binarized skeleton, the appearance input
is a patch-shuffled self-crop of the same image, and the target is the
image itself.  The shuffle destroys glyph geometry while keeping local
texture, so a model cannot satisfy the appearance branch by copying.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend, pngio, synth
from .errors import DomainError, ShapeError
from .kernels import resize_bilinear

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def to_gray(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected (h, w, 3) image, got {img.shape}")
    r, g, b = GRAY_WEIGHTS
    return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]


def binarize_adaptive(gray, window=31, offset=0.06):
    """Foreground mask: pixel is ink iff darker than its local mean by ``offset``.

    The local mean is over a window x window box clipped at the borders,
    computed with an integral image.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ShapeError(f"binarize expects a 2-D gray image, got {gray.shape}")
    if window < 1 or window % 2 == 0:
        raise DomainError(f"window must be odd and positive, got {window}")
    h, w = gray.shape
    r = window // 2
    ii = np.zeros((h + 1, w + 1))
    ii[1:, 1:] = np.cumsum(np.cumsum(gray, axis=0), axis=1)
    y0 = np.clip(np.arange(h) - r, 0, None)
    y1 = np.minimum(np.arange(h) + r + 1, h)
    x0 = np.clip(np.arange(w) - r, 0, None)
    x1 = np.minimum(np.arange(w) + r + 1, w)
    sums = ii[y1][:, x1] - ii[y0][:, x1] - ii[y1][:, x0] + ii[y0][:, x0]
    area = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return (gray < sums / area - offset).astype(np.uint8)


def skeletonize(mask):
    """Iterative two-phase parallel thinning until no pixel changes."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"skeletonize expects a 2-D mask, got {mask.shape}")
    m = np.ascontiguousarray((mask != 0).astype(np.uint8))
    while True:
        deleted = backend.thin_subiter(m, 0)
        deleted += backend.thin_subiter(m, 1)
        if deleted == 0:
            return m


def skeleton_image(img):
    """Skeleton of a photo as a drawable image: black strokes on white."""
    skel = skeletonize(binarize_adaptive(to_gray(img)))
    out = np.where(skel[:, :, None] != 0, 0.0, 1.0)
    return np.repeat(out, 3, axis=2).astype(np.float32)


@dataclass
class ShuffleRecord:
    """Replayable log of one patch shuffle.

    ``partner`` holds, per raster-order patch index, the flat index it was
    swapped with (-1 when it stayed put); a swapped pair points at each
    other, so the mapping is an involution.  ``rotation`` holds each
    source patch's rotation in degrees.  The output cell p receives the
    input patch partner[p] rotated by rotation[partner[p]].
    """
    grid: tuple
    patch: int
    rotation: np.ndarray
    partner: np.ndarray


def apply_shuffle(img, record):
    """Rebuild the shuffled image from its record."""
    img = np.asarray(img)
    gh, gw = record.grid
    p = record.patch
    if img.shape[:2] != (gh * p, gw * p):
        raise ShapeError(f"image {img.shape} does not match record grid "
                         f"{record.grid} of {p}x{p} patches")
    out = np.empty_like(img)
    for dst in range(gh * gw):
        src = int(record.partner[dst])
        if src < 0:
            src = dst
        sy, sx = divmod(src, gw)
        gy, gx = divmod(dst, gw)
        tile = img[sy * p:(sy + 1) * p, sx * p:(sx + 1) * p]
        k = (int(record.rotation[src]) // 90) % 4
        out[gy * p:(gy + 1) * p, gx * p:(gx + 1) * p] = (
            np.rot90(tile, k) if k else tile)
    return out


def single_crop(img, rng, patch=16, rotation_choices=(0, 90, 180, 270),
                swap_prob=0.5):
    """Shuffle an image's texture by per-patch rotation and neighbor swaps.

    The grid of patch x patch cells is scanned in raster order; each cell
    not yet paired flips a coin and, on success, pairs with a uniformly
    chosen unpaired 8-neighbor.  The pairing is an involution, so the
    output is a permutation of rotated input patches: every input patch
    appears exactly once.  With rotation_choices=(0,) and swap_prob=0 the
    output is byte-identical to the input.

    Returns the shuffled image and the ShuffleRecord that reproduces it.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ShapeError(f"single_crop expects (h, w, c), got {img.shape}")
    h, w = img.shape[:2]
    if patch < 1 or h % patch or w % patch:
        raise DomainError(f"image {h}x{w} not divisible into {patch}x{patch} patches")
    if not rotation_choices or any(a % 90 for a in rotation_choices):
        raise DomainError(f"rotations must be multiples of 90, got {rotation_choices}")
    if not 0.0 <= swap_prob <= 1.0:
        raise DomainError(f"swap_prob must be in [0, 1], got {swap_prob}")
    gh, gw = h // patch, w // patch

    partner = np.full(gh * gw, -1, dtype=np.int64)
    for gy in range(gh):
        for gx in range(gw):
            if partner[gy * gw + gx] >= 0:
                continue
            if rng.random() >= swap_prob:
                continue
            nbrs = [(gy + dy, gx + dx)
                    for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                    if (dy or dx)
                    and 0 <= gy + dy < gh and 0 <= gx + dx < gw
                    and partner[(gy + dy) * gw + gx + dx] < 0]
            if not nbrs:
                continue
            oy, ox = nbrs[int(rng.integers(len(nbrs)))]
            partner[gy * gw + gx] = oy * gw + ox
            partner[oy * gw + ox] = gy * gw + gx

    choices = np.asarray(rotation_choices, dtype=np.int64)
    rotation = choices[rng.integers(len(choices), size=gh * gw)]

    record = ShuffleRecord(grid=(gh, gw), patch=patch, rotation=rotation,
                           partner=partner)
    return apply_shuffle(img, record), record


def resize_keep_aspect_then_crop(img, rng, target_h=128, crop_w=384):
    """Scale to target height keeping aspect, then cut a random-offset
    window of the requested width (edge-replicate on the right when the
    scaled image is too narrow)."""
    img = np.asarray(img)
    if img.ndim != 3:
        raise ShapeError(f"expected (h, w, c), got {img.shape}")
    if target_h < 1 or crop_w < 1:
        raise DomainError(f"bad target size {(target_h, crop_w)}")
    h, w = img.shape[:2]
    new_w = max(int(round(w * target_h / h)), 1)
    scaled = resize_bilinear(img, target_h, new_w)
    if new_w >= crop_w:
        x0 = int(rng.integers(new_w - crop_w + 1))
        return np.ascontiguousarray(scaled[:, x0:x0 + crop_w])
    return np.pad(scaled, ((0, 0), (0, crop_w - new_w), (0, 0)), mode="edge")


@dataclass
class TrainingTriplet:
    """Geometry input, shuffled appearance input, and the shared target."""
    content: np.ndarray
    style: np.ndarray
    gt: np.ndarray


def make_triplet(img, rng, target_h=128, crop_w=384, patch=16,
                 rotation_choices=(0, 90, 180, 270), swap_prob=0.5):
    if target_h % 8 or crop_w % 8:
        raise DomainError(f"target size {(target_h, crop_w)} must be divisible by 8")
    gt = resize_keep_aspect_then_crop(img, rng, target_h, crop_w).astype(np.float32)
    gt = np.clip(gt, 0.0, 1.0)
    content = skeleton_image(gt)
    style, _ = single_crop(gt, rng, patch=patch, rotation_choices=rotation_choices,
                           swap_prob=swap_prob)
    return TrainingTriplet(content=content, style=style, gt=gt)


def _source_images(src, count, seed, target_h, crop_w):
    if src.startswith("synthetic:"):
        n = int(src.split(":", 1)[1])
        if count is not None:
            n = min(n, count)
        for i in range(n):
            rng = np.random.default_rng(seed + i)
            # draw at 2x target then let the shaping path downscale
            yield i, "synthetic", synth.synth_image(rng, target_h * 2, crop_w * 2), rng
        return
    paths = sorted(Path(src).glob("*.png"))
    if not paths:
        raise DomainError(f"no .png images found in {src}")
    if count is not None:
        paths = paths[:count]
    for i, p in enumerate(paths):
        yield i, p.name, pngio.load_image01(p), np.random.default_rng(seed + i)


def generate_dataset(src, out_dir, seed=0, count=None, target_h=128, crop_w=384,
                     patch=16):
    """Write a triplet dataset: {content,style,gt}/NNNNNN.png plus manifest.txt.

    ``src`` is either a directory of PNGs or "synthetic:N".  Each image gets
    its own generator seeded seed + index, so any prefix of the dataset is
    reproducible independently of the rest.  The manifest lists one
    "index source seed" line per triplet.  Returns the number written.
    """
    out = Path(out_dir)
    for sub in ("content", "style", "gt"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for i, name, img, rng in _source_images(src, count, seed, target_h, crop_w):
        trip = make_triplet(img, rng, target_h=target_h, crop_w=crop_w, patch=patch)
        for sub, arr in (("content", trip.content), ("style", trip.style),
                         ("gt", trip.gt)):
            pngio.save_image01(out / sub / f"{i:06d}.png", arr)
        lines.append(f"{i:06d} {name} {seed + i}\n")
    with open(out / "manifest.txt", "w") as f:
        f.writelines(lines)
    return len(lines)


def load_triplets(data_dir):
    """Read a generated dataset back as float32 triplets."""
    root = Path(data_dir)
    names = sorted(p.name for p in (root / "content").glob("*.png"))
    if not names:
        raise DomainError(f"no triplets under {data_dir}")
    trips = []
    for name in names:
        trips.append(TrainingTriplet(
            content=pngio.load_image01(root / "content" / name),
            style=pngio.load_image01(root / "style" / name),
            gt=pngio.load_image01(root / "gt" / name)))
    return trips
