"""Synthetic scene-text-like image generation.

Produces small images of dark polyline strokes over light gradient or
speckled backgrounds.  These stand in for photographed text when no source
corpus is available: dark thin foreground on a lighter, mildly textured
ground is the regime the binarizer and skeletonizer expect.
"""

import numpy as np


def _background(rng, h, w):
    c0 = rng.uniform(0.55, 0.95, size=3)
    c1 = rng.uniform(0.55, 0.95, size=3)
    if rng.random() < 0.5:
        t = np.linspace(0.0, 1.0, h)[:, None, None]
    else:
        t = np.linspace(0.0, 1.0, w)[None, :, None]
    bg = c0 * (1.0 - t) + c1 * t
    bg = np.broadcast_to(bg, (h, w, 3)).copy()
    if rng.random() < 0.7:
        bg += rng.normal(0.0, 0.02, size=(h, w, 1))
    return np.clip(bg, 0.0, 1.0)


def _stamp_disk(img, cy, cx, radius, color):
    h, w = img.shape[:2]
    y0, y1 = max(cy - radius, 0), min(cy + radius + 1, h)
    x0, x1 = max(cx - radius, 0), min(cx + radius + 1, w)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    hit = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius
    img[y0:y1, x0:x1][hit] = color


def _draw_polyline(rng, img, color, thickness):
    h, w = img.shape[:2]
    my, mx = max(h // 8, 1), max(w // 8, 1)
    npts = int(rng.integers(2, 5))
    ys = rng.integers(my, h - my, size=npts)
    xs = rng.integers(mx, w - mx, size=npts)
    radius = max(thickness // 2, 0)
    for (y0, x0, y1, x1) in zip(ys[:-1], xs[:-1], ys[1:], xs[1:]):
        steps = int(max(abs(int(y1) - int(y0)), abs(int(x1) - int(x0)), 1)) * 2
        for t in np.linspace(0.0, 1.0, steps + 1):
            cy = int(round(y0 + t * (int(y1) - int(y0))))
            cx = int(round(x0 + t * (int(x1) - int(x0))))
            _stamp_disk(img, cy, cx, radius, color)


def synth_image(rng, height, width):
    """One random stroke image as float32 (height, width, 3) in [0, 1]."""
    img = _background(rng, height, width)
    strokes = int(rng.integers(2, 6))
    for _ in range(strokes):
        color = rng.uniform(0.0, 0.25, size=3)
        thickness = int(rng.integers(1, 4))
        _draw_polyline(rng, img, color, thickness)
    return img.astype(np.float32)
