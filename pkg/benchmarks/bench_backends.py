"""Compare the compiled and pure-python kernel backends.

Times the four dispatched kernels on realistic shapes, then a full
generator forward pass, under each available backend.  Run from the
repository root:

    python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from textrender import backend, data, renderer, synth


def _time(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases():
    rng = np.random.default_rng(0)
    # padded input for 32x96 output windows: (out-1)*stride + k
    x = rng.standard_normal((65, 193, 64), dtype=np.float32)
    cols = rng.standard_normal((32 * 96, 9 * 64), dtype=np.float32)
    acc = np.zeros((64, 192, 64), dtype=np.float32)
    iy = rng.integers(0, 64, size=20000)
    ix = rng.integers(0, 192, size=20000)
    vals = rng.standard_normal((20000, 64), dtype=np.float32)
    mask = (rng.random((128, 384)) < 0.3).astype(np.uint8)

    img = synth.synth_image(rng, 160, 480)
    trip = data.make_triplet(img, rng, target_h=128, crop_w=384, patch=16)
    cfg = renderer.RenderConfig(variant="aprnet")
    params = renderer.init_params(cfg, seed=0)

    return [
        ("im2col 3x3/s2 65x193x64", lambda: backend.im2col(x, 3, 3, 2, 32, 96)),
        ("col2im 3x3/s2 65x193x64", lambda: backend.col2im_add(cols, 65, 193, 64, 3, 3, 2, 32, 96)),
        ("scatter_add 20k pts", lambda: backend.scatter_add_pixels(acc.copy(), iy, ix, vals)),
        ("thin_subiter 128x384", lambda: backend.thin_subiter(mask.copy(), 0)),
        ("render aprnet 128x384",
         lambda: renderer.render(params, cfg, trip.content, trip.style)),
    ]


def main():
    names = backend.available_backends()
    results = {}
    for name in names:
        backend.use_backend(name)
        results[name] = [(label, _time(fn)) for label, fn in _cases()]
    backend.use_backend(backend._initial())

    width = max(len(label) for label, _ in results[names[0]])
    header = f"{'kernel':<{width}}" + "".join(f"{n:>12s}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for i, (label, _) in enumerate(results[names[0]]):
        row = f"{label:<{width}}"
        times = [results[n][i][1] for n in names]
        for t in times:
            row += f"{t * 1e3:>10.2f}ms"
        if len(times) == 2:
            slow, fast = max(times), min(times)
            tag = names[times.index(fast)][0]
            row += f"{slow / fast:>8.2f}x {tag}"
        print(row)


if __name__ == "__main__":
    main()
