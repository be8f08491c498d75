"""Command-line entry point.

Subcommands: datagen, train, render, metrics, gradcheck, selftest.  Every
subcommand accepts ``--config <path>`` (plain ``key = value`` lines) and
the global ``--threads`` / ``--seed`` flags; explicit flags beat config
entries, which beat built-in defaults.  Exit codes: 0 success, 1 usage
error, 2 runtime error.

Heavy imports happen inside the handlers so ``--threads`` can pin the
BLAS thread pools before numpy first loads.
"""

import argparse
import os
import sys

from .config import int_tuple, load_config, resolve
from .errors import ConfigError, TextRenderError


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this interface reserves 2 for
    runtime failures and uses 1 for usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="plain-text key = value settings file")
    common.add_argument("--threads", type=int, default=None, metavar="N",
                        help="BLAS/OpenMP thread cap (default 1)")
    common.add_argument("--seed", type=int, default=None, metavar="U64",
                        help="random seed (default 0)")
    return common


def build_parser():
    common = _common_flags()
    p = _Parser(prog="textrender",
                description="Skeleton-guided text image rendering toolkit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND",
                           parser_class=_Parser)

    d = sub.add_parser("datagen", parents=[common],
                       help="generate training triplets")
    d.add_argument("--src", required=True,
                   help="directory of PNGs, or synthetic:N")
    d.add_argument("--out", required=True, help="output dataset directory")
    d.add_argument("--count", type=int, default=None,
                   help="cap on triplets written")

    t = sub.add_parser("train", parents=[common], help="fit a variant")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--variant", default=None, help="model variant name")
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--out", required=True, help="checkpoint path to write")
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--lambda-c", dest="lambda_c", type=float, default=None,
                   help="content loss weight")
    t.add_argument("--lambda-p", dest="lambda_p", type=float, default=None,
                   help="perceptual loss weight")
    t.add_argument("--lambda-a", dest="lambda_a", type=float, default=None,
                   help="adversarial loss weight")
    t.add_argument("--log-every", type=int, default=None, metavar="N",
                   help="print losses every N steps (default 1)")

    r = sub.add_parser("render", parents=[common],
                       help="render one content/style pair")
    r.add_argument("--content", required=True, help="skeleton PNG")
    r.add_argument("--style", required=True, help="appearance PNG")
    r.add_argument("--variant", default=None,
                   help="must match the checkpoint when given")
    r.add_argument("--weights", required=True, help="checkpoint path")
    r.add_argument("--out", required=True, help="output PNG")
    r.add_argument("--attention-out", dest="attention_out", default=None,
                   metavar="PNG",
                   help="also write the first fused site's level weights "
                        "as a 4-channel image")

    m = sub.add_parser("metrics", parents=[common],
                       help="PSNR/SSIM report over a dataset")
    m.add_argument("--data", required=True, help="dataset directory")
    m.add_argument("--weights", required=True, help="checkpoint path")
    m.add_argument("--variant", default=None,
                   help="must match the checkpoint when given")

    g = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference gradient table")
    g.add_argument("--only", nargs="*", default=None, metavar="CASE",
                   help="run just these cases")

    sub.add_parser("selftest", parents=[common],
                   help="run the built-in invariant checks")
    return p


def _apply_threads(args, opts):
    n = resolve(getattr(args, "threads", None), opts, "threads", 1, int)
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _opts(args):
    return load_config(args.config) if args.config else {}


def _render_config(opts, variant):
    from .renderer import STAGE1_PLAN, STAGE2_PLAN, RenderConfig
    return RenderConfig(
        variant=variant,
        k=resolve(None, opts, "k", 5, int),
        m=resolve(None, opts, "m", 4, int),
        d_s=resolve(None, opts, "d_s", 64, int),
        d_f=resolve(None, opts, "d_f", 64, int),
        eps=resolve(None, opts, "eps", 1e-8, float),
        stage1_plan=resolve(None, opts, "stage1_plan", STAGE1_PLAN,
                            int_tuple),
        stage2_plan=resolve(None, opts, "stage2_plan", STAGE2_PLAN,
                            int_tuple))


def _load_checkpoint(args, opts):
    from . import checkpoint
    params, cfg = checkpoint.load_checkpoint(args.weights)
    asked = resolve(args.variant, opts, "variant", None)
    if asked is not None and asked != cfg.variant:
        raise ConfigError(f"checkpoint holds variant {cfg.variant!r}, "
                          f"--variant asked for {asked!r}")
    checkpoint.check_layout(params, cfg)
    return params, cfg


def _cmd_datagen(args, opts):
    from . import data
    n = data.generate_dataset(
        args.src, args.out,
        seed=resolve(args.seed, opts, "seed", 0, int),
        count=resolve(args.count, opts, "count", None, int),
        target_h=resolve(None, opts, "target_h", 128, int),
        crop_w=resolve(None, opts, "crop_w", 384, int),
        patch=resolve(None, opts, "patch", 16, int))
    print(f"wrote {n} triplets under {args.out}")
    return 0


def _cmd_train(args, opts):
    from . import checkpoint, data, training
    variant = resolve(args.variant, opts, "variant", "aprnet")
    cfg = _render_config(opts, variant)
    weights = training.LossWeights(
        content=resolve(args.lambda_c, opts, "lambda_c", 10.0, float),
        perceptual=resolve(args.lambda_p, opts, "lambda_p", 1.0, float),
        adversarial=resolve(args.lambda_a, opts, "lambda_a", 1.0, float))
    steps = resolve(args.steps, opts, "steps", 1000, int)
    every = max(1, resolve(args.log_every, opts, "log_every", 1, int))
    trips = data.load_triplets(args.data)

    def log(entry):
        if entry["step"] % every == 0 or entry["step"] == steps - 1:
            print(f"step {entry['step']:5d}  total {entry['total']:.5f}  "
                  f"content {entry['content']:.5f}  "
                  f"perceptual {entry['perceptual']:.5f}  "
                  f"adversarial {entry['adversarial']:.5f}  "
                  f"d {entry['d_loss']:.5f}")

    result = training.train(
        cfg, trips, steps,
        seed=resolve(args.seed, opts, "seed", 0, int),
        weights=weights,
        lr=resolve(args.lr, opts, "lr", 2e-4, float),
        batch=resolve(args.batch, opts, "batch", 2, int),
        log=log)
    checkpoint.save_checkpoint(args.out, result.params, cfg)
    print(f"saved {variant} checkpoint to {args.out} "
          f"({len(result.params)} tensors, {steps} steps)")
    return 0


def _cmd_render(args, opts):
    from . import pngio, renderer
    params, cfg = _load_checkpoint(args, opts)
    content = pngio.load_image01(args.content)
    style = pngio.load_image01(args.style)
    out = renderer.render(params, cfg, content, style)
    pngio.save_image01(args.out, out)
    print(f"wrote {args.out} ({out.shape[1]}x{out.shape[0]})")
    if args.attention_out:
        amap = renderer.render_attention(params, cfg, content, style)
        pngio.save_image01(args.attention_out, amap)
        print(f"wrote {args.attention_out} "
              f"({amap.shape[1]}x{amap.shape[0]}, {amap.shape[2]} channels)")
    return 0


def _cmd_metrics(args, opts):
    from . import metrics
    params, cfg = _load_checkpoint(args, opts)
    report = metrics.evaluate_checkpoint(args.data, params, cfg)
    print(f"{'variant':<22s}{'PSNR':>8s}{'SSIM':>8s}")
    print(f"{cfg.variant:<22s}{report['psnr']:>8.2f}{report['ssim']:>8.4f}")
    print(f"({report['count']} triplets)")
    return 0


def _cmd_gradcheck(args, opts):
    from . import selfcheck
    names = None
    if args.only:
        known = set(selfcheck.gradcheck_names())
        bad = [n for n in args.only if n not in known]
        if bad:
            raise ConfigError(f"unknown gradcheck cases: {', '.join(bad)}; "
                              f"known: {', '.join(sorted(known))}")
        names = set(args.only)
    rows = selfcheck.run_gradchecks(names=names)
    print(f"{'case':<26s}{'max rel err':>12s}  result")
    for name, ok, err in rows:
        print(f"{name:<26s}{err:>12.2e}  {'PASS' if ok else 'FAIL'}")
    failed = [name for name, ok, _ in rows if not ok]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed")
    return 0 if not failed else 2


def _cmd_selftest(args, opts):
    from . import selfcheck
    rows = selfcheck.run_selftest()
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = [name for name, ok, _ in rows if not ok]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed")
    return 0 if not failed else 2


_DISPATCH = {
    "datagen": _cmd_datagen,
    "train": _cmd_train,
    "render": _cmd_render,
    "metrics": _cmd_metrics,
    "gradcheck": _cmd_gradcheck,
    "selftest": _cmd_selftest,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse printed its message; keep main() usable in-process
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        opts = _opts(args)
        _apply_threads(args, opts)
        return _DISPATCH[args.command](args, opts)
    except (TextRenderError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
