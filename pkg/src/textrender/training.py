"""Losses and a small adversarial training loop.

The generator objective is a weighted sum of three terms: mean L1 to the
target, a multi-scale feature-matching MSE through a fixed random convnet
(stands in for a pretrained perceptual extractor, so the package needs no
external weight file), and a per-pixel adversarial term on a patch-logit
discriminator.  The trainer alternates generator and discriminator steps
with Adam and logs every step's components.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import encoders, renderer
from .errors import ConfigError, ShapeError, TrainingError

DISC_CHANNELS = (32, 64, 128)
DISC_STRIDES = (2, 2, 2, 1)
PERC_CHANNELS = (16, 32, 64, 128, 128)
PERC_STRIDES = (1, 2, 2, 2, 2)
# the perceptual extractor is frozen and self-seeded so its features do
# not shift when the experiment seed changes
PERC_SEED = 1234


@dataclass
class LossWeights:
    content: float = 10.0
    perceptual: float = 1.0
    adversarial: float = 1.0

    def __post_init__(self):
        for name in ("content", "perceptual", "adversarial"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        if self.content == 0 and self.perceptual == 0 \
                and self.adversarial == 0:
            raise ConfigError("at least one loss weight must be positive")


def init_discriminator(rng, params, prefix="disc"):
    """4 strided 3x3 convs, 3 -> 32 -> 64 -> 128 -> 1 patch logits."""
    prev = 3
    for i, ch in enumerate(DISC_CHANNELS):
        encoders.conv_init(rng, params, f"{prefix}.c{i}", ch, 3, 3, prev)
        prev = ch
    encoders.conv_init(rng, params, f"{prefix}.out", 1, 3, 3, prev)


def discriminate(params, img, prefix="disc"):
    """Patch logits at 1/8 resolution, (h/8, w/8, 1)."""
    x = img if isinstance(img, ad.Var) else ad.Var(np.asarray(img))
    for i in range(len(DISC_CHANNELS)):
        x = ad.leaky_relu(
            ad.conv2d(x, params[f"{prefix}.c{i}.w"], stride=DISC_STRIDES[i],
                      bias=params[f"{prefix}.c{i}.b"]), 0.2)
    return ad.conv2d(x, params[f"{prefix}.out.w"], stride=DISC_STRIDES[3],
                     bias=params[f"{prefix}.out.b"])


class PerceptualNet:
    """Fixed random 5-stage feature extractor; weights never train."""

    def __init__(self, seed=PERC_SEED):
        rng = np.random.default_rng(seed)
        self.params = {}
        prev = 3
        for i, ch in enumerate(PERC_CHANNELS):
            encoders.conv_init(rng, self.params, f"p{i}", ch, 3, 3, prev)
            prev = ch

    def features(self, img):
        x = img if isinstance(img, ad.Var) else ad.Var(np.asarray(img))
        feats = []
        for i, stride in enumerate(PERC_STRIDES):
            x = ad.leaky_relu(
                ad.conv2d(x, self.params[f"p{i}.w"], stride=stride,
                          bias=self.params[f"p{i}.b"]), 0.2)
            feats.append(x)
        return feats


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"loss inputs disagree: {a.shape} vs {b.shape}")


def content_loss(rendered, target):
    """Mean absolute difference."""
    _check_pair(rendered, target)
    return ad.vmean(ad.absolute(rendered - target))


def perceptual_loss(rendered, target, net):
    """Sum over stages of the per-stage feature MSE."""
    _check_pair(rendered, target)
    return feature_loss(net.features(rendered), net.features(target))


def feature_loss(feats_a, feats_b):
    total = None
    for fa, fb in zip(feats_a, feats_b):
        term = ad.vmean(ad.square(fa - fb))
        total = term if total is None else total + term
    return total


def bce_with_logits(logits, label):
    """Mean binary cross-entropy against a constant 0/1 label.

    Written as relu(z) - z*t + log(1 + exp(-|z|)), which is finite for
    any logit magnitude.
    """
    z = logits
    return ad.vmean(ad.relu(z) - z * float(label)
                    + ad.log(ad.exp(-ad.absolute(z)) + 1.0))


def adversarial_losses(disc, rendered, target):
    """(generator term, discriminator term) from a patch-logit critic.

    ``disc`` maps an image Var to a logit map Var.  The generator term
    pushes the rendered image's logits toward the real label; the
    discriminator term averages the real side and the detached-fake
    side, so its gradient never reaches the generator.
    """
    fake_logits = disc(rendered)
    real_logits = disc(target)
    for t in (fake_logits, real_logits):
        if not np.isfinite(t.data).all():
            raise TrainingError("discriminator produced non-finite logits")
    g_loss = bce_with_logits(fake_logits, 1.0)
    fake_detached = disc(rendered.detach())
    d_loss = (bce_with_logits(real_logits, 1.0)
              + bce_with_logits(fake_detached, 0.0)) * 0.5
    return g_loss, d_loss


def total_loss(l_content, l_perceptual, l_adversarial, weights):
    """Weighted sum, exactly linear in each term; zero-weight terms may
    be passed as None and are skipped."""
    total = None
    for w, term in ((weights.content, l_content),
                    (weights.perceptual, l_perceptual),
                    (weights.adversarial, l_adversarial)):
        if w == 0 or term is None:
            continue
        part = term * float(w)
        total = part if total is None else total + part
    if total is None:
        raise ConfigError("all loss terms disabled")
    return total


class Adam:
    """Moment-based optimizer over a dict of named arrays."""

    def __init__(self, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = {}

    def step(self, params, grads):
        """In-place update of params from same-keyed gradient arrays."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            if g is None:
                continue
            p = params[name]
            if name not in self.state:
                self.state[name] = (np.zeros_like(p), np.zeros_like(p))
            m, v = self.state[name]
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mh = m / (1 - b1 ** self.t)
            vh = v / (1 - b2 ** self.t)
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class TrainResult:
    params: dict
    d_params: dict
    curve: list = field(default_factory=list)


def _grads_of(pvars):
    return {k: v.grad for k, v in pvars.items()}


def train(cfg, triplets, steps, seed=0, weights=None, lr=2e-4, batch=2,
          log=None):
    """Fit a variant to triplets; returns final params plus the loss curve.

    Each curve entry is a dict with the step index and every loss
    component as plain floats.  With the adversarial weight at 0 the
    whole run is deterministic for a fixed seed.
    """
    if not triplets:
        raise ConfigError("training needs at least one triplet")
    if batch < 1:
        raise ConfigError(f"batch must be >= 1, got {batch}")
    weights = weights or LossWeights()
    rng = np.random.default_rng(seed)
    params = renderer.init_params(cfg, seed=seed)
    opt_g = Adam(lr=lr)

    d_params, opt_d = {}, None
    if weights.adversarial > 0:
        init_discriminator(rng, d_params, "disc")
        opt_d = Adam(lr=lr)
    pnet = PerceptualNet() if weights.perceptual > 0 else None
    # target features never change, compute them once per triplet
    gt_feats = None
    if pnet is not None:
        gt_feats = [[f.data for f in pnet.features(t.gt)] for t in triplets]

    curve = []
    for step in range(steps):
        idx = rng.integers(len(triplets), size=batch)
        pvars = renderer.param_vars(params)
        dvars = renderer.param_vars(d_params) if d_params else {}
        disc = lambda img: discriminate(dvars, img)

        lc = lp = la = ld = None
        for j in idx:
            t = triplets[int(j)]
            # losses see the raw stage sum: clipping it first would zero the
            # gradient of every out-of-range pixel and can stall training
            # outright once the render saturates (clip only at export time)
            rendered = renderer.render_vars(pvars, cfg, t.content, t.style)["out"]
            gt = ad.Var(t.gt)
            if weights.content > 0:
                term = content_loss(rendered, gt)
                lc = term if lc is None else lc + term
            if pnet is not None:
                term = feature_loss(pnet.features(rendered),
                                    [ad.Var(f) for f in gt_feats[int(j)]])
                lp = term if lp is None else lp + term
            if dvars:
                g_term, d_term = adversarial_losses(disc, rendered, gt)
                la = g_term if la is None else la + g_term
                ld = d_term if ld is None else ld + d_term

        inv = 1.0 / batch
        lc = lc * inv if lc is not None else None
        lp = lp * inv if lp is not None else None
        la = la * inv if la is not None else None
        ld = ld * inv if ld is not None else None
        loss = total_loss(lc, lp, la, weights)

        entry = {"step": step, "total": loss.item(),
                 "content": lc.item() if lc is not None else 0.0,
                 "perceptual": lp.item() if lp is not None else 0.0,
                 "adversarial": la.item() if la is not None else 0.0,
                 "d_loss": ld.item() if ld is not None else 0.0}
        if not all(math.isfinite(v) for v in entry.values()):
            raise TrainingError(
                f"training diverged at step {step}: "
                + ", ".join(f"{k}={v:.4g}" for k, v in entry.items()
                            if k != "step"))

        loss.backward()
        opt_g.step(params, _grads_of(pvars))
        if dvars:
            # the generator objective also backpropagated into the critic;
            # clear that before the critic's own update
            for v in dvars.values():
                v.grad = None
            ld.backward()
            opt_d.step(d_params, _grads_of(dvars))

        curve.append(entry)
        if log is not None:
            log(entry)
    return TrainResult(params=params, d_params=d_params, curve=curve)
