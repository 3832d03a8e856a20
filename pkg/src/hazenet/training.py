"""Optimization: Charbonnier objective on both stages, Adam with a cyclic
triangular learning-rate schedule (momentum cycled in anti-phase), and the
seeded patch-sampling training loop."""

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import NumericalError, ShapeMismatch, TrainingDiverged
from .hazegen import augment, extract_patches
from .metrics import psnr
from .rng import SplitMix64, hash64
from .tensor import Tensor, set_debug_checks


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 4
    patch: int = 64
    lr_base: float = 2e-4
    lr_max: float = 3e-4
    momentum_base: float = 0.8
    momentum_max: float = 0.9
    cycle_half_steps: int = 500
    eps_charbonnier: float = 1e-3
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.lr_base > self.lr_max:
            raise ValueError("lr_base must not exceed lr_max")
        if not 0.0 < self.momentum_base <= self.momentum_max < 1.0:
            raise ValueError("momenta must satisfy 0 < base <= max < 1")
        if self.eps_charbonnier <= 0:
            raise ValueError("eps_charbonnier must be positive")
        if self.patch % 4:
            raise ShapeMismatch(f"patch size must be divisible by 4, got {self.patch}")

    @classmethod
    def from_kv(cls, kv):
        kwargs = {}
        for f in fields(cls):
            if f.name in kv:
                kwargs[f.name] = type(f.default)(kv[f.name]) if not isinstance(f.default, int) \
                    else int(float(kv[f.name]))
        return cls(**kwargs)


def charbonnier(x, y, eps=1e-3):
    """mean(sqrt((x - y)^2 + eps^2)); smooth everywhere, >= eps, = eps iff x == y."""
    if x.shape != y.shape:
        raise ShapeMismatch(f"loss inputs differ in shape: {x.shape} vs {y.shape}")
    if eps <= 0:
        raise ValueError("charbonnier eps must be positive")
    d = x - y
    return T.sqrt(d * d + eps * eps).mean()


def total_loss(pseudo, final, gt, eps=1e-3):
    """Both restoration stages supervised by the same ground truth."""
    return charbonnier(pseudo, gt, eps) + charbonnier(final, gt, eps)


def cyclic_lr(step, cfg):
    """Triangular schedule: returns (lr, beta1) with momentum in anti-phase."""
    if step < 0:
        raise ValueError("step must be >= 0")
    period = 2 * cfg.cycle_half_steps
    phase = step % period
    frac = phase / cfg.cycle_half_steps
    if frac > 1.0:
        frac = 2.0 - frac
    lr = cfg.lr_base + frac * (cfg.lr_max - cfg.lr_base)
    beta1 = cfg.momentum_max - frac * (cfg.momentum_max - cfg.momentum_base)
    return lr, beta1


class Adam:
    """Standard Adam with bias correction; beta1 may change step to step."""

    def __init__(self, params, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr, beta1=0.9):
        for p in self.params:
            if p.grad is None:
                raise ValueError(
                    f"parameter {getattr(p, 'name', '?')!r} has no gradient; run backward first")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            update = (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)
            p.data = p.data - lr * update
            p.grad = None


def sample_batch(items, cfg, step):
    """Deterministic batch assembly: scene choice, crop, rotation, flip."""
    rng = SplitMix64(hash64(cfg.seed, step, 0xB47C8))
    hazy, clean = [], []
    for b in range(cfg.batch):
        _, pair = items[rng.randint(len(items))]
        patch = extract_patches(pair, size=cfg.patch, count=1, seed=rng.next_u64())[0]
        patch = augment(patch, ("none", "rot90", "rot180", "rot270")[rng.randint(4)])
        patch = augment(patch, ("none", "hflip")[rng.randint(2)])
        hazy.append(patch.hazy)
        clean.append(patch.clean)
    return np.stack(hazy), np.stack(clean)


def _diagnose_nan(model, hazy, gt, eps, step):
    prev = set_debug_checks(True)
    try:
        out = model(Tensor(hazy))
        total_loss(out.pseudo, out.final, Tensor(gt), eps)
    except NumericalError as e:
        raise TrainingDiverged(
            f"non-finite loss at step {step}; first non-finite op: {e.op!r}") from e
    finally:
        set_debug_checks(prev)
    raise TrainingDiverged(f"non-finite loss at step {step} (not reproducible op-by-op)")


@dataclass
class TrainResult:
    log_rows: list          # (step, lr, loss, psnr) as logged
    final_loss: float
    checkpoint_path: str


def train_loop(model, items, cfg, ckpt_path=None, log_path=None):
    """Seeded training loop; logs `step lr loss psnr` rows and checkpoints at the end."""
    if not items:
        raise ShapeMismatch("training items list is empty")
    opt = Adam(model.parameters())
    rows = []
    loss_value = float("nan")
    for step in range(cfg.steps):
        lr, beta1 = cyclic_lr(step, cfg)
        hazy, gt = sample_batch(items, cfg, step)
        try:
            out = model(Tensor(hazy))
            loss = total_loss(out.pseudo, out.final, Tensor(gt), cfg.eps_charbonnier)
        except NumericalError as e:
            raise TrainingDiverged(
                f"non-finite loss at step {step}; first non-finite op: {e.op!r}") from e
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            _diagnose_nan(model, hazy, gt, cfg.eps_charbonnier, step)
        T.backward(loss)
        opt.step(lr, beta1)
        if (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1:
            train_psnr = psnr(np.clip(out.final.data, 0.0, 1.0), gt)
            rows.append((step, lr, loss_value, train_psnr))
    if log_path:
        with open(log_path, "w") as f:
            f.write("step\tlr\tloss\tpsnr\n")
            for step, lr, lv, pv in rows:
                f.write(f"{step}\t{lr:.10g}\t{lv:.10g}\t{pv:.10g}\n")
    if ckpt_path:
        model.save(ckpt_path)
    return TrainResult(log_rows=rows, final_loss=loss_value, checkpoint_path=ckpt_path or "")
