"""End-to-end dehazing model.

A shallow stage restores coarse content at 1/4 resolution and emits a
pseudo-haze-free image; a density estimator compares that image with the
hazy input to produce a per-pixel haze-density map; a deep stage works at
full resolution on features modulated by the density map and refines the
pseudo-haze-free image into the final output.

Inputs are RGB in [0,1]; internally the network runs in [-1,1] to match the
tanh-residual tails, and outputs are mapped back to [0,1].
"""

from dataclasses import dataclass, fields, replace

import numpy as np

from . import tensor as T
from .attention import SHAConfig, make_attention
from .blocks import AFF, MHAB, MHAC, Tail
from .errors import DataError, ShapeMismatch
from .formats import read_checkpoint, write_checkpoint
from .nn import Conv2d, Module
from .rng import SplitMix64
from .tensor import Tensor


@dataclass
class ModelConfig:
    shallow_channels: int = 256
    shallow_blocks: int = 8
    deep_channels: int = 16
    deep_blocks: int = 10
    density_channels: int = 64
    downsample_factor: int = 4  # fixed: two stride-2 convolutions
    use_sha: bool = True
    use_fa: bool = False
    use_cot: bool = True
    use_aff: bool = True
    use_deep: bool = True
    use_density: bool = True
    sha_reduction: int = 4
    sha_shuffle_groups: int = 2
    sha_restore_kernel: int = 3
    sha_maxpool: bool = True
    sha_shuffle: bool = True
    cot_kernel: int = 3
    tail_depth: int = 2

    def __post_init__(self):
        if self.downsample_factor != 4:
            raise ShapeMismatch("downsample factor is fixed at 4 (two stride-2 convolutions)")
        for f in ("shallow_channels", "shallow_blocks", "deep_channels",
                  "deep_blocks", "density_channels"):
            if getattr(self, f) < 1:
                raise ShapeMismatch(f"{f} must be >= 1")

    @property
    def attention_kind(self):
        if self.use_sha:
            return "sha"
        return "fa" if self.use_fa else "none"

    def sha_cfg(self, channels):
        return SHAConfig(channels=channels, reduction=self.sha_reduction,
                         shuffle_groups=self.sha_shuffle_groups,
                         restore_kernel=self.sha_restore_kernel,
                         enable_maxpool=self.sha_maxpool,
                         enable_shuffle=self.sha_shuffle)

    @classmethod
    def desk(cls, **overrides):
        """Small configuration that trains in minutes on one CPU core."""
        base = dict(shallow_channels=24, shallow_blocks=2, deep_channels=8,
                    deep_blocks=2, density_channels=16)
        base.update(overrides)
        return cls(**base)

    def to_kv(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_kv(cls, kv):
        kwargs = {}
        for f in fields(cls):
            if f.name not in kv:
                continue
            raw = kv[f.name]
            if f.type == "bool" or isinstance(f.default, bool):
                kwargs[f.name] = str(raw) in ("True", "true", "1")
            else:
                kwargs[f.name] = int(raw)
        return cls(**kwargs)

    def variant(self, **overrides):
        return replace(self, **overrides)


@dataclass
class DensityMap:
    """Single-channel (N,1,H,W) map of per-pixel haze intensity, values in (0,1)."""
    map: Tensor


@dataclass
class ModelOutput:
    pseudo: Tensor  # shallow-stage restoration, (N,3,H,W)
    final: Tensor   # deep-stage output, (N,3,H,W)
    density: DensityMap


class ShallowStage(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        c = cfg.shallow_channels
        kind = cfg.attention_kind
        self.cfg = cfg
        self.down1 = Conv2d(3, c, 3, rng, stride=2, padding=1)
        self.down1_attn = make_attention(kind, c, rng, cfg.sha_cfg(c))
        self.down2 = Conv2d(c, c, 3, rng, stride=2, padding=1)
        self.down2_attn = make_attention(kind, c, rng, cfg.sha_cfg(c))
        self.blocks = []
        for i in range(cfg.shallow_blocks):
            blk = MHAC(c, rng, attention=kind, sha_cfg=cfg.sha_cfg(c),
                       use_cot=cfg.use_cot, use_aff=cfg.use_aff, cot_kernel=cfg.cot_kernel)
            setattr(self, f"mhac{i}", blk)
            self.blocks.append(blk)
        self.up1 = Conv2d(c, c, 3, rng, padding=1)
        self.up1_attn = make_attention(kind, c, rng, cfg.sha_cfg(c))
        self.up2 = Conv2d(c, c, 3, rng, padding=1)
        self.up2_attn = make_attention(kind, c, rng, cfg.sha_cfg(c))
        self.tail = Tail(c, rng, depth=cfg.tail_depth)

    def forward(self, xn):
        stem = self.down1_attn(self.down1(xn))
        stem = self.down2_attn(self.down2(stem))
        f = stem
        mid = len(self.blocks) // 2
        for i, blk in enumerate(self.blocks):
            f = blk(f)
            if mid >= 1 and i == mid - 1:
                f = f + stem  # first skip: reinject post-stem features mid-trunk
        feats = f + stem  # second skip, right before up-sampling
        d = self.up1_attn(self.up1(T.upsample_nearest(feats, 2)))
        d = self.up2_attn(self.up2(T.upsample_nearest(d, 2)))
        pseudo = self.tail(d) + xn  # global residual
        return pseudo, feats


class DensityEstimator(Module):
    """Estimates per-pixel haze density from (pseudo-haze-free, hazy) pairs.

    Both 3x3 convolutions use reflect padding so edge details survive.
    """

    def __init__(self, cfg, rng):
        super().__init__()
        dc = cfg.density_channels
        self.expand = Conv2d(6, dc, 3, rng, padding=1, pad_mode="reflect")
        self.sha = make_attention("sha", dc, rng, cfg.sha_cfg(dc))
        self.compress = Conv2d(dc, 1, 3, rng, padding=1, pad_mode="reflect")

    def forward(self, pseudo, hazy):
        if pseudo.shape != hazy.shape:
            raise ShapeMismatch(
                f"pseudo-haze-free {pseudo.shape} and hazy {hazy.shape} shapes differ")
        f = T.concat([pseudo, hazy], axis=1)
        f = self.sha(self.expand(f))
        return DensityMap(T.sigmoid(self.compress(f)))


def refine_with_density(feat, density):
    """Multiply every channel of feat by the broadcast single-channel map."""
    m = density.map if isinstance(density, DensityMap) else density
    if feat.shape[2:] != m.shape[2:]:
        raise ShapeMismatch(
            f"feature spatial dims {feat.shape[2:]} do not match density map {m.shape[2:]}")
    return T.mul(feat, m)


class DeepStage(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        d = cfg.deep_channels
        kind = cfg.attention_kind
        self.head = Conv2d(3, d, 3, rng, padding=1)
        self.blocks = []
        for i in range(cfg.deep_blocks):
            blk = MHAB(d, rng, attention=kind, sha_cfg=cfg.sha_cfg(d))
            setattr(self, f"mhab{i}", blk)
            self.blocks.append(blk)
        self.fuse = AFF()
        self.tail = Tail(d, rng, depth=cfg.tail_depth)

    def forward(self, xn, refined, pseudo):
        f = self.head(xn)
        mid = max(1, len(self.blocks) // 2)
        for i, blk in enumerate(self.blocks):
            f = blk(f)
            if i == mid - 1:
                f = self.fuse(f, refined)
        return self.tail(f) + pseudo


class DehazeNet(Module):
    """Shallow stage + density estimation + deep refinement."""

    def __init__(self, cfg=None, seed=0):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.seed = int(seed)
        rng = SplitMix64(self.seed)
        self.shallow = ShallowStage(self.cfg, rng)
        if self.cfg.use_density:
            self.density = DensityEstimator(self.cfg, rng)
        if self.cfg.use_deep:
            self.project = Conv2d(self.cfg.shallow_channels, self.cfg.deep_channels, 1, rng)
            self.deep = DeepStage(self.cfg, rng)

    def forward(self, x):
        # runs directly in [0,1] space: the residual any tanh tail must express
        # (clean minus hazy, in [-1,1]) then exactly matches the tanh range
        n, c, h, w = x.shape
        if c != 3:
            raise ShapeMismatch(f"expected 3 input channels, got {c}")
        if h % 4 or w % 4:
            raise ShapeMismatch(
                f"spatial dims ({h},{w}) must be divisible by 4; reflect-pad the input first")
        pseudo, feats = self.shallow(x)
        if self.cfg.use_density:
            density = self.density(pseudo, x)
        else:
            density = DensityMap(Tensor(np.ones((n, 1, h, w), dtype=x.dtype)))
        if self.cfg.use_deep:
            shallow_full = T.upsample_nearest(self.project(feats), 4)
            refined = refine_with_density(shallow_full, density)
            final = self.deep(x, refined, pseudo)
        else:
            final = pseudo
        return ModelOutput(pseudo=pseudo, final=final, density=density)

    # -- checkpointing ------------------------------------------------------
    def save(self, path):
        kv = self.cfg.to_kv()
        kv["seed"] = self.seed
        write_checkpoint(path, self.state_dict(), kv)

    @classmethod
    def load(cls, path):
        arrays, kv = read_checkpoint(path)
        if "seed" not in kv:
            raise DataError(f"{path}: checkpoint missing init seed")
        model = cls(ModelConfig.from_kv(kv), seed=int(kv["seed"]))
        model.load_state_dict(arrays)
        return model
