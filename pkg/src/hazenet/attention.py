"""Attention modules.

SHA (separable hybrid attention) builds a full C x H x W attention map from
two 1-D directional encodings: summed average/max poolings along each spatial
direction are concatenated, shuffled across channel groups, squeezed through a
1x1 bottleneck, split back per direction, restored by one shared 1-D
convolution, and combined by an outer product through a sigmoid.

SE and FA are the reference baselines kept for cost comparisons and the
attention ablation ladder.
"""

from dataclasses import dataclass

from . import tensor as T
from .errors import ShapeMismatch
from .nn import Conv1d, Conv2d, Module


@dataclass
class SHAConfig:
    channels: int
    reduction: int = 4
    shuffle_groups: int = 2
    restore_kernel: int = 3
    enable_maxpool: bool = True
    enable_shuffle: bool = True

    def __post_init__(self):
        if self.channels % self.reduction:
            raise ShapeMismatch(
                f"channels {self.channels} not divisible by reduction {self.reduction}")
        if self.channels % self.shuffle_groups:
            raise ShapeMismatch(
                f"channels {self.channels} not divisible by shuffle groups {self.shuffle_groups}")
        if self.restore_kernel % 2 == 0 or self.restore_kernel < 1:
            raise ShapeMismatch(f"restore kernel must be odd, got {self.restore_kernel}")


@dataclass
class SHAState:
    """Intermediate directional encodings and the final attention map."""
    v_h: object  # (N, C, H) pooled-and-summed row encoding
    v_v: object  # (N, C, W) pooled-and-summed column encoding
    y_h: object  # (N, C, H) restored row weights
    y_v: object  # (N, C, W) restored column weights
    attn: object  # (N, C, H, W), strictly in (0, 1)


class SHA(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        if isinstance(cfg, int):
            cfg = SHAConfig(channels=cfg)
        self.cfg = cfg
        mid = cfg.channels // cfg.reduction
        self.reduce = Conv1d(cfg.channels, mid, 1, rng)
        # reflect padding keeps a constant encoding constant through the restore conv
        self.restore = Conv1d(mid, cfg.channels, cfg.restore_kernel, rng,
                              padding=(cfg.restore_kernel - 1) // 2, pad_mode="reflect")

    def attend(self, x):
        """Returns (attended output, SHAState)."""
        cfg = self.cfg
        n, c, h, w = x.shape
        if c != cfg.channels:
            raise ShapeMismatch(f"expected {cfg.channels} channels, got {c}")
        v_h = T.directional_pool(x, "horizontal", "avg")
        v_v = T.directional_pool(x, "vertical", "avg")
        if cfg.enable_maxpool:
            v_h = v_h + T.directional_pool(x, "horizontal", "max")
            v_v = v_v + T.directional_pool(x, "vertical", "max")
        joint = T.concat([v_h, v_v], axis=2)
        if cfg.enable_shuffle:
            joint = T.channel_shuffle(joint, cfg.shuffle_groups)
        joint = T.relu6(self.reduce(joint))
        z_h, z_v = T.split(joint, [h, w], axis=2)
        y_h = self.restore(z_h)  # shared weights restore both directions
        y_v = self.restore(z_v)
        attn = T.sigmoid(T.mul(y_h.reshape(n, c, h, 1), y_v.reshape(n, c, 1, w)))
        return T.mul(attn, x), SHAState(v_h, v_v, y_h, y_v, attn)

    def forward(self, x):
        return self.attend(x)[0]


def sha_param_count(cfg):
    """Analytic parameter count: 1x1 reduce conv plus shared restore conv."""
    mid = cfg.channels // cfg.reduction
    reduce_params = cfg.channels * mid + mid
    restore_params = cfg.restore_kernel * mid * cfg.channels + cfg.channels
    return reduce_params + restore_params


class SE(Module):
    """Squeeze-excitation channel gate (bias-free bottleneck, reduction 16)."""

    def __init__(self, channels, rng, reduction=16):
        super().__init__()
        mid = channels // reduction
        if mid < 1:
            raise ShapeMismatch(f"channels {channels} too small for reduction {reduction}")
        self.fc1 = Conv2d(channels, mid, 1, rng, bias=False)
        self.fc2 = Conv2d(mid, channels, 1, rng, bias=False)

    def forward(self, x):
        s = x.mean(axis=(2, 3), keepdims=True)
        gate = T.sigmoid(self.fc2(T.relu(self.fc1(s))))
        return T.mul(x, gate)


class FA(Module):
    """Channel attention followed by pixel attention (feature-attention baseline)."""

    def __init__(self, channels, rng, reduction=8):
        super().__init__()
        mid = max(1, channels // reduction)
        self.ca1 = Conv2d(channels, mid, 1, rng)
        self.ca2 = Conv2d(mid, channels, 1, rng)
        self.pa1 = Conv2d(channels, mid, 1, rng)
        self.pa2 = Conv2d(mid, 1, 1, rng)

    def forward(self, x):
        s = x.mean(axis=(2, 3), keepdims=True)
        x = T.mul(x, T.sigmoid(self.ca2(T.relu(self.ca1(s)))))
        return T.mul(x, T.sigmoid(self.pa2(T.relu(self.pa1(x)))))


def make_attention(kind, channels, rng, sha_cfg=None):
    """Factory for the attention slot used throughout the network."""
    if kind == "sha":
        return SHA(sha_cfg or SHAConfig(channels=channels), rng)
    if kind == "fa":
        return FA(channels, rng)
    if kind == "none":
        from .nn import Identity
        return Identity()
    raise ValueError(f"unknown attention kind {kind!r}")
