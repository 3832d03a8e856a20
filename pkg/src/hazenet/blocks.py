"""Composite building blocks: the multi-branch attention block, the
contextual block with instance-norm/ELU internals, adaptive fusion, the
mixed local/global block, and the reconstruction tail."""

import numpy as np

from . import tensor as T
from .attention import make_attention
from .errors import ShapeMismatch
from .nn import Conv2d, Module, ModuleList
from .tensor import Parameter


class MHAB(Module):
    """Parallel 3x3 + 1x1 convolutions, ReLU6, attention, raw residual.

    With all convolution weights at zero this block is the identity map.
    """

    def __init__(self, channels, rng, attention="sha", sha_cfg=None):
        super().__init__()
        self.conv3 = Conv2d(channels, channels, 3, rng, padding=1)
        self.conv1 = Conv2d(channels, channels, 1, rng)
        self.sha = make_attention(attention, channels, rng, sha_cfg)

    def forward(self, x):
        branch = T.relu6(self.conv3(x) + self.conv1(x))
        return self.sha(branch) + x


class CoT(Module):
    """Static grouped-conv context plus dynamic locally-attended context.

    The attention embedding runs two 1x1 convolutions with instance
    normalization and ELU between them on the concatenated (keys, queries)
    and yields per-position kernel weights, softmax-normalized over the
    k*k neighborhood; the dynamic context is the value features aggregated
    under those weights. Weights are shared within channel groups of 8.
    """

    share_planes = 8

    def __init__(self, channels, rng, kernel=3, key_groups=4):
        super().__init__()
        if channels % key_groups:
            raise ShapeMismatch(f"channels {channels} not divisible by key groups {key_groups}")
        if kernel % 2 == 0:
            raise ShapeMismatch(f"context kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.heads = channels // self.share_planes if channels % self.share_planes == 0 else 1
        self.key = Conv2d(channels, channels, kernel, rng, padding=(kernel - 1) // 2,
                          groups=key_groups)
        self.embed1 = Conv2d(2 * channels, channels, 1, rng)
        self.embed2 = Conv2d(channels, kernel * kernel * self.heads, 1, rng)
        self.value = Conv2d(channels, channels, 1, rng)

    def forward(self, x):
        n, c, h, w = x.shape
        k = self.kernel
        key = self.key(x)
        emb = self.embed2(T.elu(T.instance_norm(self.embed1(T.concat([key, x], axis=1)))))
        weights = T.softmax(emb.reshape(n, self.heads, 1, k * k, h, w), axis=3)
        patches = T.unfold(self.value(x), k, padding=(k - 1) // 2)
        patches = patches.reshape(n, self.heads, c // self.heads, k * k, h, w)
        dynamic = T.mul(patches, weights).sum(axis=3).reshape(n, c, h, w)
        return key + dynamic


class AFF(Module):
    """Blend two same-shaped streams with coefficients sigmoid(theta), sigmoid(1-theta)."""

    def __init__(self, theta=0.5):
        super().__init__()
        self.theta = Parameter(np.array([theta], dtype=np.float32))

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeMismatch(f"fusion inputs differ in shape: {a.shape} vs {b.shape}")
        return T.mul(T.sigmoid(self.theta), a) + T.mul(T.sigmoid(1.0 - self.theta), b)


class MHAC(Module):
    """MHAB and CoT in parallel, adaptively fused (plain sum when fusion is off)."""

    def __init__(self, channels, rng, attention="sha", sha_cfg=None,
                 use_cot=True, use_aff=True, cot_kernel=3):
        super().__init__()
        self.use_cot = use_cot
        self.use_aff = use_aff and use_cot
        self.mhab = MHAB(channels, rng, attention=attention, sha_cfg=sha_cfg)
        if use_cot:
            self.cot = CoT(channels, rng, kernel=cot_kernel)
        if self.use_aff:
            self.aff = AFF()

    def forward(self, x):
        local = self.mhab(x)
        if not self.use_cot:
            return local
        ctx = self.cot(x)
        return self.aff(local, ctx) if self.use_aff else local + ctx


class Tail(Module):
    """Stack of 3x3 convolutions reducing to an RGB residual in (-1, 1) via tanh."""

    def __init__(self, channels, rng, depth=2, out_channels=3):
        super().__init__()
        if depth < 1:
            raise ShapeMismatch(f"tail depth must be >= 1, got {depth}")
        convs = []
        for i in range(depth):
            cout = out_channels if i == depth - 1 else channels
            convs.append(Conv2d(channels, cout, 3, rng, padding=1))
        self.convs = ModuleList(convs)

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = T.relu6(x)
        return T.tanh(x)
