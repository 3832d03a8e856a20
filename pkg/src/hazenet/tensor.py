"""Dense tensors and reverse-mode automatic differentiation on numpy arrays.

Layout convention is channels-first, row-major everywhere: C x H x W for
feature maps, N x C x H x W for batches. Tensors are immutable values after
construction; every operation returns a fresh Tensor. When any input of an
operation requires gradients, the operation records itself on the implicit
tape (a closure graph hanging off its output), and ``backward`` on a scalar
replays those records in reverse.

Two precisions are supported: float32 for training and inference, float64
for finite-difference gradient checking.
"""

import threading

import numpy as np

from .errors import NumericalError, ShapeMismatch, TapeError

_local = threading.local()


def _grad_enabled():
    return getattr(_local, "grad_enabled", True)


class no_grad:
    """Context manager disabling tape recording on the current thread."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _local.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _local.grad_enabled = self._prev
        return False


_debug_checks = False


def set_debug_checks(flag):
    """Toggle the finite-value check applied to every op output (test mode)."""
    global _debug_checks
    prev = _debug_checks
    _debug_checks = bool(flag)
    return prev


def debug_checks_enabled():
    return _debug_checks


class Tensor:
    """N-dimensional real array plus the bookkeeping needed for backprop."""

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.size == 0:
            raise ShapeMismatch(f"all extents must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bwd = None
        self._op = None

    # -- basic introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._non_scalar()

    def _non_scalar(self):
        raise ShapeMismatch(f"item() needs a single element, got shape {self.shape}")

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        flags = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flags})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return _unary("neg", self, -self.data, lambda go: (-go,))

    def __pow__(self, p):
        return pow_scalar(self, p)

    def sum(self, axis=None, keepdims=False):
        return sum_along(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_along(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Learnable tensor with a unique dotted-path name within its model."""

    def __init__(self, data, name="", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape})"


# -- tape -------------------------------------------------------------------


class GradTape:
    """Ordered record of the recorded operations reachable from a root tensor.

    Entries are in execution (topological) order; ``replay`` runs their
    adjoints in reverse, accumulating gradients and writing them into every
    reachable tensor with ``requires_grad`` exactly once.
    """

    def __init__(self, root):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.entries = order  # topological: parents before children

    def replay(self, root, seed_grad):
        grads = {id(root): seed_grad}
        for node in reversed(self.entries):
            go = grads.pop(id(node), None)
            if go is None or node._bwd is None:
                if go is not None and node.requires_grad and node._bwd is None:
                    node.grad = go if node.grad is None else node.grad + go
                continue
            for parent, g in zip(node._parents, node._bwd(go)):
                if g is None:
                    continue
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + g
                else:
                    grads[pid] = g
        # leaves keep their grads; everything recorded is now spent
        for node in self.entries:
            node._parents = ()
            node._bwd = None


def backward(loss):
    """Backpropagate from a scalar loss into every reachable Parameter's .grad."""
    if loss.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._bwd is None:
        raise TapeError("backward called without a recorded tape (loss is a leaf or tape already cleared)")
    tape = GradTape(loss)
    tape.replay(loss, np.ones_like(loss.data))


# -- op plumbing --------------------------------------------------------------


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(op, data, parents, bwd):
    out = Tensor(data)
    if _debug_checks and not np.isfinite(data).all():
        raise NumericalError(op, f"non-finite values produced by op '{op}'")
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
        out._op = op
    return out


def _unary(op, x, data, bwd):
    return _make(op, data, (x,), bwd)


def _unbroadcast(g, shape):
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------------


def add(a, b):
    if not isinstance(b, Tensor) and not isinstance(a, Tensor):
        raise TypeError("add needs at least one Tensor")
    if not isinstance(b, Tensor):
        return _unary("add_const", a, a.data + b, lambda go: (go,))
    if not isinstance(a, Tensor):
        return _unary("add_const", b, b.data + a, lambda go: (go,))
    data = a.data + b.data
    return _make("add", data, (a, b), lambda go: (_unbroadcast(go, a.shape), _unbroadcast(go, b.shape)))


def sub(a, b):
    if not isinstance(b, Tensor):
        return _unary("sub_const", a, a.data - b, lambda go: (go,))
    if not isinstance(a, Tensor):
        return _unary("rsub_const", b, a - b.data, lambda go: (-go,))
    data = a.data - b.data
    return _make("sub", data, (a, b), lambda go: (_unbroadcast(go, a.shape), _unbroadcast(-go, b.shape)))


def mul(a, b):
    if not isinstance(b, Tensor):
        return _unary("mul_const", a, a.data * b, lambda go: (go * b,))
    if not isinstance(a, Tensor):
        return _unary("mul_const", b, b.data * a, lambda go: (go * a,))
    data = a.data * b.data
    return _make(
        "mul",
        data,
        (a, b),
        lambda go: (_unbroadcast(go * b.data, a.shape), _unbroadcast(go * a.data, b.shape)),
    )


def div(a, b):
    if not isinstance(b, Tensor):
        return _unary("div_const", a, a.data / b, lambda go: (go / b,))
    if not isinstance(a, Tensor):
        data = a / b.data
        return _unary("rdiv_const", b, data, lambda go: (-go * data / b.data,))
    data = a.data / b.data
    return _make(
        "div",
        data,
        (a, b),
        lambda go: (
            _unbroadcast(go / b.data, a.shape),
            _unbroadcast(-go * a.data / (b.data * b.data), b.shape),
        ),
    )


def pow_scalar(x, p):
    data = x.data ** p
    return _unary("pow", x, data, lambda go: (go * p * x.data ** (p - 1),))


def exp(x):
    data = np.exp(x.data)
    return _unary("exp", x, data, lambda go: (go * data,))


def sqrt(x):
    data = np.sqrt(x.data)
    return _unary("sqrt", x, data, lambda go: (go * 0.5 / data,))


# -- activations --------------------------------------------------------------


def relu(x):
    mask = x.data > 0.0
    return _unary("relu", x, x.data * mask, lambda go: (go * mask,))


def relu6(x):
    data = np.minimum(np.maximum(x.data, 0.0), 6.0)
    mask = (x.data > 0.0) & (x.data < 6.0)
    return _unary("relu6", x, data, lambda go: (go * mask,))


def elu(x):
    neg = np.exp(np.minimum(x.data, 0.0)) - 1.0
    data = np.where(x.data >= 0.0, x.data, neg)
    deriv = np.where(x.data >= 0.0, 1.0, neg + 1.0)
    return _unary("elu", x, data, lambda go: (go * deriv,))


def tanh(x):
    data = np.tanh(x.data)
    return _unary("tanh", x, data, lambda go: (go * (1.0 - data * data),))


def sigmoid(x):
    # stable two-sided form: exp of a non-positive argument only
    e = np.exp(-np.abs(x.data))
    data = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _unary("sigmoid", x, data, lambda go: (go * data * (1.0 - data),))


_ACTIVATIONS = {"relu6": relu6, "elu": elu, "tanh": tanh, "sigmoid": sigmoid}


def apply_activation(x, kind):
    """Elementwise activation; kind in {relu6, elu, tanh, sigmoid}."""
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation kind {kind!r}") from None


# -- reductions ---------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_along(x, axis=None, keepdims=False):
    axes = _norm_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def bwd(go):
        g = go
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _unary("sum", x, data, bwd)


def mean_along(x, axis=None, keepdims=False):
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    data = x.data.mean(axis=axes, keepdims=keepdims)

    def bwd(go):
        g = go
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy() / count,)

    return _unary("mean", x, data, bwd)


def max_along(x, axis):
    """Maximum over one axis (no keepdims); gradient routes to the first argmax."""
    axis = axis % x.ndim
    data = x.data.max(axis=axis)
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)

    def bwd(go):
        g = np.zeros_like(x.data)
        np.put_along_axis(g, idx, np.expand_dims(go, axis), axis=axis)
        return (g,)

    return _unary("max", x, data, bwd)


def softmax(x, axis):
    """Numerically stable softmax along one axis (composed, exact gradient)."""
    shifted = sub(x, np.max(x.data, axis=axis, keepdims=True))
    e = exp(shifted)
    return div(e, sum_along(e, axis=axis, keepdims=True))


# -- shape ops ----------------------------------------------------------------


def reshape(x, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = x.shape
    data = x.data.reshape(shape)
    return _unary("reshape", x, data, lambda go: (go.reshape(old),))


def concat(tensors, axis):
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(go):
        return tuple(np.split(go, splits, axis=axis))

    return _make("concat", data, tensors, bwd)


def narrow(x, axis, start, length):
    """Slice `length` entries from `start` along `axis`."""
    axis = axis % x.ndim
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    data = x.data[sl].copy()

    def bwd(go):
        g = np.zeros_like(x.data)
        g[sl] = go
        return (g,)

    return _unary("narrow", x, data, bwd)


def split(x, sizes, axis):
    """Split along `axis` into consecutive chunks of the given sizes."""
    if sum(sizes) != x.shape[axis % x.ndim]:
        raise ShapeMismatch(
            f"split sizes {sizes} do not cover axis {axis} of extent {x.shape[axis % x.ndim]}"
        )
    out, start = [], 0
    for s in sizes:
        out.append(narrow(x, axis, start, s))
        start += s
    return tuple(out)


def channel_shuffle(x, groups):
    """Interleave channel groups: index g*(C/groups)+i moves to i*groups+g."""
    c = x.shape[1]
    if c % groups != 0:
        raise ShapeMismatch(f"channel count {c} not divisible by shuffle groups {groups}")

    def perm(arr, g):
        n, ch = arr.shape[0], arr.shape[1]
        rest = arr.shape[2:]
        return arr.reshape((n, g, ch // g) + rest).swapaxes(1, 2).reshape(arr.shape)

    data = perm(x.data, groups)
    inv = c // groups
    return _unary("channel_shuffle", x, data, lambda go: (perm(go, inv),))


# -- padding ------------------------------------------------------------------


def _pad_spatial(arr, ph, pw, mode):
    if ph == 0 and pw == 0:
        return arr
    if mode == "zero":
        n, c, h, w = arr.shape
        out = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=arr.dtype)
        out[:, :, ph:ph + h, pw:pw + w] = arr
        return out
    if mode == "reflect":
        h, w = arr.shape[2], arr.shape[3]
        if ph >= h or pw >= w:
            raise ShapeMismatch(
                f"reflect padding ({ph},{pw}) must be smaller than spatial extent ({h},{w})"
            )
        return np.pad(arr, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="reflect")
    raise ValueError(f"unknown padding mode {mode!r}")


def _unpad_grad(gp, h, w, ph, pw, mode):
    """Fold the gradient of a padded array back onto the unpadded one."""
    if ph == 0 and pw == 0:
        return gp
    if mode == "zero":
        return gp[:, :, ph:ph + h, pw:pw + w]
    # reflect: scatter-add pad rows/cols back onto their source positions
    n, c = gp.shape[0], gp.shape[1]
    src_h = np.pad(np.arange(h), ph, mode="reflect")
    src_w = np.pad(np.arange(w), pw, mode="reflect")
    tmp = np.zeros((h, n, c, gp.shape[3]), dtype=gp.dtype)
    np.add.at(tmp, src_h, np.moveaxis(gp, 2, 0))
    tmp = np.moveaxis(tmp, 0, 2)  # (N, C, H, Wp)
    out = np.zeros((w, n, c, h), dtype=gp.dtype)
    np.add.at(out, src_w, np.moveaxis(tmp, 3, 0))
    return np.moveaxis(out, 0, 3)


# -- convolution --------------------------------------------------------------


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv2d(x, weight, bias=None, stride=1, padding=0, pad_mode="zero", groups=1):
    """2-D cross-correlation.

    x: (N, C_in, H, W); weight: (C_out, C_in/groups, kh, kw); bias: (C_out,).
    padding is an int or (ph, pw); pad_mode in {zero, reflect}.
    """
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if cin % groups != 0:
        raise ShapeMismatch(f"input channels {cin} not divisible by groups {groups}")
    if cin_g != cin // groups:
        raise ShapeMismatch(
            f"weight expects {cin_g} channels/group but input has {cin // groups} (C_in={cin}, groups={groups})"
        )
    if cout % groups != 0:
        raise ShapeMismatch(f"output channels {cout} not divisible by groups {groups}")
    hp, wp = h + 2 * ph, w + 2 * pw
    if hp < kh or wp < kw:
        raise ShapeMismatch(
            f"padded spatial extent ({hp},{wp}) smaller than kernel ({kh},{kw})"
        )
    if kh == kw == 1 and sh == sw == 1 and ph == pw == 0 and groups == 1:
        return _conv2d_1x1(x, weight, bias)
    xp = _pad_spatial(x.data, ph, pw, pad_mode)
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1

    cog = cout // groups
    colT = _im2col(xp, kh, kw, sh, sw, ho, wo)  # (C, kh, kw, N*Ho*Wo) flattened below
    outs = []
    cols_g = []
    for g in range(groups):
        colg = colT[g * cin_g:(g + 1) * cin_g].reshape(cin_g * kh * kw, n * ho * wo)
        cols_g.append(colg)
        wg = weight.data[g * cog:(g + 1) * cog].reshape(cog, cin_g * kh * kw)
        outs.append(wg @ colg)
    out = outs[0] if groups == 1 else np.concatenate(outs, axis=0)
    out = np.ascontiguousarray(out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(go):
        gx = gw = gb = None
        if bias is not None and bias.requires_grad:
            gb = go.sum(axis=(0, 2, 3))
        goT = go.transpose(1, 0, 2, 3).reshape(cout, n * ho * wo)
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for g in range(groups):
                gog = goT[g * cog:(g + 1) * cog]
                gw[g * cog:(g + 1) * cog] = (gog @ cols_g[g].T).reshape(cog, cin_g, kh, kw)
        if x.requires_grad:
            # grad wrt padded input = output grad (stride-dilated, pad k-1)
            # correlated with channel-swapped, spatially flipped kernels
            hd, wd = (ho - 1) * sh + 1, (wo - 1) * sw + 1
            if sh == 1 and sw == 1:
                gd = go
            else:
                gd = np.zeros((n, cout, hd, wd), dtype=go.dtype)
                gd[:, :, ::sh, ::sw] = go
            gop = _pad_spatial(gd, kh - 1, kw - 1, "zero")
            hv, wv = hd + kh - 1, wd + kw - 1
            gcolT = _im2col(gop, kh, kw, 1, 1, hv, wv)
            gxp = np.zeros((n, cin, hp, wp), dtype=go.dtype)
            for g in range(groups):
                gcolg = gcolT[g * cog:(g + 1) * cog].reshape(cog * kh * kw, n * hv * wv)
                wf = weight.data[g * cog:(g + 1) * cog, :, ::-1, ::-1]
                wf = np.ascontiguousarray(wf.transpose(1, 0, 2, 3)).reshape(cin_g, cog * kh * kw)
                gxg = (wf @ gcolg).reshape(cin_g, n, hv, wv)
                gxp[:, g * cin_g:(g + 1) * cin_g, :hv, :wv] = gxg.transpose(1, 0, 2, 3)
            gx = _unpad_grad(gxp, h, w, ph, pw, pad_mode)
        if bias is None:
            return (gx, gw)
        return (gx, gw, gb)

    return _make("conv2d", out, parents, bwd)


def _im2col(xp, kh, kw, sh, sw, ho, wo):
    """(N,C,Hp,Wp) -> contiguous (C, kh, kw, N*Ho*Wo) patch matrix."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw][:, :, :ho, :wo]
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3))


def _conv2d_1x1(x, weight, bias):
    """Pointwise convolution as a plain batched matmul (no im2col copies)."""
    n, cin, h, w = x.shape
    cout = weight.shape[0]
    w2 = weight.data.reshape(cout, cin)
    xr = x.data.reshape(n, cin, h * w)
    out = (w2[None] @ xr).reshape(n, cout, h, w)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(go):
        gor = go.reshape(n, cout, h * w)
        gx = gw = gb = None
        if bias is not None and bias.requires_grad:
            gb = go.sum(axis=(0, 2, 3))
        if weight.requires_grad:
            gw = (gor @ xr.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if x.requires_grad:
            gx = (w2.T[None] @ gor).reshape(n, cin, h, w)
        if bias is None:
            return (gx, gw)
        return (gx, gw, gb)

    return _make("conv2d", out, parents, bwd)


def conv1d(x, weight, bias=None, stride=1, padding=0, pad_mode="zero", groups=1):
    """1-D cross-correlation over (N, C, L), realized through conv2d."""
    n, c, l = x.shape
    cout, cin_g, k = weight.shape
    x4 = reshape(x, n, c, 1, l)
    w4 = reshape(weight, cout, cin_g, 1, k)
    out = conv2d(x4, w4, bias=bias, stride=(1, stride), padding=(0, padding),
                 pad_mode=pad_mode, groups=groups)
    return reshape(out, out.shape[0], out.shape[1], out.shape[3])


def unfold(x, kernel, padding=0):
    """Extract k*k zero-padded neighborhoods: (N,C,H,W) -> (N, C, k*k, H', W')."""
    n, c, h, w = x.shape
    k = kernel
    xp = _pad_spatial(x.data, padding, padding, "zero")
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    data = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c, k * k, ho, wo)

    def bwd(go):
        g6 = go.reshape(n, c, k, k, ho, wo)
        gp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=go.dtype)
        for i in range(k):
            for j in range(k):
                gp[:, :, i:i + ho, j:j + wo] += g6[:, :, i, j]
        if padding:
            gp = gp[:, :, padding:padding + h, padding:padding + w]
        return (gp,)

    return _unary("unfold", x, data, bwd)


# -- pooling / resampling -------------------------------------------------------


def directional_pool(x, axis, kind):
    """Reduce a feature map along one spatial direction.

    horizontal: reduce across width, (N,C,H,W) -> (N,C,H)
    vertical:   reduce across height, (N,C,H,W) -> (N,C,W)
    """
    if axis == "horizontal":
        red = 3
    elif axis == "vertical":
        red = 2
    else:
        raise ValueError(f"unknown directional_pool axis {axis!r}")
    if kind == "avg":
        return mean_along(x, axis=red)
    if kind == "max":
        return max_along(x, axis=red)
    raise ValueError(f"unknown directional_pool kind {kind!r}")


def upsample_nearest(x, factor):
    """Replicate every pixel factor x factor."""
    if factor < 1:
        raise ShapeMismatch(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return _unary("upsample", x, x.data.copy(), lambda go: (go,))
    n, c, h, w = x.shape
    data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def bwd(go):
        return (go.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _unary("upsample", x, data, bwd)


# -- normalization ---------------------------------------------------------------


def instance_norm(x, eps=1e-5, weight=None, bias=None):
    """Per-sample, per-channel standardization of (N,C,H,W); affine only if given."""
    mu = mean_along(x, axis=(2, 3), keepdims=True)
    centered = sub(x, mu)
    var = mean_along(mul(centered, centered), axis=(2, 3), keepdims=True)
    out = div(centered, sqrt(add(var, eps)))
    if weight is not None:
        out = mul(out, reshape(weight, 1, -1, 1, 1))
    if bias is not None:
        out = add(out, reshape(bias, 1, -1, 1, 1))
    return out
