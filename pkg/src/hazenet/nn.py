"""Minimal layer/module system on top of the tensor core.

Modules own Parameters; parameter names are the dotted attribute paths from
the root module, which is also the naming scheme used by checkpoints.
Initialization is uniform in +-sqrt(1/fan_in) drawn from a shared splitmix
stream, so a (seed, architecture) pair fully determines the weights.
"""

import numpy as np

from . import tensor as T
from .rng import SplitMix64
from .tensor import Parameter


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix=""):
        """Yield (dotted_name, Parameter) pairs; stamps each parameter's .name."""
        for key, p in self._params.items():
            name = f"{prefix}{key}"
            p.name = name
            yield name, p
        for key, m in self._modules.items():
            yield from m.named_parameters(prefix=f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def zero_weights(self):
        """Set every parameter (weights and biases) to zero, in place."""
        for p in self.parameters():
            p.data = np.zeros_like(p.data)
        return self

    def astype(self, dtype):
        """Convert all parameters in place (float64 for gradient checking)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            if p.grad is not None:
                p.grad = p.grad.astype(dtype)
        return self

    def state_dict(self):
        d = dict(self.named_parameters())
        if len(d) != len(self.parameters()):
            raise ValueError("duplicate parameter names in module tree")
        return {name: p.data for name, p in d.items()}

    def load_state_dict(self, arrays):
        for name, p in self.named_parameters():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r} in state dict")
            src = arrays[name]
            if tuple(src.shape) != tuple(p.shape):
                raise ValueError(f"shape mismatch for {name!r}: {src.shape} vs {p.shape}")
            p.data = src.astype(p.data.dtype)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, m):
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _init_uniform(rng, shape, fan_in, dtype=np.float32):
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(shape, -bound, bound).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0,
                 pad_mode="zero", groups=1, bias=True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        self.groups = groups
        fan_in = (in_ch // groups) * kernel * kernel
        self.weight = Parameter(_init_uniform(rng, (out_ch, in_ch // groups, kernel, kernel), fan_in))
        self.bias = Parameter(_init_uniform(rng, (out_ch,), fan_in)) if bias else None

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, pad_mode=self.pad_mode, groups=self.groups)


class Conv1d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, padding=0, pad_mode="zero", bias=True):
        super().__init__()
        self.padding = padding
        self.pad_mode = pad_mode
        fan_in = in_ch * kernel
        self.weight = Parameter(_init_uniform(rng, (out_ch, in_ch, kernel), fan_in))
        self.bias = Parameter(_init_uniform(rng, (out_ch,), fan_in)) if bias else None

    def forward(self, x):
        return T.conv1d(x, self.weight, self.bias, padding=self.padding,
                        pad_mode=self.pad_mode)


class Identity(Module):
    def forward(self, x):
        return x


def make_rng(seed):
    return SplitMix64(seed)
