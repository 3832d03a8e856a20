"""Tour of the tensor core: building blocks, the tape, and gradient checking.

Run: python demos/01_autodiff_basics.py
"""

import numpy as np

import hazenet.tensor as T
from hazenet.tensor import Parameter, Tensor, backward

# tensors wrap float32 numpy arrays, channels-first
x = Tensor(np.linspace(0, 1, 2 * 3 * 8 * 8, dtype=np.float32).reshape(2, 3, 8, 8))
print("input:", x)

# a 3x3 convolution with reflect padding, then the activation zoo
w = Parameter(np.random.default_rng(0).normal(0, 0.2, (4, 3, 3, 3)))
b = Parameter(np.zeros(4))
feat = T.conv2d(x, w, b, padding=1, pad_mode="reflect")
print("conv output:", feat.shape)
for kind in ("relu6", "elu", "tanh", "sigmoid"):
    y = T.apply_activation(feat, kind)
    print(f"  {kind:8s} range [{y.data.min():+.3f}, {y.data.max():+.3f}]")

# directional pooling squeezes a feature map into per-row / per-column profiles
rows = T.directional_pool(feat, "horizontal", "avg")
cols = T.directional_pool(feat, "vertical", "max")
print("row profile:", rows.shape, " column profile:", cols.shape)

# channel shuffle interleaves channel groups (a fixed permutation)
mixed = T.channel_shuffle(rows, groups=2)
print("shuffled channels equal data, new order:", mixed.shape)

# a scalar loss records a tape; backward fills Parameter.grad
loss = T.sqrt((feat * feat).mean() + 1e-6)
backward(loss)
print("loss:", f"{loss.item():.5f}", " grad(w) shape:", w.grad.shape,
      " |grad| max:", f"{np.abs(w.grad).max():.4f}")

# the library ships a finite-difference harness used by `hazenet gradcheck`
from hazenet.gradcheck import run_suite

for result in run_suite(["conv2d_reflect", "sha"]):
    print(f"gradcheck {result.name}: max rel err {result.max_rel_err:.2e} "
          f"({'ok' if result.passed else 'BAD'})")
