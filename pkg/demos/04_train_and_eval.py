"""Short end-to-end training demo: synthesize a tiny dataset, train briefly,
then inspect metrics, the density map, and the diff map.

A real desk-scale run uses the CLI with the defaults (2000 steps); this demo
trims everything down so it finishes in under two minutes.

Run: python demos/04_train_and_eval.py
"""

import os
import tempfile

import numpy as np

from hazenet.formats import write_ppm
from hazenet.hazegen import load_dataset, make_dataset
from hazenet.metrics import colorjet_render, diff_map, psnr, ssim
from hazenet.model import DehazeNet, ModelConfig
from hazenet.tensor import Tensor, no_grad
from hazenet.training import TrainConfig, train_loop

root = tempfile.mkdtemp(prefix="hazenet_demo_")
make_dataset(root, "train", scenes=4, size=64, seed=1)
items = load_dataset(root, "train")

config = ModelConfig.desk(shallow_channels=8, shallow_blocks=1,
                          deep_channels=4, deep_blocks=1, density_channels=8)
train = TrainConfig(steps=150, batch=2, patch=48, log_every=50, seed=1)
model = DehazeNet(config, seed=train.seed)

result = train_loop(model, items, train, ckpt_path=os.path.join(root, "demo.shan"))
for step, lr, loss, train_psnr in result.log_rows:
    print(f"step {step:4d}  lr {lr:.2e}  loss {loss:.4f}  psnr {train_psnr:.2f}")

print("\nper-image metrics after training:")
out_dir = "demo_out"
os.makedirs(out_dir, exist_ok=True)
for item_id, pair in items:
    with no_grad():
        out = model(Tensor(pair.hazy[None]))
    final = np.clip(out.final.data[0], 0, 1)
    print(f"  {item_id}: psnr {psnr(final, pair.clean):6.2f} dB   "
          f"ssim {ssim(final, pair.clean):.4f}")

# the density map models where the haze sits; the diff map is its proxy
_, pair = items[0]
with no_grad():
    out = model(Tensor(pair.hazy[None]))
write_ppm(os.path.join(out_dir, "density_jet.ppm"),
          colorjet_render(out.density.map.data[0]))
write_ppm(os.path.join(out_dir, "diffmap_jet.ppm"),
          colorjet_render(diff_map(out.pseudo.data[0], pair.hazy)))
print("wrote", out_dir + "/{density_jet,diffmap_jet}.ppm")
print("checkpoint:", result.checkpoint_path)
