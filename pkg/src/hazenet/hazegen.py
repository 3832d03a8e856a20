"""Synthetic training data for dehazing.

Procedural clean scenes (multi-octave value noise, gradients, feathered
rectangles) paired with smooth depth fields are degraded through the
atmospheric scattering model

    hazy = clean * t + A * (1 - t),      t = exp(-beta * depth)

with per-channel airlight A and scattering coefficient beta. Everything is
seeded and bit-reproducible. Datasets persist as PPM images plus F32M
transmission maps under {root}/{split}/ with a meta.tsv of haze parameters.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeMismatch
from .formats import read_f32m, read_ppm, write_f32m, write_ppm
from .rng import SplitMix64, hash64


@dataclass
class Scene:
    clean: np.ndarray  # (3,H,W) float32 in [0,1]
    depth: np.ndarray  # (1,H,W) float32 in [0,1]


@dataclass
class HazeParams:
    atmospheric_light: np.ndarray  # 3 floats in [0.7, 1.0]
    beta: float

    def __post_init__(self):
        a = np.asarray(self.atmospheric_light, dtype=np.float64)
        if a.shape != (3,):
            raise ShapeMismatch(f"atmospheric light must have 3 components, got {a.shape}")
        if a.min() < 0.7 - 1e-9 or a.max() > 1.0 + 1e-9:
            raise ValueError(f"atmospheric light {a} outside [0.7, 1.0]")
        if not 0.0 < self.beta <= 4.0:
            raise ValueError(f"beta must be in (0, 4], got {self.beta}")
        self.atmospheric_light = a


@dataclass
class HazyPair:
    hazy: np.ndarray          # (3,H,W)
    clean: np.ndarray         # (3,H,W)
    transmission: np.ndarray  # (1,H,W)
    params: HazeParams


def transmission_from_depth(depth, beta):
    """t = exp(-beta * depth); beta > 0, depth in [0,1]."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return np.exp(-beta * np.asarray(depth, dtype=np.float64)).astype(np.float32)


def synthesize_hazy(scene, params):
    t = transmission_from_depth(scene.depth, params.beta).astype(np.float64)
    a = params.atmospheric_light.reshape(3, 1, 1)
    hazy = scene.clean.astype(np.float64) * t + a * (1.0 - t)
    # the model keeps values inside [0,1]; clip only float rounding excursions
    hazy = np.clip(hazy, 0.0, 1.0)
    return HazyPair(hazy=hazy.astype(np.float32), clean=scene.clean.copy(),
                    transmission=t.astype(np.float32), params=params)


def invert_degradation(hazy, t, atmospheric_light, t_min=0.1):
    """Recover the clean image: J = (I - A*(1-t)) / t. Requires t >= t_min."""
    t = np.asarray(t, dtype=np.float64)
    if t.min() < t_min:
        raise ValueError(
            f"transmission {t.min():.4f} below the inversion floor t_min={t_min}")
    a = np.asarray(atmospheric_light, dtype=np.float64).reshape(3, 1, 1)
    clean = (np.asarray(hazy, dtype=np.float64) - a * (1.0 - t)) / t
    return clean.astype(np.float32)


def _value_noise(rng, h, w, cell):
    """Bilinear-interpolated random grid with smoothstep easing; values in [0,1]."""
    cell = max(2, int(cell))
    gy, gx = h // cell + 2, w // cell + 2
    grid = rng.uniform((gy, gx))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = ys - y0
    fx = xs - x0
    fy = fy * fy * (3.0 - 2.0 * fy)
    fx = fx * fx * (3.0 - 2.0 * fx)
    g00 = grid[np.ix_(y0, x0)]
    g01 = grid[np.ix_(y0, x0 + 1)]
    g10 = grid[np.ix_(y0 + 1, x0)]
    g11 = grid[np.ix_(y0 + 1, x0 + 1)]
    top = g00 * (1 - fx) + g01 * fx
    bot = g10 * (1 - fx) + g11 * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def _feathered_box(h, w, y0, y1, x0, x1, feather):
    iy = np.arange(h, dtype=np.float64)
    ix = np.arange(w, dtype=np.float64)
    py = np.clip(np.minimum(iy - y0 + 1, y1 - iy) / feather, 0.0, 1.0)
    px = np.clip(np.minimum(ix - x0 + 1, x1 - ix) / feather, 0.0, 1.0)
    return py[:, None] * px[None, :]


def generate_scene(seed, h, w, fine_detail=False):
    """Deterministic procedural scene; the same seed reproduces it bit-exactly.

    Scene structure is coarse relative to the frame (soft feathered boxes over
    low-octave value noise) and the depth field is a radial bowl plus mild
    noise, so the degradation stays learnable at desk scale; a radial depth is
    also invariant under the rotate/flip augmentation group. With fine_detail
    a high-frequency octave and hard box edges are added, which stresses
    full-resolution restoration.
    """
    if h < 16 or w < 16:
        raise ShapeMismatch(f"scene must be at least 16x16, got {h}x{w}")
    rng = SplitMix64(hash64(0x5CE4E, seed, h, w))
    img = np.zeros((3, h, w))
    coarse = min(h, w) // 3
    for c in range(3):
        img[c] = 0.55 * _value_noise(rng, h, w, coarse) \
            + 0.25 * _value_noise(rng, h, w, max(8, coarse // 2))
    if fine_detail:
        img += 0.18 * (_value_noise(rng, h, w, 3) - 0.5)[None]

    angle = rng.uniform(low=0.0, high=2.0 * np.pi)
    yy = np.linspace(-1.0, 1.0, h)[:, None]
    xx = np.linspace(-1.0, 1.0, w)[None, :]
    img += 0.08 * (np.cos(angle) * xx + np.sin(angle) * yy)[None]

    feather = 1.5 if fine_detail else 6.0
    for _ in range(3):
        y0 = rng.uniform(low=0, high=0.7) * h
        x0 = rng.uniform(low=0, high=0.7) * w
        y1 = y0 + rng.uniform(low=0.2, high=0.5) * h
        x1 = x0 + rng.uniform(low=0.2, high=0.5) * w
        color = rng.uniform((3,), 0.25, 0.85)
        alpha = rng.uniform(low=0.3, high=0.6)
        mask = alpha * _feathered_box(h, w, y0, y1, x0, x1, feather=feather)
        img = img * (1.0 - mask[None]) + color[:, None, None] * mask[None]

    clean = np.clip(img, 0.2, 0.95)
    r = np.sqrt(((yy * np.ones_like(xx)) ** 2 + (xx * np.ones_like(yy)) ** 2) / 2.0)
    d = 0.9 * r + 0.1 * _value_noise(rng, h, w, max(8, min(h, w) // 2))
    depth = (d - d.min()) / (d.max() - d.min() + 1e-12)
    return Scene(clean.astype(np.float32), depth[None].astype(np.float32))


def sample_haze_params(rng, beta_range=(0.12, 0.3), airlight_range=(0.85, 0.9)):
    """Near-gray airlight with mild default scattering (desk-scale training)."""
    base = rng.uniform(low=airlight_range[0], high=airlight_range[1])
    a = np.clip(base + rng.uniform((3,), -0.015, 0.015), 0.7, 1.0)
    beta = rng.uniform(low=beta_range[0], high=beta_range[1])
    return HazeParams(atmospheric_light=a, beta=float(beta))


AUGMENT_OPS = ("none", "rot90", "rot180", "rot270", "hflip")


def _transform(arr, op):
    if op == "none":
        return arr.copy()
    if op == "hflip":
        return np.ascontiguousarray(arr[:, :, ::-1])
    k = {"rot90": 1, "rot180": 2, "rot270": 3}[op]
    return np.ascontiguousarray(np.rot90(arr, k, axes=(1, 2)))


def augment(pair, op):
    if op not in AUGMENT_OPS:
        raise ValueError(f"unknown augmentation {op!r}; expected one of {AUGMENT_OPS}")
    return HazyPair(hazy=_transform(pair.hazy, op), clean=_transform(pair.clean, op),
                    transmission=_transform(pair.transmission, op), params=pair.params)


def extract_patches(pair, size=256, count=1, seed=0):
    """Seeded uniform crops applied congruently to all three planes."""
    _, h, w = pair.hazy.shape
    if size > h or size > w:
        raise ShapeMismatch(f"patch size {size} exceeds scene extent {h}x{w}")
    if size % 4:
        raise ShapeMismatch(f"patch size must be divisible by 4, got {size}")
    rng = SplitMix64(hash64(0x9A7C4, seed))
    out = []
    for _ in range(count):
        y0 = rng.randint(h - size + 1)
        x0 = rng.randint(w - size + 1)
        out.append(HazyPair(
            hazy=pair.hazy[:, y0:y0 + size, x0:x0 + size].copy(),
            clean=pair.clean[:, y0:y0 + size, x0:x0 + size].copy(),
            transmission=pair.transmission[:, y0:y0 + size, x0:x0 + size].copy(),
            params=pair.params))
    return out


# -- dataset persistence ------------------------------------------------------


def write_dataset(root, split, items):
    """items: iterable of (id, HazyPair). Layout: {root}/{split}/{id}_hazy.ppm etc."""
    out_dir = os.path.join(root, split)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["id\tA_r\tA_g\tA_b\tbeta"]
    for item_id, pair in items:
        write_ppm(os.path.join(out_dir, f"{item_id}_hazy.ppm"), pair.hazy)
        write_ppm(os.path.join(out_dir, f"{item_id}_gt.ppm"), pair.clean)
        write_f32m(os.path.join(out_dir, f"{item_id}_t.f32"), pair.transmission)
        a = pair.params.atmospheric_light
        lines.append(f"{item_id}\t{a[0]:.6f}\t{a[1]:.6f}\t{a[2]:.6f}\t{pair.params.beta:.6f}")
    with open(os.path.join(out_dir, "meta.tsv"), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(root, split):
    """Returns a list of (id, HazyPair) in meta.tsv order.

    Images come back 8-bit quantized, so the scattering identity holds only
    approximately for loaded pairs.
    """
    split_dir = os.path.join(root, split)
    meta = os.path.join(split_dir, "meta.tsv")
    if not os.path.isfile(meta):
        raise DataError(f"no dataset at {split_dir} (missing meta.tsv)")
    items = []
    with open(meta) as f:
        header = f.readline().strip().split("\t")
        if header != ["id", "A_r", "A_g", "A_b", "beta"]:
            raise DataError(f"{meta}: unexpected header {header}")
        for line in f:
            if not line.strip():
                continue
            item_id, ar, ag, ab, beta = line.strip().split("\t")
            params = HazeParams(np.array([float(ar), float(ag), float(ab)]), float(beta))
            try:
                pair = HazyPair(
                    hazy=read_ppm(os.path.join(split_dir, f"{item_id}_hazy.ppm")),
                    clean=read_ppm(os.path.join(split_dir, f"{item_id}_gt.ppm")),
                    transmission=read_f32m(os.path.join(split_dir, f"{item_id}_t.f32")),
                    params=params)
            except FileNotFoundError as e:
                raise DataError(f"dataset item {item_id!r} incomplete: {e}") from None
            items.append((item_id, pair))
    if not items:
        raise DataError(f"{meta}: dataset is empty")
    return items


def make_dataset(root, split, scenes, size, seed, beta_range=(0.12, 0.3),
                 airlight_range=(0.85, 0.9), fine_detail=False):
    """Generate, degrade, and persist `scenes` procedural pairs; returns the items."""
    rng = SplitMix64(hash64(0x0DA7A, seed))
    items = []
    for i in range(scenes):
        scene = generate_scene(hash64(seed, i), size, size, fine_detail=fine_detail)
        pair = synthesize_hazy(scene, sample_haze_params(rng, beta_range, airlight_range))
        items.append((f"{i:04d}", pair))
    write_dataset(root, split, items)
    return items
