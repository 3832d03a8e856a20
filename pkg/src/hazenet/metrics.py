"""Image quality metrics and scalar-map visualization.

PSNR/SSIM operate on [0,1] RGB arrays; SSIM converts to grayscale by channel
mean and uses the standard 11x11 Gaussian window (sigma 1.5) over valid
positions with C1=(0.01*peak)^2, C2=(0.03*peak)^2.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class MetricReport:
    """Per-image and aggregate quality numbers for one evaluation run."""
    rows: list                  # (id, psnr_db, ssim) per image, input order
    mean_psnr: float            # over finite per-image values
    mean_ssim: float
    count: int
    config_echo: str = ""
    notes: tuple = field(default_factory=tuple)

    @classmethod
    def from_rows(cls, rows, config_echo=""):
        finite = [p for _, p, _ in rows if np.isfinite(p)]
        mean_psnr = float(np.mean(finite)) if finite else float("inf")
        mean_ssim = float(np.mean([s for _, _, s in rows])) if rows else 0.0
        return cls(rows=list(rows), mean_psnr=mean_psnr, mean_ssim=mean_ssim,
                   count=len(rows), config_echo=config_echo,
                   notes=("metrics computed on RGB in [0,1] space",))


def _arr(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def psnr(x, y, peak=1.0):
    """10*log10(peak^2 / MSE); returns inf for identical inputs."""
    a, b = _arr(x).astype(np.float64), _arr(y).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"psnr inputs differ in shape: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def _to_gray(a):
    a = _arr(a).astype(np.float64)
    if a.ndim == 3:
        return a.mean(axis=0)
    if a.ndim == 2:
        return a
    raise ShapeMismatch(f"ssim expects (C,H,W) or (H,W), got {a.shape}")


def ssim(x, y, peak=1.0, window_size=11, sigma=1.5):
    gx, gy = _to_gray(x), _to_gray(y)
    if gx.shape != gy.shape:
        raise ShapeMismatch(f"ssim inputs differ in shape: {gx.shape} vs {gy.shape}")
    h, w = gx.shape
    if h < window_size or w < window_size:
        raise ShapeMismatch(
            f"image {h}x{w} smaller than the {window_size}x{window_size} ssim window")
    win = gaussian_window(window_size, sigma)

    def filt(img):
        v = np.lib.stride_tricks.sliding_window_view(img, (window_size, window_size))
        return np.tensordot(v, win, axes=([2, 3], [0, 1]))

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_x, mu_y = filt(gx), filt(gy)
    sig_x = filt(gx * gx) - mu_x * mu_x
    sig_y = filt(gy * gy) - mu_y * mu_y
    sig_xy = filt(gx * gy) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sig_xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sig_x + sig_y + c2)
    return float(np.mean(num / den))


def diff_map(a, b):
    """Per-pixel mean absolute channel difference, max-normalized to [0,1]."""
    a, b = _arr(a).astype(np.float64), _arr(b).astype(np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"diff_map inputs differ in shape: {a.shape} vs {b.shape}")
    d = np.abs(a - b).mean(axis=0)
    peak = d.max()
    if peak > 0:
        d = d / peak
    return d[None].astype(np.float32)


# piecewise-linear blue -> cyan -> green -> yellow -> red ramp whose red
# component never decreases, anchored at (0,0,0.5) and (0.5,0,0)
_JET_KNOTS = {
    "r": ([0.0, 0.375, 0.625, 1.0], [0.0, 0.0, 0.5, 0.5]),
    "g": ([0.0, 0.125, 0.375, 0.625, 0.875, 1.0], [0.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
    "b": ([0.0, 0.125, 0.375, 0.625, 1.0], [0.5, 1.0, 1.0, 0.0, 0.0]),
}


def colorjet_render(scalar_map):
    """False-color a (1,H,W) or (H,W) map in [0,1] into a (3,H,W) RGB image."""
    m = _arr(scalar_map).astype(np.float64)
    if m.ndim == 3:
        if m.shape[0] != 1:
            raise ShapeMismatch(f"expected a single-channel map, got {m.shape}")
        m = m[0]
    if m.min() < 0.0 or m.max() > 1.0:
        warnings.warn("colorjet input outside [0,1]; clamping", stacklevel=2)
        m = np.clip(m, 0.0, 1.0)
    out = np.empty((3,) + m.shape)
    for i, ch in enumerate("rgb"):
        xs, ys = _JET_KNOTS[ch]
        out[i] = np.interp(m, xs, ys)
    return out.astype(np.float32)
