"""Finite-difference verification of the analytic gradients.

Every check runs in float64: central differences with step 1e-4 against the
tape's gradients, scored as max |analytic - numeric| / max(|analytic|,
|numeric|, 1e-5). The suite covers the primitive operator set and the
composite blocks up to the full model on a 1x3x16x16 input.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import SHA, SHAConfig
from .blocks import AFF, CoT, MHAB, MHAC, Tail
from .model import DehazeNet, ModelConfig
from .nn import make_rng
from .rng import SplitMix64, hash64
from .tensor import Tensor
from .training import charbonnier, total_loss

FD_STEP = 1e-4
REL_TOLERANCE = 1e-3
ABS_FLOOR = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    checked: int

    @property
    def passed(self):
        return self.max_rel_err < REL_TOLERANCE


def _coords(size, max_coords, seed):
    if max_coords is None or size <= max_coords:
        return np.arange(size)
    rng = SplitMix64(hash64(0xC008D5, seed))
    picked = set()
    while len(picked) < max_coords:
        picked.add(rng.randint(size))
    return np.array(sorted(picked))


def check_gradients(loss_fn, wrt, max_coords=None, h=FD_STEP, seed=0):
    """Compare tape gradients of scalar loss_fn() against central differences.

    wrt: tensors (requires_grad) whose .data is perturbed in place.
    Returns (max_rel_err, coordinates_checked).
    """
    for p in wrt:
        p.grad = None
    loss = loss_fn()
    T.backward(loss)
    worst, checked = 0.0, 0
    with T.no_grad():
        for pi, p in enumerate(wrt):
            analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            for idx in _coords(flat.size, max_coords, seed * 1009 + pi):
                orig = flat[idx]
                flat[idx] = orig + h
                fp = loss_fn().item()
                flat[idx] = orig - h
                fm = loss_fn().item()
                flat[idx] = orig
                numeric = (fp - fm) / (2.0 * h)
                a = float(analytic.reshape(-1)[idx])
                err = abs(a - numeric) / max(abs(a), abs(numeric), ABS_FLOOR)
                worst = max(worst, err)
                checked += 1
    return worst, checked


def _rand(rng, shape, scale=1.0):
    return Tensor(rng.uniform(shape, -scale, scale), dtype=np.float64)


def _projection(rng, shape):
    return Tensor(rng.uniform(shape, -1.0, 1.0), dtype=np.float64)


def _module_case(build_module, in_shape, seed, loss="proj"):
    """Returns (loss_fn, wrt) for a module driven by a random float64 input."""
    rng = SplitMix64(hash64(0x6C43C, seed))
    module = build_module(make_rng(seed)).astype(np.float64)
    x = Tensor(rng.uniform(in_shape, -1.0, 1.0), dtype=np.float64)
    x.requires_grad = True
    out_probe = module(x.detach())
    r = _projection(rng, out_probe.shape)

    def loss_fn():
        return T.mul(module(x), r).sum()

    return loss_fn, [x] + module.parameters()


def _op_cases():
    rng = SplitMix64(11)
    cases = {}

    def add(name, loss_fn, wrt):
        cases[name] = (loss_fn, wrt, None)

    x = _rand(rng, (1, 2, 5, 5))
    w = _rand(rng, (3, 2, 3, 3))
    b = _rand(rng, (3,))
    for t in (x, w, b):
        t.requires_grad = True
    r = _projection(rng, (1, 3, 3, 3))
    add("conv2d_stride2", lambda: T.mul(T.conv2d(x, w, b, stride=2, padding=1), r).sum(), [x, w, b])

    xr = _rand(rng, (1, 2, 4, 4))
    wr = _rand(rng, (2, 2, 3, 3))
    xr.requires_grad = wr.requires_grad = True
    rr = _projection(rng, (1, 2, 4, 4))
    add("conv2d_reflect", lambda: T.mul(T.conv2d(xr, wr, padding=1, pad_mode="reflect"), rr).sum(), [xr, wr])

    xg = _rand(rng, (1, 4, 4, 4))
    wg = _rand(rng, (4, 1, 3, 3))
    xg.requires_grad = wg.requires_grad = True
    add("conv2d_depthwise", lambda: (T.conv2d(xg, wg, padding=1, groups=4) ** 2.0).sum(), [xg, wg])

    x1 = _rand(rng, (1, 3, 7))
    w1 = _rand(rng, (4, 3, 3))
    x1.requires_grad = w1.requires_grad = True
    add("conv1d_reflect", lambda: (T.conv1d(x1, w1, padding=1, pad_mode="reflect") ** 2.0).sum(), [x1, w1])

    xu = _rand(rng, (1, 2, 4, 4))
    xu.requires_grad = True
    add("unfold", lambda: (T.unfold(xu, 3, padding=1) ** 2.0).sum(), [xu])

    xp = _rand(rng, (1, 3, 4, 5))
    xp.requires_grad = True
    add("directional_avg", lambda: (T.directional_pool(xp, "horizontal", "avg") ** 2.0).sum(), [xp])
    add("directional_max", lambda: (T.directional_pool(xp, "vertical", "max") ** 2.0).sum(), [xp])

    xs = _rand(rng, (1, 4, 6))
    xs.requires_grad = True
    add("channel_shuffle", lambda: (T.channel_shuffle(xs, 2) ** 2.0).sum(), [xs])

    xa = _rand(rng, (3, 4), scale=2.0)
    xa.data += np.sign(xa.data) * 0.01  # keep relu kinks out of the FD window
    xa.requires_grad = True
    add("relu6", lambda: (T.relu6(xa) * _projection(SplitMix64(3), (3, 4))).sum(), [xa])
    add("elu", lambda: T.elu(xa).sum(), [xa])
    add("tanh", lambda: T.tanh(xa).sum(), [xa])
    add("sigmoid", lambda: T.sigmoid(xa).sum(), [xa])

    xn = _rand(rng, (2, 2, 4, 4))
    xn.requires_grad = True
    add("instance_norm", lambda: (T.instance_norm(xn, eps=1e-3) ** 2.0).sum(), [xn])

    xup = _rand(rng, (1, 2, 3, 3))
    xup.requires_grad = True
    add("upsample_nearest", lambda: (T.upsample_nearest(xup, 2) ** 2.0).sum(), [xup])

    xsm = _rand(rng, (2, 5, 3))
    xsm.requires_grad = True
    add("softmax", lambda: (T.softmax(xsm, 1) ** 2.0).sum(), [xsm])

    ca = _rand(rng, (1, 2, 3))
    cb = _rand(rng, (1, 2, 4))
    ca.requires_grad = cb.requires_grad = True
    add("concat_split", lambda: (T.split(T.concat([ca, cb], 2), [3, 4], 2)[1] ** 2.0).sum(), [ca, cb])

    lx = _rand(rng, (2, 3, 4, 4))
    ly = _rand(rng, (2, 3, 4, 4))
    lx.requires_grad = True
    add("charbonnier", lambda: charbonnier(lx, ly, eps=1e-3), [lx])

    return cases


def _composite_cases():
    cases = {}

    cases["sha"] = _module_case(
        lambda rng: SHA(SHAConfig(channels=8), rng), (1, 8, 5, 6), seed=21)
    cases["mhab"] = _module_case(lambda rng: MHAB(8, rng), (1, 8, 5, 5), seed=22)
    cases["cot"] = _module_case(lambda rng: CoT(8, rng), (1, 8, 5, 5), seed=23)
    cases["mhac"] = _module_case(lambda rng: MHAC(8, rng), (1, 8, 5, 5), seed=24)
    cases["tail"] = _module_case(lambda rng: Tail(8, rng), (1, 8, 5, 5), seed=25)

    def aff_case():
        rng = SplitMix64(26)
        aff = AFF(theta=0.3).astype(np.float64)
        a = _rand(rng, (1, 3, 4, 4))
        b = _rand(rng, (1, 3, 4, 4))
        a.requires_grad = b.requires_grad = True
        r = _projection(rng, (1, 3, 4, 4))
        return (lambda: T.mul(aff(a, b), r).sum()), [a, b, aff.theta]

    cases["aff"] = aff_case()

    def density_case():
        rng = SplitMix64(27)
        cfg = ModelConfig.desk(density_channels=8)
        model = DehazeNet(cfg, seed=27)
        density = model.density.astype(np.float64)
        pseudo = _rand(rng, (1, 3, 12, 12))
        hazy = _rand(rng, (1, 3, 12, 12))
        pseudo.requires_grad = hazy.requires_grad = True
        r = _projection(rng, (1, 1, 12, 12))
        return (lambda: T.mul(density(pseudo, hazy).map, r).sum()), \
            [pseudo, hazy] + density.parameters()

    cases["density"] = density_case()

    def model_case():
        rng = SplitMix64(28)
        cfg = ModelConfig.desk(shallow_channels=8, shallow_blocks=1,
                               deep_channels=4, deep_blocks=1, density_channels=8)
        model = DehazeNet(cfg, seed=28).astype(np.float64)
        x = Tensor(rng.uniform((1, 3, 16, 16), 0.05, 0.95), dtype=np.float64)
        x.requires_grad = True
        gt = Tensor(rng.uniform((1, 3, 16, 16), 0.05, 0.95), dtype=np.float64)

        def loss_fn():
            out = model(x)
            return total_loss(out.pseudo, out.final, gt)

        return loss_fn, [x] + model.parameters()

    cases["model"] = model_case()
    return cases


COMPOSITE_NAMES = ("sha", "mhab", "cot", "mhac", "tail", "aff", "density", "model")


def case_names():
    return list(_op_cases().keys()) + list(COMPOSITE_NAMES)


# per-case coordinate budgets for the composite checks
_COMPOSITE_BUDGET = {"sha": 24, "mhab": 16, "cot": 16, "mhac": 12, "tail": 16,
                     "aff": None, "density": 10, "model": 5}

# deep compositions use a narrower step: a 1e-4 probe through shared biases
# moves thousands of relu6 preactivations at once and can straddle a kink,
# which breaks the finite difference itself rather than the analytic gradient
_COMPOSITE_STEP = {"density": 1e-5, "model": 1e-5, "mhac": 1e-5}


def run_suite(names=None):
    """Run the finite-difference suite; returns a list of CheckResult."""
    available = {}
    for name, (fn, wrt, budget) in _op_cases().items():
        available[name] = (fn, wrt, budget, FD_STEP)
    for name, (fn, wrt) in _composite_cases().items():
        available[name] = (fn, wrt, _COMPOSITE_BUDGET.get(name),
                           _COMPOSITE_STEP.get(name, FD_STEP))
    if names:
        missing = sorted(set(names) - set(available))
        if missing:
            raise ValueError(f"unknown gradcheck cases: {missing}")
        available = {k: v for k, v in available.items() if k in names}
    results = []
    for name, (fn, wrt, budget, step) in available.items():
        err, checked = check_gradients(fn, wrt, max_coords=budget, h=step)
        results.append(CheckResult(name=name, max_rel_err=err, checked=checked))
    return results
