"""Command-line interface.

Subcommands: synth, train, dehaze, eval, count, gradcheck, ablate.
Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import gradcheck as gc
from .cost import MODULES, count_cost
from .errors import DataError, ShapeMismatch, TrainingDiverged
from .formats import read_ppm, write_ppm
from .hazegen import load_dataset, make_dataset
from .metrics import MetricReport, colorjet_render, psnr, ssim
from .model import DehazeNet, ModelConfig
from .tensor import Tensor, no_grad
from .training import TrainConfig, train_loop


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _read_kv_file(path):
    kv = {}
    try:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}: malformed line {line!r} (expected key=value)")
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e}") from None
    return kv


def _split_config(kv, parser):
    from dataclasses import fields
    train_keys = {f.name for f in fields(TrainConfig)}
    model_keys = {f.name for f in fields(ModelConfig)}
    train_kv, model_kv = {}, {}
    for k, v in kv.items():
        if k in train_keys:
            train_kv[k] = v
        elif k in model_keys:
            model_kv[k] = v
        else:
            parser.error(f"unknown config key {k!r}")
    return train_kv, model_kv


def _pad_to_multiple_of_4(img):
    _, h, w = img.shape
    ph, pw = (-h) % 4, (-w) % 4
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return img, h, w


def _evaluate_items(model, items, workers=1):
    """Returns rows of (id, psnr, ssim) plus the final output images, in input order."""

    def one(item):
        item_id, pair = item
        padded, h, w = _pad_to_multiple_of_4(pair.hazy)
        with no_grad():
            out = model(Tensor(padded[None]))
        final = np.clip(out.final.data[0, :, :h, :w], 0.0, 1.0)
        return item_id, psnr(final, pair.clean), ssim(final, pair.clean), final

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(it) for it in items]
    return results


def _fmt_metric(v):
    return "inf" if np.isinf(v) else f"{v:.4f}"


# -- subcommand handlers --------------------------------------------------------


def _cmd_synth(args):
    items = make_dataset(args.out, args.split, args.scenes, args.size, args.seed)
    print(f"wrote {len(items)} scene pairs to {os.path.join(args.out, args.split)}")
    return 0


def _cmd_train(args, parser):
    kv = _read_kv_file(args.config) if args.config else {}
    train_kv, model_kv = _split_config(kv, parser)
    tcfg = TrainConfig.from_kv(train_kv)
    mcfg = ModelConfig.from_kv({**ModelConfig.desk().to_kv(), **model_kv})
    items = load_dataset(args.data, args.split)
    model = DehazeNet(mcfg, seed=tcfg.seed)
    log_path = args.log or (args.out + ".log.tsv")
    result = train_loop(model, items, tcfg, ckpt_path=args.out, log_path=log_path)
    print(f"trained {tcfg.steps} steps; final loss {result.final_loss:.6f}; "
          f"checkpoint {args.out}; log {log_path}")
    return 0


def _cmd_dehaze(args):
    model = DehazeNet.load(args.ckpt)
    img = read_ppm(args.input)
    padded, h, w = _pad_to_multiple_of_4(img)
    with no_grad():
        out = model(Tensor(padded[None]))
    final = np.clip(out.final.data[0, :, :h, :w], 0.0, 1.0)
    write_ppm(args.out, final)
    if args.emit_pseudo:
        write_ppm(args.emit_pseudo, np.clip(out.pseudo.data[0, :, :h, :w], 0.0, 1.0))
    if args.emit_density:
        density = out.density.map.data[0, :, :h, :w]
        write_ppm(args.emit_density, colorjet_render(density))
    print(f"dehazed {args.input} -> {args.out}")
    return 0


def _cmd_eval(args):
    model = DehazeNet.load(args.ckpt)
    cfg_echo = " ".join(f"{k}={v}" for k, v in model.cfg.to_kv().items())
    print(f"config: {cfg_echo} seed={model.seed}")
    split = args.split
    if split is None:
        split = "test" if os.path.isdir(os.path.join(args.data, "test")) else "train"
    items = load_dataset(args.data, split)
    results = _evaluate_items(model, items, workers=args.workers)
    report = MetricReport.from_rows([(i, p, s) for i, p, s, _ in results],
                                    config_echo=cfg_echo)
    with open(args.report, "w") as f:
        f.write("id\tpsnr\tssim\n")
        for item_id, p, s in report.rows:
            f.write(f"{item_id}\t{_fmt_metric(p)}\t{s:.4f}\n")
        f.write(f"mean\t{_fmt_metric(report.mean_psnr)}\t{report.mean_ssim:.4f}\n")
    print(f"evaluated {report.count} images from {split!r}: "
          f"psnr {_fmt_metric(report.mean_psnr)} dB, ssim {report.mean_ssim:.4f} "
          f"({report.notes[0]})")
    return 0


def _cmd_count(args):
    report = count_cost(args.module, channels=args.channels,
                        height=args.hw[0], width=args.hw[1])
    print(f"module={report.module} channels={report.channels} "
          f"hw={report.height}x{report.width}")
    print(f"params={report.params}")
    print(f"flops={report.flops} ({report.convention})")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def _cmd_gradcheck(args):
    names = None
    if args.module:
        names = gc_case_names(args.module)
    results = gc.run_suite(names)
    worst = 0.0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:20s} max_rel_err={r.max_rel_err:.3e} ({r.checked} coords)")
        worst = max(worst, r.max_rel_err)
    print(f"worst relative error: {worst:.3e} (tolerance {gc.REL_TOLERANCE})")
    return 0 if all(r.passed for r in results) else 2


def gc_case_names(module):
    if module in gc.COMPOSITE_NAMES:
        return [module]
    if module == "ops":
        return [n for n in gc.case_names() if n not in gc.COMPOSITE_NAMES]
    raise DataError(f"unknown gradcheck module {module!r}")


ABLATION_TABLES = {
    "1": [  # shallow-stage attention ladder (shallow-only models)
        ("base", dict(use_sha=False, use_fa=False, use_cot=False, use_aff=False)),
        ("fa", dict(use_sha=False, use_fa=True, use_cot=False, use_aff=False)),
        ("sha", dict(use_sha=True, use_cot=False, use_aff=False)),
        ("sha+cot", dict(use_sha=True, use_cot=True, use_aff=False)),
        ("sha+cot+aff", dict(use_sha=True, use_cot=True, use_aff=True)),
    ],
    "3": [  # attention-internal switches, full model
        ("avg", dict(sha_maxpool=False, sha_shuffle=False)),
        ("avg+max", dict(sha_maxpool=True, sha_shuffle=False)),
        ("avg+max+shuffle", dict(sha_maxpool=True, sha_shuffle=True)),
        ("restore_k1", dict(sha_restore_kernel=1)),
        ("restore_k3", dict(sha_restore_kernel=3)),
    ],
    "4": [  # architecture stages
        ("shallow", dict(use_deep=False, use_density=False)),
        ("shallow+deep", dict(use_deep=True, use_density=False)),
        ("shallow+deep+density", dict(use_deep=True, use_density=True)),
    ],
}


def run_ablation(table, items, steps=800, seed=5, patch=64):
    """Train each configuration of the requested ladder; returns result rows."""
    shallow_only = table == "1"
    rows = []
    for name, overrides in ABLATION_TABLES[table]:
        if shallow_only:
            overrides = {**overrides, "use_deep": False, "use_density": False}
        mcfg = ModelConfig.desk(**overrides)
        tcfg = TrainConfig(steps=steps, patch=patch, seed=seed,
                           log_every=max(1, steps // 4))
        model = DehazeNet(mcfg, seed=seed)
        result = train_loop(model, items, tcfg)
        final = _evaluate_items(model, items)
        finite = [r[1] for r in final if np.isfinite(r[1])]
        mean_psnr = float(np.mean(finite)) if finite else float("inf")
        rows.append((name, steps, result.final_loss, mean_psnr))
    return rows


def _cmd_ablate(args):
    items = load_dataset(args.data, args.split)
    rows = run_ablation(args.table, items, steps=args.steps, seed=args.seed)
    lines = ["config\tsteps\tfinal_loss\ttrain_psnr"]
    lines += [f"{n}\t{s}\t{l:.6f}\t{_fmt_metric(p)}" for n, s, l, p in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    sys.stdout.write(text)
    return 0


# -- parser wiring ----------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="hazenet",
                     description="density-aware single-image dehazing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic hazy dataset")
    p.add_argument("--scenes", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="key=value file with training/model settings")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--split", default="train")
    p.add_argument("--log", help="metrics TSV path (default: <out>.log.tsv)")

    p = sub.add_parser("dehaze", help="restore one hazy PPM image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-density", help="write the density map as a ColorJet PPM")
    p.add_argument("--emit-pseudo", help="write the shallow-stage restoration PPM")

    p = sub.add_parser("eval", help="evaluate a checkpoint over a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output TSV (id psnr ssim)")
    p.add_argument("--split", default=None, help="default: test if present, else train")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("count", help="parameter/FLOP accounting for a module")
    p.add_argument("--module", required=True, choices=MODULES)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--hw", type=int, nargs=2, default=(256, 256), metavar=("H", "W"))

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--module", help="restrict to one composite (or 'ops')")

    p = sub.add_parser("ablate", help="train a configuration ladder, emit a TSV")
    p.add_argument("--table", required=True, choices=sorted(ABLATION_TABLES))
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--seed", type=int, default=5)
    p.add_argument("--out", help="also write the TSV here")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "train":
            return _cmd_train(args, parser)
        if args.command == "dehaze":
            return _cmd_dehaze(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "count":
            return _cmd_count(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "ablate":
            return _cmd_ablate(args)
        parser.error(f"unknown command {args.command!r}")
    except (DataError, ShapeMismatch, TrainingDiverged) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
