"""Command-line entry point.

Exit codes: 0 on success, 1 on validation errors (bad arguments, config,
shapes, files), 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from loci import config as C
from loci.errors import ConfigError, ContractError, FormatError, LociError, ShapeError

VALIDATION_ERRORS = (ConfigError, ContractError, ShapeError, FormatError, FileNotFoundError, IsADirectoryError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _workers(cfg_workers: int) -> int:
    env = os.environ.get("LOCI_THREADS")
    if env is None:
        return cfg_workers
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"LOCI_THREADS: expected int, got {env!r}") from None
    if n < 1:
        raise ConfigError("LOCI_THREADS: expected int >= 1")
    return n


def _snapshot(path: str, values: dict):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in values.items():
            fh.write(f"{k} = {v}\n")


def cmd_gen(args) -> int:
    from loci import datagen

    ds = datagen.generate(args.scenario, args.episodes, args.seed, height=args.height, width=args.width,
                          length=args.length, objects=args.objects)
    datagen.save(args.out, ds)
    _snapshot(args.out + ".config.txt", {"scenario": args.scenario, "episodes": args.episodes, "seed": args.seed,
                                         "height": args.height, "width": args.width, "length": args.length,
                                         "objects": args.objects})
    n, t, h, w, c, k = ds.shape
    print(f"wrote {args.out}: episodes={n} frames={t} size={h}x{w} objects={k}")
    return 0


def _load_config(args) -> C.Config:
    cfg = C.load(args.config) if args.config else C.Config()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set: expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        C.set_value(cfg, key.strip(), value)
    if getattr(args, "mode", None):
        cfg.model.mode = args.mode
    cfg.workers = _workers(cfg.workers)
    return cfg.validate()


def cmd_train(args) -> int:
    from loci import datagen
    from loci.training.trainer import Trainer

    cfg = _load_config(args)
    data = datagen.load(args.data)
    trainer = Trainer(cfg, data, args.out)
    last = [0]

    def report(tr):
        if tr.update - last[0] >= max(cfg.train.log_every, 1) * 50 or tr.update == cfg.train.updates:
            last[0] = tr.update
            print(tr.history[-1].line(), flush=True)

    trainer.train(report)
    print(f"wrote {os.path.join(args.out, 'final.lckp')} after {trainer.update} updates")
    return 0


def _load_ckpt(path):
    from loci.training import checkpoint

    model, meta = checkpoint.load(path)
    return model, meta


def cmd_eval(args) -> int:
    from loci import datagen
    from loci.evaluation import report

    metrics = report.parse_metrics(args.metrics)
    model, meta = _load_ckpt(args.ckpt)
    data = datagen.load(args.data)
    res = report.evaluate(model, data, metrics, teacher_forcing=args.teacher_forcing)
    report.write_report(res, args.report)
    _snapshot(os.path.join(args.report, "config.txt"),
              {"ckpt": args.ckpt, "data": args.data, "metrics": ",".join(metrics),
               "teacher_forcing": args.teacher_forcing, "mode": meta.get("mode"), "update": meta.get("update"),
               "workers": _workers(1)})
    print(report.render_text(report.EvalResult(aggregate=res.aggregate)).strip())
    return 0


def cmd_rollout(args) -> int:
    from loci import datagen, runner
    from loci.evaluation import report, tracking

    model, meta = _load_ckpt(args.ckpt)
    data = datagen.load(args.data)
    _, t, h, w, _, _ = data.shape
    if (h, w) != (model.arch.height, model.arch.width):
        raise ConfigError(f"dataset resolution {h}x{w} does not match checkpoint resolution "
                          f"{model.arch.height}x{model.arch.width}")
    idx = np.arange(min(args.episodes, len(data)))
    traces, preds = runner.rollout(model, data.frames[idx], data.backgrounds[idx], args.context, args.horizon,
                                   teacher_forcing=args.teacher_forcing)
    os.makedirs(args.out, exist_ok=True)
    lines = []
    for j, i in enumerate(idx):
        stem = os.path.join(args.out, f"rollout_{i:04d}")
        traces[j].save(stem + ".ltrc")
        with open(stem + ".csv", "w", encoding="utf-8") as fh:
            fh.write(traces[j].to_csv())
        np.save(stem + "_pred.npy", preds[j])
        report.plot_frames(preds[j], data.frames[i], stem + ".png")
        summary = tracking.tracking_error(traces[j], data.episode(int(i)))
        err = summary.errors[args.context:] if summary.errors.shape[0] > args.context else summary.errors[:0]
        vals = err[np.isfinite(err)]
        lines.append(f"episode={i} context={args.context} horizon={args.horizon} "
                     f"rollout_tracking_error={vals.mean() if vals.size else float('nan'):.6g}")
    with open(os.path.join(args.out, "rollout.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _snapshot(os.path.join(args.out, "config.txt"), {"ckpt": args.ckpt, "data": args.data, "context": args.context,
                                                     "horizon": args.horizon, "episodes": len(idx),
                                                     "mode": meta.get("mode")})
    print("\n".join(lines))
    return 0


def cmd_gradcheck(args) -> int:
    from loci import gradsuite

    modules = [m.strip() for m in args.module.split(",")] if args.module else None
    try:
        results = gradsuite.run_suite(modules, seeds=args.seeds, progress=lambda r, dt: print(
            f"{r.name:18s} max_rel_err={r.max_rel_error:.3e} tol={r.tol:.0e} seeds={r.seeds} "
            f"{'ok' if r.passed else 'FAIL'} ({dt:.1f}s)", flush=True))
    except KeyError as exc:
        raise ConfigError(f"--module: unknown check(s) {exc.args[0]}") from None
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}")
        return 2
    print(f"all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    from loci.datagen import SCENARIOS
    from loci.gate import MODES

    p = _Parser(prog="loci", description="Object-centric video prediction with a percept gate.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--scenario", required=True, choices=SCENARIOS)
    g.add_argument("--out", required=True)
    g.add_argument("--episodes", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--height", type=int, default=32)
    g.add_argument("--width", type=int, default=32)
    g.add_argument("--length", type=int, default=None)
    g.add_argument("--objects", type=int, default=None)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", default=None)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--mode", choices=MODES, default=None)
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--metrics", default=None, help="comma list of tracking,mota,voe,image,ari,gates")
    e.add_argument("--teacher-forcing", type=int, default=10)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rollout", help="imagine ahead after a few context frames")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--context", type=int, required=True)
    r.add_argument("--horizon", type=int, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--episodes", type=int, default=4)
    r.add_argument("--teacher-forcing", type=int, default=10)
    r.set_defaults(func=cmd_rollout)

    c = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    c.add_argument("--module", default=None, help="ops, blocks, or a comma list of check names")
    c.add_argument("--seeds", type=int, default=20)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LociError, Exception) as exc:  # noqa: BLE001 - surface any runtime failure as exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
