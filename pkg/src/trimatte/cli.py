"""Command-line entry point.

Subcommands: train, eval, infer, flops, dataset-build, serve. Every
subcommand accepts --seed and --json. Exit codes: 0 success, 1 usage
error, 2 runtime error (message on stderr; JSON envelope on stdout under
--json).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import PRESETS, RunConfig, load_toml, preset as load_preset
from .costmodel import model_flops
from .data import build_synthetic_dataset, generate_trimap, ingest_dataset
from .decoder import build_model
from .estimator import MattingEstimator  # noqa: F401  (public API surface)
from .exceptions import MattingError
from .inference import GRID_SAMPLE, NORMAL, infer_alpha
from .metrics import UNKNOWN_ONLY, WHOLE_IMAGE, evaluate
from .planes import load_gray, load_image, load_trimap, make_rng, save_gray
from .train import Trainer


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="trimatte", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", type=Path, help="TOML run config")
    p.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--steps", type=int, help="total steps (default: epochs * passes)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-augment", action="store_true")
    common(p)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--trimap", type=Path, required=True)
    p.add_argument("--mode", choices=[UNKNOWN_ONLY, WHOLE_IMAGE],
                   default=UNKNOWN_ONLY)
    common(p)

    p = sub.add_parser("infer", help="predict an alpha matte")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--trimap", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--grid-sample", action="store_true")
    common(p)

    p = sub.add_parser("flops", help="analytical cost report")
    p.add_argument("--preset", choices=sorted(PRESETS), default="vits")
    p.add_argument("--config", type=Path)
    p.add_argument("--res", default="2048x2048", help="HxW")
    p.add_argument("--globals", type=int, dest="num_global",
                   help="override number of global blocks")
    p.add_argument("--neck", choices=["none", "naive", "residual", "convnext"])
    p.add_argument("--window", type=int)
    p.add_argument("--decoder", choices=["dcm", "sfp"], default="dcm")
    p.add_argument("--strategy", choices=["normal", "grid"], default="normal")
    common(p)

    p = sub.add_parser("dataset-build", help="write a synthetic dataset tree")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--num-fg", type=int, default=4)
    p.add_argument("--num-bg", type=int, default=4)
    p.add_argument("--size", type=int, default=64)
    common(p)

    p = sub.add_parser("serve", help="run the trimap-studio HTTP service")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--max-pixels", type=int, default=4096 * 4096)
    p.add_argument("--ttl-seconds", type=float, default=1800.0)
    p.add_argument("--max-sessions", type=int, default=64)
    common(p)

    return parser


def _emit(payload: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def _run_config(args) -> RunConfig:
    cfg = load_toml(args.config) if args.config else load_preset(args.preset)
    cfg = replace(cfg, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, epochs=args.epochs)
    return cfg


def _cmd_train(args) -> dict:
    cfg = _run_config(args)
    samples = list(ingest_dataset(args.data))
    if args.no_augment:
        # augmentation normally synthesizes the trimap; do it up front here
        rng = make_rng(cfg.seed)
        samples = [s if s.trimap is not None else
                   replace(s, trimap=generate_trimap(s.alpha, rng=rng))
                   for s in samples]
    model = build_model(cfg.backbone, seed=cfg.seed)
    trainer = Trainer(model, cfg)
    passes = max(1, len(samples) // cfg.batch_size)
    steps = args.steps if args.steps is not None else cfg.epochs * passes
    args.out.mkdir(parents=True, exist_ok=True)
    history = trainer.run(samples, steps=steps,
                          do_augment=not args.no_augment,
                          log_path=args.out / "metrics.jsonl",
                          quiet=args.json)
    trainer.save(args.out)
    final = history[-1].total if history else None
    return {"checkpoint": str(args.out), "steps": steps,
            "samples": len(samples), "final_loss": final}


def _iter_eval_paths(args) -> list[tuple[str, Path, Path, Path]]:
    if args.pred.is_dir():
        preds = sorted(args.pred.glob("*.png"))
        triples = []
        for p in preds:
            triples.append((p.stem, p, args.gt / p.name, args.trimap / p.name))
        return triples
    return [(args.pred.stem, args.pred, args.gt, args.trimap)]


def _cmd_eval(args) -> dict:
    rows = []
    for name, pred_path, gt_path, tri_path in _iter_eval_paths(args):
        pred = load_gray(pred_path).data[..., 0]
        gt = load_gray(gt_path).data[..., 0]
        trimap = load_trimap(tri_path).data[..., 0]
        report = evaluate(pred, gt, trimap, args.mode)
        rows.append({"name": name, **report.as_dict()})
    agg = {key: float(np.mean([r[key] for r in rows]))
           for key in ("sad", "mse", "grad", "conn")}
    return {"images": rows, "aggregate": agg, "mode": args.mode}


def _cmd_infer(args) -> dict:
    model, _, _ = ckpt.load_model(args.ckpt)
    image = load_image(args.image)
    trimap = load_trimap(args.trimap)
    strategy = GRID_SAMPLE if args.grid_sample else NORMAL
    alpha = infer_alpha(model, image, trimap, strategy)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_gray(args.out, alpha)
    return {"out": str(args.out), "width": alpha.width,
            "height": alpha.height, "strategy": strategy}


def _cmd_flops(args) -> dict:
    cfg = (load_toml(args.config) if args.config
           else load_preset(args.preset)).backbone
    if args.neck is not None:
        cfg = replace(cfg, neck_kind=args.neck)
    if args.window is not None:
        cfg = replace(cfg, window_size=args.window)
    try:
        h, w = (int(v) for v in args.res.lower().split("x"))
    except ValueError:
        raise _UsageError(f"--res expects HxW, got {args.res!r}")
    report = model_flops(cfg, (h, w), decoder=args.decoder,
                         num_global=args.num_global, strategy=args.strategy)
    baseline = model_flops(cfg, (h, w), decoder=args.decoder,
                           num_global=cfg.depth)
    payload = report.as_dict()
    payload["ratio_vs_all_global"] = report.flops / baseline.flops
    payload["resolution"] = [h, w]
    return payload


def _cmd_dataset_build(args) -> dict:
    info = build_synthetic_dataset(args.out, args.num_fg, args.num_bg,
                                   args.size, args.seed)
    return {"out": str(args.out), **info}


def _cmd_serve(args) -> dict:
    import uvicorn

    from .service import load_app

    app = load_app(args.ckpt, max_pixels=args.max_pixels,
                   ttl_seconds=args.ttl_seconds,
                   max_sessions=args.max_sessions)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"stopped": True}


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "flops": _cmd_flops,
    "dataset-build": _cmd_dataset_build,
    "serve": _cmd_serve,
}


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        payload = _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MattingError, OSError) as exc:
        if args.json:
            print(json.dumps({"code": type(exc).__name__, "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(payload, args.json)
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
