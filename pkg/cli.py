# cli.py

import argparse
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from dotenv import load_dotenv
from PIL import Image

from config import VARIANTS, ExperimentConfig, apply_overrides, load_config, save_config
from data import SPLITS_DIR, load_dataset, synthesize_dataset, write_dataset
from decouple import decouple, save_decoupled
from errors import ConfigError, exit_code_for
from graph_utils import render_decoder_graph
from mnim import resolve_decoder
from model import ISmallNet, build_variant, count_parameters, prediction_to_uint8
from overlay import compare_dirs
from report_generator import EvaluationReport, generate_pdf_report, save_text_report
from report_storage import save_kv_report, save_report
from run_context import RunContext
from run_utils import prepare_run_dir
from train import DecoupledDataset, Evaluator, Trainer, check_manifest, load_checkpoint, predict

DATA_ROOT_ENV = "ISMALLNET_DATA_ROOT"


# ---------- SHARED HELPERS ----------

def _load_cfg(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    root = args.root or cfg.data.root or os.environ.get(DATA_ROOT_ENV)
    return apply_overrides(cfg, seed=args.seed, variant=args.variant, root=root)


def _require_root(cfg: ExperimentConfig) -> str:
    if not cfg.data.root:
        raise ConfigError(f"no dataset root: pass --root, set data.root or {DATA_ROOT_ENV}")
    return cfg.data.root


def _split_ids(root: str) -> List[str]:
    splits_dir = os.path.join(root, SPLITS_DIR)
    if not os.path.isdir(splits_dir):
        return []
    return sorted(os.path.splitext(name)[0] for name in os.listdir(splits_dir) if name.endswith(".txt"))


def _load_split(cfg: ExperimentConfig, split: str):
    return load_dataset(
        _require_root(cfg), split, tuple(cfg.data.size), cfg.data.mask_tolerance, cfg.data.num_workers
    )


def _build_model(cfg: ExperimentConfig, checkpoint: Optional[str]) -> ISmallNet:
    """Fresh model seeded from train.seed, or restored from a checkpoint with a matching manifest."""
    torch.manual_seed(cfg.train.seed)
    model = build_variant(cfg.model)
    if checkpoint:
        ckpt = load_checkpoint(checkpoint)
        check_manifest(ckpt, cfg.model)
        model.load_state_dict(ckpt.parameters)
        print(f"[info] Loaded checkpoint {checkpoint} (epoch {ckpt.epoch}, step {ckpt.step})")
    return model


def _start_run(cfg: ExperimentConfig, out: Optional[str]):
    run_id, run_dir = prepare_run_dir(out)
    save_config(cfg, os.path.join(run_dir, "config.yaml"))
    print(f"[info] Run directory: {run_dir}")
    return RunContext(run_id=run_id), run_dir


# ---------- COMMANDS ----------

def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    root = args.out or _require_root(cfg)
    context = RunContext(run_id=os.path.basename(os.path.normpath(root)))
    context.log("synth", "start", train=cfg.synth.num_samples, test=cfg.synth.test_samples, seed=cfg.synth.seed)

    splits = synthesize_dataset(cfg.synth)
    write_dataset(root, splits)

    context.log("synth", "done", ids=[s.id for samples in splits.values() for s in samples])
    context.save(os.path.join(root, "run_context.json"))
    print(f"[info] Wrote {sum(len(s) for s in splits.values())} synthetic sample(s) to {root}")
    return 0


def cmd_decouple(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    root = _require_root(cfg)
    written = 0
    for split in _split_ids(root):
        for sample in _load_split(cfg, split):
            save_decoupled(root, sample.id, decouple(sample.mask))
            written += 1
    print(f"[info] Decoupled {written} mask(s) under {root}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    context, run_dir = _start_run(cfg, args.out)
    cache_root = cfg.data.root if cfg.data.cache_decoupled else None

    train_set = DecoupledDataset(_load_split(cfg, cfg.data.train_split), cache_root)
    eval_set = None
    if cfg.data.test_split in _split_ids(cfg.data.root):
        eval_set = DecoupledDataset(_load_split(cfg, cfg.data.test_split), cache_root)

    model = _build_model(cfg, None)
    resume = None
    if args.checkpoint:
        resume = load_checkpoint(args.checkpoint)
        print(f"[info] Resuming from {args.checkpoint} at epoch {resume.epoch}")
    context.shared_state["parameters"] = count_parameters(model)
    render_decoder_graph(cfg.model.mnim.levels, resolve_decoder(cfg.model.mnim, model.decoder), os.path.join(run_dir, "decoder_graph"))

    Trainer(cfg.train, cfg.loss, cfg.eval, run_dir).run(model, train_set, eval_set, context=context, resume=resume)
    context.shared_state["evaluations"] = len(context.select("trainer", "evaluated"))
    context.save(os.path.join(run_dir, "run_context.json"))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    context, run_dir = _start_run(cfg, args.out)
    model = _build_model(cfg, args.checkpoint)
    samples = _load_split(cfg, cfg.eval.split)

    evaluator = Evaluator(cfg.eval.threshold, cfg.eval.miou_mode)
    metrics = evaluator.run(model, samples, context)
    report = EvaluationReport(
        run_id=context.run_id,
        variant=cfg.model.variant,
        split=cfg.eval.split,
        checkpoint=args.checkpoint,
        threshold=cfg.eval.threshold,
        miou_mode=cfg.eval.miou_mode,
        num_images=len(samples),
        metrics=metrics,
        counts=evaluator.last_counts,
        parameters=count_parameters(model),
    )

    save_report(metrics, os.path.join(run_dir, "report.json"), evaluator.last_counts, **report.metadata())
    save_kv_report(metrics, os.path.join(run_dir, "report.txt"), evaluator.last_counts)
    save_text_report(report, os.path.join(run_dir, "report.md"))
    graph = render_decoder_graph(cfg.model.mnim.levels, resolve_decoder(cfg.model.mnim, model.decoder), os.path.join(run_dir, "decoder_graph"))
    generate_pdf_report(report, os.path.join(run_dir, "report.pdf"), graph_image_path=graph)

    context.shared_state["metrics"] = metrics.to_dict()
    context.save(os.path.join(run_dir, "run_context.json"))
    print(f"[info] mIoU {metrics.miou:.4f}  P {metrics.precision:.4f}  R {metrics.recall:.4f}  F1 {metrics.f1:.4f}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    context, run_dir = _start_run(cfg, args.out)
    model = _build_model(cfg, args.checkpoint)
    samples = _load_split(cfg, cfg.eval.split)

    context.log("predict", "start", samples=len(samples), variant=cfg.model.variant)
    for sample, maps in predict(model, samples):
        for name, prob in maps.items():
            Image.fromarray(prediction_to_uint8(prob), mode="L").save(os.path.join(run_dir, f"{sample.id}_{name}.png"))
        if cfg.eval.save_float_maps:
            np.savez(os.path.join(run_dir, f"{sample.id}.npz"), **{k: v.astype(np.float32) for k, v in maps.items()})
    context.log("predict", "done", samples=len(samples))
    context.save(os.path.join(run_dir, "run_context.json"))
    print(f"[info] Wrote predictions for {len(samples)} sample(s) to {run_dir}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if not args.pred:
        raise ConfigError("compare needs --pred <dir>")
    gt_dir = args.gt or args.root or os.environ.get(DATA_ROOT_ENV)
    if not gt_dir:
        raise ConfigError(f"compare needs --gt <dir>, --root or {DATA_ROOT_ENV}")
    out_dir = args.out or os.path.join(args.pred, "overlays")
    results = compare_dirs(args.pred, gt_dir, out_dir)

    counts: Dict[str, int] = {"detected": 0, "false_alarm": 0, "missed": 0}
    for annotations in results.values():
        for a in annotations:
            counts[a.category] += 1
    print(f"[info] detected={counts['detected']} false_alarm={counts['false_alarm']} missed={counts['missed']}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "decouple": cmd_decouple,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--seed", type=int, help="overrides train.seed and synth.seed")
    common.add_argument("--variant", choices=VARIANTS, help="overrides model.variant")
    common.add_argument("--checkpoint", help="checkpoint to evaluate, predict with or resume from")
    common.add_argument("--out", help="output directory (default: runs/run_NNN)")
    common.add_argument("--root", help=f"dataset root (default: data.root or ${DATA_ROOT_ENV})")

    parser = argparse.ArgumentParser(prog="ismallnet", description="Infrared small target detection with decoupled labels.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset in the SIRST layout")
    sub.add_parser("decouple", parents=[common], help="cache interior/boundary maps for every mask")
    sub.add_parser("train", parents=[common], help="train a model variant")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint and write reports")
    sub.add_parser("predict", parents=[common], help="write fused/interior/boundary prediction PNGs")
    compare = sub.add_parser("compare", parents=[common], help="render red/yellow/green overlays")
    compare.add_argument("--pred", help="directory with <id>_fused.png predictions")
    compare.add_argument("--gt", help="mask directory or dataset root")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        print(f"[error] {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
