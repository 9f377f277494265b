# train.py

import copy
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from config import EvalConfig, LossWeights, ModelConfig, TrainConfig, diff_manifests, to_plain
from data import Sample
from decouple import DecoupledLabel, decouple, load_decoupled, save_decoupled
from errors import ConfigError, DomainError, ManifestMismatch, TrainingError
from losses import LabelBatch, total_loss
from metrics import ConfusionCounts, MetricsReport, finalize, update
from model import ISmallNet, ModelOutputs
from report_storage import LossLog, append_jsonl
from run_context import RunContext


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """
    Linear warmup over warmup_epochs, then linear decay towards 0 at `epochs`:

        epoch <  W: lr0 * (epoch + 1) / W
        epoch >= W: lr0 * (epochs - epoch) / (epochs - W)
    """
    if not 0 <= epoch < cfg.epochs:
        raise DomainError(f"epoch {epoch} outside [0, {cfg.epochs})")
    w = cfg.warmup_epochs
    if epoch < w:
        return cfg.lr0 * (epoch + 1) / w
    return cfg.lr0 * (cfg.epochs - epoch) / (cfg.epochs - w)


# ---------- DATASET ----------

class DecoupledDataset(Dataset):
    """Samples with their decoupled labels, computed (or read from cache) once at construction."""

    def __init__(self, samples: Sequence[Sample], cache_root: Optional[str] = None):
        self.samples = list(samples)
        self.labels: List[DecoupledLabel] = []
        for s in self.samples:
            label = load_decoupled(cache_root, s.id, s.mask) if cache_root else None
            if label is None:
                label = decouple(s.mask)
                if cache_root:
                    save_decoupled(cache_root, s.id, label)
            self.labels.append(label)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        s, l = self.samples[idx], self.labels[idx]
        return (
            torch.from_numpy(np.array(s.image, dtype=np.float32))[None],
            torch.from_numpy(l.gt.astype(np.float32))[None],
            torch.from_numpy(np.array(l.interior, dtype=np.float32))[None],
            torch.from_numpy(np.array(l.boundary, dtype=np.float32))[None],
        )


def _as_dataset(dataset) -> DecoupledDataset:
    return dataset if isinstance(dataset, DecoupledDataset) else DecoupledDataset(dataset)


# ---------- CHECKPOINTS ----------

@dataclass
class Checkpoint:
    parameters: Dict[str, torch.Tensor]
    optimizer: Dict[str, Any]
    epoch: int                      # number of completed epochs
    step: int
    train_config: Dict[str, Any]
    model_config: Dict[str, Any]
    best: Dict[str, Any] = field(default_factory=lambda: {"miou": None, "epoch": None})
    loss_history: List[float] = field(default_factory=list)


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    torch.save(asdict(ckpt), path)


def load_checkpoint(path: str) -> Checkpoint:
    data = torch.load(path, map_location="cpu", weights_only=False)
    return Checkpoint(**data)


def check_manifest(ckpt: Checkpoint, model_cfg: ModelConfig) -> None:
    """Raise ManifestMismatch listing every model-config field that differs from the checkpoint."""
    diff = diff_manifests(ckpt.model_config, to_plain(asdict(model_cfg)))
    if diff:
        raise ManifestMismatch([f"model.{d}" for d in diff])


# ---------- EVALUATION ----------

class Evaluator:
    """Forward every sample in inference mode and pool confusion counts on the fused map."""

    def __init__(self, threshold: float = 0.5, miou_mode: str = "pooled", batch_size: int = 8, name: str = "evaluator"):
        self.threshold = threshold
        self.miou_mode = miou_mode
        self.batch_size = batch_size
        self.name = name
        self.last_counts = ConfusionCounts()

    def run(self, model: ISmallNet, dataset, context: Optional[RunContext] = None) -> MetricsReport:
        samples = dataset.samples if isinstance(dataset, DecoupledDataset) else list(dataset)
        if context:
            context.log(self.name, "start", samples=len(samples), threshold=self.threshold)

        counts = ConfusionCounts()
        per_image: List[ConfusionCounts] = []
        for sample, outputs in predict(model, samples, self.batch_size):
            image_counts = update(ConfusionCounts(), outputs["fused"], sample.mask, self.threshold)
            per_image.append(image_counts)
            counts = counts.merge(image_counts)

        self.last_counts = counts
        report = finalize(counts, per_image if self.miou_mode == "per_image" else None)
        if context:
            context.log(self.name, "done", **report.to_dict())
        return report


def predict(model: ISmallNet, samples: Sequence[Sample], batch_size: int = 8) -> Iterator[Tuple[Sample, Dict[str, np.ndarray]]]:
    """Yield (sample, {"fused"|"interior"|"boundary": H x W probabilities}) in input order."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    device = next(model.parameters()).device
    try:
        with torch.no_grad():
            for start in range(0, len(samples), batch_size):
                chunk = samples[start:start + batch_size]
                images = torch.from_numpy(np.stack([s.image for s in chunk])[:, None]).to(device=device, dtype=dtype)
                out: ModelOutputs = model(images)
                for k, sample in enumerate(chunk):
                    maps = {}
                    for name in ("fused", "interior", "boundary"):
                        m = out.stream_map(name)
                        if m is not None:
                            maps[name] = m[k, 0].float().cpu().numpy()
                    yield sample, maps
    finally:
        model.train(was_training)


def evaluate(model: ISmallNet, dataset, threshold: float = 0.5, miou_mode: str = "pooled") -> MetricsReport:
    return Evaluator(threshold, miou_mode).run(model, dataset)


# ---------- TRAINING ----------

def _epoch_order(n: int, seed: int, epoch: int) -> List[int]:
    g = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=g).tolist()


def _augment(batch: List[torch.Tensor], cfg: TrainConfig, g: torch.Generator) -> List[torch.Tensor]:
    # flipping commutes with decoupling, so labels are flipped alongside the image
    if cfg.hflip and torch.rand((), generator=g) < 0.5:
        batch = [t.flip(-1) for t in batch]
    if cfg.vflip and torch.rand((), generator=g) < 0.5:
        batch = [t.flip(-2) for t in batch]
    return batch


def _drop_last(n: int, batch_size: int, image_size: Tuple[int, int], levels: int) -> bool:
    """
    True when the trailing batch would be a single sample whose deepest decoder
    level is 1x1; BatchNorm cannot normalize one value per channel in training.
    """
    if (image_size[0] >> levels) * (image_size[1] >> levels) > 1:
        return False
    if batch_size == 1 or n == 1:
        raise ConfigError(
            f"a {image_size[0]}x{image_size[1]} input with {levels} levels has a 1x1 deepest level; "
            "training needs batch_size >= 2 and at least 2 samples"
        )
    return n % batch_size == 1


class Trainer:
    """
    SGD with momentum, per-epoch warmup + linear decay, periodic evaluation
    and best-mIoU retention.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        loss_weights: Optional[LossWeights] = None,
        eval_cfg: Optional[EvalConfig] = None,
        out_dir: Optional[str] = None,
        name: str = "trainer",
    ):
        cfg.validate()
        self.cfg = cfg
        self.loss_weights = loss_weights or LossWeights()
        self.eval_cfg = eval_cfg or EvalConfig()
        self.out_dir = out_dir
        self.name = name

    def _optimizer(self, model: ISmallNet) -> torch.optim.SGD:
        l2 = self.cfg.weight_decay if self.cfg.decay_mode == "l2" else 0.0
        return torch.optim.SGD(model.parameters(), lr=self.cfg.lr0, momentum=self.cfg.momentum, weight_decay=l2)

    def _path(self, name: str) -> Optional[str]:
        return os.path.join(self.out_dir, name) if self.out_dir else None

    def run(
        self,
        model: ISmallNet,
        dataset,
        eval_dataset=None,
        context: Optional[RunContext] = None,
        resume: Optional[Checkpoint] = None,
    ) -> Checkpoint:
        cfg = self.cfg
        train_set = _as_dataset(dataset)
        if len(train_set) == 0 and cfg.epochs > 0:
            raise DomainError("training needs a non-empty dataset")
        eval_set = train_set if eval_dataset is None else eval_dataset
        weights = self.loss_weights.for_variant(model.cfg.variant)

        torch.manual_seed(cfg.seed)
        optimizer = self._optimizer(model)
        ckpt = Checkpoint(
            parameters={},
            optimizer={},
            epoch=0,
            step=0,
            train_config=to_plain(asdict(cfg)),
            model_config=to_plain(asdict(model.cfg)),
        )
        if resume is not None:
            check_manifest(resume, model.cfg)
            model.load_state_dict(resume.parameters)
            optimizer.load_state_dict(resume.optimizer)
            ckpt.epoch, ckpt.step = resume.epoch, resume.step
            ckpt.best = dict(resume.best)
            ckpt.loss_history = list(resume.loss_history)

        if context:
            context.log(self.name, "start", samples=len(train_set), epochs=cfg.epochs, start_epoch=ckpt.epoch)

        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
        loss_log = LossLog(self._path("loss_log.csv"), append=resume is not None)
        metrics_path = self._path("metrics_log.jsonl")
        dtype = next(model.parameters()).dtype
        device = next(model.parameters()).device
        drop_last = False
        if len(train_set) and cfg.epochs > ckpt.epoch:
            image_size = tuple(train_set[0][0].shape[-2:])
            drop_last = _drop_last(len(train_set), cfg.batch_size, image_size, model.cfg.mnim.levels)
        evaluator = Evaluator(self.eval_cfg.threshold, self.eval_cfg.miou_mode)
        model.train()

        step = ckpt.step
        for epoch in range(ckpt.epoch, cfg.epochs):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            lr = lr_schedule(epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr

            flip_gen = torch.Generator().manual_seed(cfg.seed * 7919 + epoch)
            loader = DataLoader(
                train_set,
                batch_size=cfg.batch_size,
                sampler=_epoch_order(len(train_set), cfg.seed, epoch),
                num_workers=cfg.num_workers,
                drop_last=drop_last,
            )
            for batch in loader:
                batch = [t.to(device=device, dtype=dtype) for t in batch]
                images, gt, interior, boundary = _augment(batch, cfg, flip_gen)
                outputs = model(images)
                loss, parts = total_loss(outputs, LabelBatch(gt, interior, boundary), weights)
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise TrainingError("non-finite loss", epoch=epoch, step=step, lr=lr)

                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                if cfg.decay_mode == "decoupled" and cfg.weight_decay > 0:
                    with torch.no_grad():
                        for p in model.parameters():
                            p.mul_(1.0 - lr * cfg.weight_decay)
                optimizer.step()

                loss_log.append(step, lr, value, parts)
                ckpt.loss_history.append(value)
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break

            ckpt.epoch, ckpt.step = epoch + 1, step
            last_epoch = epoch + 1 == cfg.epochs or (cfg.max_steps is not None and step >= cfg.max_steps)
            if (epoch + 1) % cfg.eval_every == 0 or last_epoch:
                report = evaluator.run(model, eval_set)
                model.train()
                record = {"epoch": epoch + 1, "step": step, "lr": lr, **report.to_dict()}
                if metrics_path:
                    append_jsonl(metrics_path, record)
                print(f"[info] epoch {epoch + 1}/{cfg.epochs} step {step} loss {value:.4f} mIoU {report.miou:.4f}")
                if context:
                    context.log(self.name, "evaluated", **record)
                if ckpt.best["miou"] is None or report.miou > ckpt.best["miou"]:
                    ckpt.best = {"miou": report.miou, "epoch": epoch + 1}
                    if self.out_dir:
                        self._snapshot(model, optimizer, ckpt, "best.pt")

        ckpt.parameters = copy.deepcopy(model.state_dict())
        ckpt.optimizer = copy.deepcopy(optimizer.state_dict())
        if self.out_dir:
            save_checkpoint(ckpt, self._path("last.pt"))
        if context:
            context.shared_state["best"] = ckpt.best
            context.shared_state["steps"] = ckpt.step
            if ckpt.loss_history:
                context.shared_state["final_loss"] = ckpt.loss_history[-1]
            context.log(self.name, "done", epochs=ckpt.epoch, steps=ckpt.step)
        return ckpt

    def _snapshot(self, model: ISmallNet, optimizer, ckpt: Checkpoint, name: str) -> None:
        snap = copy.copy(ckpt)
        snap.parameters = model.state_dict()
        snap.optimizer = optimizer.state_dict()
        save_checkpoint(snap, self._path(name))


def train(
    model: ISmallNet,
    dataset,
    cfg: TrainConfig,
    loss_weights: Optional[LossWeights] = None,
    eval_cfg: Optional[EvalConfig] = None,
    out_dir: Optional[str] = None,
    context: Optional[RunContext] = None,
) -> Checkpoint:
    return Trainer(cfg, loss_weights, eval_cfg, out_dir).run(model, dataset, context=context)
