# config.py

import copy
from dataclasses import dataclass, field, fields, asdict
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar

import yaml

from errors import ConfigError

T = TypeVar("T")

VARIANTS = ("full", "no_interior", "no_boundary", "unet_decoder", "unetpp_decoder", "dnanet_decoder")

# variant -> loss weight of the stream it removes
REMOVED_STREAM_WEIGHT = {"no_interior": "w_interior", "no_boundary": "w_boundary"}

# initial head bias: sigmoid(-4) ~ 0.018, about the foreground share of an infrared scene
FOREGROUND_PRIOR_LOGIT = -4.0


def _from_mapping(cls: Type[T], data: Optional[Dict[str, Any]], section: str) -> T:
    """Build a flat dataclass from a dict; missing keys keep defaults, unknown keys are rejected."""
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    return cls(**data)


@dataclass
class DataConfig:
    root: Optional[str] = None
    train_split: str = "train"
    test_split: str = "test"
    size: Tuple[int, int] = (256, 256)  # (height, width) after resize
    mask_tolerance: int = 32            # loaded mask pixels must lie within this of 0 or 255
    num_workers: int = 0
    cache_decoupled: bool = True

    def validate(self) -> None:
        h, w = self.size
        if h <= 0 or w <= 0 or h % 32 or w % 32:
            raise ConfigError(f"data.size must be positive multiples of 32, got {self.size}")
        if not 0 <= self.mask_tolerance < 128:
            raise ConfigError("data.mask_tolerance must lie in [0, 128)")


@dataclass
class SynthConfig:
    height: int = 256
    width: int = 256
    num_targets: int = 2
    target_radius_range: Tuple[float, float] = (0.5, 6.0)
    target_scr: float = 5.0
    clutter_smoothness: float = 3.0
    seed: int = 0
    # dataset-writing knobs used by `ismallnet synth`
    num_samples: int = 8
    test_samples: int = 0

    def validate(self) -> None:
        if self.height <= 0 or self.width <= 0 or self.height % 32 or self.width % 32:
            raise ConfigError(f"synth height/width must be positive multiples of 32, got {self.height}x{self.width}")
        if self.num_targets < 0:
            raise ConfigError("synth.num_targets must be >= 0")
        r_min, r_max = self.target_radius_range
        if r_min < 0.5 or r_max < r_min:
            raise ConfigError(f"synth.target_radius_range must satisfy 0.5 <= min <= max, got {self.target_radius_range}")
        if self.target_scr <= 0:
            raise ConfigError("synth.target_scr must be > 0")
        if self.clutter_smoothness < 0:
            raise ConfigError("synth.clutter_smoothness must be >= 0")
        if self.num_samples < 0 or self.test_samples < 0:
            raise ConfigError("synth sample counts must be >= 0")


@dataclass
class BackboneConfig:
    stage_channels: List[int] = field(default_factory=lambda: [64, 64, 128, 256, 512])
    blocks_per_stage: List[int] = field(default_factory=lambda: [1, 2, 2, 2, 2])
    share_encoders: bool = False
    pretrained: Optional[str] = None  # path to externally supplied encoder weights

    def validate(self) -> None:
        if len(self.stage_channels) != 5 or len(self.blocks_per_stage) != 5:
            raise ConfigError("backbone needs exactly 5 stage_channels and 5 blocks_per_stage")
        if any(c <= 0 for c in self.stage_channels):
            raise ConfigError("backbone.stage_channels must be positive")
        if any(b < 0 for b in self.blocks_per_stage) or any(b < 1 for b in self.blocks_per_stage[1:]):
            raise ConfigError("backbone stages 2-5 need at least one residual block")


@dataclass
class MnimConfig:
    levels: int = 5
    node_width: int = 32
    upsample_mode: str = "bilinear"
    conv_block_depth: int = 2
    column_mode: str = "seeded"  # "seeded" | "recursive"
    dense_skips: bool = True

    def validate(self) -> None:
        if not 1 <= self.levels <= 5:
            raise ConfigError(f"mnim.levels must lie in 1..5, got {self.levels}")
        if self.node_width <= 0 or self.conv_block_depth <= 0:
            raise ConfigError("mnim.node_width and mnim.conv_block_depth must be positive")
        if self.upsample_mode != "bilinear":
            raise ConfigError("mnim.upsample_mode supports only 'bilinear'")
        if self.column_mode not in ("seeded", "recursive"):
            raise ConfigError(f"mnim.column_mode must be 'seeded' or 'recursive', got '{self.column_mode}'")


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    mnim: MnimConfig = field(default_factory=MnimConfig)
    variant: str = "full"
    head_width: int = 32
    ibfm_gate: str = "sigmoid"  # "sigmoid" | "none"
    deep_supervision: bool = False
    head_bias_init: float = FOREGROUND_PRIOR_LOGIT

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ModelConfig":
        data = dict(data or {})
        backbone = _from_mapping(BackboneConfig, data.pop("backbone", None), "model.backbone")
        mnim = _from_mapping(MnimConfig, data.pop("mnim", None), "model.mnim")
        cfg = _from_mapping(cls, data, "model")
        cfg.backbone = backbone
        cfg.mnim = mnim
        return cfg

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}'; valid names: {', '.join(VARIANTS)}")
        if self.ibfm_gate not in ("sigmoid", "none"):
            raise ConfigError(f"model.ibfm_gate must be 'sigmoid' or 'none', got '{self.ibfm_gate}'")
        if self.head_width <= 0:
            raise ConfigError("model.head_width must be positive")
        self.backbone.validate()
        self.mnim.validate()


@dataclass
class LossWeights:
    w_fused: float = 1.0
    w_interior: float = 1.0
    w_boundary: float = 1.0
    kind: str = "soft_iou"  # "soft_iou" | "bce"

    def validate(self) -> None:
        ws = (self.w_fused, self.w_interior, self.w_boundary)
        if any(w < 0 for w in ws) or not any(w > 0 for w in ws):
            raise ConfigError(f"loss weights must be non-negative with at least one > 0, got {ws}")
        if self.kind not in ("soft_iou", "bce"):
            raise ConfigError(f"loss.kind must be 'soft_iou' or 'bce', got '{self.kind}'")

    def for_variant(self, variant: str) -> "LossWeights":
        """
        Zero the weight of a stream the variant removes. Only the default
        weight is zeroed; a changed positive weight on that stream is an error.
        """
        attr = REMOVED_STREAM_WEIGHT.get(variant)
        out = copy.copy(self)
        if attr is None:
            return out
        value = getattr(self, attr)
        default = next(f.default for f in fields(LossWeights) if f.name == attr)
        if value > 0 and value != default:
            raise ConfigError(f"loss.{attr}={value} is set but variant '{variant}' has no {attr[2:]} stream")
        setattr(out, attr, 0.0)
        return out


@dataclass
class TrainConfig:
    lr0: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 16
    epochs: int = 1500
    warmup_epochs: int = 5
    seed: int = 0
    eval_every: int = 10
    decay_mode: str = "l2"  # "l2" | "decoupled"
    hflip: bool = False
    vflip: bool = False
    max_steps: Optional[int] = None
    num_workers: int = 0

    def validate(self) -> None:
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("train.epochs and train.warmup_epochs must be >= 0")
        if self.epochs > 0 and self.warmup_epochs >= self.epochs:
            raise ConfigError(f"train.warmup_epochs ({self.warmup_epochs}) must be < epochs ({self.epochs})")
        if self.lr0 <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("train.lr0 must be > 0; momentum and weight_decay must be >= 0")
        if self.batch_size <= 0 or self.eval_every <= 0:
            raise ConfigError("train.batch_size and train.eval_every must be positive")
        if self.decay_mode not in ("l2", "decoupled"):
            raise ConfigError(f"train.decay_mode must be 'l2' or 'decoupled', got '{self.decay_mode}'")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError("train.max_steps must be >= 0")


@dataclass
class EvalConfig:
    threshold: float = 0.5
    miou_mode: str = "pooled"  # "pooled" | "per_image"
    split: str = "test"
    save_float_maps: bool = False

    def validate(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("eval.threshold must lie in (0, 1)")
        if self.miou_mode not in ("pooled", "per_image"):
            raise ConfigError(f"eval.miou_mode must be 'pooled' or 'per_image', got '{self.miou_mode}'")


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ExperimentConfig":
        """Create an ExperimentConfig from a parsed YAML/JSON dict."""
        data = dict(data or {})
        unknown = sorted(set(data) - {"data", "synth", "model", "loss", "train", "eval"})
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")

        data_cfg = _from_mapping(DataConfig, data.get("data"), "data")
        data_cfg.size = tuple(data_cfg.size)
        synth = _from_mapping(SynthConfig, data.get("synth"), "synth")
        synth.target_radius_range = tuple(synth.target_radius_range)

        cfg = cls(
            data=data_cfg,
            synth=synth,
            model=ModelConfig.from_dict(data.get("model")),
            loss=_from_mapping(LossWeights, data.get("loss"), "loss"),
            train=_from_mapping(TrainConfig, data.get("train"), "train"),
            eval=_from_mapping(EvalConfig, data.get("eval"), "eval"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.data.validate()
        self.synth.validate()
        self.model.validate()
        self.loss.validate()
        self.loss.for_variant(self.model.variant)
        self.train.validate()
        self.eval.validate()

    def to_dict(self) -> Dict[str, Any]:
        return to_plain(asdict(self))


def to_plain(value: Any) -> Any:
    """Tuples become lists so the dict survives a YAML/JSON round trip unchanged."""
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value


def load_config(path: str) -> ExperimentConfig:
    """Load an experiment config from a YAML (or JSON) file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"failed to parse config '{path}': {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config '{path}' must contain a mapping at top level")
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=False)


def apply_overrides(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    variant: Optional[str] = None,
    root: Optional[str] = None,
) -> ExperimentConfig:
    """Return a copy of cfg with command-line flags applied (flags win over the file)."""
    out = copy.deepcopy(cfg)
    if seed is not None:
        out.train.seed = seed
        out.synth.seed = seed
    if variant is not None:
        out.model.variant = variant
    if root is not None:
        out.data.root = root
    out.validate()
    return out


def _flatten(data: Any, prefix: str = "") -> Dict[str, Any]:
    if isinstance(data, dict):
        flat: Dict[str, Any] = {}
        for key, value in data.items():
            flat.update(_flatten(value, f"{prefix}{key}."))
        return flat
    return {prefix[:-1]: data}


def diff_manifests(a: Dict[str, Any], b: Dict[str, Any]) -> List[str]:
    """Dotted names of every field whose value differs between two manifests."""
    fa, fb = _flatten(to_plain(a)), _flatten(to_plain(b))
    return sorted(k for k in set(fa) | set(fb) if fa.get(k) != fb.get(k))
