import os

import pytest

from config import (
    ExperimentConfig,
    LossWeights,
    TrainConfig,
    apply_overrides,
    diff_manifests,
    load_config,
    save_config,
)
from errors import ConfigError, ManifestMismatch, TrainingError, exit_code_for


def test_example_config_loads():
    cfg = load_config(os.path.join(os.path.dirname(__file__), "..", "example_config.yaml"))
    assert cfg.model.backbone.stage_channels == [16, 16, 32, 64, 64]
    assert cfg.data.size == (128, 128)
    assert cfg.train.max_steps == 400


def test_defaults_follow_training_protocol():
    cfg = ExperimentConfig()
    assert (cfg.train.lr0, cfg.train.momentum, cfg.train.weight_decay) == (0.05, 0.9, 0.0005)
    assert (cfg.train.batch_size, cfg.train.epochs) == (16, 1500)
    assert cfg.model.backbone.stage_channels == [64, 64, 128, 256, 512]
    assert cfg.model.backbone.blocks_per_stage == [1, 2, 2, 2, 2]


def test_round_trip_through_yaml(tmp_path):
    cfg = ExperimentConfig.from_dict({"model": {"variant": "unet_decoder", "mnim": {"levels": 4}}})
    path = tmp_path / "cfg.yaml"
    save_config(cfg, str(path))
    again = load_config(str(path))
    assert again.to_dict() == cfg.to_dict()
    assert diff_manifests(cfg.to_dict(), again.to_dict()) == []


def test_json_is_accepted(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"train": {"seed": 9}, "eval": {"miou_mode": "per_image"}}')
    cfg = load_config(str(path))
    assert cfg.train.seed == 9 and cfg.eval.miou_mode == "per_image"


@pytest.mark.parametrize(
    "data",
    [
        {"train": {"learning_rate": 0.1}},
        {"model": {"mnim": {"levels": 6}}},
        {"model": {"variant": "resnet_decoder"}},
        {"train": {"epochs": 5, "warmup_epochs": 5}},
        {"data": {"size": [100, 100]}},
        {"loss": {"w_fused": 0, "w_interior": 0, "w_boundary": 0}},
        {"optimizer": {}},
    ],
)
def test_invalid_configs_raise(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_flags_win_over_file():
    cfg = ExperimentConfig.from_dict({"train": {"seed": 1}, "model": {"variant": "full"}})
    out = apply_overrides(cfg, seed=5, variant="no_boundary", root="/data")
    assert (out.train.seed, out.synth.seed) == (5, 5)
    assert out.model.variant == "no_boundary"
    assert out.data.root == "/data"
    assert cfg.train.seed == 1


def test_diff_manifests_lists_dotted_fields():
    a = ExperimentConfig().to_dict()
    b = ExperimentConfig.from_dict({"model": {"head_width": 8, "mnim": {"node_width": 8}}}).to_dict()
    assert diff_manifests(a, b) == ["model.head_width", "model.mnim.node_width"]


def test_for_variant_zeroes_removed_stream():
    w = LossWeights()
    assert w.for_variant("no_interior").w_interior == 0.0
    assert w.for_variant("no_boundary").w_boundary == 0.0
    assert w.for_variant("full") == w


def test_for_variant_rejects_explicit_weight_on_removed_stream():
    assert LossWeights(w_interior=0.0).for_variant("no_interior").w_interior == 0.0
    with pytest.raises(ConfigError, match="w_interior"):
        LossWeights(w_interior=2.0).for_variant("no_interior")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"variant": "no_boundary"}, "loss": {"w_boundary": 0.5}})


def test_variant_flag_checks_loss_weights():
    cfg = ExperimentConfig.from_dict({"loss": {"w_boundary": 3.0}})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, variant="no_boundary")
    assert apply_overrides(cfg, variant="no_interior").loss.w_boundary == 3.0


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == 2
    assert exit_code_for(ManifestMismatch(["model.variant"])) == 2
    assert exit_code_for(FileNotFoundError("x")) == 2
    assert exit_code_for(TrainingError("nan", epoch=1, step=2, lr=0.1)) == 1
    assert exit_code_for(AssertionError()) == 1


def test_train_config_rejects_negative_rates():
    with pytest.raises(ConfigError):
        TrainConfig(lr0=-1).validate()
