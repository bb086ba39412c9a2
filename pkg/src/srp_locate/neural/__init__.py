"""Neural-SRP: per-pair CRNN likelihood grids summed over microphone pairs."""

from .io import WeightFileError, load_weights, save_weights
from .model import ModelConfig, ModelWeights, backward, forward, forward_pair
from .optim import AdamState, adam_step
from .train import (
    SceneData,
    TrainConfig,
    TrainHistory,
    forward_scene,
    prepare_scenes,
    scene_data,
    train_stage,
    transfer_learn,
)

__all__ = [
    "AdamState", "ModelConfig", "ModelWeights", "SceneData", "TrainConfig", "TrainHistory",
    "WeightFileError", "adam_step", "backward", "forward", "forward_pair", "forward_scene",
    "load_weights", "prepare_scenes", "save_weights", "scene_data", "train_stage", "transfer_learn",
]
