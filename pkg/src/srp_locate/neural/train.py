"""Per-pair training with hyperbolic targets, early stopping and two-stage transfer."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..dsp import StftConfig, phase_stack
from ..geometry import Z_PLANE, DevicePlacement, Room, make_grid, metadata, mic_pairs
from ..roomsim import DatasetSample, load_audio
from ..srp import LikelihoodGrid
from ..targets import TargetConfig, hyperbolic_grid
from .model import ModelWeights, backward, forward
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # pairs per forward/backward chunk when evaluating
    eval_chunk: int = 256


@dataclass
class TrainHistory:
    stage: str
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    initial_train_loss: float = math.nan
    initial_val_loss: float = math.nan
    final_train_loss: float = math.nan
    best_epoch: int = -1
    stopped_epoch: int | None = None

    @property
    def best_val_loss(self) -> float:
        return min(self.val_loss) if self.val_loss else self.initial_val_loss


@dataclass
class SceneData:
    """Phase spectra of every microphone plus per-pair metadata and targets."""

    phases: np.ndarray
    pairs: list
    meta: np.ndarray
    targets: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)


def scene_data(signals, placement: DevicePlacement, room: Room, grid_side: int, *,
               target: TargetConfig | None = None, stft_config: StftConfig | None = None,
               z_plane: float = Z_PLANE, dtype=np.float32) -> SceneData:
    target = target or TargetConfig()
    grid = make_grid(room, grid_side, z_plane)
    pairs = mic_pairs(placement.n_mics)
    phases = phase_stack(signals, stft_config).astype(dtype)
    meta = np.stack([metadata(placement.mics[i], placement.mics[j], room).normalized for i, j in pairs])
    source = placement.source[:2]
    targets = np.stack([
        hyperbolic_grid(source, placement.mics[i], placement.mics[j], grid, target.sigma_hyperbolic).values.ravel()
        for i, j in pairs
    ])
    return SceneData(phases, pairs, meta.astype(dtype), targets.astype(dtype))


def prepare_scenes(samples: list[DatasetSample], manifest_path, grid_side: int, *,
                   target: TargetConfig | None = None, stft_config: StftConfig | None = None,
                   z_plane: float = Z_PLANE, threads: int = 1) -> list[SceneData]:
    def one(sample):
        audio = load_audio(sample, manifest_path)
        return scene_data(audio, sample.placement, sample.room, grid_side,
                          target=target, stft_config=stft_config, z_plane=z_plane)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, samples))
    return [one(s) for s in samples]


def pair_batch(scenes: list[SceneData]):
    """Stack all pairs of ``scenes`` into network inputs and targets."""
    feats, meta, targets = [], [], []
    for sc in scenes:
        i, j = np.array(sc.pairs).T
        feats.append(np.stack([sc.phases[i], sc.phases[j]], axis=1))
        meta.append(sc.meta)
        targets.append(sc.targets)
    return np.concatenate(feats), np.concatenate(meta), np.concatenate(targets)


def n_batches(n_samples: int, batch_size: int) -> int:
    return -(-n_samples // batch_size)


def batch_indices(n_samples: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n_samples)
    return [order[k:k + batch_size] for k in range(0, n_samples, batch_size)]


def should_stop(val_losses, patience: int) -> bool:
    """True once the best validation loss is ``patience`` or more epochs old."""
    if len(val_losses) <= patience:
        return False
    best = int(np.argmin(val_losses))
    return len(val_losses) - 1 - best >= patience


def evaluate_loss(weights: ModelWeights, scenes: list[SceneData], chunk: int = 256) -> float:
    """Mean absolute error over every cell of every pair."""
    total, count = 0.0, 0
    group: list[SceneData] = []
    pending = 0
    for sc in scenes + [None]:
        if sc is not None:
            group.append(sc)
            pending += sc.n_pairs
        if group and (sc is None or pending >= chunk):
            feats, meta, targets = pair_batch(group)
            out, _ = forward(weights, feats, meta)
            total += float(np.abs(out.astype(np.float64) - targets).sum())
            count += targets.size
            group, pending = [], 0
    return total / count


def train_stage(weights: ModelWeights, train: list[SceneData], val: list[SceneData],
                config: TrainConfig = TrainConfig(), stage: str = "anechoic",
                state: AdamState | None = None) -> tuple[ModelWeights, TrainHistory]:
    """Minimize the pairwise MAE with Adam; returns the best-validation weights."""
    if not train or not val:
        raise ValueError("training and validation sets must be nonempty")
    weights = weights.copy()
    if state is None:
        state = AdamState.for_weights(weights, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history = TrainHistory(stage)
    history.initial_train_loss = evaluate_loss(weights, train, config.eval_chunk)
    history.initial_val_loss = evaluate_loss(weights, val, config.eval_chunk)
    best = weights.copy()
    best_val = math.inf
    for epoch in range(config.max_epochs):
        rng = np.random.default_rng([config.seed, epoch])
        losses, weights_seen = [], []
        for idx in batch_indices(len(train), config.batch_size, rng):
            feats, meta, targets = pair_batch([train[k] for k in idx])
            out, cache = forward(weights, feats, meta)
            diff = out - targets
            loss = float(np.mean(np.abs(diff, dtype=np.float64)))
            if not math.isfinite(loss):
                raise FloatingPointError(f"training diverged (loss {loss}) in {stage} epoch {epoch}")
            grads = backward(weights, cache, np.sign(diff) / diff.size)
            try:
                adam_step(weights, grads, state)
            except FloatingPointError as exc:
                raise FloatingPointError(f"training diverged in {stage} epoch {epoch}: {exc}") from exc
            losses.append(loss)
            weights_seen.append(targets.size)
        train_loss = float(np.average(losses, weights=weights_seen))
        val_loss = evaluate_loss(weights, val, config.eval_chunk)
        if not math.isfinite(val_loss):
            raise FloatingPointError(f"validation loss diverged in {stage} epoch {epoch}")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        log.info("stage=%s epoch=%d train_loss=%.6f val_loss=%.6f", stage, epoch, train_loss, val_loss)
        if val_loss < best_val:
            best_val, best, history.best_epoch = val_loss, weights.copy(), epoch
        if should_stop(history.val_loss, config.patience):
            history.stopped_epoch = epoch
            break
    history.final_train_loss = evaluate_loss(best, train, config.eval_chunk)
    return best, history


def transfer_learn(anechoic_weights: ModelWeights, train: list[SceneData], val: list[SceneData],
                   config: TrainConfig = TrainConfig()) -> tuple[ModelWeights, TrainHistory]:
    """Second stage: continue from anechoic weights on reverberant data with a fresh optimizer."""
    return train_stage(anechoic_weights, train, val, config, stage="reverberant", state=None)


def forward_scene(weights: ModelWeights, signals, placement: DevicePlacement, room: Room, *,
                  stft_config: StftConfig | None = None, z_plane: float = Z_PLANE) -> LikelihoodGrid:
    """Sum of per-pair network grids over all ``i < j``, in pair order."""
    if placement.n_mics < 2:
        raise ValueError(f"Neural-SRP needs at least 2 microphones, got {placement.n_mics}")
    outputs = pair_outputs(weights, signals, placement, room, stft_config=stft_config)
    side = weights.config.grid_side
    total = np.zeros(side * side, dtype=np.float64)
    for out in outputs:
        total = total + out
    return LikelihoodGrid(total.reshape(side, side), make_grid(room, side, z_plane))


def pair_outputs(weights: ModelWeights, signals, placement: DevicePlacement, room: Room, *,
                 stft_config: StftConfig | None = None) -> np.ndarray:
    """Network output of every microphone pair as ``(n_pairs, G*G)`` float64."""
    phases = phase_stack(signals, stft_config)
    pairs = mic_pairs(placement.n_mics)
    i, j = np.array(pairs).T
    feats = np.stack([phases[i], phases[j]], axis=1)
    meta = np.stack([metadata(placement.mics[a], placement.mics[b], room).normalized for a, b in pairs])
    out, _ = forward(weights, feats, meta)
    return out.astype(np.float64)
