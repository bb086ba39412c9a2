"""Central finite-difference check of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .model import ModelConfig, ModelWeights, backward, forward

# downsized network: 4 conv layers still fit in 17 bins (17 -> 8 -> 4 -> 2 -> 1)
SMALL_CONFIG = ModelConfig(conv_channels=4, rnn_hidden=8, mlp_width=16, grid_side=5, n_bins=17)


def gradient_check(config: ModelConfig = SMALL_CONFIG, *, n_frames: int = 5, batch: int = 3,
                   seed: int = 0, step: float = 1e-5, floor: float = 1e-6) -> dict[str, float]:
    """Max elementwise relative error per parameter tensor, in float64.

    The scalar checked is a fixed random projection of the network output,
    so its gradient exercises every output cell.  The relative error of an
    entry is ``|a - n| / max(|a| + |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    weights = ModelWeights.init(config, seed, dtype=np.float64)
    feats = rng.uniform(-np.pi, np.pi, size=(batch, 2, n_frames, config.n_bins))
    meta = rng.uniform(0, 1, size=(batch, config.metadata_len))
    proj = rng.standard_normal((batch, config.output_size))

    def objective() -> float:
        return float(np.sum(forward(weights, feats, meta)[0] * proj))

    _, cache = forward(weights, feats, meta)
    analytic = backward(weights, cache, proj)
    errors = {}
    for name, param in weights.params.items():
        numeric = np.empty_like(param)
        for idx in np.ndindex(param.shape):
            orig = param[idx]
            param[idx] = orig + step
            up = objective()
            param[idx] = orig - step
            down = objective()
            param[idx] = orig
            numeric[idx] = (up - down) / (2 * step)
        a = analytic[name]
        errors[name] = float(np.max(np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), floor)))
    return errors
