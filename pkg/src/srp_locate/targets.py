"""Gaussian and hyperbolic target grids and the MAE training loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import SAMPLE_RATE
from .geometry import SPEED_OF_SOUND, CandidateGrid, tdoa
from .srp import LikelihoodGrid

# |delta tau| is snapped to this grid so mirror-image cells, whose TDOAs differ
# only by rounding, receive bit-identical target values
TDOA_RESOLUTION = 1e-12


# 20 sample periods at 16 kHz; narrower targets leave desk-scale training stuck
# at the all-zero output, which is the MAE optimum for sparse targets
SIGMA_HYPERBOLIC = 20.0 / SAMPLE_RATE


@dataclass(frozen=True)
class TargetConfig:
    sigma_gaussian: float = 0.5
    sigma_hyperbolic: float = SIGMA_HYPERBOLIC

    def __post_init__(self):
        if self.sigma_gaussian <= 0 or self.sigma_hyperbolic <= 0:
            raise ValueError("target widths must be positive")


def gaussian_grid(p_s, grid: CandidateGrid, sigma: float = 0.5) -> LikelihoodGrid:
    """``exp(-(|p - p_s| / sigma)^2)`` over the 2-D cell centres."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = np.linalg.norm(grid.points - np.asarray(p_s, dtype=np.float64)[:2], axis=-1)
    return LikelihoodGrid(np.exp(-(d / sigma) ** 2), grid)


def hyperbolic_grid(p_s, p_i, p_j, grid: CandidateGrid, sigma: float = SIGMA_HYPERBOLIC,
                    c: float = SPEED_OF_SOUND) -> LikelihoodGrid:
    """``exp(-((tdoa(p) - tdoa(p_s)) / sigma)^2)``, every TDOA taken on the grid plane.

    ``|tdoa(p) - tdoa(p_s)|`` is rounded to :data:`TDOA_RESOLUTION` first.
    A 2-D ``p_s`` is lifted to the grid plane like the cell centres, so the
    source cell scores exactly 1 when ``p_s`` is a cell centre.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    p_s = np.asarray(p_s, dtype=np.float64)[:2]
    delta = tdoa(grid.points, p_i, p_j, c, grid.z_plane) - tdoa(p_s, p_i, p_j, c, grid.z_plane)
    delta = np.round(np.abs(delta) / TDOA_RESOLUTION) * TDOA_RESOLUTION
    return LikelihoodGrid(np.exp(-(delta / sigma) ** 2), grid)


def mae_loss(target, estimate) -> tuple[float, np.ndarray]:
    """Mean absolute error over cells and its gradient with respect to ``estimate``.

    The gradient is ``sign(estimate - target) / n_cells`` with 0 at ties.
    Accepts :class:`LikelihoodGrid` or plain arrays.
    """
    y = target.values if isinstance(target, LikelihoodGrid) else np.asarray(target)
    y_hat = estimate.values if isinstance(estimate, LikelihoodGrid) else np.asarray(estimate)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: target {y.shape} vs estimate {y_hat.shape}")
    diff = y_hat - y
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size
