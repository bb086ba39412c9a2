"""Classical SRP-PHAT likelihood maps and map export."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, CrossCorrelation, gcc_phat
from .geometry import SPEED_OF_SOUND, CandidateGrid, DevicePlacement, mic_pairs, tdoa

# cell-span scoring for the classical baseline; "point" reads cell centres only
DEFAULT_MODE = "cell"


@dataclass(frozen=True)
class LikelihoodGrid:
    values: np.ndarray
    grid: CandidateGrid

    def __post_init__(self):
        if self.values.shape != (self.grid.side, self.grid.side):
            raise ValueError(f"values shape {self.values.shape} does not match grid side {self.grid.side}")

    def __add__(self, other: "LikelihoodGrid") -> "LikelihoodGrid":
        return LikelihoodGrid(self.values + other.values, self.grid)

    def normalized(self) -> np.ndarray:
        """Min-max rescale to [0, 1]; a constant map becomes all zeros."""
        lo, hi = self.values.min(), self.values.max()
        if hi == lo:
            return np.zeros_like(self.values)
        return (self.values - lo) / (hi - lo)


def required_lag(p_i, p_j, c: float = SPEED_OF_SOUND, fs: int = SAMPLE_RATE) -> int:
    """Smallest integer lag range covering every TDOA between two microphones."""
    dist = float(np.linalg.norm(np.asarray(p_i) - np.asarray(p_j)))
    return int(math.ceil(dist * fs / c)) + 1


def cell_lag_span(grid: CandidateGrid, p_i, p_j, c: float = SPEED_OF_SOUND, fs: int = SAMPLE_RATE,
                  sub: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest TDOA (in samples) over each cell, from a ``sub x sub`` lattice spanning the cell."""
    dx, dy = grid.cell_size
    off = np.linspace(-0.5, 0.5, sub)
    x = grid.xs[None, :, None, None] + off[None, None, None, :] * dx
    y = grid.ys[:, None, None, None] + off[None, None, :, None] * dy
    x, y = np.broadcast_arrays(x, y)
    lags = tdoa(np.stack([x, y], axis=-1), p_i, p_j, c, grid.z_plane) * fs
    lags = lags.reshape(grid.side, grid.side, -1)
    return lags.min(axis=-1), lags.max(axis=-1)


def _interval_max(corr: CrossCorrelation, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Max of the linearly interpolated correlation over each lag interval ``[lo, hi]``."""
    lags, values = corr.lags, corr.values
    best = np.maximum(np.interp(lo, lags, values), np.interp(hi, lags, values))
    first = np.ceil(lo).astype(np.int64)
    width = int((np.floor(hi).astype(np.int64) - first).max()) + 1
    if width > 0:
        idx = first[..., None] + np.arange(width)
        inside = idx <= hi[..., None]
        picked = values[np.clip(idx, -corr.max_lag, corr.max_lag) + corr.max_lag]
        best = np.maximum(best, np.where(inside, picked, -np.inf).max(axis=-1))
    return best


def srp_pairwise(corr: CrossCorrelation, p_i, p_j, grid: CandidateGrid,
                 c: float = SPEED_OF_SOUND, mode: str = "point") -> LikelihoodGrid:
    """Pairwise SRP map from one cross-correlation.

    ``mode="point"`` reads the correlation at each cell centre's TDOA,
    linearly interpolated between integer lags.  ``mode="cell"`` takes the
    maximum of that interpolated correlation over the whole TDOA span of
    the cell, so peaks narrower than a cell are not lost between centres.
    """
    fs = corr.sample_rate
    if mode == "point":
        lo = hi = tdoa(grid.points, p_i, p_j, c, grid.z_plane) * fs
    elif mode == "cell":
        lo, hi = cell_lag_span(grid, p_i, p_j, c, fs)
    else:
        raise ValueError(f"unknown SRP mode {mode!r}")
    needed = max(float(np.abs(lo).max()), float(np.abs(hi).max()))
    if needed > corr.max_lag:
        raise ValueError(f"correlation covers lags up to {corr.max_lag}, grid requires {math.ceil(needed)}")
    if mode == "point":
        return LikelihoodGrid(np.interp(lo, corr.lags, corr.values), grid)
    return LikelihoodGrid(_interval_max(corr, lo, hi), grid)


def srp_pairwise_maps(signals, placement: DevicePlacement, grid: CandidateGrid,
                      c: float = SPEED_OF_SOUND, fs: int = SAMPLE_RATE,
                      mode: str = DEFAULT_MODE) -> list[LikelihoodGrid]:
    signals = np.asarray(signals, dtype=np.float64)
    if placement.n_mics < 2:
        raise ValueError(f"SRP needs at least 2 microphones, got {placement.n_mics}")
    if len(signals) != placement.n_mics:
        raise ValueError(f"{len(signals)} signals for {placement.n_mics} microphones")
    maps = []
    for i, j in mic_pairs(placement.n_mics):
        p_i, p_j = placement.mics[i], placement.mics[j]
        max_lag = min(required_lag(p_i, p_j, c, fs), signals.shape[1] - 1)
        corr = gcc_phat(signals[i], signals[j], max_lag, fs)
        maps.append(srp_pairwise(corr, p_i, p_j, grid, c, mode))
    return maps


def srp_global(signals, placement: DevicePlacement, grid: CandidateGrid,
               c: float = SPEED_OF_SOUND, fs: int = SAMPLE_RATE,
               mode: str = DEFAULT_MODE) -> LikelihoodGrid:
    """Sum of the pairwise maps over all ``i < j`` in lexicographic pair order."""
    maps = srp_pairwise_maps(signals, placement, grid, c, fs, mode)
    total = np.zeros_like(maps[0].values)
    for m in maps:
        total = total + m.values
    return LikelihoodGrid(total, grid)


def estimate_source(lmap: LikelihoodGrid) -> tuple[np.ndarray, tuple[int, int]]:
    """Centre of the highest cell; ties go to the lowest row-major index."""
    values = lmap.values
    if values.size == 0:
        raise ValueError("empty likelihood map")
    if np.isnan(values).any():
        raise ValueError("likelihood map contains NaN")
    row, col = np.unravel_index(int(np.argmax(values)), values.shape)
    return lmap.grid.center(row, col), (int(row), int(col))


def write_map_csv(values, path) -> None:
    """G rows of comma-separated values, row 0 at the smallest y."""
    values = np.asarray(values, dtype=np.float64)
    lines = [",".join(repr(float(v)) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_map_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_map_pgm(values, path) -> None:
    """8-bit binary PGM, min-max normalized; the top image row is the largest y."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    img = np.round(scaled[::-1] * 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def write_map(values, path) -> None:
    """Dispatch on suffix: ``.pgm`` for an image, anything else CSV."""
    if Path(path).suffix.lower() == ".pgm":
        write_map_pgm(values, path)
    else:
        write_map_csv(values, path)
