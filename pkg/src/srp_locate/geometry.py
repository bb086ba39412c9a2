"""Rooms, device placements, TDOAs, candidate grids and metadata vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_SOUND = 343.0
GRID_SIZE = 25
Z_PLANE = 1.5
# largest room generated by the simulator, used to scale room dimensions
ROOM_DIMS_MAX = (10.0, 10.0, 4.0)
METADATA_LEN = 9


@dataclass(frozen=True)
class Room:
    dims: np.ndarray
    absorptions: np.ndarray = field(default_factory=lambda: np.ones(6))

    def __post_init__(self):
        dims = np.asarray(self.dims, dtype=np.float64).reshape(3)
        absorptions = np.asarray(self.absorptions, dtype=np.float64).reshape(6)
        if np.any(dims <= 0):
            raise ValueError(f"room dimensions must be positive, got {dims}")
        if np.any(absorptions <= 0) or np.any(absorptions > 1):
            raise ValueError(f"absorptions must lie in (0, 1], got {absorptions}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "absorptions", absorptions)

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p > margin) and np.all(p < self.dims - margin))


@dataclass(frozen=True)
class DevicePlacement:
    source: np.ndarray
    mics: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, dtype=np.float64).reshape(3))
        mics = np.asarray(self.mics, dtype=np.float64)
        if mics.ndim != 2 or mics.shape[1] != 3:
            raise ValueError(f"mics must be (M, 3), got {mics.shape}")
        object.__setattr__(self, "mics", mics)

    @property
    def n_mics(self) -> int:
        return len(self.mics)

    def min_distance(self) -> float:
        pts = np.vstack([self.source[None], self.mics])
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        return float(d[np.triu_indices(len(pts), 1)].min())


@dataclass(frozen=True)
class CandidateGrid:
    """Cell centres of a uniform ``G x G`` partition of the room floor.

    ``points`` has shape ``(G, G, 2)`` indexed ``[row, col]`` with rows along
    y and columns along x, so row 0 holds the smallest y.
    """

    side: int
    room_dims: np.ndarray
    z_plane: float

    @property
    def cell_size(self) -> tuple[float, float]:
        return (self.room_dims[0] / self.side, self.room_dims[1] / self.side)

    @property
    def xs(self) -> np.ndarray:
        return (np.arange(self.side) + 0.5) * self.room_dims[0] / self.side

    @property
    def ys(self) -> np.ndarray:
        return (np.arange(self.side) + 0.5) * self.room_dims[1] / self.side

    @property
    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.xs, self.ys)
        return np.stack([xx, yy], axis=-1)

    @property
    def points3d(self) -> np.ndarray:
        pts = self.points
        return np.concatenate([pts, np.full(pts.shape[:2] + (1,), self.z_plane)], axis=-1)

    def center(self, row: int, col: int) -> np.ndarray:
        return np.array([self.xs[col], self.ys[row]])

    def cell_of(self, p) -> tuple[int, int]:
        """Row/column of the cell containing the 2-D point ``p`` (clipped to the grid)."""
        col = int(np.clip(np.floor(p[0] / self.room_dims[0] * self.side), 0, self.side - 1))
        row = int(np.clip(np.floor(p[1] / self.room_dims[1] * self.side), 0, self.side - 1))
        return row, col


@dataclass(frozen=True)
class MetadataVector:
    raw: np.ndarray
    normalized: np.ndarray


def _lift(p, z_plane: float) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] == 2:
        p = np.concatenate([p, np.full(p.shape[:-1] + (1,), z_plane)], axis=-1)
    return p


def tdoa(p, p_i, p_j, c: float = SPEED_OF_SOUND, z_plane: float = Z_PLANE):
    """Time difference of arrival ``(|p_i - p| - |p_j - p|) / c`` in seconds.

    ``p`` may be a single point or any array of points with trailing
    dimension 2 or 3; 2-D points are placed at height ``z_plane``.
    """
    if c <= 0:
        raise ValueError(f"speed of sound must be positive, got {c}")
    p = _lift(p, z_plane)
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    return (np.linalg.norm(p_i - p, axis=-1) - np.linalg.norm(p_j - p, axis=-1)) / c


def make_grid(room: Room, side: int = GRID_SIZE, z_plane: float = Z_PLANE) -> CandidateGrid:
    if side < 2:
        raise ValueError(f"grid side must be >= 2, got {side}")
    if not 0 <= z_plane <= room.dims[2]:
        raise ValueError(f"z_plane {z_plane} outside room height [0, {room.dims[2]}]")
    return CandidateGrid(side, room.dims.copy(), float(z_plane))


def metadata(p_i, p_j, room: Room) -> MetadataVector:
    """Pair metadata ``[p_i, p_j, d]`` plus its network-facing normalized form.

    Positions are divided by the room dimensions and the dimensions by
    :data:`ROOM_DIMS_MAX`.
    """
    p_i = np.asarray(p_i, dtype=np.float64).reshape(3)
    p_j = np.asarray(p_j, dtype=np.float64).reshape(3)
    raw = np.concatenate([p_i, p_j, room.dims])
    normalized = np.concatenate([p_i / room.dims, p_j / room.dims, room.dims / np.asarray(ROOM_DIMS_MAX)])
    return MetadataVector(raw, normalized)


def mic_pairs(n_mics: int) -> list[tuple[int, int]]:
    """All ``(i, j)`` with ``i < j`` in lexicographic order."""
    return [(i, j) for i in range(n_mics) for j in range(i + 1, n_mics)]
