"""Shoebox image-source simulation and AnechoicSim/ReverbSim-style dataset synthesis."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .dsp import SAMPLE_RATE, read_wav, write_wav
from .geometry import SPEED_OF_SOUND, DevicePlacement, Room

SPLITS = ("train", "val", "test")
# per-split seed offsets; keeps train/val/test scenes disjoint
SPLIT_SEED_BASE = {"train": 0, "val": 1_000_000, "test": 2_000_000}
MAX_PLACEMENT_ATTEMPTS = 10_000
CORPUS_ENV = "SRP_LOCATE_DATA"


@dataclass(frozen=True)
class RoomImpulseResponse:
    taps: np.ndarray
    fs: int = SAMPLE_RATE
    n_images: int = 1

    @property
    def length(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class AnechoicPath:
    attenuation: float
    delay: float


@dataclass
class SimConfig:
    name: str = "sim"
    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    n_mics: int = 4
    reverberant: bool = True
    absorption_range: tuple[float, float] = (0.02, 0.50)
    max_order: int | None = None
    snr_range_db: tuple[float, float] = (15.0, 30.0)
    source_mode: str = "synthetic"
    corpus_dir: str | None = None
    room_x_range: tuple[float, float] = (3.0, 10.0)
    room_y_range: tuple[float, float] = (3.0, 10.0)
    room_z_range: tuple[float, float] = (2.0, 4.0)
    min_separation: float = 0.5
    wall_clearance: float = 0.1
    # fixed talker height in metres; None draws it uniformly like the microphones
    source_height: float | None = None
    duration: float = 0.5
    fs: int = SAMPLE_RATE

    def __post_init__(self):
        for key in ("absorption_range", "snr_range_db", "room_x_range", "room_y_range", "room_z_range"):
            setattr(self, key, tuple(float(v) for v in getattr(self, key)))
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("sample counts must be >= 1")
        if self.n_mics < 2:
            raise ValueError(f"need at least 2 microphones, got {self.n_mics}")
        if self.source_mode not in ("synthetic", "wav-corpus"):
            raise ValueError(f"unknown source_mode {self.source_mode!r}")

    @property
    def order(self) -> int:
        if self.max_order is not None:
            return self.max_order
        return 10 if self.reverberant else 0

    def count(self, split: str) -> int:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}[split]

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.fs))


def _axis_images(k: np.ndarray, length: float, pos: float):
    """Image coordinate and reflection counts (lower wall, upper wall) along one axis."""
    coord = k * length + np.where(k % 2 == 0, pos, length - pos)
    absk = np.abs(k)
    big, small = (absk + 1) // 2, absk // 2
    lower = np.where(k < 0, big, small)
    upper = np.where(k < 0, small, big)
    return coord, lower, upper


def image_sources(room: Room, src, max_order: int):
    """Image positions and amplitude gains (product of wall reflection coefficients).

    Images are indexed by integer triples with ``|kx| + |ky| + |kz| <= max_order``.
    """
    src = np.asarray(src, dtype=np.float64)
    r = np.arange(-max_order, max_order + 1)
    kx, ky, kz = (a.ravel() for a in np.meshgrid(r, r, r, indexing="ij"))
    keep = np.abs(kx) + np.abs(ky) + np.abs(kz) <= max_order
    beta = np.sqrt(1.0 - room.absorptions)
    pos = np.empty((int(keep.sum()), 3))
    gain = np.ones(len(pos))
    for axis, k in enumerate((kx[keep], ky[keep], kz[keep])):
        coord, lower, upper = _axis_images(k, room.dims[axis], src[axis])
        pos[:, axis] = coord
        gain = gain * beta[2 * axis] ** lower * beta[2 * axis + 1] ** upper
    return pos, gain


def simulate_rir(room: Room, src, mic, max_order: int, fs: int = SAMPLE_RATE,
                 c: float = SPEED_OF_SOUND) -> RoomImpulseResponse:
    """Image-source RIR; each image adds ``gain / (4 pi dist)`` split over two taps at ``dist / c * fs``."""
    if max_order < 0:
        raise ValueError(f"max_order must be >= 0, got {max_order}")
    for name, p in (("source", src), ("microphone", mic)):
        if not room.contains(p):
            raise ValueError(f"{name} at {np.asarray(p).tolist()} is not strictly inside room {room.dims.tolist()}")
    pos, gain = image_sources(room, src, max_order)
    dist = np.linalg.norm(pos - np.asarray(mic, dtype=np.float64), axis=1)
    amp = gain / (4 * np.pi * dist)
    delay = dist / c * fs
    n0 = np.floor(delay).astype(np.int64)
    frac = delay - n0
    length = int(n0.max()) + 2
    taps = np.bincount(n0, amp * (1 - frac), minlength=length) + np.bincount(n0 + 1, amp * frac, minlength=length)
    return RoomImpulseResponse(taps, fs, len(pos))


def anechoic_path(src, mic, fs: int = SAMPLE_RATE, c: float = SPEED_OF_SOUND) -> AnechoicPath:
    dist = float(np.linalg.norm(np.asarray(src) - np.asarray(mic)))
    return AnechoicPath(1.0 / (4 * np.pi * dist), dist / c)


def propagate(source_signal, rir, snr_db: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Convolve with the RIR (truncated to the source length) and add white noise at ``snr_db``."""
    s = np.asarray(source_signal, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty source signal")
    h = rir.taps if isinstance(rir, RoomImpulseResponse) else np.asarray(rir, dtype=np.float64)
    x = fftconvolve(s, h)[:len(s)]
    if math.isinf(snr_db) and snr_db > 0:
        return x
    power = np.mean(x ** 2)
    if power == 0:
        raise ValueError("cannot set SNR on an all-zero signal")
    if rng is None:
        raise ValueError("rng is required when adding noise")
    noise = rng.standard_normal(len(x))
    noise *= math.sqrt(power / 10 ** (snr_db / 10) / np.mean(noise ** 2))
    return x + noise


def measured_snr_db(clean, noisy) -> float:
    clean = np.asarray(clean)
    noise = np.asarray(noisy) - clean
    return 10 * math.log10(np.mean(clean ** 2) / np.mean(noise ** 2))


def reflectivity_biased_absorption(rng: np.random.Generator, low: float = 0.02, high: float = 0.50) -> np.ndarray:
    """One independent absorption coefficient per surface (x0, x1, y0, y1, z0, z1)."""
    return rng.uniform(low, high, size=6)


def sample_scenario(config: SimConfig, rng: np.random.Generator) -> tuple[Room, DevicePlacement]:
    dims = np.array([
        rng.uniform(*config.room_x_range),
        rng.uniform(*config.room_y_range),
        rng.uniform(*config.room_z_range),
    ])
    room = Room(dims)
    n = config.n_mics + 1
    lo, hi = config.wall_clearance, dims - config.wall_clearance
    iu = np.triu_indices(n, 1)
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        pts = rng.uniform(lo, hi, size=(n, 3))
        if config.source_height is not None:
            pts[0, 2] = config.source_height
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)[iu]
        if d.min() >= config.min_separation:
            return room, DevicePlacement(pts[0], pts[1:])
    raise RuntimeError(f"could not place {n} devices {config.min_separation} m apart "
                       f"after {MAX_PLACEMENT_ATTEMPTS} attempts in room {dims.tolist()}")


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=np.float64)
    f[0] = np.inf
    return np.fft.irfft(spec / np.sqrt(f), n)


def synthetic_speech(n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    """Pink noise under a 4 Hz raised-cosine envelope, normalized to a random RMS in [0.05, 0.3]."""
    t = np.arange(n) / fs
    envelope = 0.5 * (1 - np.cos(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi)))
    s = pink_noise(n, rng) * envelope
    return s * (rng.uniform(0.05, 0.3) / np.sqrt(np.mean(s ** 2)))


def list_corpus(corpus_dir) -> list[Path]:
    files = sorted(Path(corpus_dir).rglob("*.wav"))
    if not files:
        raise FileNotFoundError(f"no .wav files found in corpus directory {corpus_dir}")
    return files


def corpus_excerpt(files: list[Path], n: int, fs: int, rng: np.random.Generator,
                   min_rms: float = 1e-3, attempts: int = 100) -> np.ndarray:
    """Random ``n``-sample excerpt with RMS >= ``min_rms`` from a random corpus file."""
    for _ in range(attempts):
        path = files[int(rng.integers(len(files)))]
        data, file_fs = read_wav(path)
        if file_fs != fs:
            raise ValueError(f"{path}: sample rate {file_fs} Hz, expected {fs} Hz (no resampling)")
        x = data[0]
        if len(x) < n:
            continue
        start = int(rng.integers(len(x) - n + 1))
        excerpt = x[start:start + n]
        if np.sqrt(np.mean(excerpt ** 2)) >= min_rms:
            return excerpt.copy()
    raise RuntimeError(f"no excerpt of {n} samples with RMS >= {min_rms} found after {attempts} draws")


def synth_source(mode: str, n: int, fs: int, rng: np.random.Generator, corpus_dir=None) -> np.ndarray:
    if mode == "synthetic":
        return synthetic_speech(n, fs, rng)
    if mode == "wav-corpus":
        corpus_dir = corpus_dir or os.environ.get(CORPUS_ENV)
        if not corpus_dir:
            raise ValueError(f"wav-corpus mode needs a corpus directory (or ${CORPUS_ENV})")
        return corpus_excerpt(list_corpus(corpus_dir), n, fs, rng)
    raise ValueError(f"unknown source mode {mode!r}")


def energy_decay_curve(taps) -> np.ndarray:
    """Schroeder backward integral in dB, normalized to 0 dB at t = 0."""
    e = np.cumsum(np.asarray(taps, dtype=np.float64)[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(e / e[0])


def schroeder_t60(taps, fs: int = SAMPLE_RATE, start_db: float = -5.0, stop_db: float = -25.0) -> float | None:
    """T60 extrapolated from a least-squares fit of the decay curve between ``start_db`` and ``stop_db``."""
    edc = energy_decay_curve(taps)
    idx = np.nonzero((edc <= start_db) & (edc >= stop_db))[0]
    if edc.min() > stop_db or len(idx) < 2:
        return None
    slope = np.polyfit(idx / fs, edc[idx], 1)[0]
    return float(-60.0 / slope) if slope < 0 else None


def eyring_t60(room: Room, c: float = SPEED_OF_SOUND) -> float:
    dx, dy, dz = room.dims
    areas = np.array([dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy])
    surface = areas.sum()
    mean_abs = float(areas @ room.absorptions / surface)
    return 24 * math.log(10) / c * dx * dy * dz / (-surface * math.log(1 - mean_abs))


@dataclass
class DatasetSample:
    id: str
    split: str
    wav: str
    fs: int
    room_dims: list
    absorptions: list
    mic_positions: list
    source_position: list
    seed: int
    snr_db: float
    max_order: int
    t60_estimate: float | None
    dataset: str = "sim"
    extra: dict = field(default_factory=dict)

    @property
    def room(self) -> Room:
        return Room(self.room_dims, self.absorptions)

    @property
    def placement(self) -> DevicePlacement:
        return DevicePlacement(self.source_position, self.mic_positions)

    def to_json(self) -> str:
        d = asdict(self)
        if not d["extra"]:
            del d["extra"]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSample":
        return cls(**d)


def simulate_sample(config: SimConfig, split: str, index: int, master_seed: int):
    """Scene, source, RIRs and noisy microphone signals for one sample, all from its own seed."""
    seed = SPLIT_SEED_BASE[split] + index
    rng = np.random.default_rng([master_seed, seed])
    room, placement = sample_scenario(config, rng)
    if config.reverberant:
        room = Room(room.dims, reflectivity_biased_absorption(rng, *config.absorption_range))
    s = synth_source(config.source_mode, config.n_samples, config.fs, rng, config.corpus_dir)
    snr = float(rng.uniform(*config.snr_range_db))
    order = config.order
    signals, t60 = [], None
    for m, mic in enumerate(placement.mics):
        rir = simulate_rir(room, placement.source, mic, order, config.fs)
        if m == 0 and config.reverberant:
            t60 = schroeder_t60(rir.taps, config.fs)
        signals.append(propagate(s, rir, snr, rng))
    sample_id = f"{split}-{index:05d}"
    sample = DatasetSample(
        id=sample_id, split=split, wav=f"{split}/{sample_id}.wav", fs=config.fs,
        room_dims=room.dims.tolist(), absorptions=room.absorptions.tolist(),
        mic_positions=placement.mics.tolist(), source_position=placement.source.tolist(),
        seed=seed, snr_db=snr, max_order=order, t60_estimate=t60, dataset=config.name,
    )
    return sample, np.asarray(signals)


def generate_dataset(config: SimConfig, out_dir, master_seed: int = 0, threads: int = 1,
                     splits=SPLITS) -> Path:
    """Write per-sample M-channel WAVs and ``manifest.jsonl``; returns the manifest path."""
    out = Path(out_dir)
    jobs = [(split, i) for split in splits for i in range(config.count(split))]
    try:
        for split in splits:
            (out / split).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory under {out}: {exc}") from exc

    def run(job):
        sample, signals = simulate_sample(config, job[0], job[1], master_seed)
        path = out / sample.wav
        try:
            write_wav(path, signals, config.fs)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        return sample

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            samples = list(pool.map(run, jobs))
    else:
        samples = [run(job) for job in jobs]
    manifest = out / "manifest.jsonl"
    try:
        manifest.write_text("".join(s.to_json() + "\n" for s in samples))
    except OSError as exc:
        raise OSError(f"failed writing {manifest}: {exc}") from exc
    return manifest


def read_manifest(path, split: str | None = None) -> list[DatasetSample]:
    samples = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            sample = DatasetSample.from_dict(json.loads(line))
            if split is None or sample.split == split:
                samples.append(sample)
    return samples


def load_audio(sample: DatasetSample, manifest_path) -> np.ndarray:
    path = Path(sample.wav)
    if not path.is_absolute():
        path = Path(manifest_path).parent / path
    data, fs = read_wav(path)
    if fs != sample.fs:
        raise ValueError(f"{path}: sample rate {fs} does not match manifest {sample.fs}")
    return data
