"""Framing, STFT, phase features, GCC-PHAT and WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

SAMPLE_RATE = 16000
WINDOW_LEN = 512
HOP = 256
# relative to the largest cross-spectrum magnitude
PHAT_EPS = 1e-8


@dataclass(frozen=True)
class SignalFrame:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.samples.ndim != 1 or not np.all(np.isfinite(self.samples)):
            raise ValueError("frame samples must be a finite 1-D array")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class StftConfig:
    window_len: int = WINDOW_LEN
    hop: int = HOP
    window: str = "hann"

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_len) // self.hop + 1

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1


@dataclass(frozen=True)
class StftPhaseFeature:
    """Stacked STFT phase of a microphone pair, shape ``(2, N, F)`` in radians."""

    data: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class CrossCorrelation:
    """Correlation values for integer lags ``-max_lag .. +max_lag``."""

    values: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @property
    def max_lag(self) -> int:
        return (len(self.values) - 1) // 2

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.max_lag, self.max_lag + 1)

    def peak_lag(self) -> int:
        return int(self.lags[np.argmax(self.values)])


def frame_signal(signal, frame_len: int, hop: int, sample_rate: int = SAMPLE_RATE) -> list[SignalFrame]:
    """Cut ``signal`` into overlapping frames without padding.

    Frame ``k`` covers samples ``[k*hop, k*hop + frame_len)``.
    """
    x = np.asarray(signal, dtype=np.float64)
    if frame_len < 2:
        raise ValueError(f"frame_len must be >= 2, got {frame_len}")
    if not 1 <= hop <= frame_len:
        raise ValueError(f"hop must be in [1, frame_len], got {hop}")
    if len(x) < frame_len:
        raise ValueError(f"signal too short: {len(x)} samples < frame_len {frame_len}")
    n = (len(x) - frame_len) // hop + 1
    return [SignalFrame(x[k * hop:k * hop + frame_len].copy(), sample_rate) for k in range(n)]


def _frames_matrix(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n = (len(x) - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def stft(signal, window_len: int = WINDOW_LEN, hop: int = HOP, window: str = "hann") -> np.ndarray:
    """One-sided STFT of a real signal, returned as complex ``(N, F)``.

    ``window`` is any name accepted by :func:`scipy.signal.get_window`
    (periodic form); pass ``"boxcar"`` for a rectangular window.
    """
    if window_len < 2 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two, got {window_len}")
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft expects a 1-D signal")
    if len(x) < window_len:
        raise ValueError(f"signal too short: {len(x)} samples < window_len {window_len}")
    if not 1 <= hop <= window_len:
        raise ValueError(f"hop must be in [1, window_len], got {hop}")
    frames = _frames_matrix(x, window_len, hop)
    win = get_window(window, window_len, fftbins=True)
    return np.fft.rfft(frames * win, axis=-1)


def phase_feature(x_i, x_j, config: StftConfig | None = None) -> StftPhaseFeature:
    """Phase of the STFT of both channels stacked into ``(2, N, F)``."""
    config = config or StftConfig()
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ValueError(f"signal length mismatch: {x_i.shape} vs {x_j.shape}")
    spec_i = stft(x_i, config.window_len, config.hop, config.window)
    spec_j = stft(x_j, config.window_len, config.hop, config.window)
    return StftPhaseFeature(np.stack([np.angle(spec_i), np.angle(spec_j)]))


def phase_stack(signals, config: StftConfig | None = None) -> np.ndarray:
    """STFT phase of every channel of ``signals`` (M, T) -> (M, N, F)."""
    config = config or StftConfig()
    return np.stack([np.angle(stft(s, config.window_len, config.hop, config.window)) for s in signals])


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def gcc_phat(x_i, x_j, max_lag: int, sample_rate: int = SAMPLE_RATE) -> CrossCorrelation:
    """GCC-PHAT cross-correlation over lags ``-max_lag .. max_lag``.

    Lag convention: ``r(tau) = sum_t x_i(t + tau) x_j(t)``, so when ``x_j``
    is ``x_i`` delayed by ``d`` samples the peak sits at ``-d``.
    Silent inputs give an all-zero correlation.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape or x_i.ndim != 1:
        raise ValueError(f"signals must be 1-D with equal length, got {x_i.shape} and {x_j.shape}")
    n = len(x_i)
    if not 0 <= max_lag < n:
        raise ValueError(f"max_lag must be in [0, {n}), got {max_lag}")
    nfft = _next_pow2(2 * n)
    cross = np.fft.rfft(x_i, nfft) * np.conj(np.fft.rfft(x_j, nfft))
    mag = np.abs(cross)
    peak = mag.max()
    if peak == 0.0:
        return CrossCorrelation(np.zeros(2 * max_lag + 1), sample_rate)
    r = np.fft.irfft(cross / (mag + PHAT_EPS * peak), nfft)
    values = np.concatenate([r[nfft - max_lag:], r[:max_lag + 1]])
    return CrossCorrelation(values, sample_rate)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file into float64 ``(channels, samples)`` in [-1, 1]."""
    fs, data = wavfile.read(Path(path))
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype} (need 16-bit PCM or 32-bit float)")
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return np.ascontiguousarray(data), int(fs)


def write_wav(path, signals, sample_rate: int = SAMPLE_RATE) -> None:
    """Write ``(channels, samples)`` as 32-bit float WAV."""
    data = np.asarray(signals, dtype=np.float32)
    if data.ndim == 2:
        data = data.T
    wavfile.write(Path(path), sample_rate, np.ascontiguousarray(data))
