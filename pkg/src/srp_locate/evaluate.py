"""Localization error, per-method summaries and benchmark tables."""

from __future__ import annotations

import csv
import math
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Z_PLANE, make_grid
from .roomsim import DatasetSample, load_audio, read_manifest
from .srp import DEFAULT_MODE, estimate_source, srp_global

METHODS = ("srp", "neural")

# Mean and std of localization error (m) reported for the published system.
REFERENCE_TABLE = {
    ("ReverbSim4", "SRP"): (1.86, 1.46),
    ("ReverbSim4", "NeuralSRP"): (1.17, 0.87),
    ("ReverbSim4", "CRNN4"): (2.85, 1.53),
    ("ReverbSim6", "SRP"): (1.51, 1.32),
    ("ReverbSim6", "NeuralSRP"): (0.90, 0.66),
    ("ReverbSim6", "CRNN6"): (2.49, 1.29),
    ("Recorded4", "SRP"): (1.19, 1.53),
    ("Recorded4", "NeuralSRP+"): (0.77, 0.66),
    ("Recorded4", "CRNN4"): (3.78, 1.63),
    ("Recorded6", "SRP"): (0.75, 1.04),
    ("Recorded6", "NeuralSRP+"): (0.56, 0.46),
    ("Recorded6", "CRNN6"): (2.91, 1.77),
}


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    method: str
    estimate: tuple
    truth: tuple
    error: float
    runtime: float
    dataset: str = ""


@dataclass(frozen=True)
class Summary:
    dataset: str
    method: str
    mean: float
    std: float
    n: int


def localization_error(estimate, truth) -> float:
    """Euclidean distance between 2-D positions, in metres."""
    a = np.asarray(estimate, dtype=np.float64)[:2]
    b = np.asarray(truth, dtype=np.float64)[:2]
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("positions must be finite")
    return float(np.hypot(*(a - b)))


def summarize(records) -> list[Summary]:
    """Mean and population standard deviation of the error per (dataset, method)."""
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in records:
        groups[(r.dataset, r.method)].append(r.error)
    if not groups:
        raise ValueError("no records to summarize")
    out = []
    for (dataset, method), errors in sorted(groups.items()):
        e = np.sort(np.asarray(errors))
        out.append(Summary(dataset, method, float(e.mean()), float(e.std()), len(e)))
    return out


def relative_improvement(baseline: float, method: float, convention: str = "baseline") -> float:
    """Error reduction of ``method`` over ``baseline``.

    ``convention="baseline"`` divides by the baseline error (fraction of the
    baseline error removed); ``convention="method"`` divides by the method's
    own error, i.e. ``baseline / method - 1``.
    """
    if convention == "baseline":
        return (baseline - method) / baseline
    if convention == "method":
        return (baseline - method) / method
    raise ValueError(f"unknown convention {convention!r}")


def _locate(method: str, signals, sample: DatasetSample, weights, grid_side: int, z_plane: float, srp_mode: str):
    room = sample.room
    if method == "srp":
        grid = make_grid(room, grid_side, z_plane)
        lmap = srp_global(signals, sample.placement, grid, fs=sample.fs, mode=srp_mode)
    elif method == "neural":
        from .neural.train import forward_scene

        lmap = forward_scene(weights, signals, sample.placement, room, z_plane=z_plane)
    else:
        raise ValueError(f"unknown method {method!r} (choose from {', '.join(METHODS)})")
    return estimate_source(lmap)[0]


def run_benchmark(manifest, methods=("srp",), weights=None, *, split: str | None = "test",
                  z_plane: float = Z_PLANE, srp_mode: str = DEFAULT_MODE, threads: int = 1,
                  dataset: str | None = None) -> list[EvalRecord]:
    """Evaluate every method on every sample of ``split``; records sorted by sample id."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r} (choose from {', '.join(METHODS)})")
    if "neural" in methods and weights is None:
        raise ValueError("the neural method needs model weights")
    grid_side = weights.config.grid_side if weights is not None else 25
    samples = read_manifest(manifest, split)
    if not samples:
        raise ValueError(f"no samples for split {split!r} in {manifest}")

    def one(sample):
        signals = load_audio(sample, manifest)
        truth = tuple(sample.source_position[:2])
        recs = []
        for method in methods:
            start = time.perf_counter()
            est = _locate(method, signals, sample, weights, grid_side, z_plane, srp_mode)
            runtime = time.perf_counter() - start
            recs.append(EvalRecord(sample.id, method, tuple(float(v) for v in est), truth,
                                   localization_error(est, truth), runtime, dataset or sample.dataset))
        return recs

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            nested = list(pool.map(one, samples))
    else:
        nested = [one(s) for s in samples]
    records = [r for recs in nested for r in recs]
    return sorted(records, key=lambda r: (r.sample_id, methods.index(r.method)))


def write_tables(records, out_dir) -> tuple[Path, Path]:
    """Write ``per_sample.csv`` and ``summary.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_sample = out / "per_sample.csv"
    with per_sample.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "method", "error_m", "runtime_s"])
        for r in sorted(records, key=lambda r: (r.sample_id, r.method)):
            w.writerow([r.sample_id, r.method, repr(r.error), f"{r.runtime:.6f}"])
    summary = out / "summary.csv"
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "mean_m", "std_m", "n"])
        for s in summarize(records):
            w.writerow([s.dataset, s.method, repr(s.mean), repr(s.std), s.n])
    return per_sample, summary


def reference_improvements(convention: str = "baseline") -> dict[str, float]:
    """Neural-over-SRP improvement for each published dataset, under ``convention``."""
    out = {}
    for dataset in ("ReverbSim4", "Recorded4", "ReverbSim6", "Recorded6"):
        neural = "NeuralSRP" if dataset.startswith("Reverb") else "NeuralSRP+"
        out[dataset] = relative_improvement(REFERENCE_TABLE[(dataset, "SRP")][0],
                                            REFERENCE_TABLE[(dataset, neural)][0], convention)
    return out


def mean_error(records, method: str) -> float:
    errors = [r.error for r in records if r.method == method]
    return math.fsum(errors) / len(errors) if errors else math.nan
