"""Command-line entry point: ``srp-locate <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .evaluate import METHODS, run_benchmark, summarize, write_tables
from .geometry import make_grid
from .neural.io import WeightFileError, load_weights, save_weights
from .neural.model import ModelWeights
from .roomsim import DatasetSample, generate_dataset, load_audio, read_manifest
from .srp import estimate_source, srp_global, srp_pairwise_maps, write_map
from .targets import gaussian_grid, hyperbolic_grid

log = logging.getLogger("srp_locate")

GRADCHECK_TOLERANCE = 1e-4


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _kv(**items) -> str:
    return " ".join(f"{k}={v}" for k, v in items.items())


def _resolve(args, overrides: dict | None = None) -> cfgmod.RunConfig:
    run = cfgmod.load(getattr(args, "config", None), getattr(args, "preset", None), overrides)
    top = {}
    if args.seed is not None:
        top["seed"] = args.seed
    top["threads"] = args.threads if args.threads is not None else (os.cpu_count() or 1)
    run = cfgmod.apply(run, top)
    log.info(_kv(event="config", seed=run.seed))
    for key, value in run.flat().items():
        log.info(_kv(config=key, value=json.dumps(value)))
    return run


def _scene(spec: str) -> tuple[Path, DatasetSample]:
    """``MANIFEST#ID`` or just ``MANIFEST`` (first entry)."""
    path_str, _, sample_id = spec.partition("#")
    path = Path(path_str)
    samples = read_manifest(path)
    if not samples:
        raise CliError("input", f"manifest {path} is empty")
    if not sample_id:
        return path, samples[0]
    for s in samples:
        if s.id == sample_id:
            return path, s
    raise CliError("input", f"sample {sample_id!r} not found in {path}")


def cmd_simulate(args) -> int:
    overrides = {}
    sim = {}
    for key in ("n_train", "n_val", "n_test"):
        if getattr(args, key) is not None:
            sim[key] = getattr(args, key)
    if args.mics is not None:
        sim["n_mics"] = args.mics
    if args.source_mode is not None:
        sim["source_mode"] = args.source_mode
    if args.corpus is not None:
        sim["corpus_dir"] = args.corpus
    if sim:
        overrides["sim"] = sim
    run = _resolve(args, overrides)
    manifest = generate_dataset(run.sim, args.out, run.seed, run.threads)
    log.info(_kv(event="simulated", manifest=manifest, samples=run.sim.n_train + run.sim.n_val + run.sim.n_test))
    print(manifest)
    return 0


def _srp_map(run, manifest, sample, mode=None):
    signals = load_audio(sample, manifest)
    grid = make_grid(sample.room, run.model.grid_side, run.z_plane)
    return srp_global(signals, sample.placement, grid, fs=sample.fs, mode=mode or run.srp_mode)


def _report(lmap, sample, method):
    est, cell = estimate_source(lmap)
    err = float(np.hypot(*(est - np.asarray(sample.source_position[:2]))))
    log.info(_kv(event="estimate", method=method, sample=sample.id, x=f"{est[0]:.4f}", y=f"{est[1]:.4f}",
                 row=cell[0], col=cell[1], error_m=f"{err:.4f}"))


def cmd_srp(args) -> int:
    run = _resolve(args, {"srp_mode": args.mode} if args.mode else None)
    manifest, sample = _scene(args.scene)
    lmap = _srp_map(run, manifest, sample)
    _report(lmap, sample, "srp")
    write_map(lmap.values, args.out_map)
    return 0


def cmd_train(args) -> int:
    from .neural.train import prepare_scenes, train_stage, transfer_learn

    overrides = {"train": {"max_epochs": args.epochs}} if args.epochs is not None else None
    run = _resolve(args, overrides)
    train_cfg = dataclasses.replace(run.train, seed=run.seed)
    samples_train = read_manifest(args.data, "train")
    samples_val = read_manifest(args.data, "val")
    if not samples_train or not samples_val:
        raise CliError("input", f"{args.data} needs both train and val samples")
    kw = dict(target=run.target, stft_config=run.stft, z_plane=run.z_plane, threads=run.threads)
    train = prepare_scenes(samples_train, args.data, run.model.grid_side, **kw)
    val = prepare_scenes(samples_val, args.data, run.model.grid_side, **kw)
    stage = "anechoic" if args.stage == "anechoic" else "reverberant"
    if args.init:
        init = load_weights(args.init, run.model)
    else:
        init = ModelWeights.init(run.model, run.seed)
    if stage == "reverberant" and args.init:
        weights, history = transfer_learn(init, train, val, train_cfg)
    else:
        weights, history = train_stage(init, train, val, train_cfg, stage)
    save_weights(weights, args.out)
    log.info(_kv(event="trained", stage=stage, epochs=len(history.val_loss), best_epoch=history.best_epoch,
                 initial_train_loss=f"{history.initial_train_loss:.6f}",
                 final_train_loss=f"{history.final_train_loss:.6f}",
                 best_val_loss=f"{history.best_val_loss:.6f}", out=args.out))
    if args.history:
        Path(args.history).write_text(json.dumps(dataclasses.asdict(history), indent=2))
    return 0


def cmd_infer(args) -> int:
    from .neural.train import forward_scene

    run = _resolve(args)
    weights = load_weights(args.weights)
    manifest, sample = _scene(args.scene)
    signals = load_audio(sample, manifest)
    lmap = forward_scene(weights, signals, sample.placement, sample.room, stft_config=run.stft, z_plane=run.z_plane)
    _report(lmap, sample, "neural")
    write_map(lmap.values, args.out_map)
    return 0


def cmd_evaluate(args) -> int:
    run = _resolve(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    weights = load_weights(args.weights) if args.weights else None
    if "neural" in methods and weights is None:
        raise CliError("input", "--weights is required for the neural method")
    records = run_benchmark(args.data, methods, weights, split=args.split, z_plane=run.z_plane,
                            srp_mode=run.srp_mode, threads=run.threads)
    per_sample, summary = write_tables(records, args.out)
    for s in summarize(records):
        log.info(_kv(event="summary", dataset=s.dataset, method=s.method, mean_m=f"{s.mean:.4f}",
                     std_m=f"{s.std:.4f}", n=s.n))
    print(summary)
    return 0


def cmd_export_map(args) -> int:
    run = _resolve(args)
    manifest, sample = _scene(args.scene)
    grid = make_grid(sample.room, run.model.grid_side, run.z_plane)
    i, j = args.pair
    mics = sample.placement.mics
    if max(i, j) >= len(mics) or i == j:
        raise CliError("input", f"pair {i},{j} invalid for {len(mics)} microphones")
    if args.kind == "srp":
        values = _srp_map(run, manifest, sample).values
    elif args.kind == "neural":
        from .neural.train import forward_scene

        if not args.weights:
            raise CliError("input", "--weights is required for neural maps")
        values = forward_scene(load_weights(args.weights), load_audio(sample, manifest), sample.placement,
                               sample.room, stft_config=run.stft, z_plane=run.z_plane).values
    elif args.kind == "srp-pair":
        maps = srp_pairwise_maps(load_audio(sample, manifest), sample.placement, grid, fs=sample.fs,
                                 mode=run.srp_mode)
        values = maps[_pair_index(i, j, len(mics))].values
    elif args.kind == "gaussian":
        values = gaussian_grid(sample.source_position, grid, run.target.sigma_gaussian).values
    else:
        values = hyperbolic_grid(sample.source_position, mics[i], mics[j], grid, run.target.sigma_hyperbolic).values
    write_map(values, args.out_map)
    return 0


def _pair_index(i: int, j: int, m: int) -> int:
    if i > j:
        i, j = j, i
    return i * m - i * (i + 1) // 2 + (j - i - 1)


def cmd_gradcheck(args) -> int:
    from .neural.gradcheck import gradient_check

    run = _resolve(args)
    errors = gradient_check(seed=run.seed)
    worst = max(errors.values())
    for name, err in errors.items():
        log.info(_kv(param=name, max_rel_error=f"{err:.3e}"))
    passed = worst < GRADCHECK_TOLERANCE
    print(_kv(max_rel_error=f"{worst:.3e}", tolerance=GRADCHECK_TOLERANCE, passed=str(passed).lower()))
    if not passed:
        raise CliError("numeric", f"gradient check failed: max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE}")
    return 0


def _pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected I,J got {text!r}") from exc
    return i, j


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="named configuration preset")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="srp-locate", description="SRP-PHAT and Neural-SRP source localization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize a dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--mics", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-val", dest="n_val", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--source-mode", choices=["synthetic", "wav-corpus"])
    p.add_argument("--corpus", help="speech WAV directory (default $SRP_LOCATE_DATA)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("srp", parents=[common], help="classical SRP-PHAT map for one scene")
    p.add_argument("--scene", required=True, help="MANIFEST[#SAMPLE_ID]")
    p.add_argument("--out-map", required=True, help=".csv or .pgm")
    p.add_argument("--mode", choices=["cell", "point"])
    p.set_defaults(func=cmd_srp)

    p = sub.add_parser("train", parents=[common], help="train one stage of Neural-SRP")
    p.add_argument("--stage", choices=["anechoic", "reverb"], required=True)
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--init", help="weights to start from")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--history", help="write the training history as JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="Neural-SRP map for one scene")
    p.add_argument("--weights", required=True)
    p.add_argument("--scene", required=True, help="MANIFEST[#SAMPLE_ID]")
    p.add_argument("--out-map", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="benchmark methods on a manifest split")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="srp", help=f"comma list of {','.join(METHODS)}")
    p.add_argument("--weights")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-map", parents=[common], help="export SRP, neural or target maps")
    p.add_argument("--scene", required=True)
    p.add_argument("--kind", choices=["srp", "srp-pair", "neural", "gaussian", "hyperbolic"], default="srp")
    p.add_argument("--pair", type=_pair, default=(0, 1), help="microphone pair I,J for pair maps")
    p.add_argument("--weights")
    p.add_argument("--out-map", required=True)
    p.set_defaults(func=cmd_export_map)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of backprop")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, cfgmod.ConfigError):
        return "config"
    if isinstance(exc, WeightFileError):
        return "weights"
    if isinstance(exc, FloatingPointError):
        return "numeric"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return "input"
    return "runtime"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - one machine-parsable line per failure
        message = " ".join(str(exc).split())
        print(f"error category={_category(exc)} message={json.dumps(message)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
