import json

import numpy as np
import pytest

from srp_locate import cli
from srp_locate.config import ConfigError, PRESETS, load
from srp_locate.roomsim import read_manifest
from srp_locate.srp import read_map_csv


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    code = cli.main(["simulate", "--out", str(out), "--n-train", "2", "--n-val", "1", "--n-test", "1",
                     "--mics", "3", "--seed", "4", "--threads", "1", "-q"])
    assert code == 0
    return out / "manifest.jsonl"


def test_presets():
    cfg = load(preset="reverb-desk")
    assert (cfg.sim.n_train, cfg.sim.n_val, cfg.sim.n_test) == (200, 50, 50)
    assert cfg.sim.reverberant and cfg.train.max_epochs == 20
    full = load(preset="anechoic-paper")
    assert (full.sim.n_train, full.sim.n_val, full.sim.n_test) == (10000, 2500, 2500)
    assert not full.sim.reverberant
    assert set(PRESETS) == {"anechoic-desk", "reverb-desk", "anechoic-paper", "reverb-paper"}


def test_defaults():
    cfg = load()
    assert cfg.train.lr == 5e-4 and cfg.train.batch_size == 16 and cfg.train.patience == 3
    assert cfg.model.grid_side == 25 and cfg.model.mlp_width == 625


def test_config_file_and_unknown_keys(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"seed": 9, "train": {"lr": 1e-3}}))
    cfg = load(good)
    assert cfg.seed == 9 and cfg.train.lr == 1e-3 and cfg.train.batch_size == 16
    for bad in ({"bogus": 1}, {"train": {"learning_rate": 1}}):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError, match="unknown"):
            load(path)
    path = tmp_path / "broken.json"
    path.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load(path)


def test_simulate_preset_plumbing(tmp_path, capsys, monkeypatch):
    seen = {}

    def fake(config, out_dir, master_seed, threads):
        seen.update(config=config, seed=master_seed, threads=threads)
        return tmp_path / "manifest.jsonl"

    monkeypatch.setattr(cli, "generate_dataset", fake)
    code, out, err = run(["simulate", "--preset", "reverb-desk", "--out", str(tmp_path), "--seed", "3"], capsys)
    assert code == 0
    assert (seen["config"].n_train, seen["config"].n_val, seen["config"].n_test) == (200, 50, 50)
    assert seen["config"].reverberant and seen["seed"] == 3
    assert "config=sim.n_train value=200" in err
    assert "event=config seed=3" in err


def test_simulate_writes_manifest(dataset):
    samples = read_manifest(dataset)
    assert len(samples) == 4 and len(samples[0].mic_positions) == 3


def test_srp_map_csv_and_pgm(dataset, tmp_path, capsys):
    code, _, err = run(["srp", "--scene", f"{dataset}#test-00000", "--out-map", str(tmp_path / "m.csv")], capsys)
    assert code == 0
    assert read_map_csv(tmp_path / "m.csv").shape == (25, 25)
    assert "event=estimate method=srp sample=test-00000" in err
    code, _, _ = run(["srp", "--scene", str(dataset), "--out-map", str(tmp_path / "m.pgm"), "--mode", "point"], capsys)
    assert code == 0 and (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n25 25\n255\n")


def test_export_maps(dataset, tmp_path, capsys):
    for kind in ("srp-pair", "gaussian", "hyperbolic"):
        code, _, _ = run(["export-map", "--scene", str(dataset), "--kind", kind, "--pair", "0,2",
                          "--out-map", str(tmp_path / f"{kind}.csv"), "-q"], capsys)
        assert code == 0
        values = read_map_csv(tmp_path / f"{kind}.csv")
        assert values.shape == (25, 25)
    assert read_map_csv(tmp_path / "hyperbolic.csv").max() <= 1.0
    code, _, err = run(["export-map", "--scene", str(dataset), "--kind", "srp-pair", "--pair", "0,5",
                        "--out-map", str(tmp_path / "x.csv"), "-q"], capsys)
    assert code == 1 and "category=input" in err


def test_train_infer_evaluate(dataset, tmp_path, capsys):
    w = tmp_path / "w.bin"
    code, _, err = run(["train", "--stage", "anechoic", "--data", str(dataset), "--out", str(w), "--epochs", "1",
                        "--history", str(tmp_path / "h.json"), "--threads", "1"], capsys)
    assert code == 0, err
    assert json.loads((tmp_path / "h.json").read_text())["stage"] == "anechoic"
    w2 = tmp_path / "w2.bin"
    code, _, err = run(["train", "--stage", "reverb", "--data", str(dataset), "--init", str(w), "--out", str(w2),
                        "--epochs", "1", "-q"], capsys)
    assert code == 0, err
    code, _, err = run(["infer", "--weights", str(w2), "--scene", f"{dataset}#test-00000",
                        "--out-map", str(tmp_path / "n.csv")], capsys)
    assert code == 0, err
    assert np.all(np.isfinite(read_map_csv(tmp_path / "n.csv")))
    code, out, err = run(["evaluate", "--data", str(dataset), "--methods", "srp,neural", "--weights", str(w2),
                          "--out", str(tmp_path / "eval"), "-q"], capsys)
    assert code == 0, err
    assert (tmp_path / "eval" / "summary.csv").exists()


def test_gradcheck(capsys):
    code, out, _ = run(["gradcheck", "-q"], capsys)
    assert code == 0
    fields = dict(item.split("=") for item in out.split())
    assert float(fields["max_rel_error"]) < 1e-4
    assert fields["passed"] == "true" and float(fields["tolerance"]) == 1e-4


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["srp", "--scene", "x", "--out-map", "y", "--bogus"])
    assert exc.value.code == 2


def test_error_line_format(tmp_path, capsys):
    code, _, err = run(["srp", "--scene", str(tmp_path / "missing.jsonl"), "--out-map", str(tmp_path / "m.csv")],
                       capsys)
    assert code == 1
    last = err.strip().splitlines()[-1]
    assert last.startswith("error category=io message=")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    code, _, err = run(["gradcheck", "--config", str(bad)], capsys)
    assert code == 1 and err.strip().splitlines()[-1].startswith("error category=config")


def test_weight_errors_categorized(dataset, tmp_path, capsys):
    bad = tmp_path / "w.bin"
    bad.write_bytes(b"garbage")
    code, _, err = run(["infer", "--weights", str(bad), "--scene", str(dataset), "--out-map", str(tmp_path / "m.csv")],
                       capsys)
    assert code == 1 and "category=weights" in err
