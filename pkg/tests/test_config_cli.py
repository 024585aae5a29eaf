import json

import numpy as np
import pytest

from cigl.cli import main
from cigl.config import ConfigError, format_config, parse_config_text, resolve_config
from cigl.checkpoint import load_checkpoint


TINY_CONFIG = """
run.id = demo
train.method = cigl
train.epochs = 4
train.batch_size = 32
train.seed = 7
train.hidden = 8, 8
train.sparsity = 0.8
train.update_interval = 3
train.wma_start_epoch = 2
train.lr_milestones = 3
data.n = 240
data.noise_sd = 0.25
data.label_noise = 0.1
"""


class TestConfigParsing:
    def test_defaults_and_overrides(self):
        cfg = parse_config_text(TINY_CONFIG)
        assert cfg.train.epochs == 4
        assert cfg.train.hidden == (8, 8)
        assert cfg.train.momentum == 0.9  # default untouched
        assert cfg.data.source == "two_moons"

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(ConfigError, match="unknown key 'train.epoch'"):
            parse_config_text("train.epoch = 5")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("train.epochs = 5\ntrain.epochs = 6")

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="train.epochs"):
            parse_config_text("train.epochs = five")

    def test_missing_csv_path_names_field(self):
        cfg = parse_config_text("data.source = csv")
        with pytest.raises(ConfigError, match="data.csv_path"):
            resolve_config(cfg)

    def test_resolved_config_roundtrips(self):
        resolved = resolve_config(parse_config_text(TINY_CONFIG))
        text = format_config(resolved)
        again = resolve_config(parse_config_text(text))
        assert again == resolved
        assert format_config(again) == text

    def test_resolve_materializes_wma_start(self):
        cfg = resolve_config(parse_config_text("train.epochs = 50"))
        assert cfg.train.wma_start_epoch == 40
        assert "train.wma_start_epoch = 40" in format_config(cfg)

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config_text("# comment\n\ntrain.epochs = 3\n")
        assert cfg.train.epochs == 3


@pytest.fixture()
def tiny_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY_CONFIG)
    return path


class TestRunCommand:
    def test_run_writes_all_artifacts(self, tiny_config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", str(tiny_config_file), "--out", str(out)]) == 0
        run_dir = out / "demo"
        for name in ("model.ckpt", "metrics.jsonl", "calibration.csv", "report.json",
                     "config.resolved"):
            assert (run_dir / name).exists()
        lines = (run_dir / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 4  # one record per epoch
        record = json.loads(lines[-1])
        assert record["epoch"] == 4
        assert record["n_models_in_wma"] == 2

    def test_existing_run_requires_force(self, tiny_config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", str(tiny_config_file), "--out", str(out)]) == 0
        assert main(["run", "--config", str(tiny_config_file), "--out", str(out)]) == 2
        assert "force" in capsys.readouterr().err
        assert main(["run", "--config", str(tiny_config_file), "--out", str(out), "--force"]) == 0

    def test_rerun_is_byte_identical(self, tiny_config_file, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(tiny_config_file), "--out", str(out_a)])
        main(["run", "--config", str(tiny_config_file), "--out", str(out_b)])
        assert (out_a / "demo" / "model.ckpt").read_bytes() == \
            (out_b / "demo" / "model.ckpt").read_bytes()

    def test_rerun_from_resolved_config_reproduces_checkpoint(self, tiny_config_file, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config_file), "--out", str(out)])
        resolved = out / "demo" / "config.resolved"
        out2 = tmp_path / "out2"
        assert main(["run", "--config", str(resolved), "--out", str(out2)]) == 0
        assert (out / "demo" / "model.ckpt").read_bytes() == \
            (out2 / "demo" / "model.ckpt").read_bytes()

    def test_seed_override_changes_model(self, tiny_config_file, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(tiny_config_file), "--out", str(out_a)])
        main(["run", "--config", str(tiny_config_file), "--out", str(out_b), "--seed", "99"])
        assert (out_a / "demo" / "model.ckpt").read_bytes() != \
            (out_b / "demo" / "model.ckpt").read_bytes()

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("data.source = csv\n")
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "data.csv_path" in capsys.readouterr().err


class TestSweepCommand:
    def test_grid_rows_sorted_and_complete(self, tiny_config_file, tmp_path):
        out = tmp_path / "out"
        rc = main(["sweep", "--config", str(tiny_config_file), "--out", str(out),
                   "--sparsities", "0.8,0.5", "--seeds", "2,1"])
        assert rc == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "sparsity,test_accuracy,ece,nll,seed"
        cells = [line.split(",") for line in lines[1:]]
        assert len(cells) == 4
        assert [(c[0], c[4]) for c in cells] == [("0.5", "1"), ("0.5", "2"), ("0.8", "1"), ("0.8", "2")]

    def test_single_cell_matches_plain_run(self, tiny_config_file, tmp_path):
        out = tmp_path / "out"
        main(["sweep", "--config", str(tiny_config_file), "--out", str(out),
              "--sparsities", "0.8", "--seeds", "7"])
        row = (out / "sweep.csv").read_text().splitlines()[1].split(",")
        main(["run", "--config", str(tiny_config_file), "--out", str(tmp_path / "single")])
        report = json.loads((tmp_path / "single" / "demo" / "report.json").read_text())
        assert float(row[1]) == report["accuracy"]
        assert float(row[2]) == report["ece"]
        assert float(row[3]) == report["nll"]
        last = json.loads((tmp_path / "single" / "demo" / "metrics.jsonl")
                          .read_text().splitlines()[-1])
        assert report["accuracy"] == last["test_accuracy"]
        assert report["ece"] == last["test_ece"]


class TestCorrelateCommand:
    def test_full_keep_probability_has_zero_drop(self, tiny_config_file, tmp_path, capsys):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config_file), "--out", str(out)])
        capsys.readouterr()
        rc = main(["correlate", "--config", str(tiny_config_file),
                   "--ckpt", str(out / "demo" / "model.ckpt"), "--keep-prob", "1.0"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["accuracy_drop"] == 0.0
        assert report["n_draws"] == 5  # default number of draws

    def test_partial_keep_reports_drop(self, tiny_config_file, tmp_path, capsys):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config_file), "--out", str(out)])
        capsys.readouterr()
        rc = main(["correlate", "--config", str(tiny_config_file),
                   "--ckpt", str(out / "demo" / "model.ckpt"),
                   "--keep-prob", "0.6", "--draws", "3"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_draws"] == 3
        assert report["base_accuracy"] >= report["mean_masked_accuracy"] - 1.0


class TestExportReliability:
    def test_csv_shape_and_ece_reconstruction(self, tiny_config_file, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(tiny_config_file), "--out", str(out)])
        target = tmp_path / "rel.csv"
        rc = main(["export-reliability", "--config", str(tiny_config_file),
                   "--ckpt", str(out / "demo" / "model.ckpt"),
                   "--out-file", str(target)])
        assert rc == 0
        lines = target.read_text().splitlines()
        assert len(lines) == 16  # header + 15 bins
        empty = [ln for ln in lines[1:] if ln.split(",")[2] == "0"]
        for ln in empty:
            cells = ln.split(",")
            assert cells[3] == "" and cells[4] == ""
        report = json.loads((out / "demo" / "report.json").read_text())
        total = sum(int(ln.split(",")[2]) for ln in lines[1:])
        recomputed = 0.0
        for ln in lines[1:]:
            cells = ln.split(",")
            if cells[2] != "0":
                recomputed += int(cells[2]) / total * abs(float(cells[4]) - float(cells[3]))
        assert recomputed == pytest.approx(report["ece"], abs=1e-9)


def test_checkpoint_stores_weight_bias_pairs(tiny_config_file, tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", str(tiny_config_file), "--out", str(out)])
    ckpt = load_checkpoint(out / "demo" / "model.ckpt")
    # 3 layers for hidden (8, 8): weight/bias records interleaved
    assert [t.ndim for t in ckpt.tensors] == [2, 1, 2, 1, 2, 1]
    assert all(np.all(m) for m in ckpt.masks[1::2])  # bias masks all ones
    ws = ckpt.tensors[0::2]
    ms = ckpt.masks[0::2]
    for w, m in zip(ws, ms):
        assert not w[~m].any()
