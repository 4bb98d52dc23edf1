import json

import numpy as np
import pytest
from PIL import Image

from panosynth.cli import main, parse_config_file, train_config_from_file


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("clidata") / "d"
    code = main(["gen-data", "--seed", "4", "--complexity", "1", "--locations", "2",
                 "--step", "30", "--size", "48x32", "--out", str(root)])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def tiny_checkpoint(tiny_dataset, tmp_path_factory):
    run = tmp_path_factory.mktemp("clirun")
    cfg = run / "train.cfg"
    cfg.write_text("\n".join([
        "# desk-scale smoke configuration",
        f"dataset = \"{tiny_dataset}\"",
        f"out_dir = \"{run / 'out'}\"",
        "iterations = 4",
        "batch = 2",
        "seed = 1",
        "tau_deg = 60.0",
        "channels = [8, 16, 32]",
        "dec_channels = 8",
        "latent = 32",
        "ckpt_every = 0",
    ]))
    assert main(["train", "--config", str(cfg)]) == 0
    return run / "out" / "checkpoint.s360"


class TestConfigFile:
    def test_round_trip_values(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("a = 1\nb = 2.5\nc = true\nd = [1, 2]\ne = \"s\"\nf = bare\n")
        cfg = parse_config_file(p)
        assert cfg == {"a": 1, "b": 2.5, "c": True, "d": [1, 2], "e": "s", "f": "bare"}

    def test_comments_and_blanks_skipped(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\n\nx = 3\n")
        assert parse_config_file(p) == {"x": 3}

    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("dataset = \"d\"\nbogus_key = 1\n")
        with pytest.raises(ValueError, match="bogus_key"):
            train_config_from_file(p)

    def test_missing_dataset_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("iterations = 5\n")
        with pytest.raises(ValueError, match="dataset"):
            train_config_from_file(p)

    def test_malformed_line_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("this is not a key value line\n")
        with pytest.raises(ValueError):
            parse_config_file(p)


class TestGenData:
    def test_lab_arithmetic(self, tmp_path):
        out = tmp_path / "lab"
        assert main(["gen-data", "--locations", "4", "--step", "5",
                     "--size", "32x24", "--out", str(out)]) == 0
        assert len(list(out.glob("loc*/yaw[0-9][0-9][0-9].png"))) == 288
        assert len(list(out.glob("loc*/yaw*_seg.png"))) == 288

    def test_manifest_written(self, tiny_dataset):
        manifest = json.loads((tiny_dataset / "manifest.json").read_text())
        assert manifest["step_deg"] == 30
        assert len(manifest["records"]) == 2 * 12


class TestRender:
    def test_render_writes_png(self, tiny_dataset, tiny_checkpoint, tmp_path):
        out = tmp_path / "v.png"
        code = main(["render", "--ckpt", str(tiny_checkpoint), "--dataset",
                     str(tiny_dataset), "--loc", "0", "--yaw", "90", "--out", str(out)])
        assert code == 0
        img = np.asarray(Image.open(out))
        assert img.shape == (32, 48, 3)

    def test_reference_yaw_rejected(self, tiny_dataset, tiny_checkpoint, tmp_path, capsys):
        code = main(["render", "--ckpt", str(tiny_checkpoint), "--dataset",
                     str(tiny_dataset), "--loc", "0", "--yaw", "120",
                     "--out", str(tmp_path / "x.png")])
        assert code != 0
        assert "outside" in capsys.readouterr().err

    def test_missing_checkpoint_errors(self, tiny_dataset, tmp_path, capsys):
        code = main(["render", "--ckpt", str(tmp_path / "no.s360"), "--dataset",
                     str(tiny_dataset), "--loc", "0", "--yaw", "90",
                     "--out", str(tmp_path / "x.png")])
        assert code != 0


class TestEvalAndSweep:
    def test_eval_writes_reports(self, tiny_dataset, tiny_checkpoint, tmp_path):
        out = tmp_path / "report"
        code = main(["eval", "--ckpt", str(tiny_checkpoint), "--dataset",
                     str(tiny_dataset), "--locations", "1", "--out", str(out)])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert len(report["rows"]) == 1 * 1 * 6  # 1 loc x (60/30-1) x (360/60)
        assert (tmp_path / "report.csv").exists()

    def test_sweep_table(self, tiny_dataset, tiny_checkpoint, tmp_path):
        out = tmp_path / "sweep.json"
        code = main(["sweep-tau", "--ckpt", str(tiny_checkpoint), "--dataset",
                     str(tiny_dataset), "--taus", "60,120", "--locations", "1",
                     "--out", str(out)])
        assert code == 0
        table = json.loads(out.read_text())
        assert [row["tau_deg"] for row in table] == [60.0, 120.0]


class TestArgErrors:
    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) != 0

    def test_unknown_flag(self):
        assert main(["gen-data", "--bogus", "1", "--out", "x"]) != 0

    def test_bad_size_format(self, tmp_path):
        assert main(["gen-data", "--size", "64by48", "--out", str(tmp_path / "x")]) != 0
