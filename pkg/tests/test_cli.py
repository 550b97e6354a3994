"""
Tests for the dpaseg command line
"""

import re

import pytest
from click.testing import CliRunner

from dpaseg import __version__
from dpaseg.cli import cli, main

TINY = ["--resolution", "16", "--len", "4"]


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    assert main(["gen-data", "--out", str(root), "--seed", "3", "--n-videos", "2", *TINY]) == 0
    return root


class TestSampleFrames:

    def test_prints_indices(self, capsys):
        assert main(["sample-frames", "--len", "10", "--n", "4"]) == 0
        assert capsys.readouterr().out == "0 3 6 9\n"

    def test_logs_resolved_settings(self, capsys):
        assert main(["sample-frames", "--len", "10", "--n", "4"]) == 0
        captured = capsys.readouterr()
        assert captured.out == "0 3 6 9\n"
        assert "Resolved settings" in captured.err

    def test_single_reference(self, capsys):
        assert main(["sample-frames", "--len", "7", "--n", "1"]) == 0
        assert capsys.readouterr().out == "0\n"

    def test_too_many_references(self, capsys):
        assert main(["sample-frames", "--len", "3", "--n", "4"]) == 1
        assert "Error" in capsys.readouterr().err

    def test_with_click_runner(self):
        result = CliRunner().invoke(cli, ["sample-frames", "--len", "5", "--n", "5"])
        assert result.exit_code == 0
        assert "0 1 2 3 4" in result.output


class TestExitCodes:

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert __version__ in capsys.readouterr().out

    def test_unknown_flag(self):
        assert main(["sample-frames", "--len", "4", "--n", "2", "--frobnicate"]) == 1

    def test_unknown_command(self):
        assert main(["segment-everything"]) == 1

    def test_invalid_resolution(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--resolution", "24"]) == 1

    def test_missing_required_path(self):
        assert main(["train"]) == 1

    def test_missing_manifest(self, tmp_path):
        assert main(["eval", "--pred", str(tmp_path), "--gt", str(tmp_path)]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(tmp_path / "absent.cfg")]) == 2

    def test_unknown_profile(self, dataset, tmp_path):
        code = main(["train", "--data", str(dataset), "--checkpoint", str(tmp_path / "m.dpat"), "--profile", "XIV"])
        assert code == 1


class TestGenData:

    def test_generation_is_reproducible(self, dataset, tmp_path):
        again = tmp_path / "again"
        assert main(["gen-data", "--out", str(again), "--seed", "3", "--n-videos", "2", "--jobs", "2", *TINY]) == 0
        assert tree_bytes(dataset) == tree_bytes(again)

    def test_manifest(self, dataset):
        assert (dataset / "manifest.txt").read_text() == "vid_0000 4 16 16\nvid_0001 4 16 16\n"


class TestConfigFile:

    def test_flags_beat_file_and_file_beats_defaults(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("seed = 5\nn-videos = 1\nresolution = 16\nlength = 4\n")
        from_file = tmp_path / "from_file"
        assert main(["gen-data", "--out", str(from_file), "--config", str(config), "--seed", "9"]) == 0
        direct = tmp_path / "direct"
        assert main(["gen-data", "--out", str(direct), "--seed", "9", "--n-videos", "1", *TINY]) == 0
        assert tree_bytes(from_file) == tree_bytes(direct)

    def test_unknown_key(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("depth = 3\n")
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(config)]) == 1

    def test_bad_number(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("seed = many\n")
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(config)]) == 1


class TestPipeline:

    def test_eval_identical_trees(self, dataset, capsys, tmp_path):
        assert main(["eval", "--pred", str(dataset), "--gt", str(dataset), "--out", str(tmp_path / "report")]) == 0
        assert capsys.readouterr().out.strip() == "J_M=1.000 F_M=1.000 G_M=1.000"
        assert (tmp_path / "report" / "metrics.csv").exists()

    def test_train_infer_eval(self, dataset, capsys, tmp_path):
        checkpoint = tmp_path / "model.dpat"
        args = ["train", "--data", str(dataset), "--checkpoint", str(checkpoint), "--out", str(tmp_path / "curves"),
                "--steps", "2", "--batch-size", "1", "--resolution", "16", "--widths", "2,3,4,5,6"]
        assert main(args) == 0
        assert re.search(r"final_loss=\d+\.\d{6}", capsys.readouterr().out)
        assert checkpoint.exists() and (tmp_path / "model.dpat.json").exists()
        assert (tmp_path / "curves" / "loss_curve.csv").read_text().startswith("step,lr,loss")

        pred = tmp_path / "pred"
        assert main(["infer", "--data", str(dataset), "--checkpoint", str(checkpoint), "--out", str(pred),
                     "--n-refs", "2", "--bank-cache", str(tmp_path / "banks")]) == 0
        assert (pred / "manifest.txt").read_text() == (dataset / "manifest.txt").read_text()
        assert len(list((tmp_path / "banks").iterdir())) == 2

        capsys.readouterr()
        assert main(["eval", "--pred", str(pred), "--gt", str(dataset)]) == 0
        assert re.fullmatch(r"J_M=\d\.\d{3} F_M=\d\.\d{3} G_M=\d\.\d{3}", capsys.readouterr().out.strip())

    def test_eval_needs_every_video(self, dataset, tmp_path):
        partial = tmp_path / "partial"
        partial.mkdir()
        (partial / "manifest.txt").write_text("")
        assert main(["eval", "--pred", str(partial), "--gt", str(dataset)]) == 1

    def test_eval_warns_about_unmatched_predictions(self, dataset, capsys, tmp_path):
        single = tmp_path / "single"
        assert main(["gen-data", "--out", str(single), "--seed", "3", "--n-videos", "1", *TINY]) == 0
        capsys.readouterr()
        assert main(["eval", "--pred", str(dataset), "--gt", str(single)]) == 0
        captured = capsys.readouterr()
        assert "without ground truth" in captured.err
        assert "vid_0001" in captured.err
        assert captured.out.startswith("J_M=")

    def test_bench_grid(self, capsys, tmp_path):
        assert main(["bench", "--grid", "I,IV", "--resolution", "16", "--widths", "2,3,4,5,6",
                     "--repeats", "2", "--out", str(tmp_path / "bench")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("Cost analysis")
        assert "sec_per_frame" in out
        assert (tmp_path / "bench" / "bench.csv").exists()
