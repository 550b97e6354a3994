"""
Tests for model profiles, the ablation runner and the cost benchmark
"""

import numpy as np
import pytest

from conftest import TINY_WIDTHS
from dpaseg.config.profiles import DEFAULT_PROFILE, get_ablation_profiles, get_profile
from dpaseg.core.network import DpaModel
from dpaseg.core.training import TrainConfig
from dpaseg.errors import ArgumentError
from dpaseg.utils.experiments import ABLATION_COLUMNS, ablate, bench, bench_table
from dpaseg.utils.synthetic import gen_synthetic


def row_params(name, **kwargs):
    return DpaModel(get_profile(name).create_model_config(**kwargs)).parameter_count()


class TestProfiles:

    def test_grid_has_eleven_rows(self):
        profiles = get_ablation_profiles()
        assert list(profiles) == ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI"]
        assert DEFAULT_PROFILE == "IV"

    def test_lookup_is_case_insensitive(self):
        assert get_profile("iv").name == "IV"
        assert get_profile("Ix").ima_prototypes is False

    def test_unknown_profile(self):
        with pytest.raises(ArgumentError, match="XII"):
            get_profile("XII")

    def test_reference_sweep(self):
        profiles = get_ablation_profiles()
        assert [profiles[r].n_refs for r in ("V", "VI", "VII", "IV", "VIII")] == [1, 2, 3, 4, 5]

    def test_labels(self):
        assert get_profile("I").ifa_label == "off"
        assert get_profile("X").ifa_label == "w/o P"
        assert get_profile("IV").ima_label == "w/ P"

    def test_config_follows_row(self):
        config = get_profile("XI").create_model_config(resolution=32, widths=TINY_WIDTHS, seed=4)
        assert (config.use_ima, config.use_ifa) == (True, True)
        assert (config.ima_prototypes, config.ifa_prototypes) == (False, False)
        assert config.seed == 4

    def test_parameter_counts_follow_components(self):
        counts = {row: row_params(row) for row in ("I", "II", "III", "IV")}
        assert counts["I"] < counts["II"]
        assert counts["I"] < counts["III"] < counts["IV"]

    def test_prototype_bypass_keeps_parameter_count(self):
        kwargs = dict(resolution=32, widths=TINY_WIDTHS)
        assert row_params("IV", **kwargs) == row_params("XI", **kwargs)


class TestBench:

    def test_record(self, tiny_config):
        result = bench(DpaModel(tiny_config), repeats=5, warmup=1, name="IV")
        assert len(result.frame_seconds) == len(result.bank_seconds) == 5
        assert np.isfinite(result.cv) and result.cv >= 0.0
        assert result.fps > 0
        record = result.record()
        for key in ("model", "params", "params_encoder", "sec_per_frame", "sec_per_frame_with_bank", "fps", "cv"):
            assert key in record
        assert record["params"] == sum(v for k, v in record.items() if k.startswith("params_"))

    def test_counts_are_stable_across_runs(self, tiny_config):
        first = bench(DpaModel(tiny_config), repeats=2)
        second = bench(DpaModel(tiny_config), repeats=2)
        assert first.params == second.params
        assert first.breakdown == second.breakdown

    def test_table(self, tiny_config):
        results = [bench(DpaModel(tiny_config), repeats=2, name=n) for n in ("a", "b")]
        table = bench_table(results)
        assert list(table.frame["model"]) == ["a", "b"]
        assert table.title == "Cost analysis"

    def test_repeats_must_be_positive(self, tiny_config):
        with pytest.raises(ArgumentError):
            bench(DpaModel(tiny_config), repeats=0)


class TestAblate:

    def test_tiny_grid(self, tiny_dataset, tmp_path):
        result = ablate(
            tiny_dataset, tiny_dataset[:1], rows=["I", "iv"], seeds=(0, 1), resolution=16,
            widths=TINY_WIDTHS, train_config=TrainConfig(batch_size=1, steps=1),
        )
        cells = result.by_row()
        assert list(cells) == ["I", "IV"]
        assert all(len(cell.reports) == 2 for cell in cells.values())
        assert cells["I"].params < cells["IV"].params
        for cell in cells.values():
            assert 0.0 <= cell.j <= 1.0 and 0.0 <= cell.f <= 1.0
            assert cell.g == pytest.approx((cell.j + cell.f) / 2)

        table = result.to_table()
        assert list(table.frame.columns) == ABLATION_COLUMNS
        assert table.frame["N"].tolist() == ["-", 4]
        csv_path, txt_path = table.write(tmp_path, "ablation")
        assert csv_path.read_text().splitlines()[0] == ",".join(ABLATION_COLUMNS)
        assert txt_path.read_text().startswith("Component ablation")

    def test_short_test_videos_cap_the_reference_count(self, tiny_dataset):
        short = gen_synthetic(seed=5, n_videos=1, length=4, height=16, width=16)
        result = ablate(tiny_dataset, short, rows=["VIII"], seeds=(0,), resolution=16,
                        widths=TINY_WIDTHS, train_config=TrainConfig(batch_size=1, steps=1))
        assert len(result.cells) == 1

    def test_parallel_cells_match_serial(self, tiny_dataset):
        kwargs = dict(rows=["I", "III"], seeds=(0,), resolution=16, widths=TINY_WIDTHS,
                      train_config=TrainConfig(batch_size=1, steps=1))
        serial = ablate(tiny_dataset, tiny_dataset[:1], **kwargs)
        parallel = ablate(tiny_dataset, tiny_dataset[:1], jobs=2, **kwargs)
        for a, b in zip(serial.cells, parallel.cells):
            assert (a.j, a.f) == (b.j, b.f)

    @pytest.mark.parametrize(
        "kwargs",
        [{"rows": ["XIII"]}, {"seeds": ()}],
    )
    def test_invalid_requests(self, tiny_dataset, kwargs):
        with pytest.raises(ArgumentError):
            ablate(tiny_dataset, tiny_dataset, resolution=16, widths=TINY_WIDTHS, **kwargs)

    def test_empty_sets(self, tiny_dataset):
        with pytest.raises(ArgumentError):
            ablate([], tiny_dataset, resolution=16, widths=TINY_WIDTHS)

    @pytest.mark.slow
    def test_each_attention_block_beats_the_baseline(self):
        train_set = gen_synthetic(seed=0, n_videos=50, length=16, height=64, width=64, difficulty=0.5)
        test_set = gen_synthetic(seed=1, n_videos=10, length=16, height=64, width=64, difficulty=0.5)
        result = ablate(
            train_set, test_set, rows=["I", "II", "III", "IV"], seeds=(0, 1, 2), resolution=64,
            widths=(8, 16, 24, 32, 48), train_config=TrainConfig(batch_size=2, steps=200), jobs=4,
        )
        cells = result.by_row()
        assert cells["II"].g > cells["I"].g
        assert cells["III"].g > cells["I"].g
        assert cells["IV"].g > cells["I"].g
