"""
Tests for the NetPBM dataset layout and snippet sampling
"""

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy import stats

from dpaseg.errors import ArgumentError, DatasetIOError, DatasetValidationError
from dpaseg.utils.dataset_io import (
    MANIFEST,
    VideoSample,
    load_dataset,
    load_mask_tree,
    read_manifest,
    sample_from_sources,
    sample_snippet,
    save_dataset,
    save_mask_tree,
)


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def video_of_length(length, vid="v"):
    frames = np.zeros((length, 3, 16, 16))
    frames[:, 0] = np.arange(length)[:, None, None] / 255.0
    return VideoSample(vid, frames, frames.copy(), np.zeros((length, 16, 16), dtype=np.uint8))


class TestDatasetStore:

    def test_round_trip_is_exact(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path / "data")
        loaded = load_dataset(tmp_path / "data")
        assert [v.id for v in loaded] == [v.id for v in tiny_dataset]
        for original, copy in zip(tiny_dataset, loaded):
            assert_array_equal(copy.frames, original.frames)
            assert_array_equal(copy.flows, original.flows)
            assert_array_equal(copy.masks, original.masks)
            assert copy.displacements is None

    def test_rewrite_is_byte_identical(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path / "a")
        save_dataset(load_dataset(tmp_path / "a", jobs=2), tmp_path / "b")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_layout(self, tiny_dataset, tmp_path):
        root = save_dataset(tiny_dataset[:1], tmp_path / "data")
        assert (root / MANIFEST).read_text() == "vid_0000 6 16 16\n"
        names = sorted(p.name for p in (root / "vid_0000").iterdir())
        assert names[:2] == ["flow_0000.ppm", "flow_0001.ppm"]
        assert "frame_0005.ppm" in names and "mask_0005.pgm" in names
        assert (root / "vid_0000" / "frame_0000.ppm").read_bytes()[:2] == b"P6"
        assert (root / "vid_0000" / "mask_0000.pgm").read_bytes()[:2] == b"P5"

    def test_missing_frame(self, tiny_dataset, tmp_path):
        root = save_dataset(tiny_dataset[:1], tmp_path / "data")
        (root / "vid_0000" / "frame_0003.ppm").unlink()
        with pytest.raises(DatasetValidationError, match="frame_0003"):
            load_dataset(root)

    def test_corrupt_image(self, tiny_dataset, tmp_path):
        root = save_dataset(tiny_dataset[:1], tmp_path / "data")
        (root / "vid_0000" / "flow_0001.ppm").write_bytes(b"not an image at all")
        with pytest.raises(DatasetIOError):
            load_dataset(root)

    def test_frame_size_disagrees_with_manifest(self, tiny_dataset, tmp_path):
        root = save_dataset(tiny_dataset[:1], tmp_path / "data")
        (root / MANIFEST).write_text("vid_0000 6 32 32\n")
        with pytest.raises(DatasetValidationError):
            load_dataset(root)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetIOError, match="manifest"):
            load_dataset(tmp_path)

    @pytest.mark.parametrize("line", ["vid 4 16", "vid four 16 16", "vid 0 16 16"])
    def test_malformed_manifest(self, tmp_path, line):
        (tmp_path / MANIFEST).write_text(line + "\n")
        with pytest.raises(DatasetValidationError):
            read_manifest(tmp_path)

    def test_blank_manifest_lines_are_skipped(self, tmp_path):
        (tmp_path / MANIFEST).write_text("a 4 16 16\n\nb 5 16 32\n")
        assert read_manifest(tmp_path) == [("a", 4, 16, 16), ("b", 5, 16, 32)]

    def test_invalid_sample_is_not_written(self, tmp_path):
        bad = VideoSample("bad", np.zeros((2, 3, 16, 16)), np.zeros((2, 3, 16, 16)), np.full((2, 16, 16), 2, np.uint8))
        with pytest.raises(DatasetValidationError):
            save_dataset([bad], tmp_path / "data")
        assert not (tmp_path / "data" / MANIFEST).exists()


class TestMaskTree:

    def test_round_trip(self, tiny_dataset, tmp_path):
        masks = {v.id: v.masks for v in tiny_dataset}
        save_mask_tree(masks, tmp_path / "pred")
        loaded = load_mask_tree(tmp_path / "pred")
        assert list(loaded) == sorted(masks)
        for vid in masks:
            assert_array_equal(loaded[vid], masks[vid])
        assert not list((tmp_path / "pred").rglob("*.ppm"))

    def test_non_binary_mask_file(self, tmp_path):
        from PIL import Image

        save_mask_tree({"v": np.zeros((1, 16, 16), dtype=np.uint8)}, tmp_path)
        Image.fromarray(np.full((16, 16), 7, dtype=np.uint8)).save(tmp_path / "v" / "mask_0000.pgm", format="PPM")
        with pytest.raises(DatasetValidationError, match="0 or 255"):
            load_mask_tree(tmp_path)


class TestSnippets:

    def test_shortest_video_always_starts_at_zero(self, rng):
        video = video_of_length(4)
        for _ in range(50):
            assert sample_snippet([video], rng).start == 0

    def test_frames_are_consecutive(self, rng, tiny_dataset):
        for _ in range(100):
            snippet = sample_snippet(tiny_dataset, rng)
            video = next(v for v in tiny_dataset if v.id == snippet.video_id)
            assert snippet.indices == list(range(snippet.start, snippet.start + 4))
            assert_array_equal(snippet.frames, video.frames[snippet.start:snippet.start + 4])
            assert_array_equal(snippet.masks, video.masks[snippet.start:snippet.start + 4])

    def test_start_is_uniform(self):
        rng = np.random.default_rng(2024)
        video = video_of_length(10)
        starts = [sample_snippet([video], rng).start for _ in range(10_000)]
        counts = np.bincount(starts, minlength=7)
        assert len(counts) == 7
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_video_choice_is_uniform(self):
        rng = np.random.default_rng(7)
        videos = [video_of_length(4, f"v{i}") for i in range(5)]
        picks = [sample_snippet(videos, rng).video_id for _ in range(10_000)]
        counts = [picks.count(f"v{i}") for i in range(5)]
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_short_video(self, rng):
        with pytest.raises(ArgumentError):
            sample_snippet([video_of_length(3)], rng)

    def test_empty_dataset(self, rng):
        with pytest.raises(ArgumentError):
            sample_snippet([], rng)
        with pytest.raises(ArgumentError):
            sample_from_sources([[], []], rng)

    def test_sources_are_picked_evenly(self):
        rng = np.random.default_rng(3)
        small = [video_of_length(4, "small")]
        large = [video_of_length(4, f"large{i}") for i in range(9)]
        picks = [sample_from_sources([small, large], rng).video_id for _ in range(4000)]
        share = picks.count("small") / len(picks)
        assert 0.45 < share < 0.55
