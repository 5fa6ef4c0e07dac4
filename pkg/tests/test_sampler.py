"""Tests for reproducible sample streams."""

import numpy as np
import pytest

from errors import BadInputError, SampleFileError
from sampler import (
    Distribution,
    SamplerSpec,
    SampleStream,
    draw_seed,
    load_samples,
    sample_gaussian,
    sample_uniform_cube,
    save_samples,
)


class TestStreams:

    def test_same_seed_same_points(self):
        a = sample_uniform_cube(3, 50, seed=42)
        b = sample_uniform_cube(3, 50, seed=42)
        np.testing.assert_array_equal(a.points, b.points)

    def test_streams_are_distinct(self):
        a = sample_uniform_cube(2, 20, seed=42, stream_id=0)
        b = sample_uniform_cube(2, 20, seed=42, stream_id=1)
        c = sample_uniform_cube(2, 20, seed=42, stream_id=(0, 1))
        assert not np.array_equal(a.points, b.points)
        assert not np.array_equal(b.points, c.points)

    def test_raw_outputs_differ_across_streams(self):
        raw = [SampleStream(Distribution.UNIFORM_CUBE, 1, 9, sid).bit_generator.random_raw(10_000)
               for sid in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                assert not np.intersect1d(raw[i], raw[j]).size

    def test_streams_uncorrelated_over_window(self):
        draws = [sample_uniform_cube(1, 10_000, seed=9, stream_id=sid).points[:, 0] for sid in range(4)]
        corr = np.corrcoef(draws)
        off_diagonal = corr[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off_diagonal) < 0.05)

    @pytest.mark.parametrize("distribution", [Distribution.UNIFORM_CUBE, Distribution.GAUSSIAN])
    def test_prefix_property(self, distribution):
        spec = SamplerSpec(distribution, 2)
        whole = spec.open_stream(5, 3).draw(30)
        stream = spec.open_stream(5, 3)
        parts = np.vstack([stream.draw(10), stream.draw(7), stream.draw(13)])
        np.testing.assert_array_equal(whole, parts)
        assert stream.drawn == 30

    def test_batch_metadata(self):
        batch = sample_gaussian(2, 10, seed=1, stream_id=(4, 2))
        assert batch.N == 10 and batch.dim == 2
        assert batch.source == Distribution.GAUSSIAN
        assert batch.stream_id == (4, 2)

    def test_negative_seed_rejected(self):
        with pytest.raises(BadInputError):
            sample_uniform_cube(1, 5, seed=-1)

    def test_draw_seed_is_nonnegative(self):
        assert draw_seed() >= 0


class TestDistributions:

    def test_uniform_moments(self):
        points = sample_uniform_cube(2, 100_000, seed=0).points
        assert points.min() >= 0.0 and points.max() < 1.0
        np.testing.assert_allclose(points.mean(axis=0), 0.5, atol=0.01)
        np.testing.assert_allclose(points.var(axis=0), 1 / 12, atol=0.005)

    def test_gaussian_moments(self):
        points = sample_gaussian(3, 100_000, seed=0).points
        np.testing.assert_allclose(points.mean(axis=0), 0.0, atol=0.02)
        np.testing.assert_allclose(points.var(axis=0), 1.0, atol=0.03)


class TestSampleFiles:

    def test_round_trip_is_exact(self, tmp_path):
        batch = sample_uniform_cube(3, 25, seed=8)
        path = tmp_path / "samples.csv"
        save_samples(str(path), batch.points)
        loaded = load_samples(str(path), 3)
        np.testing.assert_array_equal(loaded.points, batch.points)
        assert loaded.source == Distribution.FILE

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "samples.csv"
        path.write_text("# x,y\n0.1,0.2\n\n0.3,0.4\n")
        assert load_samples(str(path), 2).N == 2

    def test_non_numeric_cell_reports_line(self, tmp_path):
        path = tmp_path / "samples.csv"
        path.write_text("0.1,0.2\n0.3,abc\n")
        with pytest.raises(SampleFileError) as excinfo:
            load_samples(str(path), 2)
        assert excinfo.value.line == 2
        assert ":2:" in str(excinfo.value)

    def test_wrong_width(self, tmp_path):
        path = tmp_path / "samples.csv"
        path.write_text("0.1,0.2,0.3\n")
        with pytest.raises(SampleFileError):
            load_samples(str(path), 2)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "samples.csv"
        path.write_text("# nothing\n")
        with pytest.raises(SampleFileError):
            load_samples(str(path), 2)
