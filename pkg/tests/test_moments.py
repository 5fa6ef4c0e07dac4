"""Tests for target moment vectors."""

import numpy as np
import pytest
from scipy import stats

from basis import enumerate_monomials, evaluate_basis_batch
from errors import BadInputError, DimensionMismatchError, MomentFileError
from moments import (
    MomentSource,
    MomentVector,
    analytic_moment_vector,
    empirical_moments,
    load_moment_vector,
    save_moment_vector,
    uniform_cube_moment,
    weighted_moments,
)
from sampler import sample_uniform_cube


class TestAnalytic:

    def test_one_dimensional_cubic(self):
        target = analytic_moment_vector(enumerate_monomials(1, 3))
        np.testing.assert_allclose(target.values, [1, 1 / 2, 1 / 3, 1 / 4], rtol=1e-15)
        assert target.source == MomentSource.ANALYTIC

    def test_product_formula(self):
        assert uniform_cube_moment((2, 1, 0)) == pytest.approx(1 / 6, rel=1e-15)

    def test_leading_moment_is_exact(self):
        assert analytic_moment_vector(enumerate_monomials(4, 3)).values[0] == 1.0


class TestMomentVector:

    def test_leading_entry_must_be_one(self):
        with pytest.raises(BadInputError):
            MomentVector(np.array([0.9, 0.5]), MomentSource.USER_SUPPLIED)

    def test_rejects_nan(self):
        with pytest.raises(BadInputError):
            MomentVector(np.array([1.0, np.nan]), MomentSource.USER_SUPPLIED)

    def test_values_are_read_only(self):
        target = MomentVector(np.array([1.0, 0.5]), MomentSource.USER_SUPPLIED)
        with pytest.raises(ValueError):
            target.values[1] = 0.0

    def test_provenance_record(self):
        target = MomentVector(np.array([1.0, 0.5]), MomentSource.EMPIRICAL, sample_count=10, seed=3)
        assert target.provenance() == {"source": "empirical", "N": 10, "seed": 3}


class TestEmpirical:

    def test_mean_of_lifts(self):
        basis = enumerate_monomials(1, 2)
        target = empirical_moments(np.array([[0.0], [1.0], [2.0]]), basis)
        np.testing.assert_allclose(target.values, [1.0, 1.0, 5 / 3])
        assert target.sample_count == 3

    def test_sample_batch_carries_seed(self):
        basis = enumerate_monomials(2, 2)
        batch = sample_uniform_cube(2, 100, seed=11)
        target = empirical_moments(batch, basis)
        assert target.seed == 11
        assert target.values[0] == 1.0

    def test_within_five_standard_errors_of_analytic(self):
        basis = enumerate_monomials(2, 4)
        batch = sample_uniform_cube(2, 10_000, seed=2024)
        target = empirical_moments(batch, basis)
        exact = analytic_moment_vector(basis).values
        sem = stats.sem(evaluate_basis_batch(basis, batch.points), axis=1)
        assert np.all(np.abs(target.values - exact) <= 5 * sem + 1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            empirical_moments(np.zeros((5, 3)), enumerate_monomials(2, 2))

    def test_weighted(self):
        basis = enumerate_monomials(1, 3)
        simpson = weighted_moments(np.array([[0.0], [0.5], [1.0]]), [1 / 6, 2 / 3, 1 / 6], basis)
        np.testing.assert_allclose(simpson.values, [1, 1 / 2, 1 / 3, 1 / 4], atol=1e-15)
        assert simpson.source == MomentSource.WEIGHTED

    def test_weighted_rejects_non_probability(self):
        basis = enumerate_monomials(1, 1)
        with pytest.raises(BadInputError):
            weighted_moments(np.array([[0.0], [1.0]]), [0.5, 0.6], basis)
        with pytest.raises(BadInputError):
            weighted_moments(np.array([[0.0], [1.0]]), [1.5, -0.5], basis)


class TestMomentFiles:

    def test_round_trip(self, tmp_path):
        basis = enumerate_monomials(2, 3)
        target = analytic_moment_vector(basis)
        path = tmp_path / "moments.txt"
        save_moment_vector(str(path), target, basis)
        loaded = load_moment_vector(str(path), basis)
        assert np.array_equal(loaded.values, target.values)
        assert loaded.source == MomentSource.USER_SUPPLIED

    def test_leading_value_snapped(self, tmp_path):
        path = tmp_path / "moments.txt"
        path.write_text("1.0000000000001\n0.5\n")
        loaded = load_moment_vector(str(path), enumerate_monomials(1, 1))
        assert loaded.values[0] == 1.0

    def test_leading_value_too_far_from_one(self, tmp_path):
        path = tmp_path / "moments.txt"
        path.write_text("1.000001\n0.5\n")
        with pytest.raises(MomentFileError):
            load_moment_vector(str(path), enumerate_monomials(1, 1))

    def test_wrong_length(self, tmp_path):
        path = tmp_path / "moments.txt"
        path.write_text("1\n0.5\n")
        with pytest.raises(MomentFileError):
            load_moment_vector(str(path), enumerate_monomials(1, 3))

    def test_non_numeric_line_reports_line_number(self, tmp_path):
        path = tmp_path / "moments.txt"
        path.write_text("# header\n1\nhalf\n")
        with pytest.raises(MomentFileError) as excinfo:
            load_moment_vector(str(path), enumerate_monomials(1, 1))
        assert excinfo.value.line == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(MomentFileError):
            load_moment_vector(str(tmp_path / "absent.txt"), enumerate_monomials(1, 1))
