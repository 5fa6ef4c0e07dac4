"""Tests for the cubature file format."""

import numpy as np
import pytest

from basis import enumerate_monomials
from cubature import ConstructionConfig, ProvenanceKind, construct_exact, product_cubature, subsample
from cubature_io import cubature_from_dict, cubature_to_dict, read_cubature, write_cubature
from errors import BadInputError, CubatureFileError
from moments import analytic_moment_vector
from sampler import Distribution, SamplerSpec


@pytest.fixture
def constructed():
    basis = enumerate_monomials(2, 3)
    return construct_exact(SamplerSpec(Distribution.UNIFORM_CUBE, 2), basis,
                           analytic_moment_vector(basis), ConstructionConfig(seed=21))


class TestCubatureFile:

    def test_round_trip_is_bit_exact(self, tmp_path, constructed):
        path = tmp_path / "cub.txt"
        write_cubature(str(path), constructed, tolerance=1e-9)
        loaded = read_cubature(str(path))
        np.testing.assert_array_equal(loaded.nodes, constructed.nodes)
        np.testing.assert_array_equal(loaded.weights, constructed.weights)
        np.testing.assert_array_equal(loaded.target.values, constructed.target.values)
        assert loaded.basis == constructed.basis
        assert loaded.residual == constructed.residual
        assert loaded.provenance == constructed.provenance

    def test_rewrite_is_byte_identical(self, tmp_path, constructed):
        first, second = tmp_path / "a.txt", tmp_path / "b.txt"
        write_cubature(str(first), constructed, tolerance=1e-9)
        write_cubature(str(second), read_cubature(str(first)), tolerance=1e-9)
        assert first.read_bytes() == second.read_bytes()

    def test_header_records_provenance(self, tmp_path, constructed):
        path = tmp_path / "cub.txt"
        write_cubature(str(path), constructed)
        text = path.read_text()
        assert '"kind": "exact_construction"' in text
        assert '"N_used": ' in text
        assert "[nodes]" in text

    def test_product_without_basis(self, tmp_path):
        basis = enumerate_monomials(1, 3)
        base = subsample(np.array([[0.0], [0.5], [1.0]]), basis, analytic_moment_vector(basis))
        path = tmp_path / "grid.txt"
        write_cubature(str(path), product_cubature(base, 2))
        loaded = read_cubature(str(path))
        assert loaded.n == 9
        assert loaded.basis is None
        assert loaded.provenance.kind == ProvenanceKind.PRODUCT


class TestMalformedFiles:

    def write(self, tmp_path, text):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        return str(path)

    def test_missing_nodes_section(self, tmp_path):
        with pytest.raises(CubatureFileError):
            read_cubature(self.write(tmp_path, "s = 1\n"))

    def test_bad_node_line_reports_line(self, tmp_path):
        path = self.write(tmp_path, "s = 1\n[nodes]\n0.5,1\nx,1\n")
        with pytest.raises(CubatureFileError) as excinfo:
            read_cubature(path)
        assert excinfo.value.line == 4

    def test_negative_weight_rejected_on_validated_load(self, tmp_path):
        path = self.write(tmp_path, "s = 1\n[nodes]\n0.0,1.5\n1.0,-0.5\n")
        with pytest.raises(CubatureFileError):
            read_cubature(path)
        assert read_cubature(path, validate=False).weights[1] == -0.5

    def test_node_count_mismatch(self, tmp_path):
        with pytest.raises(CubatureFileError):
            read_cubature(self.write(tmp_path, "s = 1\nn = 2\n[nodes]\n0.5,1\n"))

    def test_dict_with_bad_version(self, constructed):
        record = cubature_to_dict(constructed)
        record["format_version"] = 99
        with pytest.raises(BadInputError):
            cubature_from_dict(record)
