"""Tests for cubature construction, compression, products and verification."""

import math

import numpy as np
import pytest

from basis import basis_dim, enumerate_monomials, evaluate_basis, evaluate_basis_batch, load_tabulated
from cubature import (
    ConstructionConfig,
    Cubature,
    Provenance,
    ProvenanceKind,
    compress_empirical,
    compress_weighted,
    construct_exact,
    fisher_bound,
    integrate,
    integrate_function,
    product_cubature,
    product_of,
    reduce_cubature,
    subsample,
    verify,
)
from errors import DimensionMismatchError, InfeasibleError, PoolExhaustedError, SizeLimitError
from moments import MomentSource, MomentVector, analytic_moment_vector, empirical_moments
from sampler import Distribution, SamplerSpec, sample_uniform_cube

SIMPSON_POINTS = np.array([[0.0], [0.5], [1.0]])
SIMPSON_WEIGHTS = np.array([1 / 6, 2 / 3, 1 / 6])


def simpson():
    basis = enumerate_monomials(1, 3)
    return subsample(SIMPSON_POINTS, basis, analytic_moment_vector(basis))


class TestSubsample:

    def test_simpson_rule(self):
        cub = simpson()
        order = np.argsort(cub.nodes[:, 0])
        np.testing.assert_allclose(cub.nodes[order, 0], [0.0, 0.5, 1.0])
        np.testing.assert_allclose(cub.weights[order], SIMPSON_WEIGHTS, atol=1e-12)
        assert cub.provenance.kind == ProvenanceKind.SUBSAMPLED

    def test_infeasible_target(self):
        basis = enumerate_monomials(1, 1)
        target = MomentVector(np.array([1.0, 2.0]), MomentSource.USER_SUPPLIED)
        with pytest.raises(InfeasibleError):
            subsample(SIMPSON_POINTS, basis, target)

    def test_two_points_cannot_match_the_uniform_second_moment(self):
        basis = enumerate_monomials(1, 2)
        target = MomentVector(np.array([1.0, 1 / 2, 1 / 3]), MomentSource.USER_SUPPLIED)
        with pytest.raises(InfeasibleError):
            subsample(np.array([[0.0], [1.0]]), basis, target)

    def test_target_length_mismatch(self):
        target = analytic_moment_vector(enumerate_monomials(1, 2))
        with pytest.raises(DimensionMismatchError):
            subsample(SIMPSON_POINTS, enumerate_monomials(1, 3), target)


class TestConstructExact:

    @pytest.mark.parametrize("s", [1, 2, 3])
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_uniform_cube_suite(self, s, m):
        basis = enumerate_monomials(s, m)
        target = analytic_moment_vector(basis)
        lower = fisher_bound(basis)
        for seed in range(5):
            cub = construct_exact(SamplerSpec(Distribution.UNIFORM_CUBE, s), basis, target,
                                  ConstructionConfig(seed=seed))
            assert lower <= cub.n <= basis.size
            assert np.all(cub.weights > 0)
            assert abs(math.fsum(cub.weights) - 1.0) <= 1e-12
            assert cub.residual <= 1e-9
            assert np.max(np.abs(cub.moments(basis) - target.values)) <= 1e-9
            assert cub.provenance.pool_size >= basis.size
            assert not cub.check_invariants(tol=1e-9)

    def test_nodes_are_drawn_samples(self):
        basis = enumerate_monomials(2, 2)
        spec = SamplerSpec(Distribution.UNIFORM_CUBE, 2)
        cub = construct_exact(spec, basis, analytic_moment_vector(basis), ConstructionConfig(seed=3))
        pool = spec.open_stream(3).draw(cub.provenance.pool_size)
        for node in cub.nodes:
            assert np.any(np.all(pool == node, axis=1))

    def test_deterministic_for_seed(self):
        basis = enumerate_monomials(2, 3)
        spec = SamplerSpec(Distribution.UNIFORM_CUBE, 2)
        target = analytic_moment_vector(basis)
        a = construct_exact(spec, basis, target, ConstructionConfig(seed=12))
        b = construct_exact(spec, basis, target, ConstructionConfig(seed=12))
        np.testing.assert_array_equal(a.nodes, b.nodes)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_point_mass_target_gives_single_node(self):
        basis = enumerate_monomials(2, 2)
        spec = SamplerSpec(Distribution.UNIFORM_CUBE, 2)
        x0 = spec.open_stream(7).draw(1)[0]
        target = MomentVector(evaluate_basis(basis, x0), MomentSource.USER_SUPPLIED)
        cub = construct_exact(spec, basis, target, ConstructionConfig(seed=7))
        assert cub.n == 1
        np.testing.assert_array_equal(cub.nodes[0], x0)
        assert cub.weights[0] == pytest.approx(1.0, abs=1e-12)

    def test_pool_exhausted(self):
        basis = enumerate_monomials(2, 2)
        with pytest.raises(PoolExhaustedError) as excinfo:
            construct_exact(SamplerSpec(Distribution.UNIFORM_CUBE, 2), basis,
                            analytic_moment_vector(basis), ConstructionConfig(max_pool=5))
        assert excinfo.value.exit_code == 4

    def test_target_outside_support_never_captured(self):
        basis = enumerate_monomials(1, 1)
        target = MomentVector(np.array([1.0, 1.5]), MomentSource.USER_SUPPLIED)
        with pytest.raises(PoolExhaustedError):
            construct_exact(SamplerSpec(Distribution.UNIFORM_CUBE, 1), basis, target,
                            ConstructionConfig(max_pool=64))

    def test_gaussian_with_supplied_moments(self):
        basis = enumerate_monomials(1, 3)
        target = MomentVector(np.array([1.0, 0.0, 1.0, 0.0]), MomentSource.USER_SUPPLIED)
        cub = construct_exact(SamplerSpec(Distribution.GAUSSIAN, 1), basis, target,
                              ConstructionConfig(seed=1))
        assert cub.n <= 4
        assert cub.residual <= 1e-9

    def test_sampler_dimension_mismatch(self):
        basis = enumerate_monomials(2, 2)
        with pytest.raises(DimensionMismatchError):
            construct_exact(SamplerSpec(Distribution.UNIFORM_CUBE, 3), basis, analytic_moment_vector(basis))


class TestCompression:

    def test_empirical_measure(self):
        basis = enumerate_monomials(2, 2)
        samples = sample_uniform_cube(2, 10_000, seed=0)
        cub = compress_empirical(samples, basis)
        empirical = empirical_moments(samples, basis)
        assert cub.n <= 6
        assert np.max(np.abs(cub.moments(basis) - empirical.values)) <= 1e-9

        def f(x):
            return 3.0 - x[0] + 2.0 * x[0] * x[1] + 0.5 * x[1] ** 2

        # any function in the span integrates to its sample mean
        mean = np.mean([f(x) for x in samples.points])
        assert abs(integrate_function(cub, f) - mean) <= 1e-9

    def test_fewer_samples_than_rank(self):
        basis = enumerate_monomials(2, 3)
        samples = sample_uniform_cube(2, 4, seed=1)
        cub = compress_empirical(samples, basis)
        assert cub.n == 4
        np.testing.assert_allclose(cub.weights, 0.25, atol=1e-12)

    def test_weighted_measure(self):
        basis = enumerate_monomials(1, 2)
        points = np.linspace(0.0, 1.0, 11).reshape(-1, 1)
        weights = np.full(11, 1 / 11)
        cub = compress_weighted(points, weights, basis)
        assert cub.n <= 3
        np.testing.assert_allclose(cub.moments(basis), evaluate_basis_batch(basis, points) @ weights,
                                   atol=1e-12)

    def test_tabulated_functions(self, tmp_path):
        xs = np.linspace(0.0, 1.0, 21)
        path = tmp_path / "tab.csv"
        path.write_text("".join(f"{float(x)!r},1,{math.sin(x)!r},{math.exp(x)!r}\n" for x in xs))
        points, basis, lifted = load_tabulated(str(path), 1)
        cub = compress_empirical(points, basis, lifted=lifted)
        assert cub.n <= 3
        assert cub.residual <= 1e-9


class TestProduct:

    def test_simpson_square(self):
        grid = product_cubature(simpson(), 2)
        assert grid.n == 9
        assert grid.provenance.kind == ProvenanceKind.PRODUCT
        corners = [i for i, x in enumerate(grid.nodes) if set(x) <= {0.0, 1.0}]
        center = [i for i, x in enumerate(grid.nodes) if np.all(x == 0.5)]
        np.testing.assert_allclose(grid.weights[corners], 1 / 36, atol=1e-12)
        np.testing.assert_allclose(grid.weights[center], 4 / 9, atol=1e-12)

        basis = enumerate_monomials(2, 3)
        np.testing.assert_allclose(grid.moments(basis), analytic_moment_vector(basis).values, atol=1e-12)

    def test_reduce_product(self):
        basis = enumerate_monomials(2, 3)
        reduced = reduce_cubature(product_cubature(simpson(), 2), basis)
        assert reduced.n <= basis.size
        np.testing.assert_allclose(reduced.moments(basis), analytic_moment_vector(basis).values,
                                   atol=1e-12)

    def test_mixed_factors(self):
        basis_1 = enumerate_monomials(1, 1)
        midpoint = subsample(np.array([[0.5]]), basis_1, analytic_moment_vector(basis_1))
        grid = product_of([simpson(), midpoint])
        assert grid.n == 3 and grid.s == 2
        np.testing.assert_allclose(grid.nodes[:, 1], 0.5)

    def test_node_cap(self):
        with pytest.raises(SizeLimitError):
            product_cubature(simpson(), 20, max_nodes=1000)

    def test_node_cap_is_inclusive(self):
        assert product_cubature(simpson(), 3, max_nodes=27).n == 27
        assert product_of([simpson()] * 3, max_nodes=27).n == 27
        with pytest.raises(SizeLimitError):
            product_cubature(simpson(), 3, max_nodes=26)

    def test_fisher_bound(self):
        assert fisher_bound(enumerate_monomials(2, 3)) == basis_dim(2, 1)


class TestVerify:

    def test_simpson_passes(self):
        basis = enumerate_monomials(1, 3)
        report = verify(simpson(), basis, analytic_moment_vector(basis))
        assert report.passed
        assert report.max_residual <= 1e-12
        assert "PASS" in report.render()

    def test_negative_weight_fails(self):
        basis = enumerate_monomials(1, 1)
        cub = Cubature(nodes=np.array([[0.0], [1.0]]), weights=np.array([1.5, -0.5]), basis=basis,
                       target=None, residual=None, provenance=Provenance(ProvenanceKind.SUBSAMPLED))
        report = verify(cub, basis, analytic_moment_vector(basis))
        assert not report.weights_positive
        assert not report.passed
        assert any("non-positive" in m for m in report.messages)

    def test_wrong_degree_target_fails_on_extra_components(self):
        basis = enumerate_monomials(1, 4)
        report = verify(simpson(), basis, analytic_moment_vector(basis))
        assert np.all(report.component_residuals[:4] <= 1e-12)
        assert report.component_residuals[4] == pytest.approx(1 / 120, abs=1e-12)
        assert not report.residual_ok
        assert not report.passed
        assert any("first at index 4" in m for m in report.messages)

    def test_dimension_mismatch_is_reported(self):
        basis = enumerate_monomials(2, 2)
        report = verify(simpson(), basis, analytic_moment_vector(basis))
        assert not report.dimension_ok
        assert not report.passed

    def test_product_grid_may_exceed_d(self):
        basis = enumerate_monomials(3, 3)
        grid = product_cubature(simpson(), 3)
        assert grid.n > basis.size
        assert verify(grid, basis, analytic_moment_vector(basis)).passed

    def test_integrate(self):
        cub = simpson()
        assert integrate(cub, cub.nodes[:, 0] ** 3) == pytest.approx(0.25, abs=1e-12)
        with pytest.raises(DimensionMismatchError):
            integrate(cub, [1.0, 2.0])
