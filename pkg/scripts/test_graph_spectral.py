"""
Tests for the Laplacian toolkit and the equi-partition coarsening checks
"""
import math

import numpy as np
import pytest

import graph_spectral as gs
import road_network as rn
from errors import ContractError, ShapeError

PATH3 = gs.path_graph(3)
PATH4 = gs.path_graph(4)
HALVES = gs.Partition(((0, 1), (2, 3)))


class TestLaplacian:
    def test_path(self):
        np.testing.assert_array_equal(gs.laplacian(PATH3), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])

    def test_edgeless(self):
        np.testing.assert_array_equal(gs.laplacian(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_directed_edge_symmetrised(self):
        directed = np.array([[0.0, 1.0], [0.0, 0.0]])
        undirected = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(gs.laplacian(directed), gs.laplacian(undirected))

    def test_non_square(self):
        with pytest.raises(ShapeError):
            gs.laplacian(np.zeros((2, 3)))

    def test_accepts_network(self):
        net, _, _, _ = rn.generate_synthetic(rn.GENERATOR_PRESETS["grid2"], seed=0)
        assert gs.laplacian(net).shape == (4, 4)


class TestEigendecompose:
    def test_single_edge(self):
        basis = gs.eigendecompose(gs.laplacian(gs.path_graph(2)))
        np.testing.assert_allclose(basis.eigenvalues, [0.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(basis.eigenvectors[:, 0], [1 / math.sqrt(2)] * 2, atol=1e-12)

    def test_zero_matrix(self):
        np.testing.assert_allclose(gs.eigendecompose(np.zeros((3, 3))).eigenvalues, 0.0, atol=1e-14)

    def test_connected_kernel_dimension(self):
        rng = np.random.default_rng(0)
        adjacency, _ = gs.random_equipartitioned_graph(rng)
        assert gs.eigendecompose(gs.laplacian(adjacency)).kernel_dimension() == 1

    def test_basis_properties(self):
        rng = np.random.default_rng(1)
        adjacency, _ = gs.random_equipartitioned_graph(rng)
        lap = gs.laplacian(adjacency)
        basis = gs.eigendecompose(lap)
        u = basis.eigenvectors
        np.testing.assert_allclose(u.T @ u, np.eye(basis.n), atol=1e-8)
        np.testing.assert_allclose(lap @ u, u * basis.eigenvalues, atol=1e-7)
        assert basis.eigenvalues[0] >= -1e-9
        assert np.all(np.diff(basis.eigenvalues) >= 0)

    def test_sign_convention(self):
        basis = gs.eigendecompose(gs.laplacian(PATH4))
        for col in basis.eigenvectors.T:
            lead = np.argmax(np.abs(col) >= np.abs(col).max() - 1e-12)
            assert col[lead] > 0

    def test_non_symmetric(self):
        with pytest.raises(ContractError):
            gs.eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestTransforms:
    def setup_method(self):
        rng = np.random.default_rng(5)
        adjacency, _ = gs.random_equipartitioned_graph(rng, 10, 30)
        self.lap = gs.laplacian(adjacency)
        self.basis = gs.eigendecompose(self.lap)
        self.x = rng.standard_normal(self.basis.n)

    def test_basis_vector(self):
        coefficients = gs.gft(self.basis, self.basis.eigenvectors[:, 0])
        expected = np.zeros(self.basis.n)
        expected[0] = 1.0
        np.testing.assert_allclose(coefficients, expected, atol=1e-9)

    def test_inverse_and_parseval(self):
        coefficients = gs.gft(self.basis, self.x)
        np.testing.assert_allclose(gs.igft(self.basis, coefficients), self.x, atol=1e-9)
        assert np.linalg.norm(coefficients) == pytest.approx(np.linalg.norm(self.x), abs=1e-9)

    def test_quadratic_form(self):
        coefficients = gs.gft(self.basis, self.x)
        spectral = float(np.sum(self.basis.eigenvalues * coefficients ** 2))
        assert spectral == pytest.approx(gs.dirichlet_energy(self.lap, self.x), abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            gs.gft(self.basis, np.ones(self.basis.n + 1))

    def test_split_orthogonal(self):
        x_low, x_high = gs.frequency_split(self.basis, self.x, self.basis.n // 2)
        assert abs(x_low @ x_high) < 1e-9
        np.testing.assert_allclose(x_low + x_high, self.x, atol=1e-12)

    def test_split_endpoints(self):
        low, high = gs.frequency_split(self.basis, self.x, self.basis.n)
        np.testing.assert_allclose(low, self.x, atol=1e-9)
        np.testing.assert_allclose(high, 0.0, atol=1e-9)
        low, high = gs.frequency_split(self.basis, self.x, 0)
        np.testing.assert_array_equal(low, 0.0)
        np.testing.assert_array_equal(high, self.x)

    def test_split_out_of_range(self):
        with pytest.raises(ContractError):
            gs.frequency_split(self.basis, self.x, self.basis.n + 1)


class TestDirichletEnergy:
    def test_constant(self):
        assert gs.dirichlet_energy(gs.laplacian(PATH4), np.full(4, 3.0)) == 0.0

    def test_path(self):
        assert gs.dirichlet_energy(gs.laplacian(PATH3), [0.0, 1.0, 2.0]) == pytest.approx(2.0)

    def test_unit_eigenvector(self):
        lap = gs.laplacian(PATH4)
        basis = gs.eigendecompose(lap)
        for j in range(4):
            assert gs.dirichlet_energy(lap, basis.eigenvectors[:, j]) == pytest.approx(basis.eigenvalues[j], abs=1e-12)


class TestHardAssignment:
    def test_halves(self):
        h = 1 / math.sqrt(2)
        np.testing.assert_allclose(gs.hard_assignment(HALVES), [[h, h, 0, 0], [0, 0, h, h]])

    def test_singletons(self):
        p = gs.Partition(((0,), (1,), (2,)))
        np.testing.assert_array_equal(gs.hard_assignment(p), np.eye(3))

    def test_unequal_clusters(self):
        with pytest.raises(ContractError, match="equi-partition"):
            gs.hard_assignment(gs.Partition(((0, 1), (2,))))

    def test_partition_must_cover(self):
        with pytest.raises(ContractError):
            gs.Partition(((0, 1), (1, 2)))

    def test_orthonormal_rows_and_projection(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            _, p = gs.random_equipartitioned_graph(rng)
            a = gs.hard_assignment(p)
            np.testing.assert_allclose(a @ a.T, np.eye(p.n_clusters), atol=1e-12)
            projection = a.T @ a
            np.testing.assert_allclose(projection @ projection, projection, atol=1e-12)
            np.testing.assert_allclose(projection, projection.T, atol=1e-12)
            eigenvalues = np.linalg.eigvalsh(projection)
            assert eigenvalues.min() >= -1e-9 and eigenvalues.max() <= 1 + 1e-9


class TestCoarsen:
    def test_path4(self):
        a_y, l_y = gs.coarsen(PATH4, gs.hard_assignment(HALVES))
        np.testing.assert_allclose(a_y, [[1.0, 0.5], [0.5, 1.0]], atol=1e-12)
        np.testing.assert_allclose(l_y, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)

    def test_identity_assignment(self):
        a_y, _ = gs.coarsen(PATH4, np.eye(4))
        np.testing.assert_array_equal(a_y, PATH4)

    def test_edgeless(self):
        a_y, _ = gs.coarsen(np.zeros((4, 4)), gs.hard_assignment(HALVES))
        np.testing.assert_array_equal(a_y, np.zeros((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            gs.coarsen(np.zeros((3, 3)), gs.hard_assignment(HALVES))


class TestLaplacianProjection:
    def test_path4(self):
        result = gs.verify_laplacian_projection(PATH4, HALVES)
        assert result.passed and result.max_deviation < 1e-12

    def test_identity_partition_exact(self):
        p = gs.Partition(tuple((i,) for i in range(4)))
        assert gs.verify_laplacian_projection(PATH4, p).max_deviation == 0.0

    def test_random_graphs(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            adjacency, p = gs.random_equipartitioned_graph(rng)
            assert 4 <= p.n <= 64
            assert gs.verify_laplacian_projection(adjacency, p).passed


class TestEnergy:
    def test_documented_counterexample(self):
        e_x, e_y = gs.energy_pair(PATH4, HALVES, [4.0, 3.0, 1.0, 0.0])
        assert e_x == pytest.approx(6.0, abs=1e-9)
        assert e_y == pytest.approx(9.0, abs=1e-9)

    @pytest.mark.parametrize("a, b", [(1.0, 0.0), (2.5, -1.0), (3.0, 3.0)])
    def test_piecewise_constant(self, a, b):
        e_x, e_y = gs.energy_pair(PATH4, HALVES, [a, a, b, b])
        assert e_x == pytest.approx((a - b) ** 2, abs=1e-12)
        assert e_y == pytest.approx((a - b) ** 2, abs=1e-9)

    def test_constant_signal(self):
        e_x, e_y = gs.energy_pair(PATH4, HALVES, np.full(4, 2.0))
        assert abs(e_x) < 1e-12 and abs(e_y) < 1e-12

    def test_report_on_path4(self):
        report = gs.energy_report(PATH4, HALVES, trials=200, seed=7)
        assert report.passed
        assert len(report.per_trial) == 200
        assert all(e_x >= -1e-9 and e_y >= -1e-9 for e_x, e_y, _ in report.per_trial)
        assert report.ratio_stats["min"] <= report.ratio_stats["median"] <= report.ratio_stats["max"]
        assert "per_trial" not in report.to_dict()

    def test_report_on_random_instances(self):
        rng = np.random.default_rng(11)
        for instance in range(100):
            adjacency, p = gs.random_equipartitioned_graph(rng)
            report = gs.energy_report(adjacency, p, trials=3, seed=instance)
            assert report.piecewise_constant_exact
            assert report.top_eigvec_contracts
            assert report.constant_signal_zero

    def test_report_deterministic(self):
        first = gs.energy_report(PATH4, HALVES, trials=20, seed=3)
        second = gs.energy_report(PATH4, HALVES, trials=20, seed=3)
        assert first.per_trial == second.per_trial


class TestSpectralProfile:
    def test_profile_shapes(self):
        net, _, _, _ = rn.generate_synthetic(rn.GENERATOR_PRESETS["grid10"], seed=3)
        profile = gs.spectral_profile(net, net.flows())
        assert profile.cut == 10
        assert len(profile.high_frequency) == len(profile.edges)
        assert 0.0 <= profile.low_band_fraction <= 1.0
        assert profile.energy >= 0.0

    def test_smooth_signal_has_no_high_edges(self):
        flags = gs.classify_edges([(0, 1), (1, 2)], np.array([0.0, 1.0, 2.0]), np.zeros(3))
        assert not flags.any()
