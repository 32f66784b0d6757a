"""
核PCA 与图方法测试
"""
import numpy as np
import pytest

from exceptions import DisconnectedGraphError, ValidationError
from kpca import (
    KERNEL_KINDS,
    KernelHyper,
    adjacency,
    double_center,
    fit_kpca,
    geodesic_distances,
    graph_laplacian,
    kernel_matrix,
    knn_indices,
    laplacian_kernel,
    lle_kernel,
    lle_weights,
    squared_distances,
)
from numkit import sym_eig
from pod import fit_pod, fit_pod_matrix


class TestDoubleCenter:
    def test_zero(self):
        np.testing.assert_array_equal(double_center(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_two_points(self):
        np.testing.assert_allclose(double_center([[0.0, 1.0], [1.0, 0.0]]),
                                   [[0.25, -0.25], [-0.25, 0.25]])

    def test_equals_centered_gram(self, rng):
        X = rng.standard_normal((7, 5))
        Xc = X - X.mean(axis=0)
        np.testing.assert_allclose(double_center(squared_distances(X)), Xc @ Xc.T, atol=1e-8)

    def test_nonzero_diagonal_rejected(self):
        with pytest.raises(ValidationError):
            double_center([[1.0, 1.0], [1.0, 0.0]])


class TestGeodesic:
    def test_collinear_chain(self):
        X = np.array([[0.0], [1.0], [2.0]])
        geo = geodesic_distances(X, 1)
        assert geo[0, 2] == pytest.approx(2.0)
        assert geo[0, 1] == pytest.approx(1.0)

    def test_complete_graph_is_euclidean(self, rng):
        X = rng.standard_normal((6, 3))
        geo = geodesic_distances(X, 5)
        np.testing.assert_allclose(geo, np.sqrt(squared_distances(X)), atol=1e-12)

    def test_disconnected_graph_reports_components(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        with pytest.raises(DisconnectedGraphError) as info:
            geodesic_distances(X, 1)
        assert info.value.components == [[0, 1], [2, 3]]

    def test_knn_ties_prefer_smaller_index(self):
        X = np.array([[0.0], [1.0], [-1.0]])
        assert knn_indices(np.sqrt(squared_distances(X)), 1)[0, 0] == 1

    def test_k_out_of_range(self):
        with pytest.raises(ValidationError):
            geodesic_distances(np.zeros((3, 1)), 3)


class TestAdjacencyAndLaplacian:
    def test_large_scale_gives_unit_weights(self, rng):
        X = rng.standard_normal((6, 2))
        W = adjacency(X, KernelHyper(k_neighbors=2, weight_scale=1e12))
        np.testing.assert_allclose(W[W > 0], 1.0)
        np.testing.assert_array_equal(np.diag(W), 0.0)

    def test_identical_points_weight_one(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 0.0]])
        W = adjacency(X, KernelHyper(k_neighbors=1, weight_scale=1.0))
        assert W[0, 1] == 1.0

    def test_path_graph(self):
        W = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        L = graph_laplacian(W)
        np.testing.assert_allclose(sym_eig(L).eigenvalues, [3.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(sym_eig(laplacian_kernel(W)).eigenvalues,
                                   [1.0, 1.0 / 3.0, 0.0], atol=1e-12)

    def test_two_components_two_zero_eigenvalues(self):
        W = np.zeros((4, 4))
        W[0, 1] = W[1, 0] = W[2, 3] = W[3, 2] = 1.0
        lam = sym_eig(graph_laplacian(W)).eigenvalues
        assert np.sum(np.abs(lam) < 1e-12) == 2

    def test_single_edge(self):
        W = np.array([[0.0, 0.7], [0.7, 0.0]])
        np.testing.assert_allclose(graph_laplacian(W), 0.7 * np.array([[1.0, -1.0], [-1.0, 1.0]]))

    def test_rows_sum_to_zero(self, advection_set):
        L = graph_laplacian(adjacency(advection_set, KernelHyper()))
        np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)


class TestLle:
    def test_midpoint(self):
        X = np.array([[0.5], [0.0], [1.0]])
        W = lle_weights(X, 2, reg=1e-12)
        np.testing.assert_allclose(W[0, [1, 2]], [0.5, 0.5], atol=1e-9)

    def test_midpoint_without_regularization(self):
        X = np.array([[0.0], [1.0], [0.5]])
        W = lle_weights(X, 2, reg=0.0)
        np.testing.assert_allclose(W[2, [0, 1]], [0.5, 0.5], atol=1e-9)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)

    def test_coincident_neighbor(self):
        X = np.array([[1.0, 2.0], [1.0, 2.0], [5.0, 0.0]])
        W = lle_weights(X, 1)
        assert W[0, 1] == pytest.approx(1.0)

    def test_quarter_point(self):
        X = np.array([[0.25], [0.0], [1.0]])
        np.testing.assert_allclose(lle_weights(X, 2, reg=1e-12)[0, [1, 2]], [0.75, 0.25], atol=1e-9)
        np.testing.assert_allclose(lle_weights(X, 2, reg=1e-3)[0, [1, 2]], [0.75, 0.25], atol=1e-3)

    def test_rows_sum_to_one(self, advection_set):
        W = lle_weights(advection_set, 4)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)

    def test_identity_weights_give_zero_kernel(self):
        np.testing.assert_array_equal(lle_kernel(np.eye(3)), np.zeros((3, 3)))

    def test_ones_in_null_space(self, advection_set):
        K = lle_kernel(lle_weights(advection_set, 4))
        np.testing.assert_allclose(K @ np.ones(K.shape[0]), 0.0, atol=1e-8 * np.abs(K).max())

    def test_collinear_chain_matches_pinv(self):
        X = np.array([[0.0], [1.0], [2.0]])
        W = lle_weights(X, 2)
        A = np.eye(3) - W
        K = lle_kernel(W)
        np.testing.assert_allclose(sym_eig(K).eigenvalues,
                                   np.sort(np.linalg.eigvalsh(np.linalg.pinv(A.T @ A)))[::-1],
                                   rtol=1e-6, atol=1e-8)


class TestFitKpca:
    def test_linear_matches_pod(self, advection_set):
        model = fit_kpca(advection_set, "linear")
        basis = fit_pod(advection_set)
        n = advection_set.n_snapshots
        lam = model.spectrum.eigenvalues[:n - 1]
        np.testing.assert_allclose(lam, n * basis.eigenvalues, rtol=1e-8,
                                   atol=1e-12 * lam[0])
        Z = (advection_set.data - basis.mean) @ (basis.weights[:, None] * basis.modes[:, :3])
        np.testing.assert_allclose(np.abs(model.embedding[:, :3]), np.abs(Z), atol=1e-8)

    def test_mds_equals_linear_on_euclidean(self, rng):
        X = rng.standard_normal((9, 4))
        lam_lin = fit_kpca(X, "linear").spectrum.eigenvalues
        lam_mds = fit_kpca(X, "mds").spectrum.eigenvalues
        np.testing.assert_allclose(lam_mds, lam_lin, rtol=1e-8, atol=1e-10 * lam_lin[0])

    def test_isomap_complete_graph_equals_mds(self, rng):
        X = rng.standard_normal((7, 3))
        hyper = KernelHyper(k_neighbors=6)
        lam_iso = fit_kpca(X, "isomap", hyper).spectrum.eigenvalues
        lam_mds = fit_kpca(X, "mds", hyper).spectrum.eigenvalues
        np.testing.assert_allclose(lam_iso, lam_mds, atol=1e-10 * lam_mds[0])

    @pytest.mark.parametrize("kind", KERNEL_KINDS)
    def test_kernels_symmetric_psd_and_normalized(self, advection_set, kind):
        model = fit_kpca(advection_set, kind)
        K = model.K
        np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
        lam = model.spectrum.eigenvalues
        assert lam[-1] >= -1e-10 * lam[0]
        alpha = model.coefficients
        norms = lam[:alpha.shape[1]] * np.sum(alpha ** 2, axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-10)
        assert model.embedding.shape == (advection_set.n_snapshots, alpha.shape[1])

    def test_n_components(self, diffusion_set):
        model = fit_kpca(diffusion_set, "lle", n_components=2)
        assert model.embedding.shape == (20, 2)

    def test_unknown_kind(self, advection_set):
        with pytest.raises(ValidationError):
            kernel_matrix(advection_set, "tsne")


def test_raw_array_uses_euclidean(rng):
    X = rng.standard_normal((5, 3))
    basis = fit_pod_matrix(X, np.ones(3), "euclidean")
    lam = fit_kpca(X, "linear").spectrum.eigenvalues
    np.testing.assert_allclose(lam[:3], 5 * basis.eigenvalues, rtol=1e-10)
