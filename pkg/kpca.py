"""
核PCA模块
把 PCA、MDS、Isomap、谱聚类、LLE 统一写成核矩阵，计算谱与训练集嵌入
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import networkx as nx
import numpy as np
from sklearn.metrics.pairwise import euclidean_distances

from exceptions import DisconnectedGraphError, ValidationError
from numkit import (
    RANK_TOL,
    SpectralDecomposition,
    check_finite,
    check_symmetric,
    pseudo_inverse,
    solve_linear,
    sym_eig,
)
from pod import inner_product_weights, snapshot_gram
from snapshots import SnapshotSet

KERNEL_KINDS = ("linear", "mds", "isomap", "spectral_clustering", "lle")

DataLike = Union[SnapshotSet, np.ndarray]
LLE_REG_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelHyper:
    """图方法超参数"""
    k_neighbors: int = 4
    weight_scale: Optional[float] = None   # None: 取快照两两距离的中位数
    distance: str = "trapezoid"            # 或 "euclidean"
    lle_reg: float = 1e-3
    rank_tol: float = RANK_TOL


@dataclass(frozen=True)
class KernelModel:
    """
    核模型

    coefficients 满足 λ_j (α_j · α_j) = 1，embedding = K α 即训练集的主成分得分
    """
    kernel_kind: str
    K: np.ndarray
    spectrum: SpectralDecomposition
    coefficients: np.ndarray
    embedding: np.ndarray
    hyper: KernelHyper


def _as_data(data: DataLike, distance: str = "trapezoid") -> Tuple[np.ndarray, np.ndarray]:
    """快照集合按声明的内积取权重，裸数组按欧氏内积处理"""
    if isinstance(data, SnapshotSet):
        return data.data, inner_product_weights(data.grid, distance)
    data = check_finite(np.atleast_2d(data), "数据")
    return data, np.ones(data.shape[1])


def squared_distances(data: DataLike, distance: str = "trapezoid") -> np.ndarray:
    """两两平方距离矩阵，对角线为零"""
    X, w = _as_data(data, distance)
    D2 = euclidean_distances(X * np.sqrt(w), squared=True)
    D2 = 0.5 * (D2 + D2.T)
    np.fill_diagonal(D2, 0.0)
    return np.maximum(D2, 0.0)


def _check_k(k_neighbors: int, n: int):
    if not 1 <= k_neighbors < n:
        raise ValidationError(f"k_neighbors 必须满足 1 <= k < n = {n}，当前 {k_neighbors}")


def knn_indices(dist: np.ndarray, k_neighbors: int) -> np.ndarray:
    """每个点的 k 个最近邻，距离相同时取编号较小者"""
    n = dist.shape[0]
    _check_k(k_neighbors, n)
    d = dist.astype(float).copy()
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k_neighbors]


def knn_graph(dist: np.ndarray, k_neighbors: int) -> nx.Graph:
    """对称化 kNN 图：任一端点选中对方即连边，边权为欧氏距离"""
    n = dist.shape[0]
    G = nx.Graph()
    G.add_nodes_from(range(n))
    for i, neighbors in enumerate(knn_indices(dist, k_neighbors)):
        for j in neighbors:
            G.add_edge(i, int(j), weight=float(dist[i, j]))
    return G


def double_center(D) -> np.ndarray:
    """经典 MDS：-1/2 H D H，H = I - 11ᵀ/n"""
    D = check_symmetric(D, "平方距离矩阵")
    scale = max(np.max(np.abs(D)), 1.0)
    if np.max(np.abs(np.diag(D))) > 1e-12 * scale:
        raise ValidationError("平方距离矩阵的对角线必须为零")
    if np.min(D) < 0:
        raise ValidationError("平方距离矩阵必须非负")
    n = D.shape[0]
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * H @ D @ H
    return 0.5 * (B + B.T)


def geodesic_distances(data: DataLike, k_neighbors: int,
                       distance: str = "trapezoid") -> np.ndarray:
    """
    kNN 图上的全源最短路径 (Isomap 测地距离)

    Raises:
        DisconnectedGraphError: 图不连通，异常中列出各连通分量
    """
    dist = np.sqrt(squared_distances(data, distance))
    G = knn_graph(dist, k_neighbors)
    if not nx.is_connected(G):
        components = sorted(sorted(c) for c in nx.connected_components(G))
        raise DisconnectedGraphError(components)
    geo = nx.floyd_warshall_numpy(G, nodelist=range(dist.shape[0]), weight="weight")
    geo = np.asarray(geo, dtype=float)
    return 0.5 * (geo + geo.T)


def adjacency(data: DataLike, hyper: KernelHyper) -> np.ndarray:
    """
    邻接矩阵 W：对称化 kNN 边上取高斯权重 exp(-d^2 / (2 s^2))，对角线为零
    """
    D2 = squared_distances(data, hyper.distance)
    dist = np.sqrt(D2)
    n = dist.shape[0]
    _check_k(hyper.k_neighbors, n)

    scale = hyper.weight_scale
    if scale is None:
        upper = dist[np.triu_indices(n, k=1)]
        scale = float(np.median(upper)) if np.median(upper) > 0 else 1.0
    if not scale > 0:
        raise ValidationError(f"weight_scale 必须为正: {scale}")

    W = np.zeros((n, n))
    for u, v in knn_graph(dist, hyper.k_neighbors).edges():
        W[u, v] = W[v, u] = np.exp(-D2[u, v] / (2.0 * scale ** 2))
    np.fill_diagonal(W, 0.0)
    return W


def graph_laplacian(W) -> np.ndarray:
    """L = W_D - W"""
    W = check_symmetric(W, "邻接矩阵")
    if np.min(W) < 0:
        raise ValidationError("邻接矩阵必须非负")
    if np.any(np.diag(W) != 0):
        raise ValidationError("邻接矩阵对角线必须为零")
    return np.diag(W.sum(axis=1)) - W


def laplacian_kernel(W, rank_tol: float = RANK_TOL) -> np.ndarray:
    """谱聚类核：拉普拉斯矩阵的伪逆 L†"""
    return pseudo_inverse(graph_laplacian(W), rank_tol)


def lle_weights(data: DataLike, k_neighbors: int, reg: float = 1e-3,
                distance: str = "trapezoid") -> np.ndarray:
    """
    LLE 重构权重：每行求解带和为一约束的局部最小二乘
    局部 Gram 奇异时加 reg * trace * I，reg 低于 LLE_REG_FLOOR 时取下限
    """
    if reg < 0:
        raise ValidationError(f"reg 必须非负: {reg}")
    X, w = _as_data(data, distance)
    n = X.shape[0]
    dist = np.sqrt(squared_distances(data, distance))
    W = np.zeros((n, n))

    for i, neighbors in enumerate(knn_indices(dist, k_neighbors)):
        Z = X[neighbors] - X[i]
        C = (Z * w) @ Z.T
        k = len(neighbors)
        if np.linalg.matrix_rank(C) < k:
            trace = np.trace(C)
            shift = max(reg, LLE_REG_FLOOR)
            C = C + (shift * trace if trace > 0 else shift) * np.eye(k)
        coeffs = solve_linear(C, np.ones(k), assume_a="sym")
        W[i, neighbors] = coeffs / coeffs.sum()
    return W


def lle_kernel(W_tilde, rank_tol: float = RANK_TOL) -> np.ndarray:
    """LLE 核：M = (I - W̃)ᵀ(I - W̃) 的伪逆"""
    W_tilde = check_finite(W_tilde, "LLE 权重")
    if np.max(np.abs(W_tilde.sum(axis=1) - 1.0)) > 1e-8:
        raise ValidationError("LLE 权重每行之和必须为 1")
    A = np.eye(W_tilde.shape[0]) - W_tilde
    M = A.T @ A
    return pseudo_inverse(0.5 * (M + M.T), rank_tol)


def _psd_project(K: np.ndarray) -> np.ndarray:
    """把负特征值置零"""
    dec = sym_eig(K)
    V = dec.eigenvectors
    K = (V * np.maximum(dec.eigenvalues, 0.0)) @ V.T
    return 0.5 * (K + K.T)


def kernel_matrix(data: DataLike, kind: str, hyper: KernelHyper = KernelHyper()) -> np.ndarray:
    """按方法类型构造 n×n 核矩阵"""
    if kind == "linear":
        X, w = _as_data(data, hyper.distance)
        return snapshot_gram(X, w)[0]
    if kind == "mds":
        return double_center(squared_distances(data, hyper.distance))
    if kind == "isomap":
        geo = geodesic_distances(data, hyper.k_neighbors, hyper.distance)
        return _psd_project(double_center(geo ** 2))
    if kind == "spectral_clustering":
        return laplacian_kernel(adjacency(data, hyper), hyper.rank_tol)
    if kind == "lle":
        W_tilde = lle_weights(data, hyper.k_neighbors, hyper.lle_reg, hyper.distance)
        return lle_kernel(W_tilde, hyper.rank_tol)
    raise ValidationError(f"未知的核方法: {kind}，可选 {KERNEL_KINDS}")


def fit_kpca(data: DataLike, kind: str, hyper: KernelHyper = KernelHyper(),
             n_components: Optional[int] = None) -> KernelModel:
    """
    核PCA：构造核矩阵、特征分解并按 λ_j (v_j·v_j) = 1 归一化

    Args:
        n_components: 保留的嵌入维数，None 表示全部有效成分
    """
    K = kernel_matrix(data, kind, hyper)
    spectrum = sym_eig(K)
    lam = spectrum.eigenvalues
    if lam[0] > 0:
        valid = np.flatnonzero(lam > hyper.rank_tol * lam[0])
    else:
        valid = np.array([], dtype=int)
    if n_components is not None:
        valid = valid[:n_components]

    V = spectrum.eigenvectors[:, valid]
    if V.shape[1]:
        idx = np.argmax(np.abs(V), axis=0)
        signs = np.sign(V[idx, np.arange(V.shape[1])])
        V = V * np.where(signs == 0, 1.0, signs)
    coefficients = V / np.sqrt(lam[valid])
    embedding = K @ coefficients

    label = data.label if isinstance(data, SnapshotSet) else "array"
    print(f"[核PCA] {label}/{kind}: 有效成分 {len(valid)} 个, λ_1 = {lam[0]:.3e}")
    return KernelModel(kind, K, spectrum, coefficients, embedding, hyper)
