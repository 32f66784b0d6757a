"""
POD / PCA 模块
快照法计算协方差谱、投影系数与重构，以及作为 Kolmogorov 宽度代理的能量恒等式
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd

from exceptions import ValidationError
from numkit import RANK_TOL, check_finite, sym_eig
from snapshots import Grid1D, SnapshotSet

INNER_PRODUCTS = ("trapezoid", "euclidean")


@dataclass(frozen=True)
class ReducedBasis:
    """
    降阶基：均值 ū、按内积正交归一的模态 (按列)、降序特征值

    eigenvalues 长度为 min(n-1, D)，modes 只保留特征值高于秩容差的模态
    """
    mean: np.ndarray
    modes: np.ndarray
    eigenvalues: np.ndarray
    inner_product: str
    weights: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    def gram(self) -> np.ndarray:
        """模态在声明内积下的 Gram 矩阵 (应为单位阵)"""
        return self.modes.T @ (self.weights[:, None] * self.modes)


def inner_product_weights(grid: Grid1D, inner_product: str = "trapezoid") -> np.ndarray:
    if inner_product == "trapezoid":
        return grid.weights
    if inner_product == "euclidean":
        return np.ones(grid.n_points)
    raise ValidationError(f"未知的内积: {inner_product}，可选 {INNER_PRODUCTS}")


def snapshot_gram(data: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    中心化快照的 n×n Gram 矩阵 K = Uc W Ucᵀ

    Returns:
        (K, mean)
    """
    data = check_finite(data, "快照矩阵")
    mean = data.mean(axis=0)
    centered = data - mean
    K = centered @ (weights[:, None] * centered.T)
    return 0.5 * (K + K.T), mean


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    """每个模态绝对值最大的分量取正"""
    if modes.shape[1] == 0:
        return modes
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    return modes * signs


def fit_pod_matrix(data, weights, inner_product: str = "trapezoid",
                   rank_tol: float = RANK_TOL) -> ReducedBasis:
    """
    快照法 POD：协方差按 1/n 缩放，模态由快照的加权组合恢复

    Args:
        data: n × D 快照矩阵
        weights: 长度 D 的内积权重
    """
    data = check_finite(data, "快照矩阵")
    weights = np.asarray(weights, dtype=float)
    n, D = data.shape
    if n < 2:
        raise ValidationError("POD 至少需要 2 个快照")

    K, mean = snapshot_gram(data, weights)
    dec = sym_eig(K)
    mu = dec.eigenvalues
    n_eig = min(n - 1, D)
    eigenvalues = mu[:n_eig] / n

    # 与快照能量相比处于舍入量级的方差视为零
    roundoff = np.finfo(float).eps * float(np.sum(weights * data ** 2))
    if mu[0] > roundoff:
        keep = np.flatnonzero(mu[:n_eig] > rank_tol * mu[0])
    else:
        keep = np.array([], dtype=int)

    centered = data - mean
    modes = centered.T @ dec.eigenvectors[:, keep] / np.sqrt(mu[keep])

    # 小特征值模态的正交性由加权 QR 修复
    if keep.size:
        sqrt_w = np.sqrt(weights)
        Q, R = np.linalg.qr(sqrt_w[:, None] * modes)
        Q = Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
        modes = Q / sqrt_w[:, None]
    modes = _fix_signs(modes)

    return ReducedBasis(mean, modes, eigenvalues, inner_product, weights)


def fit_pod(snapshot_set: SnapshotSet, inner_product: str = "trapezoid",
            rank_tol: float = RANK_TOL) -> ReducedBasis:
    """对快照集合做 POD，返回完整谱"""
    weights = inner_product_weights(snapshot_set.grid, inner_product)
    basis = fit_pod_matrix(snapshot_set.data, weights, inner_product, rank_tol)
    lam = basis.eigenvalues
    ratio = lam[min(9, lam.size - 1)] / lam[0] if lam[0] > 0 else 0.0
    print(f"[POD] {snapshot_set.label}: {snapshot_set.n_snapshots} 个快照, "
          f"{basis.n_modes} 个模态, λ_10/λ_1 = {ratio:.3e}")
    return basis


def project(basis: ReducedBasis, u, N: int) -> np.ndarray:
    """中心化后在前 N 个模态上的系数 z_j = <u - ū, ψ_j>"""
    if not 0 <= N <= basis.n_modes:
        raise ValidationError(f"N = {N} 超出模态个数 [0, {basis.n_modes}]")
    u = check_finite(u, "快照")
    return (u - basis.mean) @ (basis.weights[:, None] * basis.modes[:, :N])


def reconstruct(basis: ReducedBasis, z) -> np.ndarray:
    """ū + Σ z_j ψ_j，z 可为向量或逐行矩阵"""
    z = np.asarray(z, dtype=float)
    N = z.shape[-1]
    if N > basis.n_modes:
        raise ValidationError(f"系数长度 {N} 超出模态个数 {basis.n_modes}")
    return basis.mean + z @ basis.modes[:, :N].T


def energy_error_identity(basis: ReducedBasis, snapshot_set: SnapshotSet,
                          N: int) -> Tuple[float, float]:
    """
    训练集能量恒等式

    Returns:
        (lhs, rhs)，lhs 为均方投影误差，rhs = Σ_{j>N} λ_j
    """
    if not 0 <= N <= basis.eigenvalues.size:
        raise ValidationError(f"N = {N} 超出谱长度 {basis.eigenvalues.size}")
    n_used = min(N, basis.n_modes)
    Z = project(basis, snapshot_set.data, n_used)
    residual = snapshot_set.data - reconstruct(basis, Z)
    lhs = float(np.mean(np.sum(basis.weights * residual ** 2, axis=1)))
    rhs = float(np.sum(basis.eigenvalues[N:]))
    return lhs, rhs


def training_error_curve(basis: ReducedBasis, snapshot_set: SnapshotSet) -> np.ndarray:
    """N = 0..n_modes 时的训练集均方重构误差"""
    return np.array([
        energy_error_identity(basis, snapshot_set, N)[0]
        for N in range(basis.n_modes + 1)
    ])


def save_coefficients(basis: ReducedBasis, snapshot_set: SnapshotSet, path) -> Path:
    """训练快照在全部模态上的投影系数 CSV: t,z_1,...,z_n"""
    Z = project(basis, snapshot_set.data, basis.n_modes)
    frame = pd.DataFrame(Z, columns=[f"z_{j + 1}" for j in range(basis.n_modes)])
    frame.insert(0, "t", snapshot_set.times)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
