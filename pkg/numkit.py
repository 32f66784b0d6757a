"""
数值工具模块
对称特征分解、伪逆、线性求解、求积、插值与单调反演
所有函数均为纯函数，可在线程间自由共享结果
"""
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, PchipInterpolator, make_interp_spline

from exceptions import (
    ConvergenceError,
    ExtrapolationError,
    NumericalError,
    PSDViolationError,
    ValidationError,
)

SYMMETRY_TOL = 1e-10
RANK_TOL = 1e-10
INTERP_METHODS = ("pchip", "cubic", "linear")


@dataclass(frozen=True)
class SpectralDecomposition:
    """对称矩阵的谱分解，特征值降序，特征向量按列存放"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def check_finite(A, name: str = "矩阵") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} 含有 NaN/Inf")
    return A


def check_symmetric(A, name: str = "矩阵", tol: float = SYMMETRY_TOL) -> np.ndarray:
    A = check_finite(A, name)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} 必须是方阵，当前形状 {A.shape}")
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    if np.linalg.norm(A - A.T) > tol * scale:
        raise ValidationError(f"{name} 不对称")
    return A


def sym_eig(A, method: str = "lapack", max_sweeps: int = 100) -> SpectralDecomposition:
    """
    对称矩阵特征分解

    Args:
        A: 对称方阵
        method: "lapack" (scipy.linalg.eigh) 或 "jacobi" (循环Jacobi)
        max_sweeps: Jacobi 最大扫描次数

    Returns:
        特征值降序排列的 SpectralDecomposition
    """
    A = check_symmetric(A)
    A = 0.5 * (A + A.T)

    if method == "jacobi":
        eigenvalues, eigenvectors = _jacobi_eig(A, max_sweeps)
    elif method == "lapack":
        try:
            eigenvalues, eigenvectors = scipy.linalg.eigh(A)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"eigh 失败: {e}")
    else:
        raise ValidationError(f"未知的特征分解方法: {method}")

    order = np.argsort(-eigenvalues, kind="stable")
    return SpectralDecomposition(eigenvalues[order], eigenvectors[:, order])


def _jacobi_eig(A: np.ndarray, max_sweeps: int):
    """循环Jacobi旋转，返回未排序的特征值与特征向量"""
    A = A.copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        return np.diag(A).copy(), V

    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(A ** 2) - np.sum(np.diag(A) ** 2))
        if off <= 1e-15 * scale:
            return np.diag(A).copy(), V

        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                vec_p = V[:, p].copy()
                vec_q = V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q

    raise ConvergenceError("Jacobi 特征分解未收敛", max_sweeps)


def pseudo_inverse(A, rank_tol: float = RANK_TOL, method: str = "lapack") -> np.ndarray:
    """
    对称半正定矩阵的 Moore-Penrose 伪逆

    特征值低于 rank_tol * λ_max 视为零；
    负特征值超出 -rank_tol * λ_max 时报错
    """
    dec = sym_eig(A, method=method)
    lam = dec.eigenvalues
    lam_max = lam[0] if lam.size else 0.0
    if lam_max <= 0.0:
        if lam.size and lam[-1] < 0.0:
            raise PSDViolationError(f"矩阵有负特征值 {lam[-1]:.3e}")
        return np.zeros_like(np.asarray(A, dtype=float))

    cutoff = rank_tol * lam_max
    if lam[-1] < -cutoff:
        raise PSDViolationError(
            f"矩阵不是半正定的: λ_min = {lam[-1]:.3e}, λ_max = {lam_max:.3e}"
        )

    keep = lam > cutoff
    V = dec.eigenvectors[:, keep]
    return (V / lam[keep]) @ V.T


def solve_linear(A, b, assume_a: str = "gen") -> np.ndarray:
    """稠密线性方程组求解，奇异时抛出 NumericalError"""
    try:
        return scipy.linalg.solve(check_finite(A), check_finite(b), assume_a=assume_a)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise NumericalError(f"线性方程组奇异: {e}")


def trapezoid_weights(n_points: int, dx: float) -> np.ndarray:
    """均匀网格上的复合梯形求积权重"""
    if n_points < 2:
        raise ValidationError("梯形求积至少需要 2 个采样点")
    w = np.full(n_points, float(dx))
    w[0] = w[-1] = 0.5 * dx
    return w


def quadrature(values, dx: float) -> float:
    """均匀网格上的复合梯形积分"""
    values = check_finite(values, "被积函数")
    if values.shape[-1] < 2:
        raise ValidationError("梯形求积至少需要 2 个采样点")
    return float(trapezoid(values, dx=dx))


def _check_grid(grid, values) -> tuple:
    grid = check_finite(grid, "网格")
    values = check_finite(values, "网格值")
    if grid.ndim != 1 or grid.size < 2:
        raise ValidationError("网格必须是至少含 2 个点的一维数组")
    if values.shape[0] != grid.size:
        raise ValidationError(f"网格长度 {grid.size} 与数值长度 {values.shape[0]} 不一致")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("网格必须严格递增")
    return grid, values


def make_interpolant(grid, values, method: str = "pchip"):
    """
    构造分段三次插值函数 (支持 .derivative())

    Args:
        method: "pchip" 单调保形 (Fritsch-Carlson)，"cubic" 三次样条，"linear" 线性
    """
    grid, values = _check_grid(grid, values)
    if method == "pchip":
        return PchipInterpolator(grid, values, extrapolate=True)
    if method == "cubic":
        return CubicSpline(grid, values)
    if method == "linear":
        return make_interp_spline(grid, values, k=1)
    raise ValidationError(f"未知的插值方法: {method}，可选 {INTERP_METHODS}")


def interp_eval(grid, values, query, method: str = "pchip") -> np.ndarray:
    """
    在网格范围内插值求值，网格节点处精确

    Raises:
        ExtrapolationError: 查询点超出 [grid_min, grid_max]
    """
    grid, values = _check_grid(grid, values)
    query = check_finite(query, "查询点")
    tol = 1e-12 * (grid[-1] - grid[0])
    if np.any(query < grid[0] - tol) or np.any(query > grid[-1] + tol):
        raise ExtrapolationError(
            f"查询点超出网格范围 [{grid[0]}, {grid[-1]}]，请先截断"
        )
    f = make_interpolant(grid, values, method)
    return np.asarray(f(np.clip(query, grid[0], grid[-1])), dtype=float)


def monotone_invert(grid, f_on_grid, y, tol: float = 1e-10) -> Union[float, np.ndarray]:
    """
    单调递增函数的反函数：对 PCHIP 插值做区间二分

    Args:
        grid: 严格递增网格
        f_on_grid: 网格上严格递增的函数值
        y: 目标值 (标量或数组)，必须位于 [f_min, f_max]

    Returns:
        x 使得 |f(x) - y| < tol
    """
    grid, f_on_grid = _check_grid(grid, f_on_grid)
    if np.any(np.diff(f_on_grid) <= 0):
        raise ValidationError("monotone_invert 要求函数值严格递增")

    scalar = np.ndim(y) == 0
    y = check_finite(np.atleast_1d(y), "目标值")
    if np.any(y < f_on_grid[0]) or np.any(y > f_on_grid[-1]):
        raise ValidationError(
            f"目标值超出函数值域 [{f_on_grid[0]}, {f_on_grid[-1]}]"
        )

    f = make_interpolant(grid, f_on_grid, "pchip")
    lo = np.full(y.shape, grid[0])
    hi = np.full(y.shape, grid[-1])
    xtol = 4.0 * np.finfo(float).eps * max(abs(grid[0]), abs(grid[-1]), 1.0)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = f(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= xtol:
            break

    x = 0.5 * (lo + hi)
    if np.max(np.abs(f(x) - y)) >= tol:
        raise ConvergenceError("单调反演未达到精度", 200)
    return float(x[0]) if scalar else x
