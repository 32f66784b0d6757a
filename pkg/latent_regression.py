"""
隐变量回归模块
逆多二次 RBF 核岭回归：参数 t -> 隐坐标 / 配准系数，用于样本外评估
"""
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.kernel_ridge import KernelRidge

from exceptions import NumericalError, ValidationError
from numkit import check_finite

DEFAULT_RIDGE = 1e-10


@dataclass(frozen=True)
class KrrModel:
    """核岭回归模型，dual_weights 满足 (G + λ_r I) α = Y"""
    centers: np.ndarray
    dual_weights: np.ndarray
    rbf_shape: float
    ridge: float

    @property
    def output_dim(self) -> int:
        return self.dual_weights.shape[1]


def imq_kernel(a, b, rbf_shape: float) -> np.ndarray:
    """逆多二次核 k(t, t') = 1 / sqrt(1 + (ε |t - t'|)^2)"""
    a = np.asarray(a, dtype=float).reshape(-1, 1)
    b = np.asarray(b, dtype=float).reshape(1, -1)
    return 1.0 / np.sqrt(1.0 + (rbf_shape * (a - b)) ** 2)


def default_rbf_shape(ts) -> float:
    """ε_k = 2 / (t_max - t_min)"""
    ts = np.asarray(ts, dtype=float)
    span = ts.max() - ts.min() if ts.size else 0.0
    return 2.0 / span if span > 0 else 1.0


def krr_fit(ts, Y, rbf_shape: Optional[float] = None,
            ridge: float = DEFAULT_RIDGE) -> KrrModel:
    """
    拟合核岭回归

    Args:
        ts: 互不相同的训练参数
        Y: n × output_dim 目标 (一维时视为单列)
        rbf_shape: 核形状参数，None 时取默认值
        ridge: 岭参数 λ_r >= 0
    """
    ts = check_finite(ts, "训练参数").ravel()
    Y = check_finite(Y, "回归目标")
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != ts.size:
        raise ValidationError(f"目标行数 {Y.shape[0]} 与训练参数个数 {ts.size} 不一致")
    if ridge < 0:
        raise ValidationError(f"ridge 必须非负: {ridge}")
    if np.unique(ts).size != ts.size:
        raise ValidationError("训练参数必须互不相同")
    if rbf_shape is None:
        rbf_shape = default_rbf_shape(ts)
    if not rbf_shape > 0:
        raise ValidationError(f"rbf_shape 必须为正: {rbf_shape}")

    G = imq_kernel(ts, ts, rbf_shape)
    estimator = KernelRidge(alpha=ridge, kernel="precomputed")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        estimator.fit(G, Y)
    if any("Singular" in str(w.message) for w in caught):
        raise NumericalError("核岭回归的线性系统奇异")

    dual = np.asarray(estimator.dual_coef_, dtype=float).reshape(ts.size, -1)
    return KrrModel(ts.copy(), dual, float(rbf_shape), float(ridge))


def krr_predict(model: KrrModel, t_query) -> np.ndarray:
    """预测矩阵 k(t_query, centers) · α，超出训练区间时打印警告"""
    t_query = check_finite(t_query, "查询参数").ravel()
    lo, hi = model.centers.min(), model.centers.max()
    outside = np.sum((t_query < lo) | (t_query > hi))
    if outside:
        print(f"[警告] 核岭回归外推: {outside} 个查询点在训练区间 [{lo}, {hi}] 之外")
    Kq = imq_kernel(t_query, model.centers, model.rbf_shape)
    return Kq @ model.dual_weights
