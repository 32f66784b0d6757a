"""
配准模块
为每个快照拟合单调空间映射 Φ_t (Legendre 仿射族或一维最优传输)，
使 u_t ∘ Φ_t ≈ u_ref，随后在变换流形上做 POD 并通过映射反演重构
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial import Legendre
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize

from exceptions import MonotonicityError, ValidationError
from latent_regression import krr_fit, krr_predict
from numkit import check_finite, interp_eval, make_interpolant, monotone_invert, quadrature
from pod import ReducedBasis, reconstruct
from snapshots import Grid1D, SnapshotSet

MAP_KINDS = ("legendre", "ot")


@dataclass(frozen=True)
class RegistrationHyper:
    """配准超参数：M 个 Legendre 基、H2 权重 ξ、Jacobian 约束常数 ε, C, δ"""
    M: int = 6
    xi: float = 1e-4
    eps_jac: float = 0.1
    C_jac: float = 0.025
    delta: float = 1e-3
    penalty_weight: float = 1e3
    max_iters: int = 500
    grad_tol: float = 1e-8
    interp: str = "cubic"
    audit_refine: int = 4
    min_slope: float = 1e-6

    def __post_init__(self):
        if self.M < 1:
            raise ValidationError(f"Legendre 基个数必须为正: M = {self.M}")
        if self.xi < 0:
            raise ValidationError(f"xi 必须非负: {self.xi}")
        if not 0 < self.eps_jac < 1:
            raise ValidationError(f"eps_jac 必须位于 (0, 1): {self.eps_jac}")
        for name in ("C_jac", "delta", "grad_tol", "min_slope"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} 必须为正: {getattr(self, name)}")
        if self.penalty_weight < 0 or self.max_iters < 1 or self.audit_refine < 1:
            raise ValidationError("penalty_weight / max_iters / audit_refine 取值无效")


@dataclass(frozen=True)
class RegistrationDiagnostics:
    misfit: float
    h2_term: float
    barrier_integral: float
    clamped_nodes: int
    iterations: int = 0
    history: Tuple[float, ...] = ()


@dataclass(frozen=True)
class RegistrationMap:
    """
    单个参数值的配准映射

    legendre: Φ(x) = x + Σ_m a_m P_m(ξ(x))
    ot: ot_map_on_grid 为 T = F_ref⁻¹∘F_t，ot_inverse_on_grid 为 Φ = T⁻¹
    """
    kind: str
    t_value: float
    ref_t: float
    coeffs: Optional[np.ndarray] = None
    ot_map_on_grid: Optional[np.ndarray] = None
    ot_inverse_on_grid: Optional[np.ndarray] = None
    diagnostics: Optional[RegistrationDiagnostics] = field(default=None, compare=False)


def _basis(m: int, grid: Grid1D) -> Legendre:
    return Legendre.basis(m, domain=[grid.x_min, grid.x_max])


def legendre_basis(m: int, x, grid: Grid1D):
    """P_m(ξ(x))，ξ 把 Ω 仿射映射到 [-1, 1]"""
    if m < 0:
        raise ValidationError(f"Legendre 阶数必须非负: {m}")
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * (grid.x_max - grid.x_min)
    if np.any(x < grid.x_min - tol) or np.any(x > grid.x_max + tol):
        raise ValidationError("legendre_basis 的自变量必须位于 Ω 内")
    return _basis(m, grid)(x)


def legendre_tables(x, grid: Grid1D, M: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """基函数及其一阶、二阶导数在 x 处的取值表 (len(x) × M)"""
    x = np.asarray(x, dtype=float)
    polys = [_basis(m, grid) for m in range(M)]
    P = np.column_stack([p(x) for p in polys])
    dP = np.column_stack([p.deriv(1)(x) for p in polys])
    d2P = np.column_stack([p.deriv(2)(x) for p in polys])
    return P, dP, d2P


class _RegistrationProblem:
    """单个快照的配准目标：失配 + ξ|Φ|²_H2 + 外罚函数"""

    def __init__(self, u_t, u_ref, hyper: RegistrationHyper, grid: Grid1D):
        self.x = grid.points
        self.w = grid.weights
        self.grid = grid
        self.hyper = hyper
        self.u_ref = check_finite(u_ref, "参考快照")
        u_t = check_finite(u_t, "快照")
        if u_t.shape != self.x.shape or self.u_ref.shape != self.x.shape:
            raise ValidationError("快照与网格长度不一致")
        self.f = make_interpolant(self.x, u_t, hyper.interp)
        self.df = self.f.derivative()
        self.P, self.dP, self.d2P = legendre_tables(self.x, grid, hyper.M)

    def terms(self, a: np.ndarray):
        h = self.hyper
        phi = self.x + self.P @ a
        clamped = (phi < self.grid.x_min) | (phi > self.grid.x_max)
        phi_c = np.clip(phi, self.grid.x_min, self.grid.x_max)
        residual = self.f(phi_c) - self.u_ref

        J = 1.0 + self.dP @ a
        phi_xx = self.d2P @ a
        e_low = np.exp(np.minimum((h.eps_jac - J) / h.C_jac, 700.0))
        e_high = np.exp(np.minimum((J - 1.0 / h.eps_jac) / h.C_jac, 700.0))

        misfit = float(np.sum(self.w * residual ** 2))
        h2 = float(np.sum(self.w * phi_xx ** 2))
        barrier = float(np.sum(self.w * (e_low + e_high)))
        return phi_c, clamped, residual, phi_xx, e_low, e_high, misfit, h2, barrier

    def evaluate(self, a) -> Tuple[float, np.ndarray]:
        h = self.hyper
        a = np.asarray(a, dtype=float)
        phi_c, clamped, residual, phi_xx, e_low, e_high, misfit, h2, barrier = self.terms(a)
        excess = max(0.0, barrier - h.delta)
        value = misfit + h.xi * h2 + h.penalty_weight * excess ** 2

        slope = np.where(clamped, 0.0, self.df(phi_c))
        grad = 2.0 * self.P.T @ (self.w * residual * slope)
        grad += 2.0 * h.xi * self.d2P.T @ (self.w * phi_xx)
        if excess > 0:
            d_barrier = self.dP.T @ (self.w * (e_high - e_low) / h.C_jac)
            grad += 2.0 * h.penalty_weight * excess * d_barrier
        return value, grad

    def diagnostics(self, a, iterations: int = 0, history=()) -> RegistrationDiagnostics:
        _, clamped, _, _, _, _, misfit, h2, barrier = self.terms(np.asarray(a, dtype=float))
        return RegistrationDiagnostics(misfit, h2, barrier, int(np.sum(clamped)),
                                       iterations, tuple(history))


def registration_objective(a, u_t, u_ref, hyper: RegistrationHyper,
                           grid: Grid1D) -> Tuple[float, np.ndarray]:
    """
    配准目标函数及其解析梯度

    value = ||u_t∘Φ - u_ref||² + ξ ∫(Φ'')² + penalty * max(0, ∫barrier - δ)²
    Φ 超出 Ω 时截断到边界，截断节点对梯度无贡献
    """
    a = check_finite(a, "配准系数")
    if a.shape != (hyper.M,):
        raise ValidationError(f"配准系数长度应为 {hyper.M}")
    return _RegistrationProblem(u_t, u_ref, hyper, grid).evaluate(a)


def map_values(reg_map: RegistrationMap, x, grid: Grid1D) -> np.ndarray:
    """Φ(x)"""
    x = np.asarray(x, dtype=float)
    if reg_map.kind == "legendre":
        P, _, _ = legendre_tables(x, grid, reg_map.coeffs.size)
        return x + P @ reg_map.coeffs
    if reg_map.kind == "ot":
        return interp_eval(grid.points, reg_map.ot_inverse_on_grid, x, "pchip")
    raise ValidationError(f"未知的映射类型: {reg_map.kind}")


def map_on_grid(reg_map: RegistrationMap, grid: Grid1D) -> np.ndarray:
    return map_values(reg_map, grid.points, grid)


def min_slope(reg_map: RegistrationMap, grid: Grid1D, refine: int = 4) -> float:
    """在加密网格上检查 Φ' 的最小值"""
    fine = grid.refined(refine)
    x = fine.points
    if reg_map.kind == "legendre":
        _, dP, _ = legendre_tables(x, grid, reg_map.coeffs.size)
        return float(np.min(1.0 + dP @ reg_map.coeffs))
    values = map_values(reg_map, x, grid)
    return float(np.min(np.diff(values) / fine.dx))


def audit_monotone(reg_map: RegistrationMap, grid: Grid1D, hyper: RegistrationHyper):
    slope = min_slope(reg_map, grid, hyper.audit_refine)
    if slope <= hyper.min_slope:
        raise MonotonicityError(
            f"t = {reg_map.t_value} 的配准映射不单调 (最小斜率 {slope:.3e})，"
            f"请增大 xi 或 penalty_weight"
        )


def displacement(reg_map: RegistrationMap, grid: Grid1D) -> np.ndarray:
    """网格上的位移 Φ(x) - x"""
    return map_on_grid(reg_map, grid) - grid.points


def mean_shift(reg_map: RegistrationMap, u_ref, grid: Grid1D) -> float:
    """以参考快照为密度加权的平均位移 ∫(Φ(x) - x) u_ref / ∫u_ref"""
    u_ref = np.abs(np.asarray(u_ref, dtype=float))
    return float(np.sum(grid.weights * u_ref * displacement(reg_map, grid))
                 / np.sum(grid.weights * u_ref))


def _ref_index(times: np.ndarray, ref_t: float) -> int:
    hits = np.flatnonzero(np.isclose(times, ref_t, rtol=0.0, atol=1e-12))
    if hits.size == 0:
        raise ValidationError(f"参考时刻 {ref_t} 不在快照时刻中")
    return int(hits[0])


def _fit_single(problem: _RegistrationProblem, guess: np.ndarray,
                hyper: RegistrationHyper) -> Tuple[np.ndarray, RegistrationDiagnostics]:
    history = [problem.evaluate(guess)[0]]
    result = minimize(
        problem.evaluate, guess, jac=True, method="L-BFGS-B",
        callback=lambda xk: history.append(problem.evaluate(xk)[0]),
        options={"maxiter": hyper.max_iters, "gtol": hyper.grad_tol, "ftol": 1e-15},
    )
    a = np.asarray(result.x, dtype=float)
    return a, problem.diagnostics(a, int(result.nit), history)


def fit_registration(snapshot_set: SnapshotSet, hyper: RegistrationHyper = RegistrationHyper(),
                     ref_t: float = 0.0) -> List[RegistrationMap]:
    """
    逐快照拟合 Legendre 配准映射

    从参考时刻向两侧推进，用相邻快照的系数热启动，
    并按加权平均位移外推常数项；参考快照的映射固定为恒等映射
    """
    times, data, grid = snapshot_set.times, snapshot_set.data, snapshot_set.grid
    i_ref = _ref_index(times, ref_t)
    u_ref = data[i_ref]
    x, w = grid.points, grid.weights
    density = np.abs(u_ref) / np.sum(w * np.abs(u_ref))
    P, _, _ = legendre_tables(x, grid, hyper.M)
    shift_of = lambda a: float(np.sum(w * density * (P @ a)))

    coeffs = {i_ref: np.zeros(hyper.M)}
    diags = {i_ref: _RegistrationProblem(u_ref, u_ref, hyper, grid).diagnostics(coeffs[i_ref])}

    for path in (range(i_ref + 1, len(times)), range(i_ref - 1, -1, -1)):
        previous = [i_ref]
        for i in path:
            guess = coeffs[previous[-1]].copy()
            if len(previous) >= 2:
                i1, i0 = previous[-1], previous[-2]
                rate = (shift_of(coeffs[i1]) - shift_of(coeffs[i0])) / (times[i1] - times[i0])
                guess[0] += rate * (times[i] - times[i1])
            problem = _RegistrationProblem(data[i], u_ref, hyper, grid)
            coeffs[i], diags[i] = _fit_single(problem, guess, hyper)
            previous.append(i)

    maps = [RegistrationMap("legendre", float(times[i]), float(times[i_ref]),
                            coeffs=coeffs[i], diagnostics=diags[i])
            for i in range(len(times))]
    for reg_map in maps:
        audit_monotone(reg_map, grid, hyper)

    worst = max(m.diagnostics.misfit for m in maps)
    print(f"[配准] {snapshot_set.label}: {len(maps)} 个 Legendre 映射, 最大失配 {worst:.3e}")
    return maps


def ot_map_1d(u_t, u_ref, grid: Grid1D, t_value: float = 0.0, ref_t: float = 0.0,
              density_floor: float = 1e-8) -> RegistrationMap:
    """
    一维最优传输映射 (单调重排) T = F_ref⁻¹ ∘ F_t

    density_floor 为相对峰值的密度下限，保证累积分布严格递增
    """
    x = grid.points
    cdfs = []
    for name, u in (("快照", u_t), ("参考快照", u_ref)):
        u = check_finite(u, name)
        peak = np.max(np.abs(u)) if u.size else 0.0
        if np.min(u) < -1e-12 * max(peak, 1.0):
            raise ValidationError(f"{name} 必须非负")
        if quadrature(np.maximum(u, 0.0), grid.dx) <= 0.0:
            raise ValidationError(f"{name} 总质量为零")
        rho = np.maximum(u, 0.0) / peak + density_floor
        F = cumulative_trapezoid(rho, x, initial=0.0)
        cdfs.append(F / F[-1])
    F_t, F_ref = cdfs
    F_t[-1] = F_ref[-1] = 1.0

    forward = monotone_invert(x, F_ref, F_t)
    inverse = monotone_invert(x, F_t, F_ref)
    return RegistrationMap("ot", float(t_value), float(ref_t),
                           ot_map_on_grid=np.asarray(forward),
                           ot_inverse_on_grid=np.asarray(inverse))


def fit_ot_registration(snapshot_set: SnapshotSet, ref_t: float = 0.0,
                        hyper: RegistrationHyper = RegistrationHyper()) -> List[RegistrationMap]:
    """对每个快照计算到参考快照的 OT 映射"""
    i_ref = _ref_index(snapshot_set.times, ref_t)
    u_ref = snapshot_set.data[i_ref]
    maps = [ot_map_1d(u, u_ref, snapshot_set.grid, float(t), float(snapshot_set.times[i_ref]))
            for t, u in zip(snapshot_set.times, snapshot_set.data)]
    for reg_map in maps:
        audit_monotone(reg_map, snapshot_set.grid, hyper)
    print(f"[配准] {snapshot_set.label}: {len(maps)} 个 OT 映射")
    return maps


def _compose(u, phi: np.ndarray, grid: Grid1D, interp: str) -> Tuple[np.ndarray, int]:
    """u ∘ Φ，Φ 超出 Ω 的节点截断到边界"""
    n_clamped = int(np.sum((phi < grid.x_min) | (phi > grid.x_max)))
    phi_c = np.clip(phi, grid.x_min, grid.x_max)
    return interp_eval(grid.points, u, phi_c, interp), n_clamped


def transform_manifold(snapshot_set: SnapshotSet, maps: List[RegistrationMap],
                       interp: str = "cubic") -> SnapshotSet:
    """变换流形 𝓣 = {u_t ∘ Φ_t}"""
    if len(maps) != snapshot_set.n_snapshots:
        raise ValidationError(f"映射个数 {len(maps)} 与快照个数 {snapshot_set.n_snapshots} 不一致")
    grid = snapshot_set.grid
    rows, clamped = [], 0
    for u, reg_map in zip(snapshot_set.data, maps):
        row, n = _compose(u, map_on_grid(reg_map, grid), grid, interp)
        rows.append(row)
        clamped += n
    if clamped:
        print(f"[配准] 变换流形: {clamped} 个节点被截断到边界")
    return replace(snapshot_set, data=np.vstack(rows))


def reconstruct_registered(basis: ReducedBasis, reg_map: RegistrationMap, z,
                           grid: Grid1D, interp: str = "cubic") -> np.ndarray:
    """
    由变换流形上的隐坐标重构原始快照：u_t(x) ≈ v(Φ_t⁻¹(x))，v = ū + Σ z_j ψ_j
    Φ_t⁻¹ 逐节点用 monotone_invert 求解，超出值域的节点截断到边界
    """
    v = reconstruct(basis, z)
    phi = map_on_grid(reg_map, grid)
    if np.any(np.diff(phi) <= 0):
        raise MonotonicityError(f"t = {reg_map.t_value} 的配准映射在网格上不单调")
    x = grid.points
    targets = np.clip(x, phi[0], phi[-1])
    n_clamped = int(np.sum(targets != x))
    if n_clamped and reg_map.kind == "ot":
        print(f"[警告] t = {reg_map.t_value}: {n_clamped} 个节点超出 Φ 的值域，已截断")
    x_inv = monotone_invert(x, phi, targets)
    return interp_eval(x, v, np.clip(x_inv, x[0], x[-1]), interp)


def map_at_times(maps: List[RegistrationMap], times_query, rbf_shape: Optional[float] = None,
                 ridge: float = 1e-10) -> List[RegistrationMap]:
    """用核岭回归把 Legendre 系数 â(t) 推广到新的参数值"""
    if any(m.kind != "legendre" for m in maps):
        raise ValidationError("只有 Legendre 映射可以做系数回归")
    ts = np.array([m.t_value for m in maps])
    A = np.vstack([m.coeffs for m in maps])
    model = krr_fit(ts, A, rbf_shape, ridge)
    predicted = krr_predict(model, times_query)
    ref_t = maps[0].ref_t
    return [RegistrationMap("legendre", float(t), ref_t, coeffs=a)
            for t, a in zip(np.ravel(times_query), predicted)]
