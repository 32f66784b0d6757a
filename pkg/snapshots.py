"""
快照模块
在均匀网格上解析生成对流-扩散方程的三类基准流形，并读写快照CSV
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from exceptions import ParseError, ValidationError
from numkit import check_finite, trapezoid_weights

CASES = ("advection", "diffusion", "advection_diffusion")
CSV_HEADER_FIELDS = ("case", "c_T", "c_D", "sigma0", "x_min", "x_max", "n_points")
CSV_FLOAT_FORMAT = "%.17g"


def _fmt(value: float) -> str:
    """17位有效数字，保证读回后逐位相等"""
    return CSV_FLOAT_FORMAT % value


@dataclass(frozen=True)
class Grid1D:
    """一维均匀网格 Ω = [x_min, x_max]"""
    x_min: float = -1.0
    x_max: float = 3.0
    n_points: int = 256

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValidationError(f"网格区间无效: [{self.x_min}, {self.x_max}]")
        if self.n_points < 8:
            raise ValidationError(f"网格点数至少为 8，当前 {self.n_points}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_points, self.dx)

    def refined(self, factor: int) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, factor * (self.n_points - 1) + 1)


@dataclass(frozen=True)
class AdvDiffConfig:
    """方程系数：对流速度 c_T、扩散系数 c_D、初始高斯宽度 sigma0、终止时间"""
    c_T: float = 4.0
    c_D: float = 0.0
    sigma0: float = 0.1
    T_final: float = 0.5

    def __post_init__(self):
        if self.c_D < 0:
            raise ValidationError(f"扩散系数必须非负: c_D = {self.c_D}")
        if self.sigma0 <= 0:
            raise ValidationError(f"sigma0 必须为正: {self.sigma0}")
        if self.T_final <= 0:
            raise ValidationError(f"T_final 必须为正: {self.T_final}")


@dataclass
class SnapshotSet:
    """快照集合：data 的每一行对应 times 中的一个时刻"""
    grid: Grid1D
    times: np.ndarray
    data: np.ndarray
    label: str
    cfg: AdvDiffConfig = field(default_factory=AdvDiffConfig)

    def __post_init__(self):
        self.times = check_finite(self.times, "时间")
        self.data = check_finite(self.data, "快照矩阵")
        if self.data.ndim != 2 or self.data.shape[1] != self.grid.n_points:
            raise ValidationError(
                f"快照矩阵形状 {self.data.shape} 与网格点数 {self.grid.n_points} 不一致"
            )
        if self.times.shape != (self.data.shape[0],):
            raise ValidationError("时间个数与快照行数不一致")
        if self.data.shape[0] < 2:
            raise ValidationError("快照集合至少需要 2 个快照")
        if np.any(np.diff(self.times) < 0):
            raise ValidationError("时间必须有序")

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[0]

    def subset(self, rows) -> "SnapshotSet":
        return SnapshotSet(self.grid, self.times[rows], self.data[rows], self.label, self.cfg)


def exact_solution(cfg: AdvDiffConfig, x, t: float):
    """
    自由空间高斯解析解
        u(x, t) = (σ0 / s) exp(-(x - c_T t)^2 / (2 s^2)),  s^2 = σ0^2 + 2 c_D t

    Args:
        x: 标量或数组
        t: 时刻，必须非负
    """
    if t < 0:
        raise ValidationError(f"时刻必须非负: t = {t}")
    s2 = cfg.sigma0 ** 2 + 2.0 * cfg.c_D * t
    x = np.asarray(x, dtype=float)
    return cfg.sigma0 / np.sqrt(s2) * np.exp(-(x - cfg.c_T * t) ** 2 / (2.0 * s2))


def build_snapshot_set(cfg: AdvDiffConfig, grid: Grid1D, n_snapshots: int,
                       case: str) -> SnapshotSet:
    """在 [0, T_final] 上均匀取 n_snapshots 个时刻 (含端点) 生成快照"""
    if n_snapshots < 2:
        raise ValidationError(f"快照数至少为 2，当前 {n_snapshots}")
    times = np.linspace(0.0, cfg.T_final, n_snapshots)
    x = grid.points
    data = np.vstack([exact_solution(cfg, x, t) for t in times])
    return SnapshotSet(grid, times, data, case, cfg)


def relative_l2_error(u, u_hat, grid: Grid1D) -> np.ndarray:
    """逐行相对 L2(Ω) 误差 ||u - û|| / ||u||"""
    u = np.atleast_2d(u)
    u_hat = np.atleast_2d(u_hat)
    w = grid.weights
    num = np.sqrt(np.sum(w * (u - u_hat) ** 2, axis=1))
    den = np.sqrt(np.sum(w * u ** 2, axis=1))
    return num / np.maximum(den, np.finfo(float).tiny)


def save_csv(snapshot_set: SnapshotSet, path) -> Path:
    """
    保存快照CSV
    第1行: "# case,c_T,c_D,sigma0,x_min,x_max,n_points" 各字段取值
    第2行: 网格坐标
    其余行: t_i, u(x_1), ..., u(x_D)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g, c = snapshot_set.grid, snapshot_set.cfg
    header = [snapshot_set.label, _fmt(c.c_T), _fmt(c.c_D), _fmt(c.sigma0),
              _fmt(g.x_min), _fmt(g.x_max), str(g.n_points)]

    rows = pd.DataFrame(np.column_stack([snapshot_set.times, snapshot_set.data]))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("# " + ",".join(header) + "\n")
        for frame in (pd.DataFrame([g.points]), rows):
            frame.to_csv(f, header=False, index=False, float_format=CSV_FLOAT_FORMAT,
                         lineterminator="\n")
    return path


def _parse_floats(cells, line_no: int) -> np.ndarray:
    try:
        return np.array([float(c) for c in cells])
    except ValueError:
        raise ParseError("存在非数值单元格", line_no)


def load_csv(path) -> SnapshotSet:
    """读取 save_csv 写出的快照文件，逐行解析以便报出出错行号"""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))

    if not rows:
        raise ParseError(f"空文件: {path}", 1)

    first = rows[0]
    if not first or not first[0].startswith("#") or len(first) != len(CSV_HEADER_FIELDS):
        raise ParseError(f"表头格式错误，应为 # {','.join(CSV_HEADER_FIELDS)}", 1)
    label = first[0].lstrip("#").strip()
    if label not in CASES:
        raise ParseError(f"未知的算例: {label}", 1)
    try:
        c_T, c_D, sigma0, x_min, x_max = (float(v) for v in first[1:6])
        n_points = int(first[6])
        grid = Grid1D(x_min, x_max, n_points)
    except ValueError as e:
        raise ParseError(f"表头字段无效: {e}", 1)

    if len(rows) < 2:
        raise ParseError("缺少网格行", 2)
    if len(rows[1]) != n_points:
        raise ParseError(f"网格行有 {len(rows[1])} 个值，表头为 {n_points}", 2)
    x = _parse_floats(rows[1], 2)
    if not np.allclose(x, grid.points, rtol=0, atol=1e-12 * (x_max - x_min)):
        raise ParseError("网格坐标与表头不一致", 2)

    times, data = [], []
    for line_no, row in enumerate(rows[2:], start=3):
        if len(row) != n_points + 1:
            raise ParseError(f"该行有 {len(row)} 列，应为 {n_points + 1}", line_no)
        values = _parse_floats(row, line_no)
        times.append(values[0])
        data.append(values[1:])

    if len(times) < 2:
        raise ParseError("快照数少于 2", len(rows))

    times = np.array(times)
    T_final = float(times[-1]) if times[-1] > 0 else AdvDiffConfig.T_final
    cfg = AdvDiffConfig(c_T=c_T, c_D=c_D, sigma0=sigma0, T_final=T_final)
    return SnapshotSet(grid, times, np.vstack(data), label, cfg)
