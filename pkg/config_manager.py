"""
配置管理器 - JSON 配置加载、校验与持久化
每个模块一个 JSON 对象，未知键直接报错
"""
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import List, Optional, Union, get_args, get_origin

import config
from autoencoder import LOSS_KINDS, TrainConfig
from exceptions import ParseError, ValidationError
from kpca import KernelHyper
from pod import INNER_PRODUCTS
from registration import RegistrationHyper
from snapshots import CASES, AdvDiffConfig, Grid1D


@dataclass
class GridConfig:
    x_min: float = config.X_MIN
    x_max: float = config.X_MAX
    n_points: int = config.N_POINTS

    def build(self) -> Grid1D:
        return Grid1D(self.x_min, self.x_max, self.n_points)


@dataclass
class CaseConfig:
    label: str
    c_T: float
    c_D: float


@dataclass
class KpcaConfig:
    k_neighbors: int = config.K_NEIGHBORS
    weight_scale: Optional[float] = config.WEIGHT_SCALE
    lle_reg: float = config.LLE_REG

    def build(self, inner_product: str) -> KernelHyper:
        return KernelHyper(self.k_neighbors, self.weight_scale, inner_product, self.lle_reg)


@dataclass
class RegistrationConfig:
    M: int = config.LEGENDRE_M
    xi: float = config.REG_XI
    eps_jac: float = config.REG_EPS
    C_jac: float = config.REG_C
    delta: float = config.REG_DELTA
    penalty_weight: float = config.REG_PENALTY
    max_iters: int = config.REG_MAX_ITERS
    grad_tol: float = config.REG_GRAD_TOL
    ref_t: float = config.REF_T

    def build(self) -> RegistrationHyper:
        return RegistrationHyper(self.M, self.xi, self.eps_jac, self.C_jac, self.delta,
                                 self.penalty_weight, self.max_iters, self.grad_tol)


@dataclass
class AutoencoderConfig:
    learning_rate: float = config.AE_LEARNING_RATE
    epochs: int = config.AE_EPOCHS
    batch_size: Optional[int] = None
    loss_kind: str = config.AE_LOSS_KIND
    lambda_reg: float = config.AE_LAMBDA_REG
    weighted_loss: bool = config.AE_WEIGHTED_LOSS

    def build(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, seed)


@dataclass
class KrrConfig:
    ridge: float = config.KRR_RIDGE
    rbf_shape: Optional[float] = config.KRR_RBF_SHAPE


@dataclass
class BenchConfig:
    """基准配置"""
    grid: GridConfig = field(default_factory=GridConfig)
    cases: List[CaseConfig] = field(default_factory=lambda: [
        CaseConfig(label, c_T, c_D) for label, c_T, c_D in config.CASES
    ])
    sigma0: float = config.SIGMA0
    T_final: float = config.T_FINAL
    n_train: int = config.N_TRAIN
    n_test: int = config.N_TEST
    N_sweep: List[int] = field(default_factory=lambda: list(config.N_SWEEP))
    inner_product: str = config.INNER_PRODUCT
    kpca: KpcaConfig = field(default_factory=KpcaConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    krr: KrrConfig = field(default_factory=KrrConfig)
    output_dir: str = str(config.OUTPUT_DIR)
    seed: int = config.SEED
    verbose: bool = True

    def case(self, label: str) -> CaseConfig:
        for c in self.cases:
            if c.label == label:
                return c
        raise ValidationError(f"未知的算例: {label}，可选 {[c.label for c in self.cases]}")

    def adv_diff(self, case: CaseConfig) -> AdvDiffConfig:
        return AdvDiffConfig(case.c_T, case.c_D, self.sigma0, self.T_final)

    def validate(self) -> "BenchConfig":
        """逐项检查约束，返回自身便于链式调用"""
        _check_fields(self)
        grid = self.grid.build()
        labels = [c.label for c in self.cases]
        if not labels:
            raise ValidationError("至少需要一个算例")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"算例名重复: {labels}")
        for c in self.cases:
            if c.label not in CASES:
                raise ValidationError(f"未知的算例: {c.label}，可选 {CASES}")
            self.adv_diff(c)
        if self.n_train < 2 or self.n_test < 2:
            raise ValidationError(f"n_train 与 n_test 至少为 2: {self.n_train}, {self.n_test}")
        if not self.N_sweep or min(self.N_sweep) < 1:
            raise ValidationError(f"N_sweep 必须为正整数列表: {self.N_sweep}")
        if max(self.N_sweep) > self.n_train - 1:
            raise ValidationError(
                f"N_sweep 最大值 {max(self.N_sweep)} 超过 n_train - 1 = {self.n_train - 1}"
            )
        if self.inner_product not in INNER_PRODUCTS:
            raise ValidationError(f"未知的内积: {self.inner_product}，可选 {INNER_PRODUCTS}")
        if not 1 <= self.kpca.k_neighbors < self.n_train:
            raise ValidationError(f"k_neighbors 必须位于 [1, n_train): {self.kpca.k_neighbors}")
        if self.autoencoder.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"未知的自编码器损失: {self.autoencoder.loss_kind}")
        if self.krr.ridge < 0:
            raise ValidationError(f"krr.ridge 必须非负: {self.krr.ridge}")
        if self.krr.rbf_shape is not None and not self.krr.rbf_shape > 0:
            raise ValidationError(f"krr.rbf_shape 必须为正: {self.krr.rbf_shape}")
        if self.kpca.lle_reg < 0:
            raise ValidationError(f"kpca.lle_reg 必须非负: {self.kpca.lle_reg}")
        if self.kpca.weight_scale is not None and not self.kpca.weight_scale > 0:
            raise ValidationError(f"kpca.weight_scale 必须为正: {self.kpca.weight_scale}")
        if not 0.0 <= self.registration.ref_t <= self.T_final:
            raise ValidationError(f"ref_t 必须位于 [0, T_final]: {self.registration.ref_t}")
        self.kpca.build(self.inner_product)
        self.registration.build()
        self.autoencoder.build(self.seed)
        if grid.n_points < 8:
            raise ValidationError("网格点数过少")
        return self


def _check_type(value, tp, where: str):
    """按字段注解检查 JSON 值的类型，嵌套 dataclass 另行递归"""
    if get_origin(tp) is Union:
        args = get_args(tp)
        if value is None and type(None) in args:
            return
        tp = next(a for a in args if a is not type(None))
    if get_origin(tp) is list:
        if not isinstance(value, list):
            raise ValidationError(f"配置项 {where} 必须是列表，当前 {value!r}")
        for i, item in enumerate(value):
            _check_type(item, get_args(tp)[0], f"{where}[{i}]")
        return
    if tp is bool:
        ok = isinstance(value, bool)
    elif tp is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif tp is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif tp is str:
        ok = isinstance(value, str)
    else:
        return
    if not ok:
        raise ValidationError(f"配置项 {where} 类型错误: 期望 {tp.__name__}，当前 {value!r}")


def _check_fields(obj, where: str = ""):
    for f in fields(obj):
        value = getattr(obj, f.name)
        name = f"{where}{f.name}"
        if is_dataclass(value):
            _check_fields(value, f"{name}.")
            continue
        _check_type(value, f.type, name)
        if isinstance(value, list):
            for i, item in enumerate(value):
                if is_dataclass(item):
                    _check_fields(item, f"{name}[{i}].")


_SECTIONS = {
    "grid": GridConfig,
    "kpca": KpcaConfig,
    "registration": RegistrationConfig,
    "autoencoder": AutoencoderConfig,
    "krr": KrrConfig,
}


def _check_keys(data: dict, cls, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValidationError(f"配置 {where} 中有未知键: {', '.join(unknown)}")


def config_from_dict(data: dict) -> BenchConfig:
    if not isinstance(data, dict):
        raise ValidationError("配置顶层必须是 JSON 对象")
    _check_keys(data, BenchConfig, "顶层")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValidationError(f"配置节 {key} 必须是 JSON 对象")
            _check_keys(value, _SECTIONS[key], key)
            kwargs[key] = _SECTIONS[key](**value)
        elif key == "cases":
            if not isinstance(value, list):
                raise ValidationError(f"cases 必须是 JSON 数组，当前 {value!r}")
            cases = []
            for i, item in enumerate(value):
                if not isinstance(item, dict):
                    raise ValidationError(f"cases[{i}] 必须是 JSON 对象")
                _check_keys(item, CaseConfig, f"cases[{i}]")
                try:
                    cases.append(CaseConfig(**item))
                except TypeError as e:
                    raise ValidationError(f"cases[{i}] 字段不完整: {e}")
            kwargs[key] = cases
        else:
            kwargs[key] = value
    try:
        return BenchConfig(**kwargs).validate()
    except TypeError as e:
        raise ValidationError(f"配置字段类型错误: {e}")


def default_config() -> BenchConfig:
    return BenchConfig().validate()


def load_config(path) -> BenchConfig:
    """加载 JSON 配置；path 为 "default" 时返回内置默认值"""
    if str(path) == "default":
        return default_config()
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"配置文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON 解析失败: {e.msg}", e.lineno)
    return config_from_dict(data)


def config_to_dict(cfg: BenchConfig) -> dict:
    return asdict(cfg)


def save_config(cfg: BenchConfig, path) -> Path:
    """保存配置"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(cfg), f, ensure_ascii=False, indent=2)
    return path
