"""
自编码器模块
tanh 全连接编码器-解码器 (D → D/2 → N → D/2 → D)，支持稀疏与收缩正则，
显式反向传播 + 全批量梯度下降训练，纯 numpy 实现
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from exceptions import ConvergenceError, DivergenceError, ParseError, ValidationError
from numkit import check_finite
from snapshots import SnapshotSet

LOSS_KINDS = ("vanilla", "sparse", "contractive")
CHECKPOINT_MAGIC = "# autoencoder checkpoint v1"

DataLike = Union[SnapshotSet, np.ndarray]


@dataclass(frozen=True)
class FeatureScaler:
    """逐特征把训练集取值范围线性映射到 [-1, 1]"""
    data_min: np.ndarray
    data_range: np.ndarray

    def transform(self, U) -> np.ndarray:
        return 2.0 * (np.asarray(U, dtype=float) - self.data_min) / self.data_range - 1.0

    def inverse_transform(self, V) -> np.ndarray:
        return self.data_min + 0.5 * (np.asarray(V, dtype=float) + 1.0) * self.data_range


def fit_scaler(data, range_floor: float = 1e-3) -> FeatureScaler:
    """
    由训练数据拟合缩放器

    Args:
        range_floor: 相对最大特征范围的下限，避免近常数特征被放大
    """
    X = check_finite(np.atleast_2d(data), "训练数据")
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    top = span.max()
    floor = range_floor * top if top > 0 else 1.0
    return FeatureScaler(lo, np.maximum(span, floor))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 20000
    batch_size: Optional[int] = None   # None 为全批量
    seed: int = 0
    init_scale: float = 1.0            # 初始化 uniform(±init_scale/√fan_in)
    divergence_factor: float = 10.0
    log_every: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate 必须为正: {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs 至少为 1: {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError(f"batch_size 必须为正: {self.batch_size}")
        if self.init_scale < 0:
            raise ValidationError(f"init_scale 必须非负: {self.init_scale}")


@dataclass
class AutoencoderModel:
    """
    自编码器参数

    weights[l] 形状为 (输出维数, 输入维数)；前一半层为编码器，后一半为解码器。
    隐藏层与隐层均用 tanh，输出层为恒等映射
    """
    layer_dims: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    loss_kind: str = "vanilla"
    lambda_reg: float = 0.0
    feature_weights: Optional[np.ndarray] = None
    scaler: Optional[FeatureScaler] = field(default=None, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 3 or len(dims) % 2 == 0 or dims[0] != dims[-1]:
            raise ValidationError(f"层维数必须对称且输入输出一致: {dims}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValidationError(f"未知的损失类型: {self.loss_kind}，可选 {LOSS_KINDS}")
        if self.lambda_reg < 0:
            raise ValidationError(f"lambda_reg 必须非负: {self.lambda_reg}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValidationError("权重层数与层维数不一致")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise ValidationError(f"第 {l + 1} 层参数形状错误: {W.shape}, {b.shape}")
        if self.feature_weights is not None and self.feature_weights.shape != (dims[0],):
            raise ValidationError("feature_weights 长度必须等于输入维数")
        self.layer_dims = dims

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def latent_dim(self) -> int:
        return self.layer_dims[len(self.layer_dims) // 2]

    @property
    def encoder_depth(self) -> int:
        return len(self.weights) // 2

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "AutoencoderModel":
        return replace(
            self,
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            feature_weights=None if self.feature_weights is None else self.feature_weights.copy(),
        )


@dataclass
class ForwardCache:
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]   # activations[0] 为输入


def default_layer_dims(D: int, N: int, hidden: Optional[int] = None) -> Tuple[int, ...]:
    hidden = hidden or max(D // 2, 1)
    return (D, hidden, N, hidden, D)


def init_model(D: int, N: int, hidden: Optional[int] = None, loss_kind: str = "vanilla",
               lambda_reg: float = 0.0, seed: int = 0, init_scale: float = 1.0,
               feature_weights=None) -> AutoencoderModel:
    """uniform(±s/√fan_in) 随机初始化，偏置为零；init_scale = 0 给出零模型"""
    if D < 1 or N < 1:
        raise ValidationError(f"输入维数与隐维数必须为正: D = {D}, N = {N}")
    dims = default_layer_dims(D, N, hidden)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = init_scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    fw = None if feature_weights is None else check_finite(feature_weights, "feature_weights")
    return AutoencoderModel(dims, weights, biases, loss_kind, lambda_reg, fw)


def _as_batch(model: AutoencoderModel, batch) -> np.ndarray:
    U = check_finite(np.atleast_2d(batch), "输入")
    if U.shape[1] != model.input_dim:
        raise ValidationError(f"输入维数 {U.shape[1]} 与模型 {model.input_dim} 不一致")
    if U.shape[0] == 0:
        raise ValidationError("批量不能为空")
    return U


def forward(model: AutoencoderModel, u) -> Tuple[np.ndarray, np.ndarray, ForwardCache]:
    """
    前向传播

    Args:
        u: 长度 D 的向量或逐行批量
    Returns:
        (z, û, cache)，输入为向量时 z 与 û 也是向量
    """
    single = np.ndim(u) == 1
    U = _as_batch(model, u)
    n_layers = len(model.weights)
    pre, acts = [], [U]
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        Z = acts[-1] @ W.T + b
        pre.append(Z)
        acts.append(Z if l == n_layers - 1 else np.tanh(Z))
    z, u_hat = acts[model.encoder_depth], acts[-1]
    cache = ForwardCache(pre, acts)
    if single:
        return z[0], u_hat[0], cache
    return z, u_hat, cache


def _contractive(model: AutoencoderModel, cache: ForwardCache, gW: List[np.ndarray],
                 extra: List[np.ndarray]) -> float:
    """
    收缩项 λ/B Σ_b ||∂z/∂u||_F^2 及其梯度

    J_1 = diag(g_1) W_1, J_l = diag(g_l) W_l J_{l-1}, g_l = 1 - a_l^2；
    对 W 的梯度直接累加到 gW，对激活的梯度写入 extra 交给反向传播
    """
    acts = cache.activations
    B = acts[0].shape[0]
    lam = model.lambda_reg
    E = model.encoder_depth

    g = [None] + [1.0 - acts[l] ** 2 for l in range(1, E + 1)]
    M, J = [None], [None]
    for l in range(1, E + 1):
        W = model.weights[l - 1]
        M_l = np.broadcast_to(W, (B,) + W.shape) if l == 1 else np.einsum("ij,bjd->bid", W, J[l - 1])
        M.append(M_l)
        J.append(g[l][:, :, None] * M_l)

    value = lam / B * float(np.sum(J[E] ** 2))
    G = 2.0 * lam / B * J[E]
    for l in range(E, 0, -1):
        dg = np.sum(G * M[l], axis=2)
        dM = g[l][:, :, None] * G
        if l == 1:
            gW[0] += dM.sum(axis=0)
        else:
            gW[l - 1] += np.einsum("bid,bjd->ij", dM, J[l - 1])
            G = np.einsum("ij,bid->bjd", model.weights[l - 1], dM)
        extra[l] += -2.0 * acts[l] * dg
    return value


def _loss_and_gradient(model: AutoencoderModel, batch):
    """返回 (总损失, 重构项, 权重梯度, 偏置梯度)"""
    U = _as_batch(model, batch)
    B = U.shape[0]
    z, u_hat, cache = forward(model, U)
    w = model.feature_weights if model.feature_weights is not None else np.ones(model.input_dim)
    residual = u_hat - U
    recon = float(np.sum(w * residual ** 2)) / B

    gW = [np.zeros_like(W) for W in model.weights]
    gb = [np.zeros_like(b) for b in model.biases]
    extra = [np.zeros_like(a) for a in cache.activations]
    E = model.encoder_depth

    reg = 0.0
    if model.loss_kind == "sparse":
        reg = model.lambda_reg * float(np.mean(np.abs(z)))
        extra[E] += model.lambda_reg * np.sign(z) / z.size
    elif model.loss_kind == "contractive":
        reg = _contractive(model, cache, gW, extra)

    n_layers = len(model.weights)
    dA = 2.0 * w * residual / B
    for l in range(n_layers - 1, -1, -1):
        a_out = cache.activations[l + 1]
        dZ = dA if l == n_layers - 1 else dA * (1.0 - a_out ** 2)
        gW[l] += dZ.T @ cache.activations[l]
        gb[l] += dZ.sum(axis=0)
        dA = dZ @ model.weights[l] + extra[l]
    return recon + reg, recon, gW, gb


def loss(model: AutoencoderModel, batch) -> float:
    """批量均方重构误差 (1/B) Σ_b Σ_d w_d (û - u)^2 加正则项"""
    return _loss_and_gradient(model, batch)[0]


def gradient(model: AutoencoderModel, batch) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """损失对各层 (W, b) 的精确梯度"""
    _, _, gW, gb = _loss_and_gradient(model, batch)
    return gW, gb


def _as_matrix(data: DataLike) -> np.ndarray:
    X = data.data if isinstance(data, SnapshotSet) else data
    return check_finite(np.atleast_2d(X), "训练数据")


def train(model: AutoencoderModel, data: DataLike,
          cfg: TrainConfig = TrainConfig()) -> Tuple[AutoencoderModel, np.ndarray]:
    """
    梯度下降训练

    输入先按训练集逐特征缩放到 [-1, 1]，缩放器保存在返回的模型里。
    history[k] 为第 k 次更新前的全量损失，最后一项为训练结束时的损失

    Raises:
        DivergenceError: 损失非有限或超过初始值的 divergence_factor 倍
        ConvergenceError: 训练结束时损失没有低于初始值
    """
    X = _as_matrix(data)
    scaler = fit_scaler(X)
    V = scaler.transform(X)
    model = model.copy()
    model.scaler = scaler
    _as_batch(model, V)

    rng = np.random.default_rng(cfg.seed)
    n = V.shape[0]
    full_batch = cfg.batch_size is None or cfg.batch_size >= n
    lr = cfg.learning_rate
    history = []

    for epoch in range(cfg.epochs):
        if full_batch:
            value, _, gW, gb = _loss_and_gradient(model, V)
            steps = [(gW, gb)]
        else:
            value = loss(model, V)
            perm = rng.permutation(n)
            steps = (gradient(model, V[perm[i:i + cfg.batch_size]])
                     for i in range(0, n, cfg.batch_size))
        history.append(value)
        if not np.isfinite(value) or value > cfg.divergence_factor * history[0]:
            raise DivergenceError(
                f"第 {epoch} 轮损失 {value:.3e} 超过初始值 {history[0]:.3e} 的 "
                f"{cfg.divergence_factor:g} 倍，请减小 learning_rate"
            )
        if cfg.log_every and epoch % cfg.log_every == 0:
            print(f"[自编码器] epoch {epoch}: loss = {value:.6e}")
        for gW, gb in steps:
            for l in range(len(model.weights)):
                model.weights[l] -= lr * gW[l]
                model.biases[l] -= lr * gb[l]

    history.append(loss(model, V))
    history = np.array(history)
    if not np.isfinite(history[-1]):
        raise DivergenceError("训练结束时损失非有限，请减小 learning_rate")
    if history[-1] >= history[0]:
        raise ConvergenceError(
            f"训练后损失 {history[-1]:.3e} 未低于初始损失 {history[0]:.3e}", cfg.epochs
        )
    print(f"[自编码器] N = {model.latent_dim}, {model.loss_kind}: "
          f"loss {history[0]:.3e} -> {history[-1]:.3e}")
    return model, history


def encode(model: AutoencoderModel, data: DataLike) -> np.ndarray:
    """原始空间快照 → 隐坐标 (有缩放器时先缩放)"""
    X = _as_matrix(data)
    if model.scaler is not None:
        X = model.scaler.transform(X)
    return forward(model, X)[0]


def decode(model: AutoencoderModel, Z) -> np.ndarray:
    """隐坐标 → 原始空间快照"""
    Z = check_finite(np.atleast_2d(Z), "隐坐标")
    if Z.shape[1] != model.latent_dim:
        raise ValidationError(f"隐坐标维数 {Z.shape[1]} 与模型 {model.latent_dim} 不一致")
    E = model.encoder_depth
    A = Z
    n_layers = len(model.weights)
    for l in range(E, n_layers):
        A = A @ model.weights[l].T + model.biases[l]
        if l < n_layers - 1:
            A = np.tanh(A)
    return model.scaler.inverse_transform(A) if model.scaler is not None else A


def reconstruct_snapshots(model: AutoencoderModel, data: DataLike) -> np.ndarray:
    """样本外评估直接走编码器：decode(encode(u))"""
    return decode(model, encode(model, data))


def _write_row(f, values):
    f.write(" ".join("%.17g" % v for v in np.ravel(values)) + "\n")


def save_checkpoint(model: AutoencoderModel, path) -> Path:
    """
    保存为自描述文本格式：
        layer_dims / loss_kind / lambda_reg / 可选 feature_weights、scaler_min、scaler_range，
        随后每层一行 "W l rows cols" 加矩阵各行、一行 "b l n" 加向量
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(CHECKPOINT_MAGIC + "\n")
        f.write("layer_dims " + " ".join(str(d) for d in model.layer_dims) + "\n")
        f.write(f"loss_kind {model.loss_kind}\n")
        f.write("lambda_reg %.17g\n" % model.lambda_reg)
        optional = [("feature_weights", model.feature_weights)]
        if model.scaler is not None:
            optional += [("scaler_min", model.scaler.data_min),
                         ("scaler_range", model.scaler.data_range)]
        for name, values in optional:
            if values is not None:
                f.write(name + " ")
                _write_row(f, values)
        for l, (W, b) in enumerate(zip(model.weights, model.biases), start=1):
            f.write(f"W {l} {W.shape[0]} {W.shape[1]}\n")
            for row in W:
                _write_row(f, row)
            f.write(f"b {l} {b.size}\n")
            _write_row(f, b)
    return path


def load_checkpoint(path) -> AutoencoderModel:
    """读取 save_checkpoint 写出的文件，格式错误时抛出带行号的 ParseError"""
    with open(Path(path), "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    pos = 0

    def next_line() -> Tuple[int, List[str]]:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("文件意外结束", pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    def floats(tokens, line_no, expected) -> np.ndarray:
        try:
            values = np.array([float(t) for t in tokens])
        except ValueError:
            raise ParseError("存在非数值字段", line_no)
        if values.size != expected:
            raise ParseError(f"应有 {expected} 个数值，实际 {values.size}", line_no)
        return values

    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ParseError(f"缺少文件头 {CHECKPOINT_MAGIC}", 1)
    pos = 1

    header = {}
    while pos < len(lines) and lines[pos].split() and lines[pos].split()[0] not in ("W", "b"):
        line_no, tokens = next_line()
        header[tokens[0]] = (line_no, tokens[1:])
    if "layer_dims" not in header:
        raise ParseError("缺少 layer_dims", pos + 1)
    line_no, tokens = header["layer_dims"]
    try:
        dims = tuple(int(t) for t in tokens)
    except ValueError:
        raise ParseError("layer_dims 必须为整数", line_no)
    D = dims[0]

    loss_kind = header.get("loss_kind", (0, ["vanilla"]))[1][0]
    lam_line, lam_tokens = header.get("lambda_reg", (0, ["0"]))
    lambda_reg = float(floats(lam_tokens, lam_line, 1)[0])
    vectors = {name: floats(header[name][1], header[name][0], D)
               for name in ("feature_weights", "scaler_min", "scaler_range") if name in header}

    weights, biases = [], []
    for l in range(1, len(dims)):
        line_no, tokens = next_line()
        if tokens[:2] != ["W", str(l)] or tokens[2:] != [str(dims[l]), str(dims[l - 1])]:
            raise ParseError(f"应为 'W {l} {dims[l]} {dims[l - 1]}'", line_no)
        W = np.vstack([floats(next_line()[1], pos, dims[l - 1]) for _ in range(dims[l])])
        line_no, tokens = next_line()
        if tokens != ["b", str(l), str(dims[l])]:
            raise ParseError(f"应为 'b {l} {dims[l]}'", line_no)
        b = floats(next_line()[1], pos, dims[l])
        weights.append(W)
        biases.append(b)

    scaler = None
    if "scaler_min" in vectors and "scaler_range" in vectors:
        scaler = FeatureScaler(vectors["scaler_min"], vectors["scaler_range"])
    return AutoencoderModel(dims, weights, biases, loss_kind, lambda_reg,
                            vectors.get("feature_weights"), scaler)


def save_loss_history(history, path) -> Path:
    """损失曲线 CSV: epoch,loss"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"epoch": np.arange(len(history)), "loss": np.asarray(history)})
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
