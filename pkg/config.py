"""
降阶基准配置文件
默认常量；命令行通过 config_manager.py 加载 JSON 覆盖这些值
"""
from pathlib import Path

VERSION = "1.0.0"

# ============== 网格与方程 ==============
X_MIN = -1.0
X_MAX = 3.0
N_POINTS = 256                  # 网格点数 D
SIGMA0 = 0.1                    # 初始高斯宽度
T_FINAL = 0.5

# (算例名, c_T, c_D)
CASES = [
    ("advection", 4.0, 0.0),
    ("diffusion", 0.0, 0.1),
    ("advection_diffusion", 4.0, 0.1),
]

# ============== 训练 / 测试 ==============
N_TRAIN = 20
N_TEST = 200
N_SWEEP = list(range(1, 16))    # 隐维数扫描 N = 1..15
SEED = 0
REF_T = 0.0                     # 配准参考时刻
RECON_N = 2                     # 重构快照产物的隐维数
RECON_TIMES = [0.0, 0.25, 0.5]  # 取距这些时刻最近的训练/测试快照

# ============== 方法 ==============
METHODS = [
    "pod",
    "registration",
    "registration_ot",
    "autoencoder",
    "kpca_linear",
    "mds",
    "isomap",
    "spectral_clustering",
    "lle",
]
KPCA_METHODS = {
    "kpca_linear": "linear",
    "mds": "mds",
    "isomap": "isomap",
    "spectral_clustering": "spectral_clustering",
    "lle": "lle",
}
ERROR_METHODS = ["pod", "registration", "autoencoder"]   # 有样本外误差的方法
SPECTRA_ONLY = ["registration_ot"]

# ============== 各方法超参数 ==============
INNER_PRODUCT = "trapezoid"

K_NEIGHBORS = 4
WEIGHT_SCALE = None             # None: 取两两距离中位数
LLE_REG = 1e-3

LEGENDRE_M = 6
REG_XI = 1e-4
REG_EPS = 0.1
REG_C = 0.025
REG_DELTA = 1e-3
REG_PENALTY = 1e3
REG_MAX_ITERS = 500
REG_GRAD_TOL = 1e-8

AE_LEARNING_RATE = 1e-2
AE_EPOCHS = 20000
AE_LOSS_KIND = "vanilla"
AE_LAMBDA_REG = 1e-4
AE_WEIGHTED_LOSS = True         # 按梯形求积权重计算重构误差

KRR_RIDGE = 1e-10
KRR_RBF_SHAPE = None            # None: 2 / (t_max - t_min)

# ============== 输出 ==============
OUTPUT_DIR = Path("out")
CSV_FLOAT_FORMAT = "%.17g"
