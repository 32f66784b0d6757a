"""
绘图模块
把基准 CSV 画成 SVG 折线图：特征值衰减、误差随 N 的变化、隐变量轨迹、重构快照
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0
fig_size = [fig_width, fig_width * golden_mean]

params = {
    "axes.labelsize": 10,
    "font.family": "serif",
    "font.size": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": fig_size,
    "lines.markersize": 3,
    "lines.linewidth": 1,
    "svg.hashsalt": "rom-bench",     # 固定 SVG 内部 id，输出逐字节可复现
    "svg.fonttype": "none",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_spectra(frame: pd.DataFrame, path) -> Path:
    """λ_j / λ_1 的半对数图，每个方法一条曲线"""
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots()
        for method, group in frame.groupby("method", sort=False):
            lam = group["lambda_j"].to_numpy()
            ax.semilogy(group["j"], np.where(lam > 0, lam, np.nan), marker="o", label=method)
        ax.set_xlabel("j")
        ax.set_ylabel(r"$\lambda_j / \lambda_1$")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_errors(frame: pd.DataFrame, path) -> Path:
    """测试集平均相对误差随隐维数 N 的变化"""
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots()
        ok = frame[frame["status"] == "ok"]
        for method, group in ok.groupby("method", sort=False):
            ax.semilogy(group["N"], group["test_error"], marker="o", label=method)
        ax.set_xlabel("N")
        ax.set_ylabel("test error")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_latents(frame: pd.DataFrame, path) -> Path:
    """N = 2 隐变量随时间的轨迹，z_1 实线、z_2 虚线"""
    with matplotlib.rc_context(params):
        fig, ax = plt.subplots()
        ok = frame[frame["status"] == "ok"]
        for method, group in ok.groupby("method", sort=False):
            line, = ax.plot(group["t"], group["z_1"], label=method)
            ax.plot(group["t"], group["z_2"], linestyle="--", color=line.get_color())
        ax.set_xlabel("t")
        ax.set_ylabel("z")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_reconstructions(frame: pd.DataFrame, x, path) -> Path:
    """训练/测试重构快照与解析解对比，每个时刻一列，exact 为黑色实线"""
    u_cols = [c for c in frame.columns if c.startswith("u_")]
    with matplotlib.rc_context(params):
        splits = list(dict.fromkeys(frame["split"]))
        n_cols = frame.groupby("split")["t"].nunique().max()
        fig, axes = plt.subplots(len(splits), n_cols, squeeze=False, sharex=True,
                                 figsize=(fig_size[0] * n_cols / 2, fig_size[1] * len(splits)))
        for r, split in enumerate(splits):
            part = frame[frame["split"] == split]
            for c, t in enumerate(dict.fromkeys(part["t"])):
                ax = axes[r, c]
                for method, group in part[part["t"] == t].groupby("method", sort=False):
                    style = {"color": "k"} if method == "exact" else {"linestyle": "--"}
                    ax.plot(x, group[u_cols].to_numpy()[0], label=method, **style)
                ax.set_title(f"{split}, t = {t:.3f}")
        axes[-1, 0].set_xlabel("x")
        axes[0, 0].legend(loc="best")
        return _save(fig, path)
