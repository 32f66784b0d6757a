"""
基准模块
构造三个对流-扩散算例，对各降阶方法做隐维数扫描，输出谱、误差、重构快照、隐变量轨迹等 CSV
"""
import contextlib
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import config
from autoencoder import init_model, reconstruct_snapshots, encode, train
from config_manager import BenchConfig, CaseConfig, config_to_dict
from exceptions import RomError, ValidationError
from kpca import fit_kpca
from latent_regression import krr_fit, krr_predict
from pod import ReducedBasis, fit_pod, project, reconstruct, save_coefficients
from registration import (
    RegistrationMap,
    fit_ot_registration,
    fit_registration,
    map_at_times,
    reconstruct_registered,
    transform_manifold,
)
from snapshots import SnapshotSet, build_snapshot_set, relative_l2_error, save_csv

ERROR_COLUMNS = ["method", "case", "N", "train_error", "test_error", "status"]
SPECTRA_COLUMNS = ["case", "method", "j", "lambda_j"]
LATENT_COLUMNS = ["method", "case", "train_only", "t", "z_1", "z_2", "status"]
RECON_PREFIX = ["method", "split", "t"]
LATENT_DIM = 2


def write_frame(frame: pd.DataFrame, path) -> Path:
    """统一的 CSV 输出格式，保证相同输入逐字节一致"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=config.CSV_FLOAT_FORMAT,
                 na_rep="nan", lineterminator="\n")
    return path


def normalized_spectrum(eigenvalues, n_rows: int) -> np.ndarray:
    """λ_j / λ_1，截断或补零到 n_rows 行"""
    lam = np.zeros(n_rows)
    values = np.asarray(eigenvalues, dtype=float)[:n_rows]
    lam[:values.size] = values
    return lam / lam[0] if lam[0] > 0 else lam


def second_moment_ratio(snapshot_set: SnapshotSet) -> float:
    """未中心化二阶矩谱的 λ_2/λ_1，衡量对齐后流形的秩一程度"""
    X = snapshot_set.data * np.sqrt(snapshot_set.grid.weights)
    s = np.linalg.svd(X, compute_uv=False) ** 2
    return float(s[1] / s[0]) if s.size > 1 and s[0] > 0 else 0.0


@dataclass
class CaseContext:
    """单个算例在一次运行中的缓存"""
    case: CaseConfig
    index: int
    train: SnapshotSet
    test: SnapshotSet
    pod_basis: Optional[ReducedBasis] = None
    reg_maps: Optional[List[RegistrationMap]] = None
    reg_basis: Optional[ReducedBasis] = None
    reg_test_maps: Optional[List[RegistrationMap]] = None
    extra: Dict[str, object] = field(default_factory=dict)


class BenchRunner:
    """基准运行器：按算例缓存快照与拟合结果，逐项写出产物"""

    def __init__(self, cfg: BenchConfig, out_dir=None, plots: bool = False):
        self.cfg = cfg.validate()
        self.out_dir = Path(out_dir or cfg.output_dir)
        self.plots = plots
        self.grid = cfg.grid.build()
        self._contexts: Dict[str, CaseContext] = {}

    def log(self, message: str):
        if self.cfg.verbose:
            print(message)

    def quiet(self):
        """verbose 关闭时屏蔽各模块的进度输出，失败信息仍写到 stderr"""
        if self.cfg.verbose:
            return contextlib.nullcontext()
        return contextlib.redirect_stdout(io.StringIO())

    # ------------------------------------------------------------ 数据与缓存

    def context(self, label: str) -> CaseContext:
        if label not in self._contexts:
            case = self.cfg.case(label)
            index = [c.label for c in self.cfg.cases].index(label)
            adv = self.cfg.adv_diff(case)
            train_set = build_snapshot_set(adv, self.grid, self.cfg.n_train, label)
            test_set = build_snapshot_set(adv, self.grid, self.cfg.n_test, label)
            self._contexts[label] = CaseContext(case, index, train_set, test_set)
        return self._contexts[label]

    def case_dir(self, label: str) -> Path:
        return self.out_dir / label

    def _pod(self, ctx: CaseContext) -> ReducedBasis:
        if ctx.pod_basis is None:
            ctx.pod_basis = fit_pod(ctx.train, self.cfg.inner_product)
            save_coefficients(ctx.pod_basis, ctx.train, self.case_dir(ctx.case.label) / "pod_coeffs.csv")
        return ctx.pod_basis

    def _registration(self, ctx: CaseContext):
        if ctx.reg_maps is None:
            hyper = self.cfg.registration.build()
            ref_t = self._nearest_time(ctx.train, self.cfg.registration.ref_t)
            ctx.reg_maps = fit_registration(ctx.train, hyper, ref_t)
            transformed = transform_manifold(ctx.train, ctx.reg_maps, hyper.interp)
            ctx.extra["transformed"] = transformed
            ctx.reg_basis = fit_pod(transformed, self.cfg.inner_product)
            ctx.reg_test_maps = map_at_times(ctx.reg_maps, ctx.test.times,
                                             self.cfg.krr.rbf_shape, self.cfg.krr.ridge)
            self._write_registration(ctx)
        return ctx.reg_maps, ctx.reg_basis

    @staticmethod
    def _nearest_time(snapshot_set: SnapshotSet, t: float) -> float:
        return float(snapshot_set.times[np.argmin(np.abs(snapshot_set.times - t))])

    def _write_registration(self, ctx: CaseContext):
        M = ctx.reg_maps[0].coeffs.size
        coeffs = pd.DataFrame(np.vstack([m.coeffs for m in ctx.reg_maps]),
                              columns=[f"a_{m + 1}" for m in range(M)])
        coeffs.insert(0, "t", [m.t_value for m in ctx.reg_maps])
        write_frame(coeffs, self.case_dir(ctx.case.label) / "registration_coeffs.csv")

        rows = [{"t": m.t_value, "misfit": m.diagnostics.misfit,
                 "h2_term": m.diagnostics.h2_term,
                 "barrier_integral": m.diagnostics.barrier_integral,
                 "clamped_nodes": m.diagnostics.clamped_nodes,
                 "iterations": m.diagnostics.iterations} for m in ctx.reg_maps]
        write_frame(pd.DataFrame(rows), self.case_dir(ctx.case.label) / "registration_diagnostics.csv")

    def _krr_latents(self, ctx: CaseContext, Z_train: np.ndarray) -> np.ndarray:
        if Z_train.shape[1] == 0:
            return np.zeros((ctx.test.n_snapshots, 0))
        model = krr_fit(ctx.train.times, Z_train, self.cfg.krr.rbf_shape, self.cfg.krr.ridge)
        return krr_predict(model, ctx.test.times)

    def _train_autoencoder(self, ctx: CaseContext, N: int):
        key = f"autoencoder_{N}"
        if key not in ctx.extra:
            ae = self.cfg.autoencoder
            seed = self.cfg.seed + 1000 * ctx.index + N
            weights = self.grid.weights if ae.weighted_loss else None
            model = init_model(self.grid.n_points, N, loss_kind=ae.loss_kind,
                               lambda_reg=ae.lambda_reg, seed=seed, feature_weights=weights)
            ctx.extra[key] = train(model, ctx.train, ae.build(seed))[0]
        return ctx.extra[key]

    # ------------------------------------------------------------ 各项产物

    def run_generate(self, cases: List[str]) -> List[Path]:
        """写出训练/测试快照 CSV"""
        paths = []
        for label in cases:
            ctx = self.context(label)
            paths.append(save_csv(ctx.train, self.case_dir(label) / "train.csv"))
            paths.append(save_csv(ctx.test, self.case_dir(label) / "test.csv"))
            self.log(f"[基准] {label}: 快照已写出 ({ctx.train.n_snapshots} 训练 / {ctx.test.n_snapshots} 测试)")
        return paths

    def _spectrum(self, ctx: CaseContext, method: str) -> np.ndarray:
        if method == "pod":
            return self._pod(ctx).eigenvalues
        if method == "registration":
            return self._registration(ctx)[1].eigenvalues
        if method == "registration_ot":
            maps = fit_ot_registration(ctx.train, self._nearest_time(ctx.train, self.cfg.registration.ref_t))
            transformed = transform_manifold(ctx.train, maps)
            return fit_pod(transformed, self.cfg.inner_product).eigenvalues
        if method in config.KPCA_METHODS:
            hyper = self.cfg.kpca.build(self.cfg.inner_product)
            return fit_kpca(ctx.train, config.KPCA_METHODS[method], hyper).spectrum.eigenvalues
        raise ValidationError(f"方法 {method} 没有谱")

    def run_spectra(self, cases: List[str], methods: List[str]) -> Dict[str, pd.DataFrame]:
        """每个算例每个方法写出 n_train - 1 行归一化特征值"""
        frames = {}
        n_rows = self.cfg.n_train - 1
        spectral = [m for m in methods if m != "autoencoder"]
        for label in cases:
            ctx = self.context(label)
            rows = []
            for method in spectral:
                try:
                    lam = normalized_spectrum(self._spectrum(ctx, method), n_rows)
                except RomError as e:
                    print(f"[错误] {label}/{method} 谱计算失败: {e}", file=sys.stderr)
                    lam = np.full(n_rows, np.nan)
                rows += [{"case": label, "method": method, "j": j + 1, "lambda_j": lam[j]}
                         for j in range(n_rows)]
            frame = pd.DataFrame(rows, columns=SPECTRA_COLUMNS)
            write_frame(frame, self.case_dir(label) / "spectra.csv")
            frames[label] = frame
            if "registration" in spectral and ctx.reg_maps is not None:
                ratio = second_moment_ratio(ctx.extra["transformed"])
                self.log(f"[基准] {label}: 配准流形二阶矩 λ_2/λ_1 = {ratio:.3e}")
            self.log(f"[基准] {label}: spectra.csv 已写出 ({len(spectral)} 个方法)")
            if self.plots:
                from plotting import plot_spectra
                plot_spectra(frame, self.case_dir(label) / "spectra.svg")
        return frames

    def _reconstruct(self, ctx: CaseContext, method: str, N: int):
        """训练集与测试集在隐维数 N 下的重构"""
        grid = self.grid
        if method == "pod":
            basis = self._pod(ctx)
            n_used = min(N, basis.n_modes)
            Z = project(basis, ctx.train.data, n_used)
            train_hat = reconstruct(basis, Z)
            test_hat = reconstruct(basis, self._krr_latents(ctx, Z))
        elif method == "registration":
            maps, basis = self._registration(ctx)
            n_used = min(N, basis.n_modes)
            Z = project(basis, ctx.extra["transformed"].data, n_used)
            Z_test = self._krr_latents(ctx, Z)
            train_hat = np.vstack([reconstruct_registered(basis, m, z, grid)
                                   for m, z in zip(maps, Z)])
            test_hat = np.vstack([reconstruct_registered(basis, m, z, grid)
                                  for m, z in zip(ctx.reg_test_maps, Z_test)])
        elif method == "autoencoder":
            model = self._train_autoencoder(ctx, N)
            train_hat = reconstruct_snapshots(model, ctx.train)
            test_hat = reconstruct_snapshots(model, ctx.test)
        else:
            raise ValidationError(f"方法 {method} 不支持样本外误差")
        return train_hat, test_hat

    def _errors_for(self, ctx: CaseContext, train_hat: np.ndarray, test_hat: np.ndarray):
        train_error = float(np.mean(relative_l2_error(ctx.train.data, train_hat, self.grid)))
        test_error = float(np.mean(relative_l2_error(ctx.test.data, test_hat, self.grid)))
        return train_error, test_error

    @staticmethod
    def _recon_indices(snapshot_set: SnapshotSet) -> List[int]:
        times = snapshot_set.times
        return sorted({int(np.argmin(np.abs(times - t))) for t in config.RECON_TIMES})

    def _write_reconstructions(self, ctx: CaseContext, recon: Dict[str, Optional[tuple]]) -> Path:
        """
        N = RECON_N 的训练/测试重构快照，取 RECON_TIMES 附近的时刻
        method = exact 行为解析解，失败的方法写成 nan 行
        """
        D = self.grid.n_points
        rows = []
        for pos, (split, snapshot_set) in enumerate((("train", ctx.train), ("test", ctx.test))):
            idx = self._recon_indices(snapshot_set)
            sources = [("exact", snapshot_set.data)]
            for method, hats in recon.items():
                values = hats[pos] if hats is not None else np.full((snapshot_set.n_snapshots, D), np.nan)
                sources.append((method, values))
            for method, values in sources:
                rows += [[method, split, snapshot_set.times[i], *values[i]] for i in idx]
        frame = pd.DataFrame(rows, columns=RECON_PREFIX + [f"u_{i + 1}" for i in range(D)])
        path = write_frame(frame, self.case_dir(ctx.case.label) / "reconstructions.csv")
        if self.plots:
            from plotting import plot_reconstructions
            plot_reconstructions(frame, self.grid.points, self.case_dir(ctx.case.label) / "reconstructions.svg")
        return path

    def run_errors(self, cases: List[str], methods: List[str]) -> Dict[str, pd.DataFrame]:
        """
        隐维数扫描的训练/测试平均相对 L2 误差，失败单元记为 failed 行
        同时写出 N = RECON_N 的重构快照 reconstructions.csv
        """
        frames = {}
        error_methods = [m for m in methods if m in config.ERROR_METHODS]
        for label in cases:
            ctx = self.context(label)
            rows = []
            recon: Dict[str, Optional[tuple]] = {}
            for method in error_methods:
                for N in self.cfg.N_sweep:
                    hats = None
                    try:
                        hats = self._reconstruct(ctx, method, N)
                        train_error, test_error = self._errors_for(ctx, *hats)
                        status = "ok"
                    except RomError as e:
                        print(f"[错误] {label}/{method}/N={N}: {e}", file=sys.stderr)
                        train_error = test_error = np.nan
                        status = "failed"
                    if N == config.RECON_N:
                        recon[method] = hats
                    rows.append({"method": method, "case": label, "N": N,
                                 "train_error": train_error, "test_error": test_error,
                                 "status": status})
                if method not in recon:
                    try:
                        recon[method] = self._reconstruct(ctx, method, config.RECON_N)
                    except RomError as e:
                        print(f"[错误] {label}/{method}/N={config.RECON_N} 重构失败: {e}",
                              file=sys.stderr)
                        recon[method] = None
                self.log(f"[基准] {label}/{method}: 误差扫描完成")
            frame = pd.DataFrame(rows, columns=ERROR_COLUMNS)
            write_frame(frame, self.case_dir(label) / "errors.csv")
            frames[label] = frame
            if error_methods:
                self._write_reconstructions(ctx, recon)
            if self.plots:
                from plotting import plot_errors
                plot_errors(frame, self.case_dir(label) / "errors.svg")
        return frames

    def _latents_for(self, ctx: CaseContext, method: str):
        """返回 (train_only, 时刻, N=2 隐坐标)"""
        if method == "pod":
            basis = self._pod(ctx)
            Z = project(basis, ctx.train.data, min(LATENT_DIM, basis.n_modes))
            return False, ctx.test.times, self._krr_latents(ctx, Z)
        if method == "registration":
            _, basis = self._registration(ctx)
            Z = project(basis, ctx.extra["transformed"].data, min(LATENT_DIM, basis.n_modes))
            return False, ctx.test.times, self._krr_latents(ctx, Z)
        if method == "autoencoder":
            model = self._train_autoencoder(ctx, LATENT_DIM)
            return False, ctx.test.times, encode(model, ctx.test)
        if method in config.KPCA_METHODS:
            hyper = self.cfg.kpca.build(self.cfg.inner_product)
            model = fit_kpca(ctx.train, config.KPCA_METHODS[method], hyper, LATENT_DIM)
            return True, ctx.train.times, model.embedding
        raise ValidationError(f"方法 {method} 没有隐变量轨迹")

    def run_latents(self, cases: List[str], methods: List[str]) -> Dict[str, pd.DataFrame]:
        """N = 2 的隐变量轨迹；核方法只有训练集嵌入，标记 train_only = 1；失败的方法写成 nan 行"""
        frames = {}
        latent_methods = [m for m in methods if m not in config.SPECTRA_ONLY]
        for label in cases:
            ctx = self.context(label)
            rows = []
            for method in latent_methods:
                try:
                    train_only, times, Z = self._latents_for(ctx, method)
                    status = "ok"
                except RomError as e:
                    print(f"[错误] {label}/{method} 隐变量计算失败: {e}", file=sys.stderr)
                    train_only = method in config.KPCA_METHODS
                    times = ctx.train.times if train_only else ctx.test.times
                    Z = np.full((times.size, LATENT_DIM), np.nan)
                    status = "failed"
                Z = np.hstack([Z, np.zeros((Z.shape[0], LATENT_DIM - Z.shape[1]))])
                rows += [{"method": method, "case": label, "train_only": int(train_only),
                          "t": t, "z_1": z[0], "z_2": z[1], "status": status}
                         for t, z in zip(times, Z)]
            frame = pd.DataFrame(rows, columns=LATENT_COLUMNS)
            write_frame(frame, self.case_dir(label) / "latents.csv")
            frames[label] = frame
            self.log(f"[基准] {label}: latents.csv 已写出")
            if self.plots:
                from plotting import plot_latents
                plot_latents(frame, self.case_dir(label) / "latents.svg")
        return frames

    def write_manifest(self, command: str) -> Path:
        """清单：版本、种子、命令与完整配置回显"""
        path = self.out_dir / "manifest.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"version: {config.VERSION}\n")
            f.write(f"seed: {self.cfg.seed}\n")
            f.write(f"command: {command}\n")
            f.write("config:\n")
            f.write(json.dumps(config_to_dict(self.cfg), ensure_ascii=False, indent=2, sort_keys=True))
            f.write("\n")
        return path

    def run(self, command: str, cases: Optional[List[str]] = None,
            methods: Optional[List[str]] = None):
        """执行子命令 generate / spectra / errors / latents / all"""
        cases = cases or [c.label for c in self.cfg.cases]
        methods = methods or list(config.METHODS)
        for label in cases:
            self.cfg.case(label)
        unknown = sorted(set(methods) - set(config.METHODS))
        if unknown:
            raise ValidationError(f"未知的方法: {', '.join(unknown)}，可选 {config.METHODS}")

        steps = {
            "generate": lambda: self.run_generate(cases),
            "spectra": lambda: self.run_spectra(cases, methods),
            "errors": lambda: self.run_errors(cases, methods),
            "latents": lambda: self.run_latents(cases, methods),
        }
        if command != "all" and command not in steps:
            raise ValidationError(f"未知的子命令: {command}")
        with self.quiet():
            for name, step in steps.items():
                if command in ("all", name):
                    step()
            manifest = self.write_manifest(command)
            self.log(f"[基准] 完成，清单: {manifest}")


def run_spectra(cfg: BenchConfig, out_dir=None) -> Dict[str, pd.DataFrame]:
    runner = BenchRunner(cfg, out_dir)
    return runner.run_spectra([c.label for c in cfg.cases], list(config.METHODS))


def run_errors(cfg: BenchConfig, out_dir=None) -> Dict[str, pd.DataFrame]:
    runner = BenchRunner(cfg, out_dir)
    return runner.run_errors([c.label for c in cfg.cases], list(config.METHODS))


def run_latents(cfg: BenchConfig, out_dir=None) -> Dict[str, pd.DataFrame]:
    runner = BenchRunner(cfg, out_dir)
    return runner.run_latents([c.label for c in cfg.cases], list(config.METHODS))
