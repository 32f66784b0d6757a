"""
非线性降阶基准 - 主程序入口
功能：生成快照 -> 谱分析 -> 隐维数误差扫描 -> 隐变量轨迹 -> CSV/SVG 产物
"""
import argparse
import sys
from dataclasses import replace
from typing import List, Optional

import config
from bench import BenchRunner
from config_manager import load_config
from exceptions import NumericalError, ValidationError

COMMANDS = ("generate", "spectra", "errors", "latents", "all")


class _Parser(argparse.ArgumentParser):
    """参数错误时抛出 ValidationError，而不是直接退出进程"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="main.py",
        description="非线性降阶基准 - 对流/扩散流形上的 POD、配准、核PCA 与自编码器对比"
    )
    parser.add_argument(
        "command",
        choices=COMMANDS,
        help="generate: 快照CSV; spectra: 特征值谱; errors: 误差扫描; latents: 隐变量轨迹; all: 全部"
    )
    parser.add_argument(
        "--config", "-c",
        type=str,
        default="default",
        help="JSON 配置文件路径，default 表示内置默认值"
    )
    parser.add_argument(
        "--case",
        action="append",
        default=None,
        help="只运行指定算例 (可重复)"
    )
    parser.add_argument(
        "--method", "-m",
        action="append",
        default=None,
        help=f"只运行指定方法 (可重复)，可选: {', '.join(config.METHODS)}"
    )
    parser.add_argument(
        "--out", "-o",
        type=str,
        default=None,
        help="输出目录，覆盖配置中的 output_dir"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="随机种子，覆盖配置中的 seed"
    )
    parser.add_argument(
        "--plots",
        action="store_true",
        help="同时输出 SVG 图"
    )
    parser.add_argument(
        "--quiet", "-q",
        action="store_true",
        help="不打印进度与诊断信息 (失败信息仍输出到 stderr)"
    )
    return parser


def cli(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    Returns:
        退出码：0 成功，1 输入/配置错误，2 数值失败
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.quiet:
            cfg = replace(cfg, verbose=False)
        runner = BenchRunner(cfg, args.out, plots=args.plots)
        runner.run(args.command, args.case, args.method)
    except ValidationError as e:
        print(f"[错误] {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"[错误] 数值计算失败: {e}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
