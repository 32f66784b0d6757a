"""
异常定义
ValidationError 类错误对应命令行退出码 1，NumericalError 类错误对应退出码 2
"""
from typing import List, Optional


class RomError(Exception):
    """降阶工具包所有错误的基类"""


class ValidationError(RomError, ValueError):
    """输入或配置不满足前置条件"""


class ParseError(ValidationError):
    """CSV / 配置文件解析失败"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"第 {line_no} 行: {message}"
        super().__init__(message)


class ExtrapolationError(ValidationError):
    """插值查询点落在网格之外"""


class PSDViolationError(ValidationError):
    """矩阵不是半正定的"""


class DisconnectedGraphError(ValidationError):
    """kNN 图不连通，需要增大 k_neighbors"""

    def __init__(self, components: List[List[int]]):
        self.components = components
        parts = "; ".join(
            "{" + ", ".join(str(i) for i in comp) + "}" for comp in components
        )
        super().__init__(
            f"kNN 图有 {len(components)} 个连通分量: {parts}，请增大 k_neighbors"
        )


class NumericalError(RomError, ArithmeticError):
    """数值计算失败"""


class ConvergenceError(NumericalError):
    """迭代算法未收敛"""

    def __init__(self, message: str, iterations: int):
        self.iterations = iterations
        super().__init__(f"{message} (迭代 {iterations} 次)")


class MonotonicityError(NumericalError):
    """配准映射不是严格单调的"""


class DivergenceError(NumericalError):
    """训练发散"""
