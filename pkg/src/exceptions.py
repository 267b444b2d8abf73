"""
シミュレータ全体で使う例外クラス

各クラスは CLI の終了コード (exit_code) を持つ。
2: 入力・設定の誤り / 3: 数値的に意味をなさない計算 (ポストセレクション失敗など)
"""
from typing import Optional


class QCCError(ValueError):
    """全例外の基底クラス"""
    exit_code = 2


class UsageError(QCCError):
    exit_code = 2


class NumericError(QCCError):
    exit_code = 3


class BoundsError(UsageError):
    def __init__(self, factor: str, index: int, dim: int):
        self.factor = factor
        self.index = index
        self.dim = dim
        super().__init__(f"Index {index} out of bounds for factor '{factor}' (dim={dim})")


class SpaceMismatchError(UsageError):
    pass


class CapacityError(UsageError):
    def __init__(self, message: str, size: Optional[int] = None, cap: Optional[int] = None):
        self.size = size
        self.cap = cap
        super().__init__(message)


class StructureError(UsageError):
    pass


class ConfigurationError(UsageError):
    def __init__(self, message: str, rank: Optional[int] = None):
        self.rank = rank
        super().__init__(message)


class CircuitCompatibilityError(UsageError):
    pass


class CircuitSyntaxError(UsageError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class CircuitSemanticError(UsageError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class NormalizationError(NumericError):
    pass


class NullPostSelectionError(NumericError):
    def __init__(self, overlap: float, label: Optional[str] = None):
        self.overlap = overlap
        self.label = label
        where = f" for observable '{label}'" if label else ""
        super().__init__(f"Post-selection overlap {overlap:.3e} is too small{where}")


class GridError(NumericError):
    pass


class OamOverflowError(NumericError):
    pass
