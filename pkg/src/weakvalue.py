"""
事前・事後選択されたアンサンブルの弱値

    (O)_w = <post|O|pre> / <post|pre>
"""
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from src.exceptions import NormalizationError, NullPostSelectionError, SpaceMismatchError
from src.hilbert import (
    PAULI_X,
    OperatorExpr,
    SpaceDescriptor,
    StateVector,
    apply,
    inner,
    make_basis_state,
    superpose,
)
from src.utils.helper import get_tolerance
from src.utils.logger import setup_logger

logger = setup_logger()

DEFAULT_OVERLAP_EPSILON = 1e-10


@dataclass(frozen=True)
class PrePostEnsemble:
    pre: StateVector
    post: StateVector
    overlap: complex

    @classmethod
    def create(cls, pre: StateVector, post: StateVector, tol: Optional[float] = None) -> "PrePostEnsemble":
        """
        検証付きでアンサンブルを作る

        Raises:
            SpaceMismatchError: 状態空間が異なる場合
            NormalizationError: 正規化されていない状態がある場合
        """
        if pre.space != post.space:
            raise SpaceMismatchError(f"Pre/post spaces differ: {pre.space.labels} vs {post.space.labels}")
        tolerance = max(get_tolerance(tol), 1e-12)
        for name, state in (("pre", pre), ("post", post)):
            if abs(state.norm_squared() - 1.0) > tolerance:
                raise NormalizationError(f"{name}-selected state is not normalized (norm^2={state.norm_squared():.15g})")
        return cls(pre=pre, post=post, overlap=inner(post, pre))

    @property
    def space(self) -> SpaceDescriptor:
        return self.pre.space

    def with_phases(self, pre_phase: float = 0.0, post_phase: float = 0.0) -> "PrePostEnsemble":
        return PrePostEnsemble.create(self.pre.with_phase(pre_phase), self.post.with_phase(post_phase))


@dataclass(frozen=True)
class WeakValueTable:
    """観測量ラベルと弱値の順序付きの表"""
    rows: Tuple[Tuple[str, complex], ...]

    def __post_init__(self):
        rows = tuple((str(label), complex(value)) for label, value in self.rows)
        labels = [label for label, _ in rows]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"Duplicate observable labels: {duplicates}")
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Tuple[str, complex]]:
        return iter(self.rows)

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.rows]

    def value(self, label: str) -> complex:
        for name, value in self.rows:
            if name == label:
                return value
        raise KeyError(label)

    def to_records(self) -> List[Dict[str, Any]]:
        return [{"label": label, "re": value.real, "im": value.imag} for label, value in self.rows]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), ensure_ascii=False, indent=2)

    def to_csv(self) -> str:
        """label, re, im の CSV (有効数字 17 桁)"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["label", "re", "im"])
        for label, value in self.rows:
            writer.writerow([label, format(value.real, ".17g"), format(value.imag, ".17g")])
        return buffer.getvalue()

    @classmethod
    def from_records(cls, records: Sequence[Dict[str, Any]]) -> "WeakValueTable":
        return cls(tuple((r["label"], complex(r["re"], r["im"])) for r in records))


def weak_value(ens: PrePostEnsemble, observable: OperatorExpr, epsilon: Optional[float] = None) -> complex:
    """
    弱値 <post|O|pre> / <post|pre> を計算する

    固有値の範囲外の値や複素数になり得る。

    Args:
        ens (PrePostEnsemble): 事前・事後選択
        observable (OperatorExpr): 観測量
        epsilon (float | None): 重なりの下限 (デフォルト 1e-10)

    Returns:
        complex: 弱値

    Raises:
        NullPostSelectionError: |<post|pre>| <= epsilon の場合
    """
    threshold = DEFAULT_OVERLAP_EPSILON if epsilon is None else epsilon
    if abs(ens.overlap) <= threshold:
        raise NullPostSelectionError(abs(ens.overlap))
    numerator = inner(ens.post, apply(observable, ens.pre))
    return numerator / ens.overlap


def postselection_probability(ens: PrePostEnsemble) -> float:
    """事後選択の成功確率 |<post|pre>|^2"""
    return min(1.0, abs(ens.overlap) ** 2)


def weak_value_table(ens: PrePostEnsemble,
                     observables: Sequence[Tuple[str, OperatorExpr]],
                     epsilon: Optional[float] = None,
                     max_workers: Optional[int] = None) -> WeakValueTable:
    """
    観測量の列から弱値の表を作る。行の順序は入力の順序を保つ

    Args:
        ens (PrePostEnsemble): 事前・事後選択
        observables (Sequence[Tuple[str, OperatorExpr]]): (ラベル, 観測量) の列
        epsilon (float | None): 重なりの下限
        max_workers (int | None): 2 以上なら行をスレッドで並列に評価する

    Returns:
        WeakValueTable: 弱値の表
    """
    def evaluate(item):
        label, observable = item
        try:
            value = weak_value(ens, observable, epsilon)
        except NullPostSelectionError as e:
            raise NullPostSelectionError(e.overlap, label=label) from e
        logger.debug(f"Weak value of {label}: {value}")
        return label, value

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            rows = list(executor.map(evaluate, observables))
    else:
        rows = [evaluate(item) for item in observables]
    return WeakValueTable(tuple(rows))


def spin_half_ensemble(alpha: complex, beta: complex) -> Tuple[PrePostEnsemble, OperatorExpr]:
    """
    pre = α|↑> + β|↓>, post = |↑> のアンサンブルと σx を返す。(σx)_w = β/α

    Args:
        alpha (complex): |↑> の振幅
        beta (complex): |↓> の振幅 (|α|^2 + |β|^2 = 1)
    """
    space = SpaceDescriptor.of(("spin", 2))
    up = make_basis_state(space, [0])
    down = make_basis_state(space, [1])
    norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if abs(norm - 1.0) > 1e-12:
        raise NormalizationError(f"|alpha|^2 + |beta|^2 = {norm ** 2} != 1")
    pre = superpose([(alpha, up), (beta, down)])
    return PrePostEnsemble.create(pre, up), OperatorExpr.local(space, "spin", PAULI_X)
