"""
ラベル付きテンソル積空間上の状態ベクトルと演算子

基底の規約:
- 多準位 (qudit) の節で |1>, |2>, ..., |d> と書かれる状態はインデックス 0..d-1 に対応する
- 二準位 (dichotomic) の節で |0>, |1> と書かれる状態はインデックス 0, 1 に対応する

状態は多重インデックスをキーとする疎な振幅辞書で保持する。
因子は常にラベルで指定し、位置では指定しない。
密行列への変換は構造チェックと小さな検証用に限る。
"""
import math
import cmath
from collections import defaultdict
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import (
    BoundsError,
    CapacityError,
    NormalizationError,
    SpaceMismatchError,
)
from src.utils.helper import get_dense_cap, get_tolerance
from src.utils.logger import setup_logger

logger = setup_logger()

Index = Tuple[int, ...]

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def projector_matrix(dim: int, index: int) -> np.ndarray:
    """|index><index| を返す"""
    matrix = np.zeros((dim, dim), dtype=complex)
    matrix[index, index] = 1.0
    return matrix


def exchange_matrix(dim: int, a: int, b: int) -> np.ndarray:
    """|a><b| + |b><a| を返す (J 型の観測量)"""
    if a == b:
        raise ValueError("exchange_matrix needs two distinct levels")
    matrix = np.zeros((dim, dim), dtype=complex)
    matrix[a, b] = 1.0
    matrix[b, a] = 1.0
    return matrix


def outer(ket: Sequence[complex], bra: Sequence[complex]) -> np.ndarray:
    return np.outer(np.asarray(ket, dtype=complex), np.conj(np.asarray(bra, dtype=complex)))


@dataclass(frozen=True)
class SpaceDescriptor:
    """順序付きの (ラベル, 次元) の組で定義されるテンソル積空間"""
    factors: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        if not factors:
            raise ValueError("A space needs at least one factor")
        labels = [label for label, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Factor labels must be unique: {labels}")
        for label, dim in factors:
            if dim < 2:
                raise ValueError(f"Factor '{label}' has dimension {dim}; every dimension must be >= 2")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *factors: Tuple[str, int]) -> "SpaceDescriptor":
        return cls(tuple(factors))

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def position(self, label: str) -> int:
        for i, (name, _) in enumerate(self.factors):
            if name == label:
                return i
        raise SpaceMismatchError(f"Unknown factor '{label}' in space {self.labels}")

    def dim(self, label: str) -> int:
        return self.factors[self.position(label)][1]

    def check_index(self, index: Sequence[int]) -> Index:
        if len(index) != len(self.factors):
            raise SpaceMismatchError(
                f"Multi-index {tuple(index)} has {len(index)} entries, space {self.labels} has {len(self.factors)}")
        for value, (label, dim) in zip(index, self.factors):
            # 1.7 や True を黙って切り捨てない
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                raise BoundsError(label, value, dim)
            if not 0 <= int(value) < dim:
                raise BoundsError(label, int(value), dim)
        return tuple(int(v) for v in index)

    def to_dict(self) -> Dict[str, Any]:
        return {"factors": [{"label": label, "dim": dim} for label, dim in self.factors]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SpaceDescriptor":
        return cls(tuple((f["label"], f["dim"]) for f in data["factors"]))


@dataclass(frozen=True, eq=False)
class StateVector:
    """疎な複素振幅で表した状態ベクトル"""
    space: SpaceDescriptor
    amplitudes: Mapping[Index, complex]

    def __post_init__(self):
        cleaned = {}
        for index, amplitude in self.amplitudes.items():
            key = self.space.check_index(index)
            value = complex(amplitude)
            if value != 0:
                cleaned[key] = value
        object.__setattr__(self, "amplitudes", MappingProxyType(cleaned))

    def amplitude(self, index: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(index), 0j)

    def norm_squared(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self.amplitudes.values())

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def is_normalized(self, tol: Optional[float] = None) -> bool:
        return abs(self.norm_squared() - 1.0) <= get_tolerance(tol)

    def scaled(self, factor: complex) -> "StateVector":
        return StateVector(self.space, {k: v * factor for k, v in self.amplitudes.items()})

    def normalized(self) -> "StateVector":
        norm = self.norm()
        if norm == 0:
            raise NormalizationError("Cannot normalize the zero vector")
        return self.scaled(1.0 / norm)

    def with_phase(self, theta: float) -> "StateVector":
        return self.scaled(cmath.exp(1j * theta))

    def to_dense(self) -> np.ndarray:
        vector = np.zeros(self.space.total_dim, dtype=complex)
        for index, amplitude in self.amplitudes.items():
            vector[np.ravel_multi_index(index, self.space.dims)] = amplitude
        return vector

    @classmethod
    def from_dense(cls, space: SpaceDescriptor, vector: np.ndarray, cutoff: float = 0.0) -> "StateVector":
        vector = np.asarray(vector, dtype=complex).reshape(-1)
        if vector.size != space.total_dim:
            raise SpaceMismatchError(f"Vector of size {vector.size} does not match dimension {space.total_dim}")
        amplitudes = {}
        for flat in np.flatnonzero(np.abs(vector) > cutoff):
            index = tuple(int(i) for i in np.unravel_index(flat, space.dims))
            amplitudes[index] = complex(vector[flat])
        return cls(space, amplitudes)

    def to_dict(self) -> Dict[str, Any]:
        """{factors, amplitudes} 形式。振幅はインデックスの辞書順"""
        return {
            "factors": self.space.to_dict()["factors"],
            "amplitudes": [
                {"index": list(index), "re": amplitude.real, "im": amplitude.imag}
                for index, amplitude in sorted(self.amplitudes.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StateVector":
        space = SpaceDescriptor.from_dict(data)
        amplitudes = {}
        for entry in data["amplitudes"]:
            amplitudes[tuple(entry["index"])] = complex(entry["re"], entry["im"])
        return cls(space, amplitudes)


@dataclass(frozen=True, eq=False)
class OperatorExpr:
    """
    局所行列のテンソル積の和として表した演算子

    terms の各要素は (係数, {因子ラベル: 局所行列})。
    ラベルが無い因子には恒等演算子が作用する。
    """
    space: SpaceDescriptor
    terms: Tuple[Tuple[complex, Mapping[str, np.ndarray]], ...]

    def __post_init__(self):
        checked = []
        for coefficient, factor_map in self.terms:
            local = {}
            for label, matrix in factor_map.items():
                dim = self.space.dim(label)
                array = np.array(matrix, dtype=complex)
                if array.shape != (dim, dim):
                    raise SpaceMismatchError(
                        f"Local matrix for '{label}' has shape {array.shape}, expected {(dim, dim)}")
                array.setflags(write=False)
                local[label] = array
            checked.append((complex(coefficient), MappingProxyType(local)))
        object.__setattr__(self, "terms", tuple(checked))

    @classmethod
    def identity(cls, space: SpaceDescriptor) -> "OperatorExpr":
        return cls(space, ((1.0, {}),))

    @classmethod
    def local(cls, space: SpaceDescriptor, label: str, matrix: np.ndarray,
              coefficient: complex = 1.0) -> "OperatorExpr":
        return cls(space, ((coefficient, {label: matrix}),))

    @classmethod
    def product(cls, space: SpaceDescriptor, factor_map: Mapping[str, np.ndarray],
                coefficient: complex = 1.0) -> "OperatorExpr":
        return cls(space, ((coefficient, dict(factor_map)),))

    def _check_space(self, other: "OperatorExpr"):
        if self.space != other.space:
            raise SpaceMismatchError(f"Operator spaces differ: {self.space.labels} vs {other.space.labels}")

    def __add__(self, other: "OperatorExpr") -> "OperatorExpr":
        self._check_space(other)
        return OperatorExpr(self.space, self.terms + other.terms)

    def __neg__(self) -> "OperatorExpr":
        return self * -1.0

    def __sub__(self, other: "OperatorExpr") -> "OperatorExpr":
        return self + (-other)

    def __mul__(self, scalar: complex) -> "OperatorExpr":
        if isinstance(scalar, OperatorExpr):
            return NotImplemented
        return OperatorExpr(self.space, tuple((c * scalar, m) for c, m in self.terms))

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorExpr") -> "OperatorExpr":
        """演算子積 self·other (other が先に作用する)"""
        self._check_space(other)
        terms = []
        for c1, m1 in self.terms:
            for c2, m2 in other.terms:
                merged = dict(m2)
                for label, matrix in m1.items():
                    merged[label] = matrix @ merged[label] if label in merged else matrix
                terms.append((c1 * c2, merged))
        return OperatorExpr(self.space, tuple(terms))

    def adjoint(self) -> "OperatorExpr":
        return OperatorExpr(
            self.space,
            tuple((c.conjugate(), {label: m.conj().T for label, m in fm.items()}) for c, fm in self.terms),
        )

    def to_dense(self, cap: Optional[int] = None) -> np.ndarray:
        """全空間の密行列に変換する。次元が上限を超える場合は CapacityError"""
        total = self.space.total_dim
        limit = get_dense_cap(cap)
        if total > limit:
            raise CapacityError(f"Dimension {total} exceeds dense cap {limit}", size=total, cap=limit)
        result = np.zeros((total, total), dtype=complex)
        for coefficient, factor_map in self.terms:
            block = np.array([[coefficient]], dtype=complex)
            for label, dim in self.space.factors:
                block = np.kron(block, factor_map.get(label, np.eye(dim, dtype=complex)))
            result += block
        return result

    def to_dict(self) -> Dict[str, Any]:
        return {
            "terms": [
                {
                    "coefficient": {"re": c.real, "im": c.imag},
                    "factors": {
                        label: [[[v.real, v.imag] for v in row] for row in matrix.tolist()]
                        for label, matrix in sorted(fm.items())
                    },
                }
                for c, fm in self.terms
            ]
        }


def _require_same_space(a: SpaceDescriptor, b: SpaceDescriptor):
    if a != b:
        raise SpaceMismatchError(f"Spaces differ: {a.labels}{a.dims} vs {b.labels}{b.dims}")


def make_basis_state(space: SpaceDescriptor, indices: Sequence[int]) -> StateVector:
    """
    指定した多重インデックスに振幅 1 を持つ正規化済み基底状態を作る

    Args:
        space (SpaceDescriptor): 状態空間
        indices (Sequence[int]): 因子ごとの基底インデックス

    Returns:
        StateVector: 基底状態
    """
    index = space.check_index(indices)
    return StateVector(space, {index: 1.0})


def superpose(terms: Iterable[Tuple[complex, StateVector]]) -> StateVector:
    """線形結合 Σ c_k |v_k> を返す。正規化はしない"""
    terms = list(terms)
    if not terms:
        raise ValueError("superpose needs at least one term")
    space = terms[0][1].space
    combined: Dict[Index, complex] = defaultdict(complex)
    for coefficient, state in terms:
        _require_same_space(space, state.space)
        for index, amplitude in state.amplitudes.items():
            combined[index] += coefficient * amplitude
    return StateVector(space, combined)


def inner(bra: StateVector, ket: StateVector) -> complex:
    """<bra|ket> (bra について反線形)"""
    _require_same_space(bra.space, ket.space)
    if len(bra.amplitudes) > len(ket.amplitudes):
        small, large, conjugate_small = ket.amplitudes, bra.amplitudes, False
    else:
        small, large, conjugate_small = bra.amplitudes, ket.amplitudes, True
    total = 0j
    for index, amplitude in small.items():
        other = large.get(index)
        if other is None:
            continue
        if conjugate_small:
            total += amplitude.conjugate() * other
        else:
            total += other.conjugate() * amplitude
    return total


def apply(op: OperatorExpr, state: StateVector) -> StateVector:
    """疎な振幅に演算子を作用させる"""
    _require_same_space(op.space, state.space)
    result: Dict[Index, complex] = defaultdict(complex)
    for coefficient, factor_map in op.terms:
        if coefficient == 0:
            continue
        local = [(op.space.position(label), matrix) for label, matrix in factor_map.items()]
        for index, amplitude in state.amplitudes.items():
            branches: List[Tuple[Index, complex]] = [(index, coefficient * amplitude)]
            for pos, matrix in local:
                next_branches = []
                for idx, amp in branches:
                    column = matrix[:, idx[pos]]
                    for row in np.flatnonzero(column):
                        new_index = idx[:pos] + (int(row),) + idx[pos + 1:]
                        next_branches.append((new_index, amp * complex(column[row])))
                branches = next_branches
            for idx, amp in branches:
                result[idx] += amp
    return StateVector(state.space, result)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """積状態 a⊗b。因子ラベルは重複してはならない"""
    space = SpaceDescriptor(a.space.factors + b.space.factors)
    amplitudes = {}
    for ia, va in a.amplitudes.items():
        for ib, vb in b.amplitudes.items():
            amplitudes[ia + ib] = va * vb
    return StateVector(space, amplitudes)


def fidelity_up_to_phase(a: StateVector, b: StateVector, tol: Optional[float] = None) -> float:
    """
    |<a|b>|^2 を返す。a = e^{iθ} b のときに限り 1

    Raises:
        NormalizationError: どちらかが正規化されていない場合
    """
    _require_same_space(a.space, b.space)
    tolerance = max(get_tolerance(tol), 1e-12)
    for name, state in (("a", a), ("b", b)):
        if abs(state.norm_squared() - 1.0) > tolerance:
            raise NormalizationError(f"State {name} is not normalized (norm^2={state.norm_squared():.15g})")
    return min(1.0, abs(inner(a, b)) ** 2)


@dataclass(frozen=True)
class StructureReport:
    hermitian: bool
    unitary: bool
    projector: bool


def _is_hermitian_matrix(matrix: np.ndarray, tol: float) -> bool:
    return bool(np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=tol))


def is_hermitian(op: OperatorExpr, cap: Optional[int] = None, tol: Optional[float] = None) -> bool:
    """密行列化した演算子がエルミートかを判定する"""
    return _is_hermitian_matrix(op.to_dense(cap), get_tolerance(tol))


def check_structure(op: OperatorExpr, cap: Optional[int] = None, tol: Optional[float] = None) -> StructureReport:
    """
    エルミート性・ユニタリ性・射影性を密行列で判定する

    Args:
        op (OperatorExpr): 判定対象
        cap (int | None): 密行列化の次元上限 (デフォルト 4096)
        tol (float | None): 許容誤差 (デフォルト 1e-12)

    Returns:
        StructureReport: 判定結果
    """
    tolerance = get_tolerance(tol)
    matrix = op.to_dense(cap)
    adjoint = matrix.conj().T
    identity = np.eye(matrix.shape[0], dtype=complex)
    hermitian = _is_hermitian_matrix(matrix, tolerance)
    unitary = bool(np.allclose(adjoint @ matrix, identity, rtol=0.0, atol=tolerance))
    projector = hermitian and bool(np.allclose(matrix @ matrix, matrix, rtol=0.0, atol=tolerance))
    report = StructureReport(hermitian=hermitian, unitary=unitary, projector=projector)
    logger.debug(f"Structure of operator on {op.space.labels}: {report}")
    return report
