"""
ガウス型ポインタによる弱測定のシミュレーション

系と位置 x のポインタを瞬間的な相互作用 g·O⊗p で結合し、事後選択後の
ポインタの平均位置・平均運動量から弱値を読み取る。

    Φ(x) = Σ_λ <post|P_λ|pre> φ0(x - gλ)
    Re (O)_w ≈ <x>/g,   Im (O)_w ≈ <p>·2σ²/g   (Var(p) = 1/(4σ²))

小さい g の近似は使わず、格子上で厳密に発展させる。
"""
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
import scipy.linalg

from src.exceptions import CapacityError, ConfigurationError, GridError, NullPostSelectionError, StructureError
from src.hilbert import OperatorExpr, StateVector, apply, inner, is_hermitian, superpose
from src.utils.helper import get_dense_cap
from src.utils.logger import setup_logger
from src.weakvalue import PrePostEnsemble, weak_value

logger = setup_logger()

MIN_SUCCESS_PROBABILITY = 1e-14
EIGENVALUE_GROUPING = 1e-9
KRYLOV_CUTOFF = 1e-10


@dataclass(frozen=True)
class MeterConfig:
    """
    ポインタの設定

    Attributes:
        sigma (float): 初期ガウス波束の位置の広がり
        g (float): 結合の強さ (位置と同じ単位)
        grid_halfwidth (float | None): 格子の半幅。省略時は 10σ
        grid_points (int): 格子点数 (2 のべき乗)
    """
    sigma: float
    g: float
    grid_halfwidth: Optional[float] = None
    grid_points: int = 1024

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma <= 0:
            raise ConfigurationError(f"sigma must be a positive finite number, got {self.sigma}")
        if not math.isfinite(self.g):
            raise ConfigurationError(f"g must be finite, got {self.g}")
        if self.g == 0:
            raise ConfigurationError("g must be non-zero to read a weak value from the pointer shift")
        points = int(self.grid_points)
        if points < 2 or points & (points - 1):
            raise ConfigurationError(f"grid_points must be a power of two, got {self.grid_points}")
        halfwidth = 10.0 * self.sigma if self.grid_halfwidth is None else float(self.grid_halfwidth)
        if not math.isfinite(halfwidth) or halfwidth <= 0:
            raise ConfigurationError(f"grid_halfwidth must be positive, got {self.grid_halfwidth}")
        object.__setattr__(self, "grid_points", points)
        object.__setattr__(self, "grid_halfwidth", halfwidth)

    @property
    def dx(self) -> float:
        return 2.0 * self.grid_halfwidth / self.grid_points

    def positions(self) -> np.ndarray:
        return -self.grid_halfwidth + self.dx * np.arange(self.grid_points)

    def momenta(self) -> np.ndarray:
        return 2.0 * np.pi * scipy.fft.fftfreq(self.grid_points, self.dx)

    def with_coupling(self, g: float) -> "MeterConfig":
        return replace(self, g=g)


@dataclass(frozen=True)
class Branch:
    """固有値 λ の固有空間への分岐。amplitude = <post|P_λ|pre>, weight = ||P_λ pre||²"""
    eigenvalue: float
    amplitude: complex
    weight: float


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    g: float
    sigma: float
    success_probability: float
    conditional_position_mean: float
    conditional_momentum_mean: float
    pointer_wavefunction: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    inferred_weak_value: complex
    total_norm: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "g": self.g,
            "sigma": self.sigma,
            "success_probability": self.success_probability,
            "position_mean": self.conditional_position_mean,
            "momentum_mean": self.conditional_momentum_mean,
            "weak_value": {"re": self.inferred_weak_value.real, "im": self.inferred_weak_value.imag},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def density_csv(self) -> str:
        """事後選択後のポインタ密度 |Φ(x)|² の CSV (x, density)"""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["x", "density"])
        for x, value in zip(self.positions, np.abs(self.pointer_wavefunction) ** 2):
            writer.writerow([format(float(x), ".17g"), format(float(value), ".17g")])
        return buffer.getvalue()


def gaussian_pointer(meter: MeterConfig) -> np.ndarray:
    """φ0(x) = (2πσ²)^(-1/4) exp(-x²/4σ²) を格子上で離散的に規格化したもの"""
    x = meter.positions()
    phi = (2.0 * np.pi * meter.sigma ** 2) ** -0.25 * np.exp(-x ** 2 / (4.0 * meter.sigma ** 2))
    return phi / math.sqrt(float(np.sum(np.abs(phi) ** 2)) * meter.dx)


def translate(phi: np.ndarray, shift: float, meter: MeterConfig) -> np.ndarray:
    """exp(-i·shift·p) を運動量空間で掛けて波動関数を shift だけ平行移動する"""
    return scipy.fft.ifft(scipy.fft.fft(phi) * np.exp(-1j * meter.momenta() * shift))


def decompose_branches(eigenvalues: Sequence[float],
                       eigenvectors: np.ndarray,
                       pre_vec: np.ndarray,
                       post_vec: np.ndarray,
                       atol: float = EIGENVALUE_GROUPING) -> Tuple[Branch, ...]:
    """
    固有分解から、固有値ごとにまとめた分岐振幅を求める

    縮退した固有値は atol 以内でまとめるので、固有空間内の基底の選び方に依らない。

    Args:
        eigenvalues (Sequence[float]): 固有値
        eigenvectors (np.ndarray): 列が正規直交な固有ベクトル
        pre_vec (np.ndarray): 同じ基底での事前選択状態
        post_vec (np.ndarray): 同じ基底での事後選択状態

    Returns:
        Tuple[Branch, ...]: 固有値の昇順
    """
    values = np.asarray(eigenvalues, dtype=float)
    vectors = np.asarray(eigenvectors, dtype=complex)
    pre_coeffs = vectors.conj().T @ np.asarray(pre_vec, dtype=complex)
    post_coeffs = vectors.conj().T @ np.asarray(post_vec, dtype=complex)

    branches: List[Branch] = []
    group: List[int] = []

    def close_group():
        if not group:
            return
        branches.append(Branch(
            eigenvalue=float(np.mean(values[group])),
            amplitude=complex(np.sum(post_coeffs[group].conj() * pre_coeffs[group])),
            weight=float(np.sum(np.abs(pre_coeffs[group]) ** 2)),
        ))

    for k in np.argsort(values, kind="stable"):
        if group and values[k] - values[group[0]] > atol:
            close_group()
            group = []
        group.append(int(k))
    close_group()
    return tuple(branches)


def _krylov_basis(op: OperatorExpr, start: StateVector, limit: int) -> List[StateVector]:
    """start から O を繰り返し作用させて張る不変部分空間の正規直交基底"""
    basis = [start.normalized()]
    frontier = basis[0]
    while True:
        candidate = apply(op, frontier)
        raw_norm = candidate.norm()
        # 2 パスの Gram-Schmidt
        for _ in range(2):
            for vector in basis:
                overlap = inner(vector, candidate)
                if overlap != 0:
                    candidate = superpose([(1.0, candidate), (-overlap, vector)])
        norm = candidate.norm()
        if norm <= KRYLOV_CUTOFF * max(raw_norm, 1.0):
            return basis
        if len(basis) >= limit:
            raise CapacityError(f"Invariant subspace exceeds {limit} dimensions", size=len(basis) + 1, cap=limit)
        frontier = candidate.scaled(1.0 / norm)
        basis.append(frontier)


def _termwise_hermitian(op: OperatorExpr, tol: float) -> bool:
    for coefficient, factor_map in op.terms:
        if abs(coefficient.imag) > tol:
            return False
        for matrix in factor_map.values():
            if not np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=tol):
                return False
    return True


def _require_hermitian(op: OperatorExpr, basis: Sequence[StateVector], cap: int, tol: float = 1e-12):
    """
    各項がエルミートなら即座に通す。そうでなければ次元が上限以下なら密行列で、
    上限を超える場合は不変部分空間上で O と O† の作用を比べる
    """
    if _termwise_hermitian(op, tol):
        return
    if op.space.total_dim <= cap:
        if is_hermitian(op, cap, tol):
            return
    else:
        adjoint = op.adjoint()
        if all(superpose([(1.0, apply(op, v)), (-1.0, apply(adjoint, v))]).norm() <= tol for v in basis):
            return
    raise StructureError("Observable is not Hermitian")


def observable_branches(ens: PrePostEnsemble, op: OperatorExpr, cap: Optional[int] = None) -> Tuple[Branch, ...]:
    """
    事前選択状態を含む O の不変部分空間 (Krylov 部分空間) 上で O を固有分解し、分岐に分ける

    全空間を密行列化しないので、次元が密行列の上限を超える系にも使える。

    Raises:
        StructureError: O がエルミートでない場合
    """
    limit = get_dense_cap(cap)
    basis = _krylov_basis(op, ens.pre, limit)
    _require_hermitian(op, basis, limit)
    images = [apply(op, v) for v in basis]
    reduced = np.array([[inner(u, image) for image in images] for u in basis], dtype=complex)
    reduced = 0.5 * (reduced + reduced.conj().T)
    eigenvalues, eigenvectors = scipy.linalg.eigh(reduced)
    pre_vec = np.array([inner(v, ens.pre) for v in basis], dtype=complex)
    post_vec = np.array([inner(v, ens.post) for v in basis], dtype=complex)
    branches = decompose_branches(eigenvalues, eigenvectors, pre_vec, post_vec)
    logger.debug(f"Observable reduced to {len(basis)} dimensions, {len(branches)} eigen-branches")
    return branches


def _simulate(branches: Sequence[Branch], meter: MeterConfig) -> MeasurementRecord:
    shift_bound = abs(meter.g) * max(abs(b.eigenvalue) for b in branches)
    required = 5.0 * meter.sigma + shift_bound
    if meter.grid_halfwidth < required:
        raise GridError(
            f"Grid halfwidth {meter.grid_halfwidth:g} is below 5σ + |g|·max|λ| = {required:g}; shifted pointer leaves the grid")

    phi0 = gaussian_pointer(meter)
    x = meter.positions()
    dx = meter.dx
    conditioned = np.zeros(meter.grid_points, dtype=complex)
    total_norm = 0.0
    for branch in branches:
        shifted = translate(phi0, meter.g * branch.eigenvalue, meter)
        conditioned += branch.amplitude * shifted
        total_norm += branch.weight * float(np.sum(np.abs(shifted) ** 2)) * dx

    density = np.abs(conditioned) ** 2
    probability = float(np.sum(density)) * dx
    if probability < MIN_SUCCESS_PROBABILITY:
        raise NullPostSelectionError(math.sqrt(max(probability, 0.0)))

    position_mean = float(np.sum(x * density)) * dx / probability
    momentum_density = np.abs(scipy.fft.fft(conditioned)) ** 2
    momentum_mean = float(np.sum(meter.momenta() * momentum_density) / np.sum(momentum_density))
    inferred = complex(position_mean / meter.g, momentum_mean * 2.0 * meter.sigma ** 2 / meter.g)

    return MeasurementRecord(
        g=meter.g,
        sigma=meter.sigma,
        success_probability=min(1.0, probability),
        conditional_position_mean=position_mean,
        conditional_momentum_mean=momentum_mean,
        pointer_wavefunction=conditioned / math.sqrt(probability),
        positions=x,
        inferred_weak_value=inferred,
        total_norm=total_norm,
    )


def simulate_weak_measurement(ens: PrePostEnsemble, op: OperatorExpr, meter: MeterConfig,
                              cap: Optional[int] = None) -> MeasurementRecord:
    """
    |pre>⊗φ0 を g·O⊗p で結合し、|post> に事後選択したポインタの統計を返す

    Args:
        ens (PrePostEnsemble): 事前・事後選択
        op (OperatorExpr): エルミートな観測量
        meter (MeterConfig): ポインタ設定
        cap (int | None): 不変部分空間の次元上限

    Returns:
        MeasurementRecord: 条件付きの平均位置・平均運動量と推定した弱値

    Raises:
        StructureError: O がエルミートでない場合
        NullPostSelectionError: 事後選択の確率が 1e-14 未満の場合
        GridError: ずれたポインタが格子からはみ出す場合
    """
    record = _simulate(observable_branches(ens, op, cap), meter)
    logger.info(
        f"Weak measurement g={meter.g:g} sigma={meter.sigma:g}: "
        f"P={record.success_probability:.6g}, inferred={record.inferred_weak_value:.6g}")
    return record


def convergence_sweep(ens: PrePostEnsemble, op: OperatorExpr, meter: MeterConfig,
                      g_list: Sequence[float], max_workers: Optional[int] = None,
                      cap: Optional[int] = None) -> List[Tuple[float, float]]:
    """
    g を小さくしながら推定弱値と厳密な弱値の差を調べる

    Args:
        g_list (Sequence[float]): 降順の結合の強さ
        max_workers (int | None): 2 以上なら g ごとに並列に計算する (出力順は g_list 順)

    Returns:
        List[Tuple[float, float]]: (g, |inferred - exact|) の列
    """
    values = [float(g) for g in g_list]
    if not values:
        raise ConfigurationError("g_list must not be empty")
    if any(a <= b for a, b in zip(values, values[1:])):
        raise ConfigurationError(f"g_list must be strictly descending, got {values}")

    exact = weak_value(ens, op)
    branches = observable_branches(ens, op, cap)
    meters = [meter.with_coupling(g) for g in values]

    def error_at(m: MeterConfig) -> Tuple[float, float]:
        return m.g, abs(_simulate(branches, m).inferred_weak_value - exact)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            errors = list(executor.map(error_at, meters))
    else:
        errors = [error_at(m) for m in meters]

    for (g_prev, e_prev), (g, e) in zip(errors, errors[1:]):
        if abs(g) < meter.sigma / 10 and e > e_prev:
            logger.warning(f"Non-monotone convergence: error {e:.3g} at g={g:g} exceeds {e_prev:.3g} at g={g_prev:g}")
    return errors
