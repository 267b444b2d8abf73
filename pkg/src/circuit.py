"""
光子・中性子干渉計の素子ごとのシミュレーション

空間は path (モード 0..M-1) と内部自由度のテンソル積:
    光子:   pol (L=0, R=1) ⊗ oam (m = -4, -2, 0, +2, +4 → 0..4)
    中性子: spin (↑=0, ↓=1) ⊗ energy (E0=0, E0-ħω=1)
"""
import math
import cmath
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from src.exceptions import (
    CircuitCompatibilityError,
    CircuitSemanticError,
    ConfigurationError,
    NormalizationError,
    NullPostSelectionError,
    OamOverflowError,
    QCCError,
    SpaceMismatchError,
)
from src.hilbert import (
    PAULI_X,
    OperatorExpr,
    SpaceDescriptor,
    StateVector,
    apply,
    exchange_matrix,
    fidelity_up_to_phase,
    make_basis_state,
    outer,
    projector_matrix,
    superpose,
)
from src.pointer import MeasurementRecord, MeterConfig, simulate_weak_measurement
from src.utils.helper import get_tolerance
from src.utils.logger import setup_logger
from src.weakvalue import PrePostEnsemble

logger = setup_logger()

RANK_CUTOFF = 1e-10
MIN_CLICK_PROBABILITY = 1e-14

OAM_VALUES = (-4, -2, 0, 2, 4)

# 内部自由度の記号 (インデックス順)
INTERNAL_SYMBOLS: Dict[str, Tuple[str, ...]] = {
    "pol": ("L", "R"),
    "oam": ("-4", "-2", "0", "+2", "+4"),
    "spin": ("up", "down"),
    "energy": ("0", "1"),
}


class Platform(str, Enum):
    PHOTON = "photon"
    NEUTRON = "neutron"

    @property
    def internals(self) -> Tuple[Tuple[str, int], ...]:
        if self is Platform.PHOTON:
            return (("pol", 2), ("oam", 5))
        return (("spin", 2), ("energy", 2))


def internal_index(label: str, token: str) -> int:
    """記号 (例: pol の "R", oam の "+2") を基底インデックスに変換する"""
    if label not in INTERNAL_SYMBOLS:
        raise ValueError(f"Unknown internal degree of freedom '{label}'")
    if label == "oam":
        try:
            return OAM_VALUES.index(int(token))
        except ValueError:
            raise ValueError(f"oam must be one of {list(OAM_VALUES)}, got '{token}'") from None
    symbols = INTERNAL_SYMBOLS[label]
    if token not in symbols:
        raise ValueError(f"{label} must be one of {list(symbols)}, got '{token}'")
    return symbols.index(token)


def internal_symbol(label: str, index: int) -> str:
    return INTERNAL_SYMBOLS[label][index]


@dataclass(frozen=True)
class CircuitSpace:
    platform: Platform
    modes: int

    def __post_init__(self):
        object.__setattr__(self, "platform", Platform(self.platform))
        if int(self.modes) < 2:
            raise ConfigurationError(f"A circuit needs at least 2 modes, got {self.modes}")

    @property
    def descriptor(self) -> SpaceDescriptor:
        return SpaceDescriptor((("path", int(self.modes)),) + self.platform.internals)

    @property
    def internal_labels(self) -> Tuple[str, ...]:
        return tuple(label for label, _ in self.platform.internals)

    @classmethod
    def from_descriptor(cls, space: SpaceDescriptor) -> "CircuitSpace":
        """path と光子/中性子の内部自由度からなる空間か検証して CircuitSpace を返す"""
        labels = space.labels
        if labels.count("path") != 1 or labels[0] != "path":
            raise CircuitCompatibilityError(f"Circuit space needs exactly one leading path factor: {labels}")
        for platform in Platform:
            if space.factors[1:] == platform.internals:
                return cls(platform, space.dim("path"))
        raise CircuitCompatibilityError(f"Internal factors {space.factors[1:]} are neither the photon nor the neutron set")


# --- 素子 ---

@dataclass(frozen=True)
class BeamSplitter:
    """
    |a> → √t|a> + i√(1-t)|b>,  |b> → i√(1-t)|a> + √t|b>

    dagger=True は i を -i にした共役 (逆素子)
    """
    mode_a: int
    mode_b: int
    t: float
    dagger: bool = False
    keyword = "bs"

    def __post_init__(self):
        if self.mode_a == self.mode_b:
            raise ConfigurationError(f"Beam splitter needs two distinct modes, got {self.mode_a} twice")
        if not 0.0 < float(self.t) < 1.0:
            raise ConfigurationError(f"Transmittance must lie in (0, 1), got {self.t}")

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode_a, self.mode_b)


@dataclass(frozen=True)
class Mirror:
    mode: int
    keyword = "mirror"

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class PhaseShifter:
    """phase_pi は π 単位の位相 (1 で e^{iπ})"""
    mode: int
    phase_pi: float
    keyword = "ps"

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class HalfWavePlate:
    mode: int
    keyword = "hwp"
    platform = Platform.PHOTON

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class QPlate:
    """|R,m> → |L,m-2>, |L,m> → |R,m+2>"""
    mode: int
    keyword = "qp"
    platform = Platform.PHOTON

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class SpinFlipper:
    mode: int
    keyword = "sf"
    platform = Platform.NEUTRON

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class RFFlipper:
    """|↑,E0> → i|↓,E0-ħω>, |↓,E0-ħω> → i|↑,E0>, 他の 2 状態はそのまま"""
    mode: int
    keyword = "rf"
    platform = Platform.NEUTRON

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class Detector:
    """
    モード上の検出器。filter は (内部ラベル, インデックス) の組で、
    指定したラベルだけを射影する (指定なしは恒等)
    """
    mode: int
    name: str
    filter: Tuple[Tuple[str, int], ...] = ()
    keyword = "detector"

    @property
    def modes(self) -> Tuple[int, ...]:
        return (self.mode,)


CircuitElement = Union[BeamSplitter, Mirror, PhaseShifter, HalfWavePlate, QPlate, SpinFlipper, RFFlipper, Detector]


@dataclass(frozen=True)
class InputSpec:
    mode: int
    internal: Tuple[Tuple[str, int], ...]


def check_element(element: CircuitElement, space: CircuitSpace):
    """
    素子が空間と整合するか検証する

    Raises:
        CircuitSemanticError: モード番号が範囲外、または検出器のフィルタが不正な場合
        CircuitCompatibilityError: 光子用素子を中性子空間で使うなど、内部自由度が合わない場合
    """
    for mode in element.modes:
        if not 0 <= mode < space.modes:
            raise CircuitSemanticError(f"Mode {mode} is out of range for a circuit with {space.modes} modes")
    platform = getattr(element, "platform", None)
    if platform is not None and platform is not space.platform:
        raise CircuitCompatibilityError(
            f"Element '{element.keyword}' needs a {platform.value} circuit, not {space.platform.value}")
    if isinstance(element, Detector):
        labels = [label for label, _ in element.filter]
        if len(set(labels)) != len(labels):
            raise CircuitSemanticError(f"Detector '{element.name}' filters the same degree of freedom twice")
        dims = dict(space.platform.internals)
        for label, index in element.filter:
            if label not in dims:
                raise CircuitCompatibilityError(f"Detector filter '{label}' does not exist in a {space.platform.value} circuit")
            if not 0 <= index < dims[label]:
                raise CircuitSemanticError(f"Detector filter index {index} out of range for '{label}'")


@dataclass(frozen=True)
class Circuit:
    space: CircuitSpace
    elements: Tuple[CircuitElement, ...] = ()
    input_spec: Optional[InputSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for element in self.elements:
            check_element(element, self.space)
        modes = [d.mode for d in self.detectors]
        names = [d.name for d in self.detectors]
        if len(set(modes)) != len(modes):
            raise CircuitSemanticError(f"More than one detector on a mode: {modes}")
        if len(set(names)) != len(names):
            raise CircuitSemanticError(f"Duplicate detector names: {names}")
        if self.input_spec is not None:
            self.input_state()

    @property
    def detectors(self) -> Tuple[Detector, ...]:
        return tuple(e for e in self.elements if isinstance(e, Detector))

    def detector(self, name: str) -> Detector:
        for d in self.detectors:
            if d.name == name:
                return d
        raise ConfigurationError(f"Unknown detector '{name}'. Available: {[d.name for d in self.detectors]}")

    def input_state(self) -> StateVector:
        """input 指示子の基底状態。省略された内部自由度はインデックスの既定値 (L, m=0, ↑, E0)"""
        if self.input_spec is None:
            raise ConfigurationError("Circuit has no input state")
        defaults = {"pol": 0, "oam": OAM_VALUES.index(0), "spin": 0, "energy": 0}
        values = dict(self.input_spec.internal)
        unknown = set(values) - set(self.space.internal_labels)
        if unknown:
            raise CircuitCompatibilityError(f"Input sets {sorted(unknown)}, not present in a {self.space.platform.value} circuit")
        index = [self.input_spec.mode] + [values.get(label, defaults[label]) for label in self.space.internal_labels]
        try:
            return make_basis_state(self.space.descriptor, index)
        except QCCError as e:
            raise CircuitSemanticError(f"Invalid input state: {e}") from e

    def composed_unitary(self, cap: Optional[int] = None, strict: bool = False) -> np.ndarray:
        """
        検出器以外の素子を順に合成した密行列

        Q-plate は oam の端で打ち切られるため、途中で ±4 を越える入力基底の列は 0 になる。

        Args:
            cap (int | None): 密行列化の次元上限
            strict (bool): True なら打ち切られる列があると例外を送出する

        Raises:
            OamOverflowError: strict で、Q-plate が oam を {-4..+4} の外へ送る入力基底がある場合
        """
        descriptor = self.space.descriptor
        unitary = np.eye(descriptor.total_dim, dtype=complex)
        for element in self.elements:
            if isinstance(element, Detector):
                continue
            unitary = element_unitary(element, self.space).to_dense(cap) @ unitary
        if strict:
            lost = overflow_columns(unitary)
            if lost:
                raise OamOverflowError(
                    f"Q-plates push {len(lost)} input basis states beyond oam ±4 "
                    f"(first: {tuple(int(i) for i in np.unravel_index(lost[0], descriptor.dims))})")
        return unitary


def overflow_columns(unitary: np.ndarray) -> List[int]:
    """合成行列のうち oam の打ち切りでノルムを失った列 (入力基底) の番号"""
    norms = np.linalg.norm(unitary, axis=0)
    return [int(i) for i in np.flatnonzero(np.abs(norms - 1.0) > 1e-9)]


# --- 素子のユニタリ ---

def _path_matrix(modes: int, entries: Mapping[Tuple[int, int], complex]) -> np.ndarray:
    matrix = np.eye(modes, dtype=complex)
    for (row, col), value in entries.items():
        matrix[row, col] = value
    return matrix


def _shift_matrix(dim: int, step: int, cyclic: bool = False) -> np.ndarray:
    """|k> → |k+step>。cyclic でなければ範囲外へ出る列は 0"""
    if cyclic:
        return np.roll(np.eye(dim, dtype=complex), step, axis=0)
    return np.eye(dim, k=-step, dtype=complex)


def _on_mode(space: CircuitSpace, mode: int, internal: OperatorExpr) -> OperatorExpr:
    """Π_mode ⊗ internal + (I - Π_mode) ⊗ I"""
    descriptor = space.descriptor
    here = projector_matrix(space.modes, mode)
    elsewhere = np.eye(space.modes, dtype=complex) - here
    terms = tuple((c, {"path": here, **fm}) for c, fm in internal.terms)
    return OperatorExpr(descriptor, terms) + OperatorExpr.local(descriptor, "path", elsewhere)


def element_unitary(element: CircuitElement, space: CircuitSpace, cyclic: bool = False) -> OperatorExpr:
    """
    素子の全空間上のユニタリ

    Q-plate の oam の梯子は ±4 で打ち切られ、端の列 (|L,+4>, |R,-4>) は 0 に送られる。
    cyclic=True なら梯子を巡回的に閉じた全空間のユニタリを返す。
    状態への作用で端の振幅を検出するのは apply_element。検出器は恒等演算子。

    Raises:
        CircuitCompatibilityError: 素子が空間の内部自由度と合わない場合
    """
    check_element(element, space)
    descriptor = space.descriptor
    if isinstance(element, BeamSplitter):
        transmitted = math.sqrt(element.t)
        reflected = (-1j if element.dagger else 1j) * math.sqrt(1.0 - element.t)
        a, b = element.mode_a, element.mode_b
        matrix = _path_matrix(space.modes, {(a, a): transmitted, (b, b): transmitted, (b, a): reflected, (a, b): reflected})
        return OperatorExpr.local(descriptor, "path", matrix)
    if isinstance(element, Mirror):
        return OperatorExpr.local(descriptor, "path", _path_matrix(space.modes, {(element.mode, element.mode): 1j}))
    if isinstance(element, PhaseShifter):
        phase = cmath.exp(1j * math.pi * element.phase_pi)
        return OperatorExpr.local(descriptor, "path", _path_matrix(space.modes, {(element.mode, element.mode): phase}))
    if isinstance(element, HalfWavePlate):
        return _on_mode(space, element.mode, OperatorExpr.local(descriptor, "pol", PAULI_X))
    if isinstance(element, SpinFlipper):
        return _on_mode(space, element.mode, OperatorExpr.local(descriptor, "spin", PAULI_X))
    if isinstance(element, QPlate):
        lowered = OperatorExpr.product(descriptor, {"pol": outer([1, 0], [0, 1]), "oam": _shift_matrix(5, -1, cyclic)})
        raised = OperatorExpr.product(descriptor, {"pol": outer([0, 1], [1, 0]), "oam": _shift_matrix(5, 1, cyclic)})
        return _on_mode(space, element.mode, lowered + raised)
    if isinstance(element, RFFlipper):
        up, down = np.eye(2, dtype=complex)
        flips = (OperatorExpr.product(descriptor, {"spin": outer(down, up), "energy": outer(down, up)}, 1j)
                 + OperatorExpr.product(descriptor, {"spin": outer(up, down), "energy": outer(up, down)}, 1j))
        keeps = (OperatorExpr.product(descriptor, {"spin": outer(up, up), "energy": outer(down, down)})
                 + OperatorExpr.product(descriptor, {"spin": outer(down, down), "energy": outer(up, up)}))
        return _on_mode(space, element.mode, flips + keeps)
    if isinstance(element, Detector):
        return OperatorExpr.identity(descriptor)
    raise CircuitCompatibilityError(f"Unsupported circuit element: {element!r}")


def apply_element(element: CircuitElement, space: CircuitSpace, state: StateVector) -> StateVector:
    """
    状態に素子を作用させる

    Raises:
        OamOverflowError: Q-plate が oam を {-4..+4} の外へ送る振幅がある場合
    """
    if isinstance(element, QPlate):
        pol_pos = space.descriptor.position("pol")
        oam_pos = space.descriptor.position("oam")
        for index, amplitude in state.amplitudes.items():
            if index[0] != element.mode:
                continue
            # L は m+2、R は m-2 へ進む
            if (index[pol_pos] == 0 and index[oam_pos] == len(OAM_VALUES) - 1) or \
                    (index[pol_pos] == 1 and index[oam_pos] == 0):
                raise OamOverflowError(
                    f"Q-plate on mode {element.mode} would push oam beyond ±4 "
                    f"(pol={internal_symbol('pol', index[pol_pos])}, m={OAM_VALUES[index[oam_pos]]:+d})")
    return apply(element_unitary(element, space), state)


def run(circuit: Circuit, state: StateVector, tol: Optional[float] = None) -> StateVector:
    """
    検出器以外の素子を順に作用させる

    素子で発生した例外には element_index 属性と注記を付けて再送出する。

    Raises:
        NormalizationError: 入力状態が正規化されていない場合
    """
    descriptor = circuit.space.descriptor
    if state.space != descriptor:
        raise SpaceMismatchError(f"Input state space {state.space.labels} does not match circuit space {descriptor.labels}")
    tolerance = max(get_tolerance(tol), 1e-12)
    if abs(state.norm_squared() - 1.0) > tolerance:
        raise NormalizationError(f"Circuit input is not normalized (norm^2={state.norm_squared():.15g})")

    current = state
    for i, element in enumerate(circuit.elements):
        if isinstance(element, Detector):
            continue
        try:
            current = apply_element(element, circuit.space, current)
        except QCCError as e:
            e.element_index = i
            e.add_note(f"while applying element {i} ({element.keyword})")
            logger.error(f"Circuit failed at element {i} ({element.keyword}): {e}")
            raise
        logger.debug(f"Element {i} ({element.keyword}) applied, support={len(current.amplitudes)}")

    drift = abs(current.norm_squared() - 1.0)
    if drift > tolerance:
        logger.warning(f"Norm drifted by {drift:.3e} while running the circuit")
    return current


# --- 検出 ---

@dataclass(frozen=True, eq=False)
class DetectorOutcome:
    name: str
    probability: float
    state: Optional[StateVector] = field(default=None, repr=False)


def detector_projector(circuit: Circuit, detector: Detector) -> OperatorExpr:
    """|mode><mode| ⊗ (フィルタの射影)"""
    descriptor = circuit.space.descriptor
    factor_map = {"path": projector_matrix(circuit.space.modes, detector.mode)}
    for label, index in detector.filter:
        factor_map[label] = projector_matrix(descriptor.dim(label), index)
    return OperatorExpr.product(descriptor, factor_map)


def detect(circuit: Circuit, state: StateVector, condition_on: Optional[str] = None) -> List[DetectorOutcome]:
    """
    各検出器のクリック確率と、クリックした場合の規格化済みの条件付き状態

    Args:
        circuit (Circuit): 検出器を含む回路
        state (StateVector): run の出力状態
        condition_on (str | None): 条件付けを要求する検出器名。確率が 0 ならエラー

    Raises:
        NullPostSelectionError: condition_on の検出器が (ほぼ) 確率 0 の場合
    """
    if condition_on is not None:
        circuit.detector(condition_on)
    outcomes = []
    for detector in circuit.detectors:
        component = apply(detector_projector(circuit, detector), state)
        probability = min(1.0, component.norm_squared())
        conditional = component.normalized() if probability > MIN_CLICK_PROBABILITY else None
        if detector.name == condition_on and conditional is None:
            raise NullPostSelectionError(math.sqrt(probability), label=detector.name)
        outcomes.append(DetectorOutcome(name=detector.name, probability=probability, state=conditional))
        logger.debug(f"Detector {detector.name}: P={probability:.6g}")
    return outcomes


@dataclass(frozen=True, eq=False)
class ProjectorReport:
    detector: str
    rank: int
    matrix: np.ndarray = field(repr=False)
    range_state: Optional[StateVector] = field(default=None, repr=False)
    fidelity_to_target: Optional[float] = None
    overflow_inputs: int = 0


def effective_postselection_projector(circuit: Circuit, detector_name: str,
                                      target: Optional[StateVector] = None,
                                      cap: Optional[int] = None) -> ProjectorReport:
    """
    検出器のクリックが表す射影を回路の入口に引き戻す: M = U† (|mode><mode| ⊗ F) U

    Args:
        circuit (Circuit): 事後選択の回路
        detector_name (str): 検出器名
        target (StateVector | None): rank 1 の場合に忠実度を比べる状態
        cap (int | None): 密行列化の次元上限

    Returns:
        ProjectorReport: rank (固有値 > 1e-10 の数)、行列、rank 1 なら像の状態と忠実度、
            oam の打ち切りで引き戻しから外れた入力基底の数
    """
    detector = circuit.detector(detector_name)
    unitary = circuit.composed_unitary(cap)
    overflow = len(overflow_columns(unitary))
    if overflow:
        logger.warning(f"{overflow} input basis states leave the oam truncation and are excluded from {detector_name}")
    projector = detector_projector(circuit, detector).to_dense(cap)
    matrix = unitary.conj().T @ projector @ unitary
    eigenvalues, eigenvectors = scipy.linalg.eigh(0.5 * (matrix + matrix.conj().T))
    rank = int(np.sum(eigenvalues > RANK_CUTOFF))

    range_state = None
    fidelity = None
    if rank == 1:
        vector = eigenvectors[:, int(np.argmax(eigenvalues))]
        range_state = StateVector.from_dense(circuit.space.descriptor, vector, cutoff=1e-13).normalized()
        if target is not None:
            fidelity = fidelity_up_to_phase(range_state, target)
    else:
        logger.warning(f"Detector {detector_name} realizes a rank-{rank} projector, not a single post-selected state")
    return ProjectorReport(detector=detector_name, rank=rank, matrix=matrix, range_state=range_state,
                           fidelity_to_target=fidelity, overflow_inputs=overflow)


# --- 観測量と参照状態 ---

def path_projector(space: CircuitSpace, mode: int) -> OperatorExpr:
    return OperatorExpr.local(space.descriptor, "path", projector_matrix(space.modes, mode))


def internal_sigma_x(space: CircuitSpace, label: str) -> OperatorExpr:
    """内部自由度の σx。oam は |+2><-2| + |-2><+2|"""
    if label not in space.internal_labels:
        raise CircuitCompatibilityError(f"'{label}' is not an internal factor of a {space.platform.value} circuit")
    if label == "oam":
        matrix = exchange_matrix(5, OAM_VALUES.index(-2), OAM_VALUES.index(2))
    else:
        matrix = PAULI_X
    return OperatorExpr.local(space.descriptor, label, matrix)


def observable_family(space: CircuitSpace) -> List[Tuple[str, OperatorExpr]]:
    """Πk と Πkσx^<内部自由度> (k は 1 始まり) の一覧"""
    observables = []
    for mode in range(space.modes):
        observables.append((f"Π{mode + 1}", path_projector(space, mode)))
    for label in space.internal_labels:
        for mode in range(space.modes):
            observables.append((f"Π{mode + 1}σx^{label}", path_projector(space, mode) @ internal_sigma_x(space, label)))
    return observables


def reference_state(name: str, space: Optional[CircuitSpace] = None) -> StateVector:
    """
    既知の事前・事後選択状態

        eq28: (|1,R,+2> + |2,L,+2> + |3,R,-2>)/√3   (光子の事前選択)
        eq33: (|1> + |2> + |3>)|R,+2>/√3            (光子の事後選択)
        eq35: (|1,↑,E0> + |2,↓,E0> + |3,↑,E0-ħω>)/√3 (中性子の事前選択)
        eq36: (|1> + |2> + |3>)|↑,E0>/√3            (中性子の事後選択)
    """
    states: Dict[str, Tuple[Platform, Sequence[Tuple[int, Sequence[str]]]]] = {
        "eq28": (Platform.PHOTON, [(0, ("R", "+2")), (1, ("L", "+2")), (2, ("R", "-2"))]),
        "eq33": (Platform.PHOTON, [(k, ("R", "+2")) for k in range(3)]),
        "eq35": (Platform.NEUTRON, [(0, ("up", "0")), (1, ("down", "0")), (2, ("up", "1"))]),
        "eq36": (Platform.NEUTRON, [(k, ("up", "0")) for k in range(3)]),
    }
    if name not in states:
        raise ConfigurationError(f"Unknown reference state '{name}'. Available: {sorted(states)}")
    platform, kets = states[name]
    space = space or CircuitSpace(platform, 3)
    if space.platform is not platform or space.modes < 3:
        raise CircuitCompatibilityError(f"Reference state '{name}' needs a {platform.value} circuit with at least 3 modes")
    norm = 1.0 / math.sqrt(len(kets))
    terms = []
    for mode, symbols in kets:
        index = [mode] + [internal_index(label, token) for label, token in zip(space.internal_labels, symbols)]
        terms.append((norm, make_basis_state(space.descriptor, index)))
    return superpose(terms)


REFERENCE_STATES = ("eq28", "eq33", "eq35", "eq36")


@dataclass(frozen=True)
class CircuitReport:
    """circuit-verify の結果。kind は "state" (run の出力と比較) か "projector" (検出器の実効射影)"""
    circuit: str
    kind: str
    expect: str
    fidelity: float
    passed: bool
    rank: Optional[int] = None
    detector: Optional[str] = None


def verify_circuit(circuit: Circuit, expect: str, detector: Optional[str] = None,
                   tol: Optional[float] = None, name: str = "circuit") -> CircuitReport:
    """
    入力状態を持つ回路は run の出力を、持たない回路は検出器の実効射影の像を参照状態と比べる
    """
    tolerance = get_tolerance(tol)
    target = reference_state(expect, circuit.space)
    if circuit.input_spec is not None:
        output = run(circuit, circuit.input_state(), tol)
        fidelity = fidelity_up_to_phase(output, target)
        report = CircuitReport(circuit=name, kind="state", expect=expect, fidelity=fidelity,
                               passed=fidelity >= 1.0 - tolerance)
    else:
        if detector is None:
            if not circuit.detectors:
                raise ConfigurationError("Circuit has neither an input state nor a detector to verify")
            names = [d.name for d in circuit.detectors]
            detector = "D3" if "D3" in names else names[0]
        projector = effective_postselection_projector(circuit, detector, target=target)
        fidelity = projector.fidelity_to_target if projector.fidelity_to_target is not None else 0.0
        report = CircuitReport(circuit=name, kind="projector", expect=expect, fidelity=fidelity,
                               passed=projector.rank == 1 and fidelity >= 1.0 - tolerance,
                               rank=projector.rank, detector=detector)
    logger.info(f"Circuit {name} vs {expect}: fidelity={report.fidelity:.15g} ({'pass' if report.passed else 'fail'})")
    return report


def end_to_end_weak_experiment(prep: Circuit, observable: OperatorExpr, meter: MeterConfig,
                               postsel: Circuit, detector_name: str,
                               cap: Optional[int] = None) -> MeasurementRecord:
    """
    準備回路の出力を事前選択、事後選択回路の検出器の実効射影 (rank 1) の像を
    事後選択として、ポインタによる弱測定をシミュレートする

    Raises:
        ConfigurationError: 実効射影の rank が 1 でない場合 (rank を添える)
    """
    if prep.space != postsel.space:
        raise CircuitCompatibilityError(
            f"Preparation ({prep.space.platform.value}, {prep.space.modes} modes) and post-selection "
            f"({postsel.space.platform.value}, {postsel.space.modes} modes) circuits differ")
    pre = run(prep, prep.input_state())
    report = effective_postselection_projector(postsel, detector_name, cap=cap)
    if report.rank != 1:
        raise ConfigurationError(
            f"Detector '{detector_name}' realizes a rank-{report.rank} projector; the weak value is undefined",
            rank=report.rank)
    ensemble = PrePostEnsemble.create(pre, report.range_state)
    return simulate_weak_measurement(ensemble, observable, meter, cap)
