"""
量子チェシャ猫の事前・事後選択シナリオ

各シナリオは空間・アンサンブル・観測量・期待される弱値の表をまとめて持つ。
ラベルの書式:
    Πk            経路射影
    Πkσx^m        経路 k と性質 m の σx の積 (original_cheshire の偏光は σx^p)
    ΠkJ^(m)       経路 k と性質スロット m の J^(m) = |1><m+1| + |m+1><1|
"""
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import CapacityError, ConfigurationError
from src.hilbert import (
    OperatorExpr,
    SpaceDescriptor,
    StateVector,
    exchange_matrix,
    make_basis_state,
    outer,
    projector_matrix,
    superpose,
)
from src.utils.helper import get_max_paths, get_max_qudit, get_tolerance
from src.utils.logger import setup_logger
from src.weakvalue import PrePostEnsemble, WeakValueTable, weak_value

logger = setup_logger()


class Provenance(str, Enum):
    PAPER = "PAPER"
    DERIVED = "DERIVED"


@dataclass(frozen=True)
class Scenario:
    name: str
    space: SpaceDescriptor
    ensemble: PrePostEnsemble
    observables: Tuple[Tuple[str, OperatorExpr], ...]
    expected: WeakValueTable
    provenance: Mapping[str, Provenance] = field(default_factory=dict)

    def __post_init__(self):
        labels = {label for label, _ in self.observables}
        missing = [label for label in self.expected.labels if label not in labels]
        if missing:
            raise ValueError(f"Expected rows without observable in scenario '{self.name}': {missing}")

    def observable(self, label: str) -> OperatorExpr:
        for name, op in self.observables:
            if name == label:
                return op
        raise KeyError(label)

    def to_dict(self) -> Dict[str, Any]:
        """シナリオの JSON バンドル"""
        return {
            "name": self.name,
            "space": self.space.to_dict(),
            "pre": self.ensemble.pre.to_dict(),
            "post": self.ensemble.post.to_dict(),
            "observables": [{"label": label, **op.to_dict()} for label, op in self.observables],
            "expected": [
                {**record, "provenance": self.provenance.get(record["label"], Provenance.DERIVED).value}
                for record in self.expected.to_records()
            ],
        }


@dataclass(frozen=True)
class Mismatch:
    label: str
    computed: complex
    expected: complex


@dataclass(frozen=True)
class VerificationReport:
    scenario: str
    passed: bool
    computed: WeakValueTable
    mismatches: Tuple[Mismatch, ...]


# --- 状態と観測量の組み立て ---

def _basis_superposition(space: SpaceDescriptor, indices: Sequence[Sequence[int]]) -> StateVector:
    """等振幅の基底状態の重ね合わせ (1/√N) Σ |index>"""
    norm = 1.0 / math.sqrt(len(indices))
    return superpose([(norm, make_basis_state(space, index)) for index in indices])


def _joint(space: SpaceDescriptor, path: int, locals_: Mapping[str, np.ndarray]) -> OperatorExpr:
    """Π_path と局所観測量の積 (path は 1 始まり)"""
    factor_map = {"path": projector_matrix(space.dim("path"), path - 1)}
    factor_map.update(locals_)
    return OperatorExpr.product(space, factor_map)


def _path_projectors(space: SpaceDescriptor) -> List[Tuple[str, OperatorExpr]]:
    return [(f"Π{k}", _joint(space, k, {})) for k in range(1, space.dim("path") + 1)]


def _table(rows: Sequence[Tuple[str, complex]]) -> WeakValueTable:
    return WeakValueTable(tuple(rows))


def _sigma_x_from_plus_minus() -> np.ndarray:
    """σx = |+><+| - |-><-|, |±> = (|0> ± |1>)/√2"""
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    minus = np.array([1, -1], dtype=complex) / math.sqrt(2)
    return outer(plus, plus) - outer(minus, minus)


SIGMA_X = _sigma_x_from_plus_minus()


def original_cheshire() -> Scenario:
    """
    原型の光子チェシャ猫 (経路 2 × 偏光 2)

    pre  = (|ψ1>|1> + |ψ2>|0>)/√2
    post = (|ψ1> + |ψ2>)|1>/√2
    """
    space = SpaceDescriptor.of(("path", 2), ("pol", 2))
    pre = _basis_superposition(space, [(0, 1), (1, 0)])
    post = _basis_superposition(space, [(0, 1), (1, 1)])
    observables = _path_projectors(space) + [
        (f"Π{k}σx^p", _joint(space, k, {"pol": SIGMA_X})) for k in (1, 2)
    ]
    expected = _table([("Π1", 1), ("Π2", 0), ("Π1σx^p", 0), ("Π2σx^p", 1)])
    return Scenario(
        name="original_cheshire",
        space=space,
        ensemble=PrePostEnsemble.create(pre, post),
        observables=tuple(observables),
        expected=expected,
        provenance={label: Provenance.PAPER for label in expected.labels},
    )


def two_property_three_path() -> Scenario:
    """
    3 経路・2 つの二準位性質

    pre  = (|ψ1>|11> + |ψ2>|01> + |ψ3>|10>)/√3
    post = (|ψ1> + |ψ2> + |ψ3>)|11>/√3
    """
    space = SpaceDescriptor.of(("path", 3), ("prop1", 2), ("prop2", 2))
    pre = _basis_superposition(space, [(0, 1, 1), (1, 0, 1), (2, 1, 0)])
    post = _basis_superposition(space, [(0, 1, 1), (1, 1, 1), (2, 1, 1)])
    observables = _path_projectors(space)
    rows: List[Tuple[str, complex]] = [("Π1", 1), ("Π2", 0), ("Π3", 0)]
    for m, hot in ((1, 2), (2, 3)):
        for k in (1, 2, 3):
            observables.append((f"Π{k}σx^{m}", _joint(space, k, {f"prop{m}": SIGMA_X})))
            rows.append((f"Π{k}σx^{m}", 1 if k == hot else 0))
    for k in (1, 2, 3):
        observables.append((f"Π{k}σx^1σx^2", _joint(space, k, {"prop1": SIGMA_X, "prop2": SIGMA_X})))
        rows.append((f"Π{k}σx^1σx^2", 0))
    expected = _table(rows)
    return Scenario(
        name="two_property_three_path",
        space=space,
        ensemble=PrePostEnsemble.create(pre, post),
        observables=tuple(observables),
        expected=expected,
        provenance={label: Provenance.PAPER for label in expected.labels},
    )


def n_path_dichotomic(n: int, cap: Optional[int] = None) -> Scenario:
    """
    n 経路・n-1 個の二準位性質への一般化

    経路 j >= 2 では性質スロット j-1 が |0>、それ以外のスロットは |1>。
    経路 1 は全スロット |1>。規格化定数 N は n。

    Args:
        n (int): 経路数 (2 以上)
        cap (int | None): 上限 (デフォルト 20、QCC_MAX_PATHS)
    """
    limit = get_max_paths(cap)
    if n < 2:
        raise ConfigurationError(f"n_path_dichotomic needs n >= 2, got {n}")
    if n > limit:
        raise CapacityError(f"n={n} exceeds the path cap {limit}", size=n, cap=limit)

    slots = n - 1
    space = SpaceDescriptor((("path", n),) + tuple((f"prop{m}", 2) for m in range(1, n)))
    pre_indices = [(0,) + (1,) * slots]
    for j in range(2, n + 1):
        props = [1] * slots
        props[j - 2] = 0
        pre_indices.append((j - 1,) + tuple(props))
    post_indices = [(k,) + (1,) * slots for k in range(n)]
    pre = _basis_superposition(space, pre_indices)
    post = _basis_superposition(space, post_indices)

    observables = _path_projectors(space)
    rows: List[Tuple[str, complex]] = [(f"Π{k}", 1 if k == 1 else 0) for k in range(1, n + 1)]
    for m in range(1, n):
        for k in range(1, n + 1):
            label = f"Π{k}σx^{m}"
            observables.append((label, _joint(space, k, {f"prop{m}": SIGMA_X})))
            rows.append((label, 1 if k == m + 1 else 0))
    if slots >= 2:
        for k in range(1, n + 1):
            label = f"Π{k}σx^1σx^2"
            observables.append((label, _joint(space, k, {"prop1": SIGMA_X, "prop2": SIGMA_X})))
            rows.append((label, 0))
    expected = _table(rows)
    tag = Provenance.PAPER if n == 3 else Provenance.DERIVED
    return Scenario(
        name=f"n_path_dichotomic(n={n})",
        space=space,
        ensemble=PrePostEnsemble.create(pre, post),
        observables=tuple(observables),
        expected=expected,
        provenance={label: tag for label in expected.labels},
    )


def qutrit_two_property() -> Scenario:
    """
    3 経路・2 つの三準位性質

    pre  = (|ψ1>|11> + |ψ2>|22> + |ψ3>|33>)/√3
    post = (|ψ1>|11> + |ψ2>|12> + |ψ3>|31>)/√3
    """
    space = SpaceDescriptor.of(("path", 3), ("prop1", 3), ("prop2", 3))
    pre = _basis_superposition(space, [(0, 0, 0), (1, 1, 1), (2, 2, 2)])
    post = _basis_superposition(space, [(0, 0, 0), (1, 0, 1), (2, 2, 0)])
    j1 = exchange_matrix(3, 0, 1)
    j2 = exchange_matrix(3, 0, 2)
    observables = _path_projectors(space)
    rows: List[Tuple[str, complex]] = [("Π1", 1), ("Π2", 0), ("Π3", 0)]
    for m, matrix, hot in ((1, j1, 2), (2, j2, 3)):
        for k in (1, 2, 3):
            label = f"Π{k}J^({m})"
            observables.append((label, _joint(space, k, {f"prop{m}": matrix})))
            rows.append((label, 1 if k == hot else 0))
    expected = _table(rows)
    return Scenario(
        name="qutrit_two_property",
        space=space,
        ensemble=PrePostEnsemble.create(pre, post),
        observables=tuple(observables),
        expected=expected,
        provenance={label: Provenance.PAPER for label in expected.labels},
    )


def qudit_chain(d: int, cap: Optional[int] = None) -> Scenario:
    """
    d 経路・d-1 個の d 準位性質への一般化

    pre:  経路 j は全スロット |j>
    post: 経路 j >= 2 はスロット j-1 が |1>、残りは |j>。経路 1 は全スロット |1>

    Args:
        d (int): 準位数 (2 以上)
        cap (int | None): 上限 (デフォルト 16、QCC_MAX_QUDIT)
    """
    limit = get_max_qudit(cap)
    if d < 2:
        raise ConfigurationError(f"qudit_chain needs d >= 2, got {d}")
    if d > limit:
        raise CapacityError(f"d={d} exceeds the qudit cap {limit}", size=d, cap=limit)

    slots = d - 1
    space = SpaceDescriptor((("path", d),) + tuple((f"prop{m}", d) for m in range(1, d)))
    pre_indices = [(j,) + (j,) * slots for j in range(d)]
    post_indices = [(0,) + (0,) * slots]
    for j in range(2, d + 1):
        props = [j - 1] * slots
        props[j - 2] = 0
        post_indices.append((j - 1,) + tuple(props))
    pre = _basis_superposition(space, pre_indices)
    post = _basis_superposition(space, post_indices)

    observables = _path_projectors(space)
    rows: List[Tuple[str, complex]] = [(f"Π{k}", 1 if k == 1 else 0) for k in range(1, d + 1)]
    provenance: Dict[str, Provenance] = {f"Π{k}": Provenance.PAPER for k in range(1, d + 1)}
    for m in range(1, d):
        matrix = exchange_matrix(d, 0, m)
        tag = Provenance.PAPER if m in (1, d - 1) or d == 3 else Provenance.DERIVED
        for k in range(1, d + 1):
            label = f"Π{k}J^({m})"
            observables.append((label, _joint(space, k, {f"prop{m}": matrix})))
            rows.append((label, 1 if k == m + 1 else 0))
            provenance[label] = tag
    return Scenario(
        name=f"qudit_chain(d={d})",
        space=space,
        ensemble=PrePostEnsemble.create(pre, post),
        observables=tuple(observables),
        expected=_table(rows),
        provenance=provenance,
    )


def verify(scenario: Scenario, tol: Optional[float] = None, max_workers: Optional[int] = None) -> VerificationReport:
    """
    全観測量の弱値を計算し、期待値と比較する

    Args:
        scenario (Scenario): 検証するシナリオ
        tol (float | None): 許容誤差 (デフォルト 1e-12)
        max_workers (int | None): 2 以上なら行を並列に評価する (出力順は固定)

    Returns:
        VerificationReport: 計算した表と不一致の一覧
    """
    tolerance = get_tolerance(tol)
    expected = dict(scenario.expected.rows)
    logger.info(f"Verifying scenario {scenario.name} ({len(scenario.observables)} observables)")

    def evaluate(item):
        label, op = item
        return label, weak_value(scenario.ensemble, op)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            rows = list(executor.map(evaluate, scenario.observables))
    else:
        rows = [evaluate(item) for item in scenario.observables]

    mismatches = []
    for label, value in rows:
        if label not in expected:
            continue
        if abs(value - expected[label]) > tolerance:
            mismatches.append(Mismatch(label=label, computed=value, expected=expected[label]))
            logger.warning(f"Mismatch in {scenario.name}: {label} computed={value} expected={expected[label]}")

    report = VerificationReport(
        scenario=scenario.name,
        passed=not mismatches,
        computed=WeakValueTable(tuple(rows)),
        mismatches=tuple(mismatches),
    )
    logger.info(f"Scenario {scenario.name}: {'pass' if report.passed else f'{len(mismatches)} mismatch(es)'}")
    return report


def relabel_paths(scenario: Scenario, i: int, j: int) -> Scenario:
    """
    経路 i と j (1 始まり) を、対応する性質スロット i-1 と j-1 とともに入れ替える

    状態・観測量・期待値の表に同じ置換 P を施す (O -> P O P†)。
    性質の次元が経路数と等しい場合 (qudit_chain) は準位 i-1, j-1 も入れ替える。
    """
    space = scenario.space
    if min(i, j) < 2 or i == j:
        raise ValueError("relabel_paths needs two distinct paths >= 2")
    d = space.dim("path")
    if max(i, j) > d:
        raise ValueError(f"Path index out of range: {max(i, j)} > {d}")

    label_i, label_j = f"prop{i - 1}", f"prop{j - 1}"
    slot_i, slot_j = space.position(label_i), space.position(label_j)
    swap_levels = space.dim("prop1") == d and d > 2
    level_perm = np.arange(d)
    level_perm[[i - 1, j - 1]] = [j - 1, i - 1]

    def permute_index(index):
        values = list(index)
        values[slot_i], values[slot_j] = values[slot_j], values[slot_i]
        values[0] = int(level_perm[values[0]])
        if swap_levels:
            values[1:] = [int(level_perm[v]) for v in values[1:]]
        return tuple(values)

    def permute_state(state: StateVector) -> StateVector:
        return StateVector(space, {permute_index(k): v for k, v in state.amplitudes.items()})

    def permute_operator(op: OperatorExpr) -> OperatorExpr:
        terms = []
        for coefficient, factor_map in op.terms:
            moved = {}
            for label, matrix in factor_map.items():
                target = {label_i: label_j, label_j: label_i}.get(label, label)
                if label == "path" or swap_levels:
                    matrix = matrix[np.ix_(level_perm, level_perm)]
                moved[target] = matrix
            terms.append((coefficient, moved))
        return OperatorExpr(space, tuple(terms))

    ensemble = PrePostEnsemble.create(permute_state(scenario.ensemble.pre), permute_state(scenario.ensemble.post))
    observables = tuple((_swap_label(label, i, j), permute_operator(op)) for label, op in scenario.observables)
    expected = WeakValueTable(tuple((_swap_label(label, i, j), value) for label, value in scenario.expected.rows))
    return Scenario(
        name=f"{scenario.name}[{i}<->{j}]",
        space=space,
        ensemble=ensemble,
        observables=observables,
        expected=expected,
        provenance={_swap_label(k, i, j): v for k, v in scenario.provenance.items()},
    )


def _swap_label(label: str, i: int, j: int) -> str:
    """ラベル中の経路番号 i<->j と性質番号 i-1<->j-1 を入れ替える"""
    paths = {i: j, j: i}
    props = {i - 1: j - 1, j - 1: i - 1}
    label = re.sub(r"Π(\d+)", lambda m: f"Π{paths.get(int(m.group(1)), int(m.group(1)))}", label)
    return re.sub(r"(σx\^|J\^\()(\d+)",
                  lambda m: f"{m.group(1)}{props.get(int(m.group(2)), int(m.group(2)))}", label)


SCENARIO_NAMES: Dict[str, str] = {
    "original_cheshire": "photon path ⊗ polarization (pre/post of the original Cheshire cat)",
    "two_property_three_path": "three paths, two dichotomic properties",
    "n_path": "n paths, n-1 dichotomic properties (--n)",
    "qutrit_two_property": "three paths, two qutrit properties",
    "qudit": "d paths, d-1 qudit properties (--d)",
}


def build_scenario(name: str, n: Optional[int] = None, d: Optional[int] = None) -> Scenario:
    """名前からシナリオを組み立てる (CLI 用)"""
    builders: Dict[str, Callable[[], Scenario]] = {
        "original_cheshire": original_cheshire,
        "two_property_three_path": two_property_three_path,
        "n_path": lambda: n_path_dichotomic(3 if n is None else n),
        "qutrit_two_property": qutrit_two_property,
        "qudit": lambda: qudit_chain(3 if d is None else d),
    }
    if name not in builders:
        raise ConfigurationError(f"Unknown scenario '{name}'. Available: {', '.join(SCENARIO_NAMES)}")
    return builders[name]()
