#!/usr/bin/env python3
"""
受け入れ基準をまとめて実行するスクリプト

    python verification/run_acceptance.py -p 4

各基準を別プロセスで実行し、最後に結果の一覧を表示する。全て通れば終了コード 0。
"""
import argparse
import multiprocessing
import os
import sys
import time

# 親ディレクトリをパスに追加して、モジュールをインポートできるようにする
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.circuit import (
    detect,
    effective_postselection_projector,
    end_to_end_weak_experiment,
    internal_sigma_x,
    path_projector,
    reference_state,
    run,
)
from src.circuit_parser import load_circuit
from src.hilbert import fidelity_up_to_phase
from src.pointer import MeterConfig, convergence_sweep, simulate_weak_measurement
from src.scenarios import (
    n_path_dichotomic,
    original_cheshire,
    qudit_chain,
    qutrit_two_property,
    two_property_three_path,
    verify,
)
from src.weakvalue import spin_half_ensemble, weak_value

# デフォルトの並列プロセス数（Noneの場合はCPUコア数を使用）
default_num_processes = 4

TOLERANCE = 1e-12
POINTER_TOLERANCE = 1e-2


def _reference_scenarios():
    scenarios = [original_cheshire(), two_property_three_path(), qutrit_two_property()]
    scenarios += [qudit_chain(d) for d in range(2, 9)]
    scenarios += [n_path_dichotomic(n) for n in range(2, 9)]
    return scenarios


def weak_value_tables():
    failed = [s.name for s in _reference_scenarios() if not verify(s, tol=TOLERANCE).passed]
    return not failed, f"failed: {failed}" if failed else "all scenarios match"


def spin_half_spot_value():
    ensemble, sigma_x = spin_half_ensemble(0.6, 0.8j)
    value = weak_value(ensemble, sigma_x)
    return abs(value - 4j / 3) <= TOLERANCE, f"(σx)_w = {value}"


def joint_absence():
    scenario = two_property_three_path()
    table = verify(scenario, tol=TOLERANCE).computed
    joints = [table.value(f"Π{k}σx^1σx^2") for k in (1, 2, 3)]
    singles = [table.value("Π2σx^1"), table.value("Π3σx^2")]
    passed = all(abs(v) <= TOLERANCE for v in joints) and all(abs(v - 1) <= TOLERANCE for v in singles)
    return passed, f"joints={joints}, singles={singles}"


def pointer_convergence():
    worst = 0.0
    for scenario in _reference_scenarios():
        for label, expected in scenario.expected:
            if expected == 0:
                continue
            record = simulate_weak_measurement(scenario.ensemble, scenario.observable(label), MeterConfig(sigma=1.0, g=0.01))
            worst = max(worst, abs(record.inferred_weak_value - expected))
    scenario = two_property_three_path()
    errors = [e for _, e in convergence_sweep(scenario.ensemble, scenario.observable("Π2σx^1"),
                                              MeterConfig(sigma=1.0, g=0.1), [0.1, 0.05, 0.025])]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    passed = worst <= POINTER_TOLERANCE and decreasing and all(r >= 3 for r in ratios)
    return passed, f"worst error={worst:.3e}, sweep ratios={[round(r, 3) for r in ratios]}"


def photon_circuit():
    prep = load_circuit("photon_prep")
    postsel = load_circuit("photon_postsel_filtered")
    pre_fidelity = fidelity_up_to_phase(run(prep, prep.input_state()), reference_state("eq28"))
    projector = effective_postselection_projector(postsel, "D3", target=reference_state("eq33"))
    on_final = {o.name: o.probability for o in detect(postsel, run(postsel, reference_state("eq33")))}
    on_initial = {o.name: o.probability for o in detect(postsel, run(postsel, reference_state("eq28")))}
    passed = (pre_fidelity >= 1 - TOLERANCE
              and projector.rank == 1 and projector.fidelity_to_target >= 1 - TOLERANCE
              and abs(on_final["D3"] - 1) <= TOLERANCE and on_final["D1"] <= TOLERANCE and on_final["D2"] <= TOLERANCE
              and abs(on_initial["D3"] - 1 / 9) <= TOLERANCE)
    return passed, f"prep fidelity={pre_fidelity:.15g}, rank={projector.rank}, D3(Ψf)={on_final['D3']:.15g}, D3(Ψi)={on_initial['D3']:.15g}"


def neutron_circuit():
    prep = load_circuit("neutron_prep")
    postsel = load_circuit("neutron_postsel")
    pre_fidelity = fidelity_up_to_phase(run(prep, prep.input_state()), reference_state("eq35"))
    projector = effective_postselection_projector(postsel, "D3", target=reference_state("eq36"))
    passed = pre_fidelity >= 1 - TOLERANCE and projector.rank == 1 and projector.fidelity_to_target >= 1 - TOLERANCE
    return passed, f"prep fidelity={pre_fidelity:.15g}, rank={projector.rank}"


def end_to_end():
    prep = load_circuit("photon_prep")
    postsel = load_circuit("photon_postsel_filtered")
    space = prep.space
    observables = {
        "Π1": path_projector(space, 0),
        "Π2σx^pol": path_projector(space, 1) @ internal_sigma_x(space, "pol"),
        "Π3σx^oam": path_projector(space, 2) @ internal_sigma_x(space, "oam"),
    }
    meter = MeterConfig(sigma=1.0, g=0.01)
    values = {label: end_to_end_weak_experiment(prep, op, meter, postsel, "D3").inferred_weak_value
              for label, op in observables.items()}
    passed = all(abs(v - 1) <= POINTER_TOLERANCE for v in values.values())
    return passed, ", ".join(f"{k}={v:.6g}" for k, v in values.items())


CRITERIA = [
    ("1 weak-value tables", weak_value_tables),
    ("2 spin-1/2 spot value", spin_half_spot_value),
    ("3 joint absence", joint_absence),
    ("4 pointer convergence", pointer_convergence),
    ("5 photon circuit", photon_circuit),
    ("6 neutron circuit", neutron_circuit),
    ("7 end-to-end", end_to_end),
]


def run_criterion(index):
    """
    単一の基準を実行する関数。
    multiprocessing.Pool.map を使うため、引数は CRITERIA のインデックスで受け取る。
    """
    name, check = CRITERIA[index]
    started = time.perf_counter()
    try:
        passed, detail = check()
    except Exception as e:
        passed, detail = False, f"{type(e).__name__}: {e}"
    return name, passed, detail, time.perf_counter() - started


def main():
    # コマンドライン引数の解析
    parser = argparse.ArgumentParser(description='受け入れ基準を並列で実行')
    parser.add_argument('-p', '--processes', type=int, default=default_num_processes,
                        help=f'並列プロセス数 (デフォルト: {default_num_processes})')
    args = parser.parse_args()

    num_processes = args.processes or multiprocessing.cpu_count()
    print(f"{len(CRITERIA)} 件の基準を {num_processes} プロセスで並列実行します。")

    with multiprocessing.Pool(processes=num_processes) as pool:
        results = pool.map(run_criterion, range(len(CRITERIA)))

    for name, passed, detail, elapsed in results:
        print(f"[{'PASS' if passed else 'FAIL'}] {name} ({elapsed:.2f}s): {detail}")
    failed = [name for name, passed, _, _ in results if not passed]
    print("-" * 30)
    print("全ての基準を満たしました。" if not failed else f"失敗した基準: {failed}")
    return 0 if not failed else 1


if __name__ == '__main__':
    sys.exit(main())
