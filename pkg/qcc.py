#!/usr/bin/env python3
"""
量子チェシャ猫シミュレータのコマンドラインツール

    python qcc.py scenario-list
    python qcc.py scenario-run two_property_three_path --format json
    python qcc.py scenario-run qudit --d 5
    python qcc.py circuit-verify photon_prep.qcc --expect eq28
    python qcc.py pointer-sweep two_property_three_path --observable "Π2σx^1"
    python qcc.py end-to-end --prep photon_prep --postsel photon_postsel_filtered

終了コード: 0 成功 / 1 検証の不一致 / 2 入力・使い方の誤り / 3 数値的な失敗
結果は標準出力、ログは標準エラー出力へ出す。
"""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.circuit import (
    REFERENCE_STATES,
    end_to_end_weak_experiment,
    observable_family,
    verify_circuit,
)
from src.circuit_parser import load_circuit
from src.exceptions import ConfigurationError, QCCError
from src.formatter import FORMATS, render
from src.pointer import MeterConfig, convergence_sweep, simulate_weak_measurement
from src.scenarios import SCENARIO_NAMES, Scenario, build_scenario, verify
from src.utils.logger import setup_logger

logger = setup_logger()

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

DEFAULT_SWEEP = (0.1, 0.05, 0.025)


def build_parser() -> argparse.ArgumentParser:
    """サブコマンドごとの引数定義"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="table", help="出力形式 (デフォルト: table)")
    common.add_argument("--tolerance", type=float, default=None,
                        help="比較の許容誤差 (デフォルト: QCC_TOLERANCE または 1e-12)")

    parser = argparse.ArgumentParser(prog="qcc", description="量子チェシャ猫の弱値シミュレータ")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("scenario-list", parents=[common], help="組み込みシナリオの一覧")

    run = commands.add_parser("scenario-run", parents=[common], help="シナリオの弱値表を計算して検証する")
    run.add_argument("name", help=f"シナリオ名 ({', '.join(SCENARIO_NAMES)})")
    _add_scenario_size(run)
    run.add_argument("--workers", type=int, default=None, help="行を並列に評価するスレッド数")

    circuit = commands.add_parser("circuit-verify", parents=[common], help="回路の出力または実効射影を参照状態と比べる")
    circuit.add_argument("file", help=".qcc ファイルのパス、または同梱フィクスチャ名")
    circuit.add_argument("--expect", choices=REFERENCE_STATES, required=True, help="参照状態")
    circuit.add_argument("--detector", default=None, help="入力を持たない回路で検証する検出器 (デフォルト: D3)")

    sweep = commands.add_parser("pointer-sweep", parents=[common], help="結合の強さ g を変えて弱値の推定誤差を調べる")
    sweep.add_argument("name", help="シナリオ名")
    _add_scenario_size(sweep)
    sweep.add_argument("--observable", default=None, help="観測量ラベル (デフォルト: 期待値が 0 でない最初の行)")
    sweep.add_argument("--sigma", type=float, default=1.0, help="ポインタの広がり σ")
    sweep.add_argument("--g", type=float, nargs="+", default=None, help="σ 単位の結合の強さ (降順)")
    sweep.add_argument("--workers", type=int, default=None, help="g ごとに並列に計算するスレッド数")
    sweep.add_argument("--density-csv", type=Path, default=None, help="最小の g でのポインタ密度の CSV 出力先")

    e2e = commands.add_parser("end-to-end", parents=[common], help="準備回路と事後選択回路を通した弱測定")
    e2e.add_argument("--prep", default="photon_prep", help="準備回路 (デフォルト: photon_prep)")
    e2e.add_argument("--postsel", default="photon_postsel_filtered", help="事後選択回路 (デフォルト: photon_postsel_filtered)")
    e2e.add_argument("--detector", default="D3", help="事後選択に使う検出器 (デフォルト: D3)")
    e2e.add_argument("--observable", action="append", default=None,
                     help="観測量ラベル (例: Π2σx^pol)。複数指定可。省略時は全て")
    e2e.add_argument("--sigma", type=float, default=1.0, help="ポインタの広がり σ")
    e2e.add_argument("--g", type=float, default=0.01, help="σ 単位の結合の強さ")
    e2e.add_argument("--density-csv", type=Path, default=None, help="最初の観測量でのポインタ密度の CSV 出力先")
    return parser


def _add_scenario_size(parser: argparse.ArgumentParser):
    parser.add_argument("--n", type=int, default=None, help="n_path の経路数 (デフォルト: 3)")
    parser.add_argument("--d", type=int, default=None, help="qudit の準位数 (デフォルト: 3)")


def _emit(text: str):
    sys.stdout.write(text)
    sys.stdout.flush()


def _scenario_from(args) -> Scenario:
    return build_scenario(args.name, n=args.n, d=args.d)


def cmd_scenario_list(args) -> int:
    _emit(render(SCENARIO_NAMES, args.format))
    return EXIT_OK


def cmd_scenario_run(args) -> int:
    scenario = _scenario_from(args)
    report = verify(scenario, tol=args.tolerance, max_workers=args.workers)
    _emit(render(report.computed, args.format))
    if not report.passed:
        for mismatch in report.mismatches:
            logger.error(f"{mismatch.label}: computed {mismatch.computed} expected {mismatch.expected}")
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_circuit_verify(args) -> int:
    circuit = load_circuit(args.file)
    report = verify_circuit(circuit, args.expect, detector=args.detector, tol=args.tolerance,
                            name=Path(args.file).name)
    _emit(render(report, args.format))
    return EXIT_OK if report.passed else EXIT_MISMATCH


def cmd_pointer_sweep(args) -> int:
    scenario = _scenario_from(args)
    label = args.observable
    if label is None:
        label = next(name for name, value in scenario.expected if value != 0)
    try:
        observable = scenario.observable(label)
    except KeyError:
        raise ConfigurationError(f"Scenario {scenario.name} has no observable '{label}'") from None

    g_values = [g * args.sigma for g in (args.g or DEFAULT_SWEEP)]
    meter = MeterConfig(sigma=args.sigma, g=g_values[0])
    errors = convergence_sweep(scenario.ensemble, observable, meter, g_values, max_workers=args.workers)
    if args.density_csv is not None:
        record = simulate_weak_measurement(scenario.ensemble, observable, meter.with_coupling(g_values[-1]))
        args.density_csv.write_text(record.density_csv(), encoding="utf-8")
        logger.info(f"Pointer density written to {args.density_csv}")
    _emit(render(errors, args.format))
    return EXIT_OK


def cmd_end_to_end(args) -> int:
    prep = load_circuit(args.prep)
    postsel = load_circuit(args.postsel)
    family = dict(observable_family(prep.space))
    labels = args.observable or list(family)
    unknown = [label for label in labels if label not in family]
    if unknown:
        raise ConfigurationError(f"Unknown observables {unknown}. Available: {list(family)}")

    meter = MeterConfig(sigma=args.sigma, g=args.g * args.sigma)
    records = []
    for label in labels:
        record = end_to_end_weak_experiment(prep, family[label], meter, postsel, args.detector)
        records.append((label, record))
    if args.density_csv is not None and records:
        args.density_csv.write_text(records[0][1].density_csv(), encoding="utf-8")
        logger.info(f"Pointer density written to {args.density_csv}")
    _emit(render(records, args.format))
    return EXIT_OK


COMMANDS = {
    "scenario-list": cmd_scenario_list,
    "scenario-run": cmd_scenario_run,
    "circuit-verify": cmd_circuit_verify,
    "pointer-sweep": cmd_pointer_sweep,
    "end-to-end": cmd_end_to_end,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    コマンドを実行して終了コードを返す

    Args:
        argv (Sequence[str] | None): 引数 (省略時は sys.argv[1:])

    Returns:
        int: 0 成功 / 1 検証の不一致 / 2 使い方・パースの誤り / 3 数値的な失敗
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        # --help は 0、不正な引数は 2
        return EXIT_OK if e.code in (None, 0) else EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except QCCError as e:
        logger.error(f"{type(e).__name__}: {e}")
        for note in getattr(e, "__notes__", []):
            logger.error(note)
        return e.exit_code
    except np.linalg.LinAlgError as e:
        # scipy.linalg.LinAlgError も同じクラス
        logger.error(f"Linear algebra failure: {e}")
        return EXIT_NUMERIC
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
