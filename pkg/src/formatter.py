import csv
import io
import json
from dataclasses import asdict
from typing import Any, Dict, List, Mapping, Sequence, Tuple

from src.circuit import CircuitReport
from src.pointer import MeasurementRecord
from src.utils.logger import setup_logger
from src.weakvalue import WeakValueTable

logger = setup_logger()

FORMATS = ("table", "json", "csv")
DISPLAY_ZERO = 1e-12
RECORD_COLUMNS = ["g", "sigma", "success_probability", "position_mean", "momentum_mean", "weak_value_re", "weak_value_im"]


def format_complex(value: complex) -> str:
    """
    複素数を a+bi 形式 (有効数字 6 桁) の文字列にする。
    |x| < 1e-12 の成分は 0 とし、-0 は表示しない
    """
    re_part = 0.0 if abs(value.real) < DISPLAY_ZERO else value.real + 0.0
    im_part = 0.0 if abs(value.imag) < DISPLAY_ZERO else value.imag + 0.0
    return f"{re_part:.6g}{im_part:+.6g}i"


def _align(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """列幅を揃えたテーブル。行が無ければヘッダーだけ"""
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

    def line(cells):
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()

    return "\n".join([line(header)] + [line(row) for row in rows]) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _json(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def _check_format(fmt: str):
    if fmt not in FORMATS:
        raise ValueError(f"Unknown output format '{fmt}'. Use one of {FORMATS}")


def render_table(table: WeakValueTable, fmt: str = "table") -> str:
    """弱値の表。table 形式は "(Π1)_w  1+0i" の行"""
    _check_format(fmt)
    if fmt == "json":
        return table.to_json() + "\n"
    if fmt == "csv":
        return table.to_csv()
    rows = [(f"({label})_w", format_complex(value)) for label, value in table]
    return _align(("observable", "weak value"), rows)


def render_record(record: MeasurementRecord, fmt: str = "table") -> str:
    _check_format(fmt)
    data = record.to_dict()
    if fmt == "json":
        return _json(data)
    if fmt == "csv":
        return _csv(RECORD_COLUMNS, [_record_values(data)])
    rows = [
        ("g", format(record.g, ".6g")),
        ("sigma", format(record.sigma, ".6g")),
        ("success probability", format(record.success_probability, ".6g")),
        ("position mean", format(record.conditional_position_mean, ".6g")),
        ("momentum mean", format(record.conditional_momentum_mean, ".6g")),
        ("inferred weak value", format_complex(record.inferred_weak_value)),
    ]
    return _align(("quantity", "value"), rows)


def _record_values(data: Dict[str, Any]) -> List[str]:
    values = [data["g"], data["sigma"], data["success_probability"], data["position_mean"], data["momentum_mean"],
              data["weak_value"]["re"], data["weak_value"]["im"]]
    return [format(float(v), ".17g") for v in values]


def render_records(records: Sequence[Tuple[str, MeasurementRecord]], fmt: str = "table") -> str:
    """観測量ごとのポインタ測定結果 (end-to-end)"""
    _check_format(fmt)
    if fmt == "json":
        return _json([{"label": label, **record.to_dict()} for label, record in records])
    if fmt == "csv":
        rows = [[label] + _record_values(record.to_dict()) for label, record in records]
        return _csv(["label"] + RECORD_COLUMNS, rows)
    rows = [
        (f"({label})_w", format_complex(record.inferred_weak_value), format(record.success_probability, ".6g"))
        for label, record in records
    ]
    return _align(("observable", "inferred weak value", "success probability"), rows)


def render_sweep(errors: Sequence[Tuple[float, float]], fmt: str = "table") -> str:
    """convergence_sweep の (g, 誤差) の列"""
    _check_format(fmt)
    if fmt == "json":
        return _json([{"g": g, "error": error} for g, error in errors])
    if fmt == "csv":
        return _csv(("g", "error"), [(format(g, ".17g"), format(error, ".17g")) for g, error in errors])
    return _align(("g", "error"), [(format(g, ".6g"), format(error, ".6g")) for g, error in errors])


def render_circuit_report(report: CircuitReport, fmt: str = "table") -> str:
    _check_format(fmt)
    data = asdict(report)
    if fmt == "json":
        return _json(data)
    if fmt == "csv":
        return _csv(list(data), [["" if v is None else v for v in data.values()]])
    rows = [(key, "" if value is None else (format(value, ".15g") if isinstance(value, float) else str(value)))
            for key, value in data.items()]
    return _align(("field", "value"), rows)


def render_scenario_list(names: Mapping[str, str], fmt: str = "table") -> str:
    _check_format(fmt)
    if fmt == "json":
        return _json([{"name": name, "description": text} for name, text in names.items()])
    if fmt == "csv":
        return _csv(("name", "description"), list(names.items()))
    return _align(("name", "description"), list(names.items()))


def render(obj: Any, fmt: str = "table") -> str:
    """
    結果オブジェクトを表示用のテキストにする。同じ入力に対して常に同じバイト列を返す

    Args:
        obj: WeakValueTable, MeasurementRecord, CircuitReport, (g, 誤差) の列,
             (ラベル, MeasurementRecord) の列, シナリオ名の辞書のいずれか
        fmt (str): "table" / "json" / "csv"

    Returns:
        str: 末尾に改行を含むテキスト
    """
    if isinstance(obj, WeakValueTable):
        return render_table(obj, fmt)
    if isinstance(obj, MeasurementRecord):
        return render_record(obj, fmt)
    if isinstance(obj, CircuitReport):
        return render_circuit_report(obj, fmt)
    if isinstance(obj, Mapping):
        return render_scenario_list(obj, fmt)
    items = list(obj)
    if items and isinstance(items[0][1], MeasurementRecord):
        return render_records(items, fmt)
    if all(len(item) == 2 and all(isinstance(v, (int, float)) for v in item) for item in items):
        return render_sweep(items, fmt)
    logger.error(f"Cannot render object of type {type(obj).__name__}")
    raise TypeError(f"Cannot render object of type {type(obj).__name__}")
