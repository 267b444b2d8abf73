"""
行単位の回路記述 (.qcc) のパーサとシリアライザ

    space photon modes=3
    input mode=0 pol=L oam=0
    bs 0 1 t=1/3
    ps 1 phase=1            # π 単位
    detector 1 name=D3 filter=pol:R,oam:+2

'#' 以降はコメント。数値は整数・小数・p/q の有理数。
"""
import re
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Union

from pyparsing import (
    DelimitedList,
    Group,
    Keyword,
    Opt,
    ParseException,
    ParserElement,
    Regex,
    Suppress,
    Word,
    ZeroOrMore,
    alphanums,
    alphas,
    nums,
    one_of,
)

from src.circuit import (
    BeamSplitter,
    Circuit,
    CircuitElement,
    CircuitSpace,
    Detector,
    HalfWavePlate,
    InputSpec,
    Mirror,
    PhaseShifter,
    Platform,
    QPlate,
    RFFlipper,
    SpinFlipper,
    check_element,
    internal_index,
    internal_symbol,
)
from src.exceptions import CircuitCompatibilityError, CircuitSemanticError, CircuitSyntaxError, ConfigurationError
from src.utils.helper import get_fixture_path
from src.utils.logger import setup_logger

logger = setup_logger()

SINGLE_MODE_ELEMENTS = {
    "mirror": Mirror,
    "hwp": HalfWavePlate,
    "qp": QPlate,
    "sf": SpinFlipper,
    "rf": RFFlipper,
}


def _build_grammar() -> Dict[str, ParserElement]:
    integer = Word(nums).set_parse_action(lambda t: int(t[0]))
    rational = Regex(r"[+-]?\d+/[1-9]\d*").set_parse_action(lambda t: float(Fraction(t[0])))
    decimal = Regex(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?").set_parse_action(lambda t: float(t[0]))
    number = rational | decimal
    identifier = Word(alphas, alphanums + "_")
    symbol = Word(alphanums + "+-")
    name = Word(alphanums + "_-")

    def setting(key: str, value: ParserElement, result_name: str) -> ParserElement:
        return Suppress(Keyword(key) + "=") + value(result_name)

    grammar = {
        "space": Keyword("space") + one_of("photon neutron")("platform") + setting("modes", integer, "modes"),
        "input": Keyword("input") + setting("mode", integer, "mode")
                 + Group(ZeroOrMore(Group(identifier("key") + Suppress("=") + symbol("value"))))("internal"),
        "bs": Keyword("bs") + integer("mode_a") + integer("mode_b") + setting("t", number, "t")
              + Opt(Keyword("dagger")("dagger")),
        "ps": Keyword("ps") + integer("mode") + setting("phase", number, "phase"),
        "detector": Keyword("detector") + integer("mode") + setting("name", name, "name")
                    + Opt(Suppress(Keyword("filter") + "=")
                          + Group(DelimitedList(Group(identifier("key") + Suppress(":") + symbol("value")), ","))("filter")),
    }
    for keyword in SINGLE_MODE_ELEMENTS:
        grammar[keyword] = Keyword(keyword) + integer("mode")
    return grammar


GRAMMAR = _build_grammar()


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _element_from(keyword: str, tokens) -> CircuitElement:
    if keyword == "bs":
        return BeamSplitter(tokens["mode_a"], tokens["mode_b"], tokens["t"], dagger=bool(tokens.get("dagger")))
    if keyword == "ps":
        return PhaseShifter(tokens["mode"], tokens["phase"])
    return SINGLE_MODE_ELEMENTS[keyword](tokens["mode"])


def parse_circuit(text: str) -> Circuit:
    """
    回路記述をパースする

    Args:
        text (str): .qcc 形式のテキスト

    Returns:
        Circuit: パースした回路

    Raises:
        CircuitSyntaxError: 未知の指示子や書式の誤り (行・列付き)
        CircuitSemanticError: モード番号の範囲外、検出器の重複、内部自由度の不一致など (行付き)
    """
    space: Optional[CircuitSpace] = None
    input_spec: Optional[InputSpec] = None
    elements: List[CircuitElement] = []
    detector_modes: Dict[int, int] = {}
    detector_names: Dict[str, int] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        match = re.match(r"\s*(\S+)", line)
        keyword = match.group(1)
        if keyword not in GRAMMAR:
            raise CircuitSyntaxError(f"Unknown directive '{keyword}'", line_no, match.start(1) + 1)
        try:
            tokens = GRAMMAR[keyword].parse_string(line, parse_all=True)
        except ParseException as e:
            raise CircuitSyntaxError(f"Malformed '{keyword}' directive: {e.msg}", line_no, e.col) from e

        if keyword == "space":
            if space is not None:
                raise CircuitSemanticError("Duplicate 'space' header", line_no)
            try:
                space = CircuitSpace(Platform(tokens["platform"]), tokens["modes"])
            except ConfigurationError as e:
                raise CircuitSemanticError(str(e), line_no) from e
            continue
        if space is None:
            raise CircuitSemanticError(f"'{keyword}' appears before the 'space' header", line_no)

        try:
            if keyword == "input":
                if input_spec is not None:
                    raise CircuitSemanticError("Duplicate 'input' directive", line_no)
                input_spec = _input_from(tokens, space, line_no)
                continue
            if keyword == "detector":
                element = Detector(tokens["mode"], tokens["name"], _filter_from(tokens, space, line_no))
                if element.mode in detector_modes:
                    raise CircuitSemanticError(
                        f"Mode {element.mode} already has a detector (line {detector_modes[element.mode]})", line_no)
                if element.name in detector_names:
                    raise CircuitSemanticError(
                        f"Detector name '{element.name}' already used (line {detector_names[element.name]})", line_no)
                detector_modes[element.mode] = line_no
                detector_names[element.name] = line_no
            else:
                element = _element_from(keyword, tokens)
            check_element(element, space)
        except CircuitSemanticError as e:
            if e.line is not None:
                raise
            raise CircuitSemanticError(str(e), line_no) from e
        except (CircuitCompatibilityError, ConfigurationError) as e:
            raise CircuitSemanticError(str(e), line_no) from e
        elements.append(element)

    if space is None:
        raise CircuitSemanticError("Missing 'space' header")
    circuit = Circuit(space=space, elements=tuple(elements), input_spec=input_spec)
    logger.debug(f"Parsed {space.platform.value} circuit: {len(elements)} elements, {len(circuit.detectors)} detectors")
    return circuit


def _input_from(tokens, space: CircuitSpace, line_no: int) -> InputSpec:
    mode = tokens["mode"]
    if not 0 <= mode < space.modes:
        raise CircuitSemanticError(f"Input mode {mode} is out of range for {space.modes} modes", line_no)
    internal = []
    seen = set()
    for item in tokens.get("internal", []):
        key, value = item["key"], item["value"]
        if key not in space.internal_labels:
            raise CircuitSemanticError(f"'{key}' is not an internal degree of freedom of a {space.platform.value} circuit", line_no)
        if key in seen:
            raise CircuitSemanticError(f"Input sets '{key}' twice", line_no)
        seen.add(key)
        try:
            internal.append((key, internal_index(key, value)))
        except ValueError as e:
            raise CircuitSemanticError(str(e), line_no) from e
    return InputSpec(mode=mode, internal=tuple(internal))


def _filter_from(tokens, space: CircuitSpace, line_no: int):
    if "filter" not in tokens:
        return ()
    pairs = []
    for item in tokens["filter"]:
        key, value = item["key"], item["value"]
        if key not in space.internal_labels:
            raise CircuitSemanticError(f"Filter '{key}' is not an internal degree of freedom of a {space.platform.value} circuit", line_no)
        try:
            pairs.append((key, internal_index(key, value)))
        except ValueError as e:
            raise CircuitSemanticError(str(e), line_no) from e
    return tuple(pairs)


def format_number(value: float) -> str:
    """p/q で正確に表せる値は有理数、それ以外は repr (再パースで同じ float に戻る)"""
    fraction = Fraction(value).limit_denominator(10 ** 6)
    if float(fraction) == value:
        return str(fraction)
    return repr(float(value))


def serialize_circuit(circuit: Circuit) -> str:
    """Circuit を .qcc 形式に戻す。parse_circuit で構造的に等しい回路に戻る"""
    lines = [f"space {circuit.space.platform.value} modes={circuit.space.modes}"]
    if circuit.input_spec is not None:
        settings = " ".join(f"{label}={internal_symbol(label, index)}" for label, index in circuit.input_spec.internal)
        lines.append(f"input mode={circuit.input_spec.mode}" + (f" {settings}" if settings else ""))
    for element in circuit.elements:
        if isinstance(element, BeamSplitter):
            line = f"bs {element.mode_a} {element.mode_b} t={format_number(element.t)}"
            lines.append(line + (" dagger" if element.dagger else ""))
        elif isinstance(element, PhaseShifter):
            lines.append(f"ps {element.mode} phase={format_number(element.phase_pi)}")
        elif isinstance(element, Detector):
            line = f"detector {element.mode} name={element.name}"
            if element.filter:
                line += " filter=" + ",".join(f"{label}:{internal_symbol(label, index)}" for label, index in element.filter)
            lines.append(line)
        else:
            lines.append(f"{element.keyword} {element.mode}")
    return "\n".join(lines) + "\n"


def load_circuit(path_or_name: Union[str, Path]) -> Circuit:
    """
    ファイルから回路を読み込む。パスが存在しなければ同梱のフィクスチャ名として探す

    Args:
        path_or_name (str | Path): ファイルパス、またはフィクスチャ名 (例: "photon_prep")

    Returns:
        Circuit: パースした回路
    """
    path = Path(path_or_name)
    if not path.is_file():
        path = get_fixture_path(Path(path_or_name).name)
    if not path.is_file():
        raise ConfigurationError(f"Circuit file not found: {path_or_name}")
    logger.info(f"Loading circuit from {path}")
    return parse_circuit(path.read_text(encoding="utf-8"))
