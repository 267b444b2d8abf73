import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# .env があれば読み込む (既存の環境変数は上書きしない)
load_dotenv()

DEFAULT_TOLERANCE = 1e-12
DEFAULT_DENSE_CAP = 4096
DEFAULT_MAX_PATHS = 20
DEFAULT_MAX_QUDIT = 16

FIXTURE_DIR = Path(__file__).parent.parent / "fixtures"


def _env_number(name, default, cast):
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        print(f"Invalid value for {name}: {raw!r}. Falling back to {default}")
        return default


def get_tolerance(override: Optional[float] = None) -> float:
    """
    比較許容誤差を返す

    Args:
        override (float | None): 明示的な指定。あればそれを優先する

    Returns:
        float: QCC_TOLERANCE 環境変数、またはデフォルトの 1e-12
    """
    if override is not None:
        return float(override)
    return _env_number("QCC_TOLERANCE", DEFAULT_TOLERANCE, float)


def get_dense_cap(override: Optional[int] = None) -> int:
    """密行列化を許す全次元の上限"""
    if override is not None:
        return int(override)
    return _env_number("QCC_DENSE_CAP", DEFAULT_DENSE_CAP, int)


def get_max_paths(override: Optional[int] = None) -> int:
    if override is not None:
        return int(override)
    return _env_number("QCC_MAX_PATHS", DEFAULT_MAX_PATHS, int)


def get_max_qudit(override: Optional[int] = None) -> int:
    if override is not None:
        return int(override)
    return _env_number("QCC_MAX_QUDIT", DEFAULT_MAX_QUDIT, int)


def get_fixture_path(name: str) -> Path:
    """
    同梱の回路フィクスチャ (.qcc) のパスを取得する

    Args:
        name (str): ファイル名。拡張子は省略可

    Returns:
        Path: 環境変数 QCC_FIXTURE_DIR、または標準の src/fixtures 配下のパス
    """
    base_path = Path(os.environ.get("QCC_FIXTURE_DIR") or FIXTURE_DIR)
    file_name = name if name.endswith(".qcc") else f"{name}.qcc"
    return base_path / file_name
