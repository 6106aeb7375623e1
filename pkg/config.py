import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()


def _env_bool(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def _env_int(name: str, default: int = 0, min_value: Optional[int] = None) -> int:
    value = os.getenv(name)
    if value is None:
        result = default
    else:
        raw = value.strip()
        if not raw:
            result = default
        else:
            try:
                result = int(raw)
            except ValueError:
                result = default

    if min_value is not None:
        result = max(result, min_value)

    return result


def _env_float(
    name: str,
    default: float = 0.0,
    min_value: Optional[float] = None,
    max_value: Optional[float] = None,
) -> float:
    value = os.getenv(name)
    try:
        result = float(value.strip()) if value and value.strip() else default
    except ValueError:
        result = default

    if min_value is not None:
        result = max(result, min_value)
    if max_value is not None:
        result = min(result, max_value)

    return result


class Config:
    BASEDIR = os.path.dirname(os.path.abspath(__file__))

    # Distancia mínima (en pasos) al borde lejano de la ventana para que el
    # veredicto "escapa" se considere fiable.
    ESCAPE_MARGIN = _env_int('PERC_ESCAPE_MARGIN', 64, min_value=1)
    DEFAULT_P = _env_float('PERC_DEFAULT_P', 0.7, min_value=1e-9, max_value=1.0)
    DEFAULT_EXCESS = os.getenv('PERC_EXCESS', 'atom:2').strip()

    BOOTSTRAP_RESAMPLES = _env_int('PERC_BOOTSTRAP_RESAMPLES', 2000, min_value=1)
    CI_METHOD = os.getenv('PERC_CI_METHOD', 'bootstrap').strip().lower()
    CI_LEVEL = _env_float('PERC_CI_LEVEL', 0.95, min_value=0.5, max_value=0.999)

    TAIL_MIN_SAMPLES = _env_int('PERC_TAIL_MIN_SAMPLES', 1000, min_value=1)
    DIRECTION_MIN_SAMPLES = _env_int('PERC_DIRECTION_MIN_SAMPLES', 100, min_value=1)
    DRIFT_MIN_TRANSITIONS = _env_int('PERC_DRIFT_MIN_TRANSITIONS', 200, min_value=1)
    ESCAPE_RATE_FLOOR = _env_float('PERC_ESCAPE_RATE_FLOOR', 0.05, min_value=0.0, max_value=1.0)

    STABILIZATION_LOOKAHEAD = _env_int('PERC_STABILIZATION_LOOKAHEAD', 200, min_value=1)
    SUBPATH_CHECKS = _env_int('PERC_SUBPATH_CHECKS', 20, min_value=0)

    WORKERS = _env_int('PERC_WORKERS', os.cpu_count() or 1, min_value=1)
    RENDER_SVG = _env_bool('PERC_RENDER_SVG', False)

    OUTPUT_DIR = os.getenv('PERC_OUTPUT_DIR', os.path.join(BASEDIR, 'results'))
    LOG_FILE = os.getenv('PERC_LOG_FILE', 'app.log')
