"""
Utility Functions for funkrad

Helper functions for float formatting, the command-line mini-languages, text
tables, log-log fitting, thread-count resolution and the config echo line used
throughout the system.
"""

import json
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

logger = structlog.get_logger(__name__)

CONFIG_ECHO_PREFIX = "# config: "


def format_float(value: float) -> str:
    """17 significant digits; enough for every double to read back bit-exactly."""
    return format(float(value), ".17g")


def parse_key_values(text: str) -> Tuple[str, Dict[str, str]]:
    """
    Split a `head:key=value,key=value` mini-language string.

    Args:
        text: e.g. "full:R=1.5,nd=180,nr=160"

    Returns:
        Tuple of (head, {key: raw value})
    """
    if not text or not isinstance(text, str):
        raise ValueError("Empty specification string")

    head, _, tail = text.strip().partition(":")
    pairs: Dict[str, str] = {}
    for item in filter(None, (part.strip() for part in tail.split(","))):
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ValueError(f"Expected key=value, got '{item}'")
        key = key.strip()
        if key in pairs:
            raise ValueError(f"Duplicate key '{key}' in '{text}'")
        pairs[key] = value.strip()
    return head.strip(), pairs


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    """
    Least-squares line through (log x, log y).

    Args:
        xs: positive abscissae
        ys: positive ordinates

    Returns:
        Tuple of (slope, exp(intercept), residual sum of squares)
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("Need at least two matching samples for a log-log fit")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError("Log-log fit needs strictly positive samples")

    coeffs, residuals, _, _, _ = np.polyfit(np.log(x), np.log(y), 1, full=True)
    residual = float(residuals[0]) if residuals.size else 0.0

    logger.debug("Log-log fit", samples=int(x.size), slope=float(coeffs[0]), residual=residual)

    return float(coeffs[0]), float(math.exp(coeffs[1])), residual


def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """
    Whitespace-separated text table with a `#`-prefixed header line.

    Floats are written with format_float so tables are byte-reproducible.
    """
    lines = ["# " + " ".join(headers)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(format_float(cell))
            elif cell is None:
                cells.append("nan")
            else:
                cells.append(str(cell))
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def config_echo(config: Dict[str, Any]) -> str:
    """The `# config: {...}` line that heads every artifact."""
    return CONFIG_ECHO_PREFIX + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n"


def parse_config_echo(line: str) -> Dict[str, Any]:
    if not line.startswith(CONFIG_ECHO_PREFIX):
        raise ValueError("Not a config echo line")
    return json.loads(line[len(CONFIG_ECHO_PREFIX):])


def resolve_threads(requested: Optional[int], default: int = 1) -> int:
    """
    Thread count: an explicit --threads wins over the configured default.

    The default already reflects FUNKRAD_THREADS through the runtime settings.
    """
    threads = default if requested is None else requested
    if threads < 1:
        logger.warning("Thread count below 1 clamped", requested=threads)
    return max(1, int(threads))


def format_processing_time(seconds: float) -> str:
    """
    Format processing time for human-readable display.

    Args:
        seconds: Processing time in seconds

    Returns:
        Formatted time string
    """
    if seconds < 0.001:
        return "< 1ms"
    elif seconds < 1:
        return f"{int(seconds * 1000)}ms"
    else:
        return f"{seconds:.2f}s"


def parse_int_list(text: str) -> List[int]:
    """`10,100` → [10, 100]."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"Expected comma-separated integers, got '{text}'")
