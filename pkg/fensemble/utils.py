"""Utility functions for fensemble."""

import math
import re

REAL_FORMAT = ".17g"


def fmt_real(value: float | None) -> str:
    """Render a real with 17 significant digits (empty for missing values)."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), REAL_FORMAT)


def parse_count(text: str) -> int:
    """Parse an integer written as ``10000``, ``10_000`` or ``1e10``."""
    cleaned = text.strip().replace("_", "")
    if re.fullmatch(r"[+-]?\d+", cleaned):
        return int(cleaned)
    match = re.fullmatch(r"([+-]?\d+)[eE]\+?(\d+)", cleaned)
    if match:
        return int(match.group(1)) * 10 ** int(match.group(2))
    raise ValueError(f"not an integer: {text!r}")


def parse_count_list(text: str) -> list[int]:
    """Parse a comma separated list of counts, e.g. ``1e6,1e8,1e10``."""
    return [parse_count(part) for part in text.split(",") if part.strip()]
