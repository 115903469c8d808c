"""
Helper utility functions.
"""

from math import log10
from typing import List


def format_duration(seconds: float) -> str:
    """
    Format duration in human-readable format.

    Args:
        seconds: Duration in seconds

    Returns:
        Formatted string (e.g., "0.42s", "3m 05s", "1h 02m")
    """
    if seconds < 60:
        return f"{seconds:.2f}s"

    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return f"{minutes}m {secs:02d}s"

    hours, minutes = divmod(minutes, 60)
    return f"{hours}h {minutes:02d}m"


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * log10(value)


def parse_value_list(text: str) -> List[float]:
    """
    Parse a comma-separated list of numbers from the command line.

    Args:
        text: e.g. "1,2,4,8" or "-5, 0, 5"

    Returns:
        Parsed numbers in the given order
    """
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(float(part))
        except ValueError:
            raise ValueError(f"not a number in value list: '{part}'")
    if not values:
        raise ValueError("value list is empty")
    return values
