"""Lossless text formatting shared by every CSV writer."""

import math


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"
