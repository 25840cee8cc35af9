"""Conversions between solver floats and exact rationals.

Every conversion that feeds a soundness-relevant quantity rounds toward the
feasible side: bounds go up, never down.
"""

import math
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Real = Union[int, float, Fraction]


def round_up(x: float, denominator: int) -> Fraction:
    """Smallest multiple of ``1/denominator`` strictly above ``x`` (or equal
    when ``x`` already is one and exact)."""
    if isinstance(x, Fraction):
        scaled = x * denominator
        return Fraction(math.ceil(scaled), denominator)
    if not math.isfinite(x):
        raise ValueError("cannot rationalise a non-finite value")
    return Fraction(math.floor(x * denominator) + 1, denominator)


def nearest(x: Real, denominator: int) -> Fraction:
    """Closest fraction with denominator at most ``denominator``."""
    return Fraction(x).limit_denominator(denominator)


def rationalize_vector(values: Iterable[Real], denominator: int) -> np.ndarray:
    return np.array([nearest(float(v), denominator) for v in values], dtype=object)


def to_float(values: Sequence[Real]) -> np.ndarray:
    return np.array([float(v) for v in values], dtype=float)
