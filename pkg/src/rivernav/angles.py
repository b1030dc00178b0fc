"""Angle helpers. Everything is in radians and wrapped to (-pi, pi]."""

import math

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap ``a`` to the half-open interval (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def angle_diff(a: float, b: float) -> float:
    """Shortest signed rotation taking ``b`` to ``a``."""
    return wrap_angle(a - b)
