"""Prescribed surface motions: the map from initial-surface points to moved points.

Every built-in motion is the identity at t=0 and is evaluated pointwise;
evaluators accept (..., 3) arrays and broadcast.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class MotionMap:
    """A family of diffeomorphisms of the initial surface, one per time.

    ``evaluator(points, t)`` maps initial-surface points to their position
    at time t; it must be pure and reduce to the identity at t=0.
    """

    kind: str
    evaluator: Callable[[np.ndarray, float], np.ndarray]
    t_max: float = math.inf
    parameters: dict = field(default_factory=dict)


def evaluate(motion, x0, t):
    """Position at time t of the initial point x0."""
    t = float(t)
    if not 0.0 <= t <= motion.t_max:
        raise DomainError(f"t={t:g} outside the motion's interval [0, {motion.t_max:g}]")
    return motion.evaluator(np.asarray(x0, dtype=float), t)


def identity():
    """Static surface."""
    return MotionMap(kind="identity", evaluator=lambda p, t: np.array(p, dtype=float, copy=True))


def shrinking_sphere():
    """Homothety with ratio exp(-t): a sphere whose radius decays exponentially."""

    def _eval(points, t):
        return math.exp(-t) * np.asarray(points, dtype=float)

    return MotionMap(kind="shrinking_sphere", evaluator=_eval)


def pinching_ellipsoid(axes=(2.0, 1.0, 1.0), beta_max=0.6, width=0.5, t_end=1.0):
    """Ellipsoid developing a waist at x1=0.

    The initial surface is the plain ellipsoid with the given semi-axes
    (see :func:`ellipsoid_surface`). A point y on it moves by scaling its
    (y2, y3) components with s(y1, t) = 1 - beta_max*(t/t_end)*exp(-(y1/width)**2),
    so the waist narrows linearly in time while x1 coordinates stay fixed.
    """
    axes = tuple(float(a) for a in axes)
    if len(axes) != 3 or min(axes) <= 0:
        raise ConfigurationError("semi-axes must be three positive numbers")
    if not 0.0 <= beta_max < 1.0:
        raise ConfigurationError(f"pinch amplitude {beta_max:g} outside [0, 1)")
    if width <= 0:
        raise ConfigurationError("pinch width must be positive")
    if t_end <= 0:
        raise ConfigurationError("motion end time must be positive")

    def _eval(points, t):
        p = np.array(points, dtype=float, copy=True)
        s = waist_factor(p[..., 0], t, beta_max, width, t_end)
        p[..., 1] = s * p[..., 1]
        p[..., 2] = s * p[..., 2]
        return p

    return MotionMap(
        kind="pinching_ellipsoid",
        evaluator=_eval,
        t_max=t_end,
        parameters={"axes": axes, "beta_max": beta_max, "width": width, "t_end": t_end},
    )


def waist_factor(y1, t, beta_max, width, t_end):
    """Transverse scale factor of the pinching motion at abscissa y1."""
    return 1.0 - beta_max * (t / t_end) * np.exp(-((np.asarray(y1, float) / width) ** 2))


def ellipsoid_surface(points, axes):
    """Map unit-sphere points onto the ellipsoid with the given semi-axes."""
    return np.asarray(points, dtype=float) * np.asarray(axes, dtype=float)
