"""Tangential flux fields f((x,t),u) and their u-derivatives.

Three built-in families: a linear rotation field on centered spheres, a
Burgers-type flux obtained by projecting a constant ambient vector onto the
surface, and a divergence-free flux built from a scalar potential as
normal x gradient. All evaluators broadcast over (..., 3) point arrays.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .motion import waist_factor

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FluxModel:
    """Evaluator bundle for one flux family.

    ``eval(points, t, u)`` returns tangent vectors in ambient coordinates,
    ``eval_du`` their derivative with respect to u, ``surface_normal`` the
    unit normal of the analytic surface at time t. ``u_power`` marks pure
    monomial u-dependence (f = u**p * eval(x, t, 1)), which the solver uses
    for closed-form flux splitting; None means generic dependence.
    """

    kind: str
    surface_normal: Callable[[np.ndarray, float], np.ndarray]
    eval: Callable
    eval_du: Callable
    lipschitz_bound: Callable
    u_power: Optional[int] = None


def _u_col(u):
    """u broadcast against the last (vector) axis of a point array."""
    return np.asarray(u, dtype=float)[..., None]


def sphere_normal(points, t=0.0):
    """Outward unit normal of any sphere centered at the origin."""
    p = np.asarray(points, dtype=float)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    return p / n


def pinched_ellipsoid_normal(motion):
    """Outward unit normal of the pinching-ellipsoid surface family.

    Computed as the normalized gradient of the implicit function
    (y1/a1)^2 + (y2/(a2 s))^2 + (y3/(a3 s))^2 - 1 with s = s(y1, t) the
    motion's waist factor.
    """
    a1, a2, a3 = motion.parameters["axes"]
    beta = motion.parameters["beta_max"]
    width = motion.parameters["width"]
    t_end = motion.parameters["t_end"]

    def _normal(points, t):
        p = np.asarray(points, dtype=float)
        y1, y2, y3 = p[..., 0], p[..., 1], p[..., 2]
        s = waist_factor(y1, t, beta, width, t_end)
        ds = 2.0 * y1 * beta * (t / t_end) * np.exp(-((y1 / width) ** 2)) / width**2
        g1 = 2.0 * y1 / a1**2 - (2.0 * ds / s**3) * (y2**2 / a2**2 + y3**2 / a3**2)
        g2 = 2.0 * y2 / (a2**2 * s**2)
        g3 = 2.0 * y3 / (a3**2 * s**2)
        g = np.stack([g1, g2, g3], axis=-1)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    return _normal


def rotation_linear():
    """f(x,t,u) = 2*pi*u * (-x2, x1, 0)/|x|: rigid rotation about the x3 axis.

    Tangent to every centered sphere; linear in u.
    """

    def _field(points):
        p = np.asarray(points, dtype=float)
        n = np.linalg.norm(p, axis=-1, keepdims=True)
        if np.any(n == 0.0):
            raise DomainError("rotation flux undefined at the origin")
        xh = p / n
        return TWO_PI * np.stack([-xh[..., 1], xh[..., 0], np.zeros_like(xh[..., 0])], axis=-1)

    return FluxModel(
        kind="rotation_linear",
        surface_normal=sphere_normal,
        eval=lambda points, t, u: _u_col(u) * _field(points),
        eval_du=lambda points, t, u: _field(points) * np.ones_like(_u_col(u)),
        lipschitz_bound=lambda u_min, u_max, t_interval=(0.0, 0.0): TWO_PI,
        u_power=1,
    )


def projected_burgers(direction=(1.0, 0.0, 0.0), strength=1.0, surface_normal=sphere_normal):
    """f(x,t,u) = strength * (u**2/2) * P(x,t) a with P = I - nu nu^T.

    The constant ambient direction a is projected onto the surface; the
    resulting flux is tangent but not divergence-free.
    """
    a = np.asarray(direction, dtype=float)
    a = a / np.linalg.norm(a)
    strength = float(strength)

    def _projected(points, t):
        nu = surface_normal(points, t)
        return a - nu * np.einsum("...i,i->...", nu, a)[..., None]

    return FluxModel(
        kind="projected_burgers",
        surface_normal=surface_normal,
        eval=lambda points, t, u: (strength * 0.5) * _u_col(u) ** 2 * _projected(points, t),
        eval_du=lambda points, t, u: strength * _u_col(u) * _projected(points, t),
        lipschitz_bound=lambda u_min, u_max, t_interval=(0.0, 0.0): strength
        * max(abs(u_min), abs(u_max)),
        u_power=2,
    )


def potential_divfree(grad_h=None, grad_h_du=None, surface_normal=sphere_normal,
                      u_power=None, lipschitz=None):
    """Divergence-free flux f(x,t,u) = nu(x,t) x grad h(x,t,u).

    Defaults to the potential h(x,t,u) = -20*x3*u**2 with its analytic
    gradient (0, 0, -20*u**2). Custom potentials supply grad_h and
    grad_h_du (no automatic differentiation), plus a lipschitz bound and,
    when the u-dependence is a pure monomial, its degree.
    """
    if grad_h is None:

        def grad_h(points, t, u):
            p = np.asarray(points, dtype=float)
            uu = np.asarray(u, dtype=float)
            g = np.zeros(np.broadcast_shapes(p.shape[:-1], uu.shape) + (3,))
            g[..., 2] = -20.0 * uu**2
            return g

        def grad_h_du(points, t, u):
            p = np.asarray(points, dtype=float)
            uu = np.asarray(u, dtype=float)
            g = np.zeros(np.broadcast_shapes(p.shape[:-1], uu.shape) + (3,))
            g[..., 2] = -40.0 * uu
            return g

        u_power = 2
        lipschitz = lambda u_min, u_max, t_interval=(0.0, 0.0): 40.0 * max(abs(u_min), abs(u_max))
    elif grad_h_du is None:
        raise DomainError("custom potentials must supply grad_h_du alongside grad_h")

    def _eval(points, t, u):
        return np.cross(surface_normal(points, t), grad_h(points, t, u))

    def _eval_du(points, t, u):
        return np.cross(surface_normal(points, t), grad_h_du(points, t, u))

    return FluxModel(
        kind="potential_divfree",
        surface_normal=surface_normal,
        eval=_eval,
        eval_du=_eval_du,
        lipschitz_bound=lipschitz,
        u_power=u_power,
    )


def discrete_divergence_check(model, snap, u, t):
    """Per-cell boundary integral of f(., t, u) against the edge conormals.

    For an exactly divergence-free flux this residual vanishes as the mesh
    is refined; it is a direct check of the divergence-free hypothesis on
    the discrete level.
    """
    res = np.zeros(len(snap.cell_measure))
    for e in range(3):
        f = model.eval(snap.edge_midpoint[:, e], t, u)
        res += snap.edge_length[:, e] * np.einsum("ij,ij->i", f, snap.edge_conormal[:, e])
    return res
