"""Exact solutions, the reduced 1D oracle, L1 errors, and EOC tables.

The rotating-profile problem on the shrinking sphere reduces, in polar
coordinates, to a 1D conservation law on the periodic circle with a linear
geometric source. The 1D marcher here discretizes that reduced equation
directly (independently of the surface solver) and doubles as the viscous
and entropy-residual testbed.
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ConfigurationError, DomainError

TWO_PI = 2.0 * math.pi


# --- Test problem 1: rotating band profile on the shrinking sphere ---------

def angular_profile(theta):
    """Band factor sin^2(3*theta) supported on |theta - pi/2| < pi/6."""
    theta = np.asarray(theta, dtype=float)
    return np.where(np.abs(theta - 0.5 * math.pi) < math.pi / 6.0, np.sin(3.0 * theta) ** 2, 0.0)


def azimuthal_initial(phi):
    """Indicator of the half circle phi < pi (2*pi-periodic)."""
    return np.where(np.mod(phi, TWO_PI) < math.pi, 1.0, 0.0)


def exact_tp1(phi, theta, t):
    """Exact rotating solution: amplitude exp(2t), profile shifted by 2*pi*(e^t - 1)."""
    shift = TWO_PI * (math.exp(t) - 1.0)
    return math.exp(2.0 * t) * azimuthal_initial(np.asarray(phi, float) - shift) * angular_profile(theta)


def exact_tp1_points(points, t):
    """exact_tp1 sampled at ambient points via their spherical angles."""
    p = np.asarray(points, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    theta = np.arccos(np.clip(p[..., 2] / r, -1.0, 1.0))
    phi = np.mod(np.arctan2(p[..., 1], p[..., 0]), TWO_PI)
    return exact_tp1(phi, theta, t)


def radial_lift(radius):
    """Projection of ambient points onto the centered sphere of given radius."""

    def _lift(points):
        p = np.asarray(points, dtype=float)
        return radius * p / np.linalg.norm(p, axis=-1, keepdims=True)

    return _lift


# --- Test problem 2: initial hump entering the pinching ellipsoid ----------

def tp2_initial(points):
    """cos^2(pi*(x1+2)) on x1 < -3/2, zero elsewhere."""
    p = np.asarray(points, dtype=float)
    x1 = p[..., 0]
    return np.where(x1 < -1.5, np.cos(math.pi * (x1 + 2.0)) ** 2, 0.0)


# --- Reduced 1D oracle ------------------------------------------------------

@dataclass(frozen=True)
class Reduced1DState:
    """Periodic cell averages on [0, 2*pi] at one time."""

    n_cells: int
    values: np.ndarray
    time: float
    viscosity: float


class LinearFlux1D:
    """f(u) = a*u with its textbook monotone splitting."""

    def __init__(self, a=TWO_PI):
        self.a = float(a)

    def value(self, u):
        return self.a * u

    def eo_plus(self, u):
        return max(self.a, 0.0) * u

    def eo_minus(self, u):
        return min(self.a, 0.0) * u

    def max_speed(self, lo, hi):
        return abs(self.a)


class BurgersFlux1D:
    """f(u) = u^2/2 split at the sonic point u = 0."""

    def value(self, u):
        return 0.5 * u * u

    def eo_plus(self, u):
        return 0.5 * np.maximum(u, 0.0) ** 2

    def eo_minus(self, u):
        return 0.5 * np.minimum(u, 0.0) ** 2

    def max_speed(self, lo, hi):
        return max(abs(lo), abs(hi))


def grid_1d(n_cells):
    """Cell midpoints of the uniform periodic grid on [0, 2*pi]."""
    dphi = TWO_PI / n_cells
    return (np.arange(n_cells) + 0.5) * dphi, dphi


def reduced_1d_run(n_cells, flux, t_end, viscosity=0.0, cfl=0.45, u0=None,
                   return_trajectory=False):
    """March the reduced circle equation with an integrating-factor update.

    Update: u_new = e^{2 tau} * [u - (tau e^t / dphi) * (g_{i+1/2} - g_{i-1/2})
    + (tau eps / dphi^2) * (u_{i+1} - 2 u_i + u_{i-1})].
    The exponential prefactor integrates the linear source exactly, so
    spatially constant states are reproduced without error. The step size
    combines the convective and diffusive limits.
    """
    if n_cells < 8:
        raise ConfigurationError("reduced 1D oracle needs at least 8 cells")
    if viscosity < 0:
        raise ConfigurationError("viscosity must be nonnegative")
    if not 0.0 < cfl <= 1.0:
        raise ConfigurationError(f"cfl {cfl:g} outside (0, 1]")
    mids, dphi = grid_1d(n_cells)
    u = np.asarray(u0(mids), dtype=float) if u0 is not None else azimuthal_initial(mids)
    t = 0.0
    states = [Reduced1DState(n_cells, u.copy(), t, viscosity)]
    while t < t_end - 1e-14 * max(1.0, t_end):
        lam = flux.max_speed(float(u.min()), float(u.max()))
        rate = math.exp(t) * lam / dphi + 2.0 * viscosity / dphi**2
        tau = cfl / rate if rate > 0.0 else t_end - t
        tau = min(tau, t_end - t)
        g = flux.eo_plus(u) + flux.eo_minus(np.roll(u, -1))  # g_{i+1/2}
        update = u - (tau * math.exp(t) / dphi) * (g - np.roll(g, 1))
        if viscosity > 0.0:
            update += (tau * viscosity / dphi**2) * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1))
        u = math.exp(2.0 * tau) * update
        t += tau
        if return_trajectory:
            states.append(Reduced1DState(n_cells, u.copy(), t, viscosity))
    if return_trajectory:
        return states
    return Reduced1DState(n_cells, u.copy(), t, viscosity)


def entropy_residual_1d(trajectory, k_values, flux):
    """Maximum positive residual of the discrete entropy inequality.

    For each constant k the inequality compares |u-k| at the new level with
    the transported entropy |u-k| at the old level: the entropy flux is the
    numerical flux evaluated on u v k minus u ^ k (so it telescopes against
    the scheme when k is out of range), and the linear source enters through
    the same exact integrating factor as the scheme, contributing
    k*sign(u-k)*(e^{2 tau} - 1). The sign is taken at the new level, which
    keeps the residual of cells crossing the level k on the dissipative side.
    """
    if any(s.viscosity != 0.0 for s in trajectory):
        raise ConfigurationError("entropy residual applies to inviscid trajectories")
    worst = 0.0
    for older, newer in zip(trajectory, trajectory[1:]):
        u0 = older.values
        u1 = newer.values
        tau = newer.time - older.time
        dphi = TWO_PI / older.n_cells
        growth = math.exp(2.0 * tau)
        coef = math.exp(older.time) / dphi
        for k in k_values:
            above = np.maximum(u0, k)
            below = np.minimum(u0, k)
            g_above = flux.eo_plus(above) + flux.eo_minus(np.roll(above, -1))
            g_below = flux.eo_plus(below) + flux.eo_minus(np.roll(below, -1))
            ent_flux = g_above - g_below
            div = ent_flux - np.roll(ent_flux, 1)
            sign = np.sign(u1 - k)
            res = (
                np.abs(u1 - k)
                - growth * (np.abs(u0 - k) - tau * coef * div)
                - k * sign * (growth - 1.0)
            )
            worst = max(worst, float(res.max()))
    return max(0.0, worst)


# --- Error measurement and convergence tables -------------------------------

def l1_error(state, snap, exact, lift=None):
    """Sum of V_j * |u_j - exact(point_j, t)| with barycenter sampling.

    ``lift`` optionally maps flat-cell barycenters onto the analytic
    surface before sampling the exact solution.
    """
    pts = snap.barycenter
    if lift is not None:
        pts = lift(pts)
    return float(np.sum(snap.cell_measure * np.abs(state.values - exact(pts, snap.time))))


def mass_total(state):
    """Total discrete mass, summed in canonical cell order."""
    return float(np.sum(state.masses))


@dataclass(frozen=True)
class EocRecord:
    elements: int
    h_bar: float
    l1_error: float
    eoc: Optional[float] = None


def eoc_table(pairs, elements) -> List[EocRecord]:
    """Convergence records from (mean diameter, L1 error) pairs.

    The order between consecutive rows is log(E_prev/E)/log(h_prev/h);
    the first row carries no order.
    """
    if len(pairs) < 2:
        raise DomainError("an order table needs at least two rows")
    if len(elements) != len(pairs):
        raise DomainError("elements and pairs must have matching lengths")
    records = []
    prev = None
    for n, (h, err) in zip(elements, pairs):
        if h <= 0 or err <= 0:
            raise DomainError("mean diameters and errors must be positive")
        eoc = None
        if prev is not None:
            ph, perr = prev
            eoc = math.log(perr / err) / math.log(ph / h)
        records.append(EocRecord(elements=int(n), h_bar=float(h), l1_error=float(err), eoc=eoc))
        prev = (h, err)
    return records
