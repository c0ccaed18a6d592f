"""Run configuration: TOML parsing, validation, and problem assembly."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import flux as flux_mod
from . import motion as motion_mod
from .errors import ConfigurationError
from .mesh import build_icosphere
from .solver import SolverConfig
from .validate import exact_tp1_points, radial_lift, tp2_initial

T_END_TP1 = math.log(2.0)  # one full revolution of the rotating profile
T_END_TP2 = 1.0

_PROBLEMS = ("tp1", "tp2_projected", "tp2_divfree", "custom")

# Allowed keys per section, per problem. None means "any problem".
_SCHEMA = {
    "": {"problem"},
    "mesh": {"level"},
    "solver": {"t_end", "cfl", "numerical_flux", "quadrature", "tau_max"},
    "output": {"dir", "vtk_every"},
    "motion": {"kind", "axes", "beta_max", "width"},
    "flux": {"kind", "direction", "strength"},
    "initial": {"kind", "value"},
}
_SECTIONS_BY_PROBLEM = {
    "tp1": {"", "mesh", "solver", "output"},
    "tp2_projected": {"", "mesh", "solver", "output", "motion", "flux"},
    "tp2_divfree": {"", "mesh", "solver", "output", "motion"},
    "custom": {"", "mesh", "solver", "output", "motion", "flux", "initial"},
}


@dataclass
class RunConfiguration:
    problem: str
    level: int
    t_end: float
    cfl: float = 0.45
    numerical_flux: str = "engquist_osher"
    quadrature: str = "midpoint"
    tau_max: float = 0.01
    out_dir: str = "out"
    vtk_every: int = 0
    motion_kind: Optional[str] = None
    axes: Sequence[float] = (2.0, 1.0, 1.0)
    beta_max: float = 0.6
    width: float = 0.5
    flux_kind: Optional[str] = None
    direction: Sequence[float] = (1.0, 0.0, 0.0)
    strength: float = 1.0
    initial_kind: Optional[str] = None
    initial_value: float = 1.0


def _type_check(key, value, types):
    if isinstance(value, bool) or not isinstance(value, types):
        names = "/".join(t.__name__ for t in types)
        raise ConfigurationError(f"configuration key {key} must be {names}")
    return value


def _num(doc, key, default=None):
    section, _, name = key.rpartition(".")
    table = doc.get(section, doc if section == "" else {})
    if name not in table:
        return default
    return float(_type_check(key, table[name], (int, float)))


def parse_config(text):
    """Parse and validate a TOML run configuration; fill documented defaults."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigurationError(f"malformed configuration: {err}") from err

    problem = doc.get("problem")
    if problem is None:
        raise ConfigurationError("configuration key problem is required")
    if problem not in _PROBLEMS:
        raise ConfigurationError(f"unknown problem '{problem}' (expected one of {', '.join(_PROBLEMS)})")

    allowed_sections = _SECTIONS_BY_PROBLEM[problem]
    for section, content in doc.items():
        if isinstance(content, dict):
            if section not in _SCHEMA:
                raise ConfigurationError(f"unknown configuration section [{section}]")
            if section not in allowed_sections:
                raise ConfigurationError(
                    f"section [{section}] is not configurable for problem {problem}"
                )
            for key in content:
                if key not in _SCHEMA[section]:
                    raise ConfigurationError(f"unknown configuration key {section}.{key}")
                if isinstance(content[key], dict):
                    raise ConfigurationError(f"unexpected table at {section}.{key}")
        elif section not in _SCHEMA[""]:
            raise ConfigurationError(f"unknown configuration key {section}")

    mesh_tbl = doc.get("mesh", {})
    if "level" not in mesh_tbl:
        raise ConfigurationError("configuration key mesh.level is required")
    level = _type_check("mesh.level", mesh_tbl["level"], (int,))
    if not 0 <= level <= 8:
        raise ConfigurationError(f"mesh.level {level} outside [0, 8]")

    cfg = RunConfiguration(
        problem=problem,
        level=level,
        t_end=_num(doc, "solver.t_end", T_END_TP1 if problem == "tp1" else T_END_TP2),
        cfl=_num(doc, "solver.cfl", 0.45),
        tau_max=_num(doc, "solver.tau_max", 0.01),
    )
    if cfg.t_end <= 0:
        raise ConfigurationError("solver.t_end must be positive")
    if not 0.0 < cfg.cfl <= 1.0:
        raise ConfigurationError(f"solver.cfl {cfg.cfl:g} outside (0, 1]")

    solver_tbl = doc.get("solver", {})
    cfg.numerical_flux = solver_tbl.get("numerical_flux", "engquist_osher")
    if cfg.numerical_flux not in ("engquist_osher", "local_lax_friedrichs"):
        raise ConfigurationError(f"solver.numerical_flux '{cfg.numerical_flux}' unknown")
    cfg.quadrature = solver_tbl.get("quadrature", "midpoint")
    if cfg.quadrature not in ("midpoint", "gauss2"):
        raise ConfigurationError(f"solver.quadrature '{cfg.quadrature}' unknown")

    out_tbl = doc.get("output", {})
    cfg.out_dir = str(out_tbl.get("dir", "out"))
    cfg.vtk_every = _type_check("output.vtk_every", out_tbl.get("vtk_every", 0), (int,))
    if cfg.vtk_every < 0:
        raise ConfigurationError("output.vtk_every must be nonnegative")

    motion_tbl = doc.get("motion", {})
    if problem in ("tp2_projected", "tp2_divfree", "custom"):
        axes = motion_tbl.get("axes", [2.0, 1.0, 1.0])
        if not (isinstance(axes, list) and len(axes) == 3):
            raise ConfigurationError("motion.axes must be a list of three numbers")
        cfg.axes = tuple(float(a) for a in axes)
        cfg.beta_max = _num(doc, "motion.beta_max", 0.6)
        cfg.width = _num(doc, "motion.width", 0.5)
        if not 0.0 <= cfg.beta_max < 1.0:
            raise ConfigurationError(f"motion.beta_max {cfg.beta_max:g} outside [0, 1)")
        if cfg.width <= 0:
            raise ConfigurationError("motion.width must be positive")
    if problem == "custom":
        cfg.motion_kind = motion_tbl.get("kind")
        if cfg.motion_kind not in ("identity", "shrinking_sphere", "pinching_ellipsoid"):
            raise ConfigurationError("motion.kind must name a built-in motion for custom problems")
    elif "kind" in motion_tbl:
        raise ConfigurationError(f"motion.kind is fixed for problem {problem}")

    flux_tbl = doc.get("flux", {})
    if problem in ("tp2_projected", "custom"):
        direction = flux_tbl.get("direction", [1.0, 0.0, 0.0])
        if not (isinstance(direction, list) and len(direction) == 3):
            raise ConfigurationError("flux.direction must be a list of three numbers")
        cfg.direction = tuple(float(a) for a in direction)
        cfg.strength = _num(doc, "flux.strength", 1.0)
    if problem == "custom":
        cfg.flux_kind = flux_tbl.get("kind")
        if cfg.flux_kind not in ("rotation_linear", "projected_burgers", "potential_divfree"):
            raise ConfigurationError("flux.kind must name a built-in flux for custom problems")
        initial_tbl = doc.get("initial", {})
        cfg.initial_kind = initial_tbl.get("kind", "tp2")
        if cfg.initial_kind not in ("tp1", "tp2", "constant"):
            raise ConfigurationError("initial.kind must be tp1, tp2, or constant")
        cfg.initial_value = _num(doc, "initial.value", 1.0)
    elif "kind" in flux_tbl:
        raise ConfigurationError(f"flux.kind is fixed for problem {problem}")
    return cfg


@dataclass
class ProblemSetup:
    """Everything a run needs: geometry, motion, flux, data, and solver knobs."""

    name: str
    mesh: object
    motion: object
    model: object
    u0: Callable
    solver: SolverConfig
    exact: Optional[Callable] = None  # (points, t) -> values, when known
    lift: Optional[Callable] = None  # t -> (points -> surface points)
    config: RunConfiguration = field(default=None, repr=False)


def build_problem(cfg, level=None):
    """Assemble mesh, motion, flux model, and initial data for a configuration.

    ``level`` overrides cfg.level (used by refinement studies).
    """
    level = cfg.level if level is None else level
    solver = SolverConfig(
        t_end=cfg.t_end,
        cfl_number=cfg.cfl,
        numerical_flux=cfg.numerical_flux,
        quadrature=cfg.quadrature,
        tau_max=cfg.tau_max,
    )
    sphere = build_icosphere(level)

    if cfg.problem == "tp1":
        return ProblemSetup(
            name="tp1",
            mesh=sphere,
            motion=motion_mod.shrinking_sphere(),
            model=flux_mod.rotation_linear(),
            u0=lambda pts: exact_tp1_points(pts, 0.0),
            solver=solver,
            exact=exact_tp1_points,
            lift=lambda t: radial_lift(math.exp(-t)),
            config=cfg,
        )

    motion_kind = cfg.motion_kind or "pinching_ellipsoid"
    if cfg.problem == "custom" and motion_kind != "pinching_ellipsoid":
        mesh = sphere
        motion = motion_mod.identity() if motion_kind == "identity" else motion_mod.shrinking_sphere()
        normal = flux_mod.sphere_normal
    else:
        mesh = sphere.transformed(lambda p: motion_mod.ellipsoid_surface(p, cfg.axes))
        motion = motion_mod.pinching_ellipsoid(cfg.axes, cfg.beta_max, cfg.width, t_end=cfg.t_end)
        normal = flux_mod.pinched_ellipsoid_normal(motion)

    flux_kind = cfg.flux_kind or ("projected_burgers" if cfg.problem == "tp2_projected" else "potential_divfree")
    if flux_kind == "rotation_linear":
        model = flux_mod.rotation_linear()
    elif flux_kind == "projected_burgers":
        model = flux_mod.projected_burgers(cfg.direction, cfg.strength, surface_normal=normal)
    else:
        model = flux_mod.potential_divfree(surface_normal=normal)

    if cfg.initial_kind == "tp1":
        u0 = lambda pts: exact_tp1_points(pts, 0.0)
    elif cfg.initial_kind == "constant":
        value = cfg.initial_value
        u0 = lambda pts: value + 0.0 * pts[..., 0]
    else:
        u0 = tp2_initial

    return ProblemSetup(
        name=cfg.problem,
        mesh=mesh,
        motion=motion,
        model=model,
        u0=u0,
        solver=solver,
        config=cfg,
    )
