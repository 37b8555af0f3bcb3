"""Scenario files, validation and the preset catalog.

A scenario is a flat text file of ``section.key = value`` lines; ``#`` starts
a comment. Example::

    scenario.name = cosmo_delta_shock
    model.flux = burgers
    initial.v0 = riemann(1, 0)
    initial.u0 = bump(0, 0.3, 1)
    noise.epsilon_ladder = 8dx, 4dx, 2dx, 1dx

Epsilon entries may be written in grid units (``4dx``) or as plain numbers.
"""

from __future__ import annotations

import dataclasses
import os
import re
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .conservation import FLUXES, Grid1D, flux_from_label

DIAGNOSTICS = (
    "riemann_error",
    "entropy",
    "weak_form",
    "commutator",
    "martingale",
    "second_moment",
    "cross_check",
    "translation_oracle",
    "spde_residual",
    "jacobian_check",
)

SCENARIO_DIR_ENV = "STOCHHYP_SCENARIO_DIR"
SUFFIX = ".cfg"


class ScenarioError(ValueError):
    """Scenario file failed validation; ``errors`` lists every problem."""

    def __init__(self, errors: list[str], source: str = "<scenario>"):
        self.errors = list(errors)
        self.source = source
        lines = "\n".join(f"  {e}" for e in self.errors)
        super().__init__(f"{source}: {len(self.errors)} error(s)\n{lines}")


# {{{ initial data

_CALL = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")
_ARITY = {"riemann": (2, 3), "bump": (3, 3), "constant": (1, 1)}


@dataclass(frozen=True)
class InitialData:
    """``riemann(vL, vR[, x0])``, ``bump(center, width, height)`` or ``constant(c)``.

    ``bump`` is ``height * exp(1 - 1/(1 - r^2))`` with ``r = (x - center)/width``.
    """

    kind: str
    params: tuple[float, ...]

    @classmethod
    def parse(cls, text: str) -> "InitialData":
        m = _CALL.match(text)
        if not m:
            raise ValueError(f"cannot parse initial data '{text}'")
        kind, args = m.group(1), m.group(2)
        if kind not in _ARITY:
            raise ValueError(f"unknown initial data kind '{kind}'")
        try:
            params = tuple(float(a) for a in args.split(",")) if args.strip() else ()
        except ValueError:
            raise ValueError(f"non-numeric argument in '{text}'") from None
        lo, hi = _ARITY[kind]
        if not lo <= len(params) <= hi:
            raise ValueError(f"{kind} takes {lo}-{hi} arguments, got {len(params)}")
        if not all(np.isfinite(params)):
            raise ValueError(f"non-finite argument in '{text}'")
        if kind == "bump" and params[1] <= 0:
            raise ValueError("bump width must be positive")
        return cls(kind, params)

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "riemann":
            vL, vR = self.params[:2]
            x0 = self.params[2] if len(self.params) > 2 else 0.0
            return np.where(x < x0, vL, vR)
        if self.kind == "bump":
            c, w, h = self.params
            r = (x - c) / w
            inside = np.abs(r) < 1
            s = np.where(inside, 1 - r ** 2, 1.0)
            return np.where(inside, h * np.exp(1 - 1 / s), 0.0)
        return np.full_like(x, self.params[0])

    def support(self) -> tuple[float, float] | None:
        """Closed support, ``None`` when unbounded, empty tuple when zero."""
        if self.kind == "bump":
            c, w, h = self.params
            return (c - w, c + w) if h != 0 else ()
        if self.kind == "constant":
            return None if self.params[0] != 0 else ()
        vL, vR = self.params[:2]
        return None if (vL, vR) != (0.0, 0.0) else ()

    def value_range(self) -> tuple[float, float]:
        if self.kind == "riemann":
            vL, vR = self.params[:2]
            return min(vL, vR), max(vL, vR)
        if self.kind == "bump":
            h = self.params[2]
            return min(0.0, h), max(0.0, h)
        return self.params[0], self.params[0]

# }}}


# {{{ scenario spec

@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    v0: InitialData
    u0: InitialData
    description: str = ""
    flux: str = "burgers"
    x_min: float = -2.0
    x_max: float = 4.0
    n_cells: int = 400
    t_end: float = 1.0
    cfl: float = 0.5
    epsilon_ladder: tuple[str, ...] = ("8dx", "4dx", "2dx", "1dx")
    n_paths: int = 400
    base_seed: int = 20160101
    sde_refine: int = 4
    outputs: tuple[str, ...] = DIAGNOSTICS
    mass_tol: float = 1e-3
    cross_tol: float = 0.05
    quadrature_c: float = 0.25
    ci_multiplier: float = 3.0
    moment_ratio_max: float = 2.0
    riemann_tol: float = 0.02
    oracle_tol: float = 0.02
    deterministic_growth_min: float | None = None
    commutator_slope_min: float | None = None
    fv_refine: int = 8
    v_output_every: int = 10

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.x_min, self.x_max, self.n_cells)

    @property
    def ladder(self) -> tuple[float, ...]:
        """Ladder in absolute units; ``dx`` entries follow the current grid."""
        dx = self.grid.dx
        return tuple(_eps_value(e, dx) for e in self.epsilon_ladder)

    @property
    def noise_padding(self) -> float:
        return 6.0 * float(np.sqrt(self.t_end))

    def with_overrides(self, **kw) -> "ScenarioSpec":
        spec = dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})
        errors = validate(spec)
        if errors:
            raise ScenarioError(errors, spec.name)
        return spec

    def to_text(self) -> str:
        """Canonical scenario file text (round-trips through :func:`parse_scenario`)."""
        ladder = ", ".join(self.epsilon_ladder)
        lines = [
            f"scenario.name = {self.name}",
            f"scenario.description = {self.description}",
            f"model.flux = {self.flux}",
            f"initial.v0 = {self.v0}",
            f"initial.u0 = {self.u0}",
            f"grid.x_min = {self.x_min!r}",
            f"grid.x_max = {self.x_max!r}",
            f"grid.n_cells = {self.n_cells}",
            f"time.t_end = {self.t_end!r}",
            f"time.cfl = {self.cfl!r}",
            f"noise.epsilon_ladder = {ladder}",
            f"noise.n_paths = {self.n_paths}",
            f"noise.base_seed = {self.base_seed}",
            f"noise.sde_refine = {self.sde_refine}",
            f"output.diagnostics = {', '.join(self.outputs)}",
            f"output.v_every = {self.v_output_every}",
            f"tolerance.mass = {self.mass_tol!r}",
            f"tolerance.cross = {self.cross_tol!r}",
            f"tolerance.quadrature_c = {self.quadrature_c!r}",
            f"tolerance.ci_multiplier = {self.ci_multiplier!r}",
            f"tolerance.moment_ratio_max = {self.moment_ratio_max!r}",
            f"tolerance.riemann = {self.riemann_tol!r}",
            f"tolerance.oracle = {self.oracle_tol!r}",
            f"tolerance.fv_refine = {self.fv_refine}",
        ]
        if self.deterministic_growth_min is not None:
            lines.append(f"tolerance.deterministic_growth_min = {self.deterministic_growth_min!r}")
        if self.commutator_slope_min is not None:
            lines.append(f"tolerance.commutator_slope_min = {self.commutator_slope_min!r}")
        return "\n".join(lines) + "\n"


_DX_ENTRY = re.compile(r"([0-9.eE+-]+)\s*\*?\s*dx")


def _eps_value(entry: str, dx: float) -> float:
    m = _DX_ENTRY.fullmatch(entry)
    return float(m.group(1)) * dx if m else float(entry)


def _parse_ladder(text: str) -> tuple[str, ...]:
    items = tuple(re.sub(r"\s+", "", s) for s in text.split(",") if s.strip())
    if not items:
        raise ValueError("empty epsilon ladder")
    for item in items:
        try:
            _eps_value(item, 1.0)
        except ValueError:
            raise ValueError(f"bad epsilon entry '{item}'") from None
    return items


# key -> (field name, converter)
_KEYS = {
    "scenario.name": ("name", str),
    "scenario.description": ("description", str),
    "model.flux": ("flux", str),
    "initial.v0": ("v0", InitialData.parse),
    "initial.u0": ("u0", InitialData.parse),
    "grid.x_min": ("x_min", float),
    "grid.x_max": ("x_max", float),
    "grid.n_cells": ("n_cells", int),
    "time.t_end": ("t_end", float),
    "time.cfl": ("cfl", float),
    "noise.epsilon_ladder": ("epsilon_ladder", _parse_ladder),
    "noise.n_paths": ("n_paths", int),
    "noise.base_seed": ("base_seed", int),
    "noise.sde_refine": ("sde_refine", int),
    "output.diagnostics": ("outputs", lambda s: tuple(x.strip() for x in s.split(",") if x.strip())),
    "output.v_every": ("v_output_every", int),
    "tolerance.mass": ("mass_tol", float),
    "tolerance.cross": ("cross_tol", float),
    "tolerance.quadrature_c": ("quadrature_c", float),
    "tolerance.ci_multiplier": ("ci_multiplier", float),
    "tolerance.moment_ratio_max": ("moment_ratio_max", float),
    "tolerance.riemann": ("riemann_tol", float),
    "tolerance.oracle": ("oracle_tol", float),
    "tolerance.deterministic_growth_min": ("deterministic_growth_min", float),
    "tolerance.commutator_slope_min": ("commutator_slope_min", float),
    "tolerance.fv_refine": ("fv_refine", int),
}
_REQUIRED = ("scenario.name", "initial.v0", "initial.u0")


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioSpec:
    """Parse and validate scenario text, collecting every error before raising."""
    errors: list[str] = []
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'section.key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            errors.append(f"line {lineno}: unknown key '{key}'")
            continue
        if key in seen:
            errors.append(f"line {lineno}: duplicate key '{key}' (first on line {seen[key]})")
            continue
        seen[key] = lineno
        name, conv = _KEYS[key]
        try:
            values[name] = conv(value)
        except ValueError as exc:
            errors.append(f"line {lineno}: {key}: {exc}")
    for key in _REQUIRED:
        if key not in seen:
            errors.append(f"missing required field '{key}'")
    if errors:
        raise ScenarioError(errors, source)

    spec = ScenarioSpec(**values)
    errors = validate(spec, seen)
    if errors:
        raise ScenarioError(errors, source)
    return spec


def validate(spec: ScenarioSpec, lines: dict[str, int] | None = None) -> list[str]:
    """Every violated invariant of ``spec``, as messages."""
    lines = lines or {}

    def at(key):
        return f"line {lines[key]}: " if key in lines else ""

    errors = []
    try:
        grid = spec.grid
    except ValueError as exc:
        errors.append(f"{at('grid.n_cells')}grid: {exc}")
        grid = None
    if not spec.name or not re.fullmatch(r"[A-Za-z0-9_.-]+", spec.name):
        errors.append(f"{at('scenario.name')}name must be a nonempty identifier")
    try:
        flux_from_label(spec.flux)
    except ValueError:
        known = ", ".join(sorted(FLUXES))
        errors.append(f"{at('model.flux')}unknown flux '{spec.flux}' (known: {known}, linear(a))")
    if not spec.t_end > 0:
        errors.append(f"{at('time.t_end')}t_end must be positive")
    if not 0 < spec.cfl <= 0.9:
        errors.append(f"{at('time.cfl')}cfl must lie in (0, 0.9]")
    if spec.n_paths < 1:
        errors.append(f"{at('noise.n_paths')}n_paths must be positive")
    if spec.base_seed < 0 or spec.base_seed >= 2 ** 64:
        errors.append(f"{at('noise.base_seed')}base_seed must be a 64-bit unsigned integer")
    unknown = [d for d in spec.outputs if d not in DIAGNOSTICS]
    if unknown:
        errors.append(f"{at('output.diagnostics')}unknown diagnostics: {', '.join(unknown)}")
    for name, value in (("mass", spec.mass_tol), ("cross", spec.cross_tol),
                        ("quadrature_c", spec.quadrature_c),
                        ("ci_multiplier", spec.ci_multiplier),
                        ("moment_ratio_max", spec.moment_ratio_max),
                        ("riemann", spec.riemann_tol), ("oracle", spec.oracle_tol)):
        if not value > 0:
            errors.append(f"{at('tolerance.' + name)}tolerance.{name} must be positive")
    if spec.sde_refine < 1:
        errors.append(f"{at('noise.sde_refine')}sde_refine must be >= 1")
    if spec.fv_refine < 1:
        errors.append(f"{at('tolerance.fv_refine')}fv_refine must be >= 1")
    if spec.v_output_every < 1:
        errors.append(f"{at('output.v_every')}v_every must be >= 1")

    if grid is not None:
        ladder = np.asarray(spec.ladder, dtype=np.float64)
        if ladder.size == 0:
            errors.append(f"{at('noise.epsilon_ladder')}empty epsilon ladder")
        elif not np.all(np.isfinite(ladder)):
            errors.append(f"{at('noise.epsilon_ladder')}non-finite epsilon")
        else:
            if np.any(ladder < grid.dx * (1 - 1e-9)):
                errors.append(f"{at('noise.epsilon_ladder')}epsilon below grid resolution "
                              f"(dx = {grid.dx:g})")
            if np.any(np.diff(ladder) >= 0):
                errors.append(f"{at('noise.epsilon_ladder')}epsilon ladder must be "
                              "strictly decreasing")
        errors += _support_errors(spec, grid, at)
    return errors


def _support_errors(spec: ScenarioSpec, grid: Grid1D, at) -> list[str]:
    errors = []
    sup_u = spec.u0.support()
    if sup_u is None:
        errors.append(f"{at('initial.u0')}u0 must be integrable: use bump(...) or constant(0)")
    elif sup_u:
        lo, hi = sup_u
        if not (grid.x_min < lo and hi < grid.x_max):
            errors.append(f"{at('initial.u0')}u0 support [{lo:g}, {hi:g}] is not strictly "
                          f"inside [{grid.x_min:g}, {grid.x_max:g}]")
    sup_v = spec.v0.support()
    if sup_v and not (grid.x_min < sup_v[0] and sup_v[1] < grid.x_max):
        errors.append(f"{at('initial.v0')}v0 support [{sup_v[0]:g}, {sup_v[1]:g}] is not "
                      "strictly inside the domain")
    if spec.v0.kind == "riemann" and len(spec.v0.params) > 2:
        x0 = spec.v0.params[2]
        if not grid.x_min < x0 < grid.x_max:
            errors.append(f"{at('initial.v0')}riemann jump outside the domain")
    return errors

# }}}


# {{{ catalog

PRESETS = (
    "cosmo_delta_shock",
    "burgers_shock",
    "burgers_rarefaction",
    "constant_drift_oracle",
    "zero_drift_translation",
    "commutator_decay",
)


def _preset_text(name: str) -> str:
    return resources.files("stochhyp.presets").joinpath(name + SUFFIX).read_text()


def load_scenario(path) -> ScenarioSpec:
    """Load a scenario file, or a preset when ``path`` names one."""
    if str(path) in PRESETS and not Path(path).exists():
        return parse_scenario(_preset_text(str(path)), str(path))
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_scenario(path.read_text(), str(path))


def user_scenario_dir() -> Path:
    return Path(os.environ.get(SCENARIO_DIR_ENV, "scenarios"))


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    source: str


def list_scenarios(user_dir=None) -> list[CatalogEntry]:
    """Presets followed by valid ``*.cfg`` files in ``user_dir``.

    Unreadable or invalid user files are skipped with a warning.
    """
    entries = []
    for name in PRESETS:
        spec = parse_scenario(_preset_text(name), name)
        entries.append(CatalogEntry(spec.name, spec.description, "preset"))
    directory = Path(user_dir) if user_dir is not None else user_scenario_dir()
    if directory.is_dir():
        for path in sorted(directory.glob("*" + SUFFIX)):
            try:
                spec = parse_scenario(path.read_text(), str(path))
            except (ScenarioError, OSError, UnicodeDecodeError) as exc:
                warnings.warn(f"skipping {path}: {exc}", stacklevel=2)
                continue
            entries.append(CatalogEntry(spec.name, spec.description, str(path)))
    return entries

# }}}
