"""Run configuration from INI-style files and command-line overrides.

Example::

    [problem]
    dim = 2
    n = 16                      ; or: mesh = square.mesh
    boundary = dirichlet        ; or: flow (Neumann in/out by the sign of b.n)

    [coefficients]
    D = dispersion(0.0001, 21, 2.1)
    b = "(y - 0.5, 0.5 - x)"
    gamma = 0
    f = 1

    [scheme]
    edge_quad = 4
    alpha_scaling = on

    [solver]
    tol = 1e-10
    max_iter = 2000
    preconditioner = jacobi

A ``catalog = name`` entry in ``[problem]`` starts from a built-in problem;
``[coefficients]`` entries then override its fields.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from expfit.catalog import Problem, get_problem
from expfit.eafe import SchemeOptions


class ConfigError(ValueError):
    pass


_BOOL = {"on": True, "yes": True, "true": True, "1": True,
         "off": False, "no": False, "false": False, "0": False}


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _flag(value: str, key: str) -> bool:
    try:
        return _BOOL[_unquote(value).lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected on/off, got {value!r}") from None


@dataclass
class RunConfig:
    problem: Problem
    mesh_path: Optional[Path] = None
    n: Optional[int] = None
    boundary: str = "dirichlet"
    scheme: SchemeOptions = field(default_factory=SchemeOptions)
    tol: float = 1e-10
    max_iter: int = 1000
    preconditioner: str = "jacobi"
    deterministic: bool = True
    out: Optional[Path] = None
    levels: int = 4

    def validate(self) -> "RunConfig":
        if (self.mesh_path is None) == (self.n is None):
            raise ConfigError("exactly one mesh source (mesh file or structured n) is required")
        if self.mesh_path is not None and not self.mesh_path.is_file():
            raise ConfigError(f"mesh file not found: {self.mesh_path}")
        if self.n is not None and self.n < 1:
            raise ConfigError(f"n must be positive, got {self.n}")
        if self.boundary not in ("dirichlet", "flow"):
            raise ConfigError(f"boundary must be 'dirichlet' or 'flow', got {self.boundary!r}")
        if self.preconditioner not in ("jacobi", "ilu", "none"):
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        return self


def load_config(path=None, problem_name: Optional[str] = None, dim: Optional[int] = None) -> RunConfig:
    """Build a :class:`RunConfig` from an optional file and an optional catalog name."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep 'D' distinct from 'd'
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None

    sec = parser["problem"] if parser.has_section("problem") else {}
    name = problem_name or (_unquote(sec["catalog"]) if "catalog" in sec else None)
    try:
        file_dim = int(sec["dim"]) if "dim" in sec else None
        if name is not None:
            problem = get_problem(name)
            if dim is not None and dim != problem.dim:
                raise ConfigError(f"problem {name!r} is {problem.dim}D, --dim {dim} given")
        else:
            d = dim or file_dim or 2
            if d not in (2, 3):
                raise ConfigError(f"dim must be 2 or 3, got {d}")
            problem = Problem("custom", d, "user-defined problem", D=1.0, b=0.0)
        problem = replace(problem)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    except ValueError as exc:
        raise ConfigError(f"[problem] {exc}") from None

    if parser.has_section("coefficients"):
        changes = {}
        for key, value in parser["coefficients"].items():
            if key not in ("D", "b", "gamma", "f", "g", "dirichlet"):
                raise ConfigError(f"[coefficients] unknown entry {key!r}")
            changes[key] = _unquote(value)
        problem = _override(problem, changes)
    if "exact" in sec:
        problem.exact_text = _unquote(sec["exact"])
        problem.grad_text = _unquote(sec["exact_grad"]) if "exact_grad" in sec else None

    cfg = RunConfig(problem)
    try:
        if "mesh" in sec:
            cfg.mesh_path = Path(_unquote(sec["mesh"]))
            if path is not None and not cfg.mesh_path.is_absolute():
                cfg.mesh_path = Path(path).parent / cfg.mesh_path
        if "n" in sec:
            cfg.n = int(sec["n"])
        if "boundary" in sec:
            cfg.boundary = _unquote(sec["boundary"])
        if parser.has_section("scheme"):
            s = parser["scheme"]
            for key in ("edge_quad", "mass_quad", "omega_quad", "face_quad"):
                if key in s:
                    setattr(cfg.scheme, key, int(s[key]))
            if "alpha_scaling" in s:
                problem.alpha_scaling = _flag(s["alpha_scaling"], "alpha_scaling")
            if "constant_beta" in s:
                v = _unquote(s["constant_beta"]).lower()
                cfg.scheme.constant_beta = None if v == "auto" else _flag(v, "constant_beta")
        if parser.has_section("solver"):
            s = parser["solver"]
            if "tol" in s:
                cfg.tol = float(s["tol"])
            if "max_iter" in s:
                cfg.max_iter = int(s["max_iter"])
            if "preconditioner" in s:
                cfg.preconditioner = _unquote(s["preconditioner"])
            if "deterministic" in s:
                cfg.deterministic = _flag(s["deterministic"], "deterministic")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


def _override(problem: Problem, changes: dict) -> Problem:
    new = replace(problem, **changes)
    if problem.name != "custom":
        new.name = f"{problem.name}+overrides"
    return new
