"""Run configuration: an INI schema with one section per module.

Floats are written with ``repr`` so a load/dump round trip is lossless.
Lists are comma separated; an empty value stands for "not set".

Example::

    [run]
    experiments = filters, limit
    out = results
    version = 1

    [lattice]
    d = 1
    L = 1.0
    eps0 = 1.0
    N = 2

    [model]
    m = 1.0
    mu =

    [rg]
    K = 2
    M = 6
    tol = 1e-08
    cutoff_level =
    allow_divergent = false
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import types
import typing
from dataclasses import dataclass

FORMAT_VERSION = "1"

# site budgets per dimension for dense or large computations
MAX_SITES = {1: 4096, 2: 64**2, 3: 16**3}

EXPERIMENTS = (
    "filters",
    "fig1-weights",
    "groundstate",
    "rgflow",
    "triangle",
    "limit",
    "lightcone",
    "dyn-error",
    "corr-conv",
    "mera-check",
)

# experiments whose momentum block needs the limit state's Pi sum
_PI_LIMIT = ("limit", "rgflow")

# field name -> INI section
_SECTIONS = {
    "experiments": "run", "out": "run", "version": "run",
    "d": "lattice", "L": "lattice", "eps0": "lattice", "N": "lattice",
    "m": "model", "mu": "model",
    "K": "rg", "M": "rg", "tol": "rg", "cutoff_level": "rg", "allow_divergent": "rg",
    "t_grid": "dynamics", "deltas": "dynamics", "scales": "dynamics", "level_offset": "dynamics",
    "dyn_K": "dynamics", "dyn_N": "dynamics", "dyn_L": "dynamics",
    "corr_K": "dynamics", "corr_N": "dynamics", "corr_L": "dynamics",
    "lightcone_N": "lightcone", "lightcone_L": "lightcone", "v0": "lightcone", "t_max": "lightcone",
    "mera_cutoff": "mera",
}


@dataclass(frozen=True)
class RunConfig:
    """All parameters of a run.

    ``scales`` is the number of refinements ``N' = N+1..N+scales`` swept by
    ``dyn-error`` and ``corr-conv``; ``level_offset`` places the continuum
    cutoff at ``Gamma_{N' + level_offset}``.  The ``dyn_*`` and ``corr_*``
    fields select filter, scale and torus of those two sweeps (coarse
    spacing ``eps0``); ``lightcone_*`` the lattice of the light-cone run.
    """

    experiments: tuple = ()
    out: str = "out"
    version: str = FORMAT_VERSION
    d: int = 1
    L: float = 1.0
    eps0: float = 1.0
    N: int = 2
    m: float | None = 1.0
    mu: float | None = None
    K: int = 2
    M: int = 6
    tol: float = 1e-8
    cutoff_level: int | None = None
    allow_divergent: bool = False
    t_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    deltas: tuple = (0.0, 0.5, 1.0)
    scales: int = 6
    level_offset: int = 6
    dyn_K: int = 10
    dyn_N: int = 0
    dyn_L: float = 1.0
    corr_K: int = 6
    corr_N: int = 0
    corr_L: float = 2.0
    lightcone_N: int = 6
    lightcone_L: float = 8.0
    v0: float = 1.2
    t_max: float = 1.0
    mera_cutoff: int = 8

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _field_types():
    hints = typing.get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(RunConfig)}


def _format(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(name, text, kind):
    text = text.strip()
    optional = typing.get_origin(kind) in (typing.Union, types.UnionType)
    base = kind
    if optional:
        if text == "":
            return None
        base = next(a for a in typing.get_args(kind) if a is not type(None))
    if base is bool:
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError(f"{name}: expected true or false, got {text!r}")
        return low == "true"
    if base is int:
        return int(text)
    if base is float:
        return float(text)
    if base is tuple:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if name == "experiments":
            return tuple(items)
        return tuple(float(t) for t in items)
    return text


def dumps_config(cfg):
    """INI text for ``cfg``."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for f in dataclasses.fields(RunConfig):
        sec = _SECTIONS[f.name]
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, f.name, _format(getattr(cfg, f.name)))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads_config(text):
    """Parse INI text; unknown sections or keys are an error.

    Raises
    ------
    ValueError
        Unknown keys or unparsable values.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(text)
    kinds = _field_types()
    values = {}
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            if key not in kinds or _SECTIONS[key] != sec:
                raise ValueError(f"unknown key {key!r} in section [{sec}]")
            values[key] = _parse(key, raw, kinds[key])
    return RunConfig(**values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read())


def dump_config(cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_config(cfg))


def validate_config(cfg):
    """Precondition violations of ``cfg``; empty iff a run may start."""
    out = []
    unknown = [e for e in cfg.experiments if e not in EXPERIMENTS]
    if unknown:
        out.append(f"unknown experiments {unknown}; choose from {list(EXPERIMENTS)}")
    if cfg.version != FORMAT_VERSION:
        out.append(f"format version {cfg.version!r} is not supported (expected {FORMAT_VERSION})")
    if cfg.d not in (1, 2, 3):
        out.append(f"dimension d={cfg.d} must be 1, 2 or 3")
    if not (cfg.L > 0 and cfg.eps0 > 0):
        out.append("L and eps0 must be positive")
    else:
        ratio = cfg.L / cfg.eps0
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 1:
            out.append(f"L/eps0 = {ratio} must be a positive integer")
    if cfg.N < 0 or cfg.M < 0:
        out.append("scales N and M must be non-negative")
    if not 1 <= cfg.K <= 10:
        out.append(f"filter order K={cfg.K} outside the supported family 1..10")
    for name in ("corr_K", "dyn_K"):
        if not 1 <= getattr(cfg, name) <= 10:
            out.append(f"{name}={getattr(cfg, name)} outside the supported family 1..10")
    for name in ("corr", "dyn"):
        L, N = getattr(cfg, f"{name}_L"), getattr(cfg, f"{name}_N")
        if not (cfg.eps0 > 0 and L > 0) or abs(L / cfg.eps0 - round(L / cfg.eps0)) > 1e-9 or N < 0:
            out.append(f"{name}_L/eps0 must be a positive integer and {name}_N non-negative")
    if (cfg.m is None) == (cfg.mu is None):
        out.append("give exactly one of m (renormalisation trajectory) or mu (fixed mass parameter)")
    if cfg.m is not None and not cfg.m > 0:
        out.append(f"continuum mass m={cfg.m} must be positive")
    if cfg.mu is not None and cfg.d in (1, 2, 3) and cfg.mu**2 < 2 * cfg.d:
        out.append(f"stability: mu^2 = {cfg.mu**2} is below 2d = {2 * cfg.d}")
    needs_m = {"limit", "dyn-error", "corr-conv", "mera-check", "lightcone"}
    if cfg.m is None and needs_m & set(cfg.experiments):
        out.append(f"experiments {sorted(needs_m & set(cfg.experiments))} need the trajectory mass m")
    if cfg.K == 1 and not cfg.allow_divergent and set(_PI_LIMIT) & set(cfg.experiments) and cfg.m is not None:
        out.append("Sobolev: the Haar filter (K=1) has a divergent Pi limit; set allow_divergent = true")
    if "rgflow" in cfg.experiments and cfg.M < 2:
        out.append("rgflow needs M >= 2")
    if "triangle" in cfg.experiments and (cfg.N > 4 or cfg.M > 6):
        out.append("the triangle preset is limited to N <= 4 and M <= 6")
    if cfg.d in MAX_SITES and cfg.L > 0 and cfg.eps0 > 0 and cfg.N >= 0 and cfg.M >= 0:
        sites = (2 * round(cfg.L / cfg.eps0) * 2 ** (cfg.N + cfg.M)) ** cfg.d
        if sites > MAX_SITES[cfg.d] and {"rgflow", "triangle"} & set(cfg.experiments):
            out.append(f"{sites} sites at scale N+M exceed the budget {MAX_SITES[cfg.d]} for d={cfg.d}")
    if any(not (math.isfinite(t) and t >= 0) for t in cfg.t_grid):
        out.append("t_grid entries must be finite and non-negative")
    if cfg.scales < 1 or cfg.level_offset < 1:
        out.append("scales and level_offset must be positive")
    if not cfg.tol > 0:
        out.append("tol must be positive")
    if cfg.cutoff_level is not None and cfg.cutoff_level < 3:
        out.append("cutoff_level must be at least 3")
    if not (cfg.v0 > 0 and cfg.t_max > 0):
        out.append("v0 and t_max must be positive")
    # the light-cone lattice has unit coarse spacing
    lc_sites = 2 * cfg.lightcone_L * 2**cfg.lightcone_N
    if "lightcone" in cfg.experiments and lc_sites > MAX_SITES[1]:
        out.append(f"light-cone lattice with {lc_sites:g} sites exceeds {MAX_SITES[1]}")
    return out
