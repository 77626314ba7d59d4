"""Run configuration: sectioned ``key = value`` files plus command-line overrides.

Grammar (read with :mod:`configparser`)::

    # comment
    [section]
    key = value

Known sections and keys are listed in ``SCHEMA``. Every key may also be
given without its section on the command line (``--precond dd-ilu0``) or
qualified (``--solver.precond dd-ilu0``). Lists are comma separated.
Unknown keys and values that fail type conversion raise
:class:`ConfigError` carrying the offending line number.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field
import re

from .amg import SMOOTHER_KINDS
from .driver.linear import SOLVERS

PROBLEM_NAMES = ("mms", "island", "hmkh", "cavity", "generic")


class ConfigError(ValueError):
    def __init__(self, msg, line=None, source="<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + msg)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "none") else float(s)


def _opt_int(s):
    return None if str(s).strip().lower() in ("", "none") else int(s)


def _ints(s):
    return [int(v) for v in str(s).split(",") if v.strip()]


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def _choice(options):
    def conv(s):
        s = str(s).strip()
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s
    return conv


# section -> key -> converter
SCHEMA = {
    "run": {
        "problem": _choice(PROBLEM_NAMES),
        "seed": int,
        "output_dir": str,
    },
    "mesh": {
        "nx": int, "ny": int, "grading": float, "p": int,
        "meshes": _ints, "degrees": _ints,
    },
    "solver": {
        "precond": _choice(SOLVERS),
        "tol": float,
        "tol_mode": _choice(("relative", "absolute")),
        "maxit": _opt_int,
        "outer": _choice(("auto", "gmres", "fgmres")),
        "smoother": _choice(SMOOTHER_KINDS),
        "smoother_steps": int,
        "pre_steps": int,
        "post_steps": int,
        "coarse_threshold": int,
        "dd_steps": int,
    },
    "picard": {"eps_a": float, "eps_r": float, "max_picard": int},
    "time": {"dt": float, "t_end": _opt_float, "steps": _opt_int, "adaptive": _bool, "steady": _bool},
    "physics": {
        "S": _opt_float, "Re": _opt_float, "Rm": _opt_float, "kappa": _opt_float,
        "eps_island": float, "sigma": float,
    },
    "output": {"vtk_every": int, "csv": _bool, "timings": _bool},
    "robustness": {"lundquist": _floats},
    "compare": {"preconds": lambda s: [_choice(SOLVERS)(v) for v in str(s).split(",") if v.strip()]},
    "generic": {"matrix": str, "rhs": str, "n_u": _opt_int, "dofs_per_node": int},
}


@dataclass
class RunConfig:
    problem: str = "mms"
    seed: int = 0
    output_dir: str = "mhdtrace-out"
    # mesh
    nx: int = 8
    ny: int = 8
    grading: float = 0.0
    p: int = 2
    meshes: list = field(default_factory=lambda: [8, 16, 32])
    degrees: list = field(default_factory=lambda: [1, 2])
    # linear solver
    precond: str = "bfbt-amg-gmres"
    tol: float = 1e-6
    tol_mode: str = "relative"
    maxit: int | None = None
    outer: str = "auto"
    smoother: str | None = None
    smoother_steps: int = 3
    pre_steps: int = 3
    post_steps: int = 3
    coarse_threshold: int = 64
    dd_steps: int = 3
    # nonlinear and time
    eps_a: float = 1e-6
    eps_r: float = 1e-4
    max_picard: int = 20
    dt: float = 0.05
    t_end: float | None = None
    steps: int | None = 6
    adaptive: bool = True
    steady: bool = False
    # physics
    S: float | None = None
    Re: float | None = None
    Rm: float | None = None
    kappa: float | None = None
    eps_island: float = 0.2
    sigma: float = 1e-3
    # output
    vtk_every: int = 0
    csv: bool = True
    timings: bool = True
    lundquist: list = field(default_factory=lambda: [1e3, 1e4, 1e5, 1e6])
    preconds: list = field(default_factory=lambda: ["dd-ilu0", "bfbt-amg-ilu0", "bfbt-amg-gmres"])
    matrix: str = ""
    rhs: str = ""
    n_u: int | None = None
    dofs_per_node: int = 1
    # provenance: keys set explicitly (file or command line)
    explicit: set = field(default_factory=set, repr=False)

    @property
    def flexible(self) -> bool:
        if self.outer == "auto":
            return self.precond == "bfbt-amg-gmres"
        return self.outer == "fgmres"

    @property
    def tol_is_relative(self) -> bool:
        return self.tol_mode == "relative"

    def validate(self):
        for name in ("nx", "ny", "p", "smoother_steps", "pre_steps", "post_steps", "coarse_threshold",
                     "max_picard", "dd_steps", "dofs_per_node"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("tol", "dt", "eps_r", "eps_island"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.eps_a < 0 or self.sigma < 0 or self.grading < 0 or self.vtk_every < 0:
            raise ConfigError("eps_a, sigma, grading and vtk_every must be non-negative")
        for name in ("S", "Re", "Rm", "kappa", "t_end"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.maxit is not None and self.maxit < 1:
            raise ConfigError("maxit must be positive")
        if any(m < 1 for m in self.meshes) or any(d < 1 for d in self.degrees):
            raise ConfigError("meshes and degrees must be positive")
        if any(s <= 0 for s in self.lundquist):
            raise ConfigError("Lundquist numbers must be positive")
        if self.problem == "generic":
            if not self.matrix:
                raise ConfigError("generic problem needs matrix = <file>")
            for path in (self.matrix, self.rhs):
                if path and not os.path.exists(path):
                    raise ConfigError(f"file not found: {path}")
        return self

    def as_dict(self):
        d = asdict(self)
        d.pop("explicit")
        return d


_KEY_SECTION = {}
for _sec, _keys in SCHEMA.items():
    for _k in _keys:
        _KEY_SECTION.setdefault(_k, _sec)


def _line_numbers(text):
    """Map (section, key) -> line number by a light scan of the file."""
    out = {}
    sec = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), i)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m:
            out[(sec, m.group(1).strip())] = i
    return out


def _apply(cfg: RunConfig, section, key, value, line, source):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", line, source)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
    try:
        val = SCHEMA[section][key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", line, source) from None
    setattr(cfg, key, val)
    cfg.explicit.add(key)


def parse_text(text, cfg: RunConfig | None = None, source="<config>") -> RunConfig:
    cfg = cfg or RunConfig()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (S vs s)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed config: {exc}", line, source) from None
    lines = _line_numbers(text)
    for sec in cp.sections():
        for key, value in cp.items(sec):
            _apply(cfg, sec, key, value, lines.get((sec, key)), source)
    return cfg


def parse_overrides(pairs, cfg: RunConfig) -> RunConfig:
    """``pairs`` is a list like ``["--precond", "dd-ilu0", "--mesh.nx", "16"]``."""
    pairs = list(pairs)
    i = 0
    while i < len(pairs):
        tok = pairs[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected --key, got {tok!r}", source="<command line>")
        name = tok[2:]
        if "=" in name:
            name, value = name.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(pairs):
                raise ConfigError(f"missing value for {tok}", source="<command line>")
            value = pairs[i + 1]
            i += 2
        if "." in name:
            section, key = name.split(".", 1)
        else:
            key = name
            section = _KEY_SECTION.get(key)
            if section is None:
                raise ConfigError(f"unknown key {key!r}", source="<command line>")
        _apply(cfg, section, key, value, None, "<command line>")
    return cfg


def resolve_defaults(cfg: RunConfig) -> RunConfig:
    """Problem-dependent defaults that only apply when the user did not set the key."""
    if cfg.problem == "hmkh":
        if "tol" not in cfg.explicit:
            cfg.tol = 1e-9
        if "tol_mode" not in cfg.explicit:
            cfg.tol_mode = "absolute"
    if cfg.smoother is None:
        cfg.smoother = "ilu0" if cfg.precond == "bfbt-amg-ilu0" else "gmres-ilu0"
    return cfg


def parse_config(path=None, overrides=(), text=None, problem=None) -> RunConfig:
    """Fully resolved :class:`RunConfig` from an optional file, text and overrides."""
    cfg = RunConfig()
    if problem is not None:
        cfg.problem = _choice(PROBLEM_NAMES)(problem)
    if path is not None:
        with open(path) as fh:
            parse_text(fh.read(), cfg, source=str(path))
    if text is not None:
        parse_text(text, cfg)
    parse_overrides(overrides, cfg)
    resolve_defaults(cfg)
    return cfg.validate()


def config_keys():
    return [(s, k) for s, ks in SCHEMA.items() for k in ks]


__all__ = ["RunConfig", "ConfigError", "SCHEMA", "parse_config", "parse_text", "parse_overrides",
           "resolve_defaults", "config_keys", "PROBLEM_NAMES"]
