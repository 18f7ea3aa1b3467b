"""Run configuration loaded from YAML."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .core import BoundaryParams, Potential, WeightProfile, builtin_potential, make_grid
from .errors import ConfigError, DiracInvError

N_MAX_BOUNDS = (1, 256)
GRID_BOUNDS = (8, 4000)
COLLOC_BOUNDS = (8, 4000)
BUILTINS = ("zero", "trig", "bump")
TAILS = ("comparison", "none")

_PI_EXPR = re.compile(r"^\s*(?P<num>[0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*(?P<den>[0-9.eE+]+))?\s*$")


def parse_real(value, name: str) -> float:
    """A float, or a multiple of pi written like ``pi/2``, ``0.75*pi`` or ``2pi``."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI_EXPR.match(value)
        if m:
            num = m.group("num")
            den = m.group("den")
            try:
                coef = float(num) if num not in ("", "+", "-") else (-1.0 if num == "-" else 1.0)
                return coef * np.pi / (float(den) if den else 1.0)
            except ValueError:
                pass
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{name}: cannot read {value!r} as a number")


@dataclass(frozen=True)
class Tolerances:
    root_tol: float = 1e-13
    ode_steps_per_unit: float = 100.0
    glm_tol: float = 1e-10


@dataclass(frozen=True)
class PotentialSource:
    """Either a builtin name with parameters or a CSV file ``x,p,q``."""

    builtin: str | None = "zero"
    params: dict = field(default_factory=dict)
    file: str | None = None


@dataclass(frozen=True)
class RunConfig:
    a: float
    alpha: float
    h1: float
    h2: float
    potential: PotentialSource
    n_max: int = 32
    grid: int = 200
    colloc: int = 200
    tolerances: Tolerances = Tolerances()
    tail: str = "comparison"
    out: str = "results"
    threads: int = 1

    def __post_init__(self):
        validate(self)

    @property
    def weight(self) -> WeightProfile:
        return WeightProfile(self.a, self.alpha)

    @property
    def boundary(self) -> BoundaryParams:
        return BoundaryParams(self.h1, self.h2)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    def numeric_dict(self) -> dict:
        """Fields that influence numeric results (excludes ``out`` and ``threads``)."""
        d = asdict(self)
        d.pop("out")
        d.pop("threads")
        return d

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of :meth:`numeric_dict`."""
        blob = json.dumps(self.numeric_dict(), sort_keys=True, separators=(",", ":"), default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()

    def grid_nodes(self) -> np.ndarray:
        return make_grid(self.weight, self.grid)

    def colloc_nodes(self) -> np.ndarray:
        return make_grid(self.weight, self.colloc)

    def load_potential(self, base_dir: Path | None = None) -> Potential:
        """Sample the potential on the direct-problem grid."""
        g = self.grid_nodes()
        src = self.potential
        if src.file is not None:
            from .fileio import read_potential

            path = Path(src.file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                pot, _ = read_potential(path)
            except OSError as exc:
                raise ConfigError(f"potential.file: {exc}") from None
            if pot.grid[0] > 1e-12 or pot.grid[-1] < np.pi - 1e-12:
                raise ConfigError("potential.file must cover [0, pi]")
            return pot.resample(g)
        try:
            return builtin_potential(src.builtin, g, **src.params)
        except DiracInvError as exc:
            raise ConfigError(f"potential: {exc}") from None


def _check_int(v, name, bounds):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    lo, hi = bounds
    if not lo <= v <= hi:
        raise ConfigError(f"{name} = {v} outside [{lo}, {hi}]")


def validate(cfg: RunConfig) -> None:
    """Raise :class:`ConfigError` on the first violated constraint."""
    for name in ("a", "alpha", "h1", "h2"):
        v = getattr(cfg, name)
        if not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ConfigError(f"{name}: expected a finite number, got {v!r}")
    if not 0.0 < cfg.a < np.pi:
        raise ConfigError(f"weight.a = {cfg.a!r} must lie strictly inside (0, pi)")
    if cfg.alpha <= 0:
        raise ConfigError(f"weight.alpha = {cfg.alpha!r} must be positive")
    if cfg.h2 <= 0:
        raise ConfigError(f"boundary.h2 = {cfg.h2!r} must be positive")
    _check_int(cfg.n_max, "n_max", N_MAX_BOUNDS)
    _check_int(cfg.grid, "grid", GRID_BOUNDS)
    _check_int(cfg.colloc, "colloc", COLLOC_BOUNDS)
    _check_int(cfg.threads, "threads", (1, 1024))
    t = cfg.tolerances
    for name in ("root_tol", "ode_steps_per_unit", "glm_tol"):
        v = getattr(t, name)
        if not isinstance(v, (int, float)) or not np.isfinite(v) or v <= 0:
            raise ConfigError(f"tolerances.{name} must be positive, got {v!r}")
    if cfg.tail not in TAILS:
        raise ConfigError(f"tail must be one of {TAILS}, got {cfg.tail!r}")
    src = cfg.potential
    if (src.builtin is None) == (src.file is None):
        raise ConfigError("potential needs exactly one of 'builtin' or 'file'")
    if src.builtin is not None and src.builtin not in BUILTINS:
        raise ConfigError(f"potential.builtin must be one of {BUILTINS}, got {src.builtin!r}")


_TOP_KEYS = {"weight", "boundary", "potential", "n_max", "grid", "colloc", "tolerances", "tail", "out", "threads"}


def _section(d, key, allowed):
    sec = d.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected a mapping")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"{key}: unknown keys {sorted(extra)}")
    return sec


def config_from_dict(d: dict) -> RunConfig:
    """Build a :class:`RunConfig` from the parsed YAML mapping."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    extra = set(d) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    wsec = _section(d, "weight", ("a", "alpha"))
    bsec = _section(d, "boundary", ("h1", "h2"))
    psec = _section(d, "potential", ("builtin", "params", "file"))
    tsec = _section(d, "tolerances", ("root_tol", "ode_steps_per_unit", "glm_tol"))
    for sec, keys, name in ((wsec, ("a", "alpha"), "weight"), (bsec, ("h1", "h2"), "boundary")):
        for k in keys:
            if k not in sec:
                raise ConfigError(f"{name}.{k} is required")
    params = psec.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("potential.params: expected a mapping")
    pot = PotentialSource(
        builtin=psec.get("builtin", None if "file" in psec else "zero"),
        params={k: parse_real(v, f"potential.params.{k}") for k, v in params.items()},
        file=psec.get("file"),
    )
    tol = Tolerances(**{k: parse_real(v, f"tolerances.{k}") for k, v in tsec.items()})
    kw = {}
    for k in ("n_max", "grid", "colloc", "threads"):
        if k in d:
            kw[k] = d[k]
    if "tail" in d:
        kw["tail"] = d["tail"]
    if "out" in d:
        kw["out"] = str(d["out"])
    return RunConfig(
        a=parse_real(wsec["a"], "weight.a"),
        alpha=parse_real(wsec["alpha"], "weight.alpha"),
        h1=parse_real(bsec["h1"], "boundary.h1"),
        h2=parse_real(bsec["h2"], "boundary.h2"),
        potential=pot,
        tolerances=tol,
        **kw,
    )


def load_config(path) -> RunConfig:
    """Read and validate a YAML config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return config_from_dict(data or {})
