"""Run configuration: flat ``key=value`` files with dotted section keys.

Precedence is defaults < config file < command line. The file path comes
from ``--config`` or, failing that, the CHEEGER_LAB_CONFIG environment
variable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from .bounds import GRID_TOL, SuiteConfig
from .search import SweepConfig

ENV_VAR = "CHEEGER_LAB_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    resolution_2d: float = 128
    resolution_3d: float = 64
    lambda_resolution: float = 64
    perimeter: str = "crofton"
    analytic_tol: float = 1e-9
    grid_tol_2d: float = GRID_TOL[2]
    grid_tol_3d: float = GRID_TOL[3]
    strict_margin: float = 1e-3
    dinkelbach_max_iter: int = 50
    lmin: float = 0.125
    lmax: float = 32.0
    sandwich_heights: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    witness_heights: tuple = (2.0, 4.0, 8.0, 16.0)
    p_list: tuple = (1.5, 2.0, 3.0)
    out_dir: str = "."
    seed: int = 0

    def __post_init__(self):
        for name in ("resolution_2d", "resolution_3d", "lambda_resolution"):
            if not getattr(self, name) >= 16:
                raise ConfigError(f"{name} must be >= 16")
        # 0 is allowed: it means "no slack", used to expose raw discretisation error
        for name in ("analytic_tol", "grid_tol_2d", "grid_tol_3d", "strict_margin"):
            v = getattr(self, name)
            if not 0 <= v < 0.5:
                raise ConfigError(f"{name} must lie in [0, 0.5)")
        if self.perimeter not in ("crofton", "faces"):
            raise ConfigError("perimeter must be 'crofton' or 'faces'")
        if not 0 < self.lmin < self.lmax:
            raise ConfigError("need 0 < lmin < lmax")
        if self.dinkelbach_max_iter < 1:
            raise ConfigError("iteration budget must be positive")

    def suite_config(self) -> SuiteConfig:
        return SuiteConfig(
            resolution_2d=self.resolution_2d,
            resolution_3d=min(self.resolution_3d, 32),
            lambda_p_resolution_2d=self.lambda_resolution,
            grid_tol={1: self.analytic_tol, 2: self.grid_tol_2d, 3: self.grid_tol_3d},
            analytic_tol=self.analytic_tol,
            perimeter=self.perimeter,
        )

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(
            resolution_2d=self.resolution_2d,
            resolution_3d=self.resolution_3d,
            lambda_p_resolution=self.lambda_resolution,
            perimeter=self.perimeter,
        )

    def height_grid(self, points: int = 9) -> list[float]:
        """Log-spaced heights in [lmin, lmax]."""
        a, b = math.log(self.lmin), math.log(self.lmax)
        return [round(math.exp(a + (b - a) * i / (points - 1)), 12) for i in range(points)]


# file key -> (field, parser)
def _floats(v: str) -> tuple:
    return tuple(_float(x) for x in v.split(",") if x.strip())


def _float(v: str) -> float:
    v = v.strip().lower()
    return math.inf if v in ("inf", "+inf", "infinity") else float(v)


KEYS = {
    "solver.2d.resolution": ("resolution_2d", _float),
    "solver.3d.resolution": ("resolution_3d", _float),
    "solver.lambda.resolution": ("lambda_resolution", _float),
    "solver.perimeter": ("perimeter", str.strip),
    "solver.dinkelbach.max_iter": ("dinkelbach_max_iter", int),
    "tolerance.analytic": ("analytic_tol", _float),
    "tolerance.grid.2d": ("grid_tol_2d", _float),
    "tolerance.grid.3d": ("grid_tol_3d", _float),
    "tolerance.strict_margin": ("strict_margin", _float),
    "sweep.lmin": ("lmin", _float),
    "sweep.lmax": ("lmax", _float),
    "sweep.sandwich_heights": ("sandwich_heights", _floats),
    "sweep.witness_heights": ("witness_heights", _floats),
    "sweep.p": ("p_list", _floats),
    "output.dir": ("out_dir", str.strip),
    "seed": ("seed", int),
}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into RunConfig field overrides.

    Blank lines and ``#`` comments are ignored; unknown keys are an error.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name, conv = KEYS[key]
        try:
            out[name] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return out


def load_config(path: str | None = None, overrides: dict | None = None, env=None) -> RunConfig:
    """Defaults, then the config file (explicit path or $CHEEGER_LAB_CONFIG), then ``overrides``."""
    env = os.environ if env is None else env
    path = path or env.get(ENV_VAR)
    values = {}
    if path:
        try:
            with open(path) as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    bad = set(values) - known
    if bad:
        raise ConfigError(f"unknown settings {sorted(bad)}")
    return replace(RunConfig(), **values)
