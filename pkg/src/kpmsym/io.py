"""Run configuration, manifests and CSV snapshots.

Config and manifest files share one grammar: ``key=value`` per line,
``#`` starts a comment, blank lines are ignored.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import GridSpec

SCENARIOS = ("line_soliton", "two_soliton", "lump", "manufactured", "zero")
SCHEMES = ("reduced45", "preissman")


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.key, self.line = key, line


@dataclass(frozen=True)
class RunConfig:
    """Defaults reproduce the first line-soliton experiment."""

    scenario: str = "line_soliton"
    scheme: str = "reduced45"
    dx: float = 0.2
    dy: float = 0.1
    dt: float = 0.01
    t_end: float = 10.0
    domain: tuple = (0.0, 40.0, 0.0, 2.0)
    sigma: float = -3.0
    time_factor: str = "auto"
    snapshot_every: int = 100
    tol: float = 1e-10
    max_iters: int = 50
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}", "scenario")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}", "scheme")
        for key in ("dx", "dy", "dt", "t_end", "tol"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be a positive number", key)
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("domain must satisfy x0 < x1 and y0 < y1", "domain")
        if self.sigma == 0 or not math.isfinite(self.sigma):
            raise ConfigError("sigma must be finite and nonzero", "sigma")
        if self.time_factor not in ("auto", "1", "2"):
            raise ConfigError("time_factor must be auto, 1 or 2", "time_factor")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be at least 1", "snapshot_every")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1", "max_iters")
        try:
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc), "dx") from exc

    def grid(self) -> GridSpec:
        x0, x1, y0, y1 = self.domain
        g = GridSpec.from_domain((x0, x1), (y0, y1), self.t_end, self.dx, self.dy, self.dt)
        if g.nx < 5 or g.ny < 3 or g.nt < 3:
            raise ValueError("grid needs nx >= 5, ny >= 3 and at least 2 time steps")
        return g

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={format_value(v)}")
        return "\n".join(lines) + "\n"


_CONVERTERS = {"dx": float, "dy": float, "dt": float, "t_end": float, "sigma": float,
               "tol": float, "snapshot_every": int, "max_iters": int, "seed": int}


def _convert(key, raw, line):
    try:
        if key == "domain":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 4:
                raise ValueError("expected four numbers x0,x1,y0,y1")
            return tuple(parts)
        if key in _CONVERTERS:
            return _CONVERTERS[key](raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}", key, line) from None


def parse_config(text: str) -> RunConfig:
    values = {}
    known = {f.name for f in fields(RunConfig)}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key=value", line=n)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", key, n)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", key, n)
        values[key] = _convert(key, val, n)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (tuple, list, np.ndarray)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def write_manifest(path, entries: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={format_value(v)}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and not line.startswith("#"):
                k, v = line.split("=", 1)
                out[k] = v
    return out


def snapshot_name(step: int) -> str:
    return f"u_k{step:06}.csv"


def write_snapshot(path, u_plane, grid: GridSpec):
    """``x,y,u`` rows, y-major then x, 17 significant digits (round-trips exactly)."""
    u = np.asarray(u_plane, dtype=float)
    if u.shape != (grid.ny, grid.nx):
        raise ValueError("plane does not match the grid")
    Y, X = np.meshgrid(grid.y, grid.x, indexing="ij")
    data = np.column_stack([X.ravel(), Y.ravel(), u.ravel()])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header="x,y,u", comments="")


def read_snapshot(path):
    """Returns ``(x, y, u_plane)`` from a snapshot file."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = np.unique(data[:, 0])
    y = np.unique(data[:, 1])
    return x, y, data[:, 2].reshape(len(y), len(x))


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def config_entries(cfg: RunConfig) -> dict:
    return {f"config.{k}": v for k, v in asdict(cfg).items()}
