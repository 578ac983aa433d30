"""Strict ``key = value`` experiment configuration."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .hilbert import GridSpec, L2Operator, builtin_operator, make_grid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "COMMANDS",
    "parse_config_text",
    "load_config",
    "load_kernel_csv",
    "NAMED_KERNELS",
    "NAMED_MULTIPLIERS",
    "build_operator",
    "operator_sequence",
]

COMMANDS = ("simulate", "verify", "lt-moments", "lt-converge", "selfx-1d", "selfx-planar", "plotdata")

PRESETS: dict[str, dict[str, Any]] = {
    "desk": {"grid": 4096, "reps": 2000, "eps": 1e-3},
}

NAMED_KERNELS = {
    "one": lambda t, s: np.ones(np.broadcast(t, s).shape),
    "exp": lambda t, s: np.exp(-(t - s)),
    "cos": lambda t, s: np.cos(np.pi * (t - s)),
}

NAMED_MULTIPLIERS = {
    "linear": lambda t: 1.0 + t,
    "sine": lambda t: 1.0 + 0.5 * np.sin(2.0 * np.pi * t),
}


class ConfigError(ValueError):
    """Malformed or incomplete configuration (exit code 2)."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    preset: str | None = None
    seed: int | None = None
    grid: int | None = None
    moment_grid: int | None = None
    eps: float | None = None
    reps: int | None = None
    bins: int | None = None
    refinement: int = 2
    operator: str = "identity"
    scale: float = 1.0
    kernel: str = "exp"
    kernel_file: str | None = None
    strength: float = 1.0
    multiplier: str = "sine"
    family: str = "perturbation"
    ns: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64)
    a: tuple[float, ...] = ()
    alpha: tuple[float, ...] = ()
    p: int = 1
    dim: int = 1
    u: float = 0.0
    t: float = 1.0
    trials: int | None = None
    input: str | None = None
    output: str | None = None
    threads: int = 1

    # keys that change bytes of the result; threads and output do not
    _NOT_HASHED = ("threads", "output")

    _PARSERS = {
        "seed": int, "grid": int, "moment_grid": int, "eps": float, "reps": int, "bins": int,
        "refinement": int, "scale": float, "strength": float, "ns": _ints, "a": _floats,
        "alpha": _floats, "p": int, "dim": int, "u": float, "t": float, "trials": int, "threads": int,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: dict[str, str]) -> "ExperimentConfig":
        """Build from raw strings, rejecting unknown keys and unparsable values."""
        known = set(cls.keys())
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        if "command" not in data:
            raise ConfigError("missing key: command")
        kw: dict[str, Any] = {}
        for k, v in data.items():
            parse = cls._PARSERS.get(k, str)
            try:
                kw[k] = parse(v.strip()) if isinstance(v, str) else v
            except ValueError as exc:
                raise ConfigError(f"bad value for {k!r}: {v!r}") from exc
        return cls(**kw)

    def with_preset(self) -> "ExperimentConfig":
        """Fill unset physics parameters from the named preset."""
        if self.preset is None:
            return self
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; known: {', '.join(PRESETS)}")
        fill = {k: v for k, v in PRESETS[self.preset].items() if getattr(self, k) is None}
        return replace(self, **fill)

    def to_text(self, hashed_only: bool = False) -> str:
        lines = []
        for k in self.keys():
            if hashed_only and k in self._NOT_HASHED:
                continue
            v = getattr(self, k)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_mapping(parse_config_text(text))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_text(hashed_only=True).encode()).hexdigest()

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"{self.command} needs explicit {', '.join(missing)} (or a preset)")

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for name in ("eps",):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive")
        for name in ("grid", "moment_grid"):
            v = getattr(self, name)
            if v is not None and v < 2:
                raise ConfigError(f"{name} must be >= 2")
        if self.reps is not None and self.reps < 0:
            raise ConfigError("reps must be >= 0")
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        return self


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; duplicate keys are errors."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k or not v:
            raise ConfigError(f"line {lineno}: empty key or value")
        if k in out:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        out[k] = v
    return out


def load_config(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def load_kernel_csv(path: str | Path, grid: GridSpec) -> np.ndarray:
    """Kernel table from ``i,j,value`` rows (0-based cell indices, missing entries zero)."""
    n = grid.n_cells
    table = np.zeros((n, n))
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#") or row[0].strip() == "i":
                    continue
                i, j, v = int(row[0]), int(row[1]), float(row[2])
                if not (0 <= i < n and 0 <= j < n):
                    raise ConfigError(f"kernel entry ({i},{j}) outside a {n}-cell grid")
                table[i, j] = v
    except OSError as exc:
        raise ConfigError(f"cannot read kernel file {path}: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed kernel file {path}: {exc}") from exc
    return table


def _kernel(cfg: ExperimentConfig, grid: GridSpec):
    if cfg.kernel_file:
        return load_kernel_csv(cfg.kernel_file, grid)
    if cfg.kernel not in NAMED_KERNELS:
        raise ConfigError(f"unknown kernel {cfg.kernel!r}; known: {', '.join(NAMED_KERNELS)}")
    return NAMED_KERNELS[cfg.kernel]


def build_operator(cfg: ExperimentConfig, grid: GridSpec | None = None) -> L2Operator:
    grid = grid or make_grid(cfg.grid)
    kind = cfg.operator
    if kind == "identity":
        return builtin_operator("identity", grid)
    if kind == "scaled":
        return cfg.scale * builtin_operator("identity", grid)
    if kind == "multiplication":
        if cfg.multiplier not in NAMED_MULTIPLIERS:
            raise ConfigError(f"unknown multiplier {cfg.multiplier!r}")
        mid = (np.arange(grid.n_cells) + 0.5) * grid.h
        return builtin_operator("multiplication", grid, values=NAMED_MULTIPLIERS[cfg.multiplier](mid))
    if kind == "volterra":
        return builtin_operator("volterra", grid, kernel=_kernel(cfg, grid))
    if kind == "perturbation":
        return builtin_operator("perturbation", grid, eps=cfg.strength, kernel=_kernel(cfg, grid))
    if kind == "complement_projection":
        return builtin_operator("complement_projection", grid)
    raise ConfigError(f"unknown operator {kind!r}")


def operator_sequence(cfg: ExperimentConfig, grid: GridSpec):
    """``n -> A_n`` converging to the identity: ``I + strength K / n`` or ``(1 + 1/n) I``."""
    identity = builtin_operator("identity", grid)
    if cfg.family == "perturbation":
        K = builtin_operator("volterra", grid, kernel=_kernel(cfg, grid))
        return lambda n: builtin_operator("perturbation", grid, eps=cfg.strength / n, kernel=K)
    if cfg.family == "scaled":
        return lambda n: (1.0 + 1.0 / n) * identity
    raise ConfigError(f"unknown operator family {cfg.family!r}")
