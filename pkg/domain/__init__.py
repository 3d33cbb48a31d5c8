# domain package marker + shared types
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

Array = np.ndarray


# --------------------------------------------------------------------
# Errors
# --------------------------------------------------------------------

class LevyError(Exception):
    """Base class for library errors."""


class PreconditionError(LevyError, ValueError):
    """A hypothesis required by an operation does not hold."""

    def __init__(self, message: str, flag: Optional[str] = None):
        super().__init__(message)
        self.flag = flag


class NumericalError(LevyError, RuntimeError):
    """Quadrature or refinement failed to produce a trustworthy value."""

    def __init__(self, message: str, partial: Optional[float] = None, trace: Optional[list] = None):
        super().__init__(message)
        self.partial = partial
        self.trace = trace or []


class DivergenceError(NumericalError):
    """A finite value was required but the integral diverges."""


class DivergentDerivativeError(DivergenceError):
    """A fractional derivative factor is not finite on the grid."""

    def __init__(self, message: str, factor: str, norms: Optional[dict] = None):
        super().__init__(message)
        self.factor = factor
        self.norms = norms or {}


# --------------------------------------------------------------------
# Grids and paths
# --------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"grid needs n >= 1, got {self.n}")
        if not self.dt > 0:
            raise ValueError(f"grid needs dt > 0, got {self.dt}")

    @classmethod
    def over(cls, T: float, n: int, t0: float = 0.0) -> "Grid":
        return cls(t0=float(t0), dt=(float(T) - float(t0)) / int(n), n=int(n))

    @property
    def times(self) -> Array:
        return self.t0 + self.dt * np.arange(self.n + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n


@dataclass(frozen=True, eq=False)
class GridPath:
    """A process (or grid function) sampled on a uniform grid."""
    t0: float
    dt: float
    values: Array
    label: str = ""
    seed: Optional[int] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError(f"path needs at least 2 values, got shape {vals.shape}")
        if not self.dt > 0:
            raise ValueError(f"path needs dt > 0, got {self.dt}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def on(cls, grid: Grid, values, **kw) -> "GridPath":
        return cls(t0=grid.t0, dt=grid.dt, values=values, **kw)

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def grid(self) -> Grid:
        return Grid(self.t0, self.dt, self.n)

    @property
    def times(self) -> Array:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n

    @property
    def increments(self) -> Array:
        return np.diff(self.values)

    def with_values(self, values, label: Optional[str] = None) -> "GridPath":
        return GridPath(self.t0, self.dt, values, label=self.label if label is None else label,
                        seed=self.seed, meta=dict(self.meta))

    def __add__(self, other: "GridPath") -> "GridPath":
        if other.n != self.n or not np.isclose(other.dt, self.dt) or not np.isclose(other.t0, self.t0):
            raise ValueError("cannot add paths on different grids")
        return self.with_values(self.values + other.values, label=f"{self.label}+{other.label}")


__all__ = [
    "Array",
    "LevyError", "PreconditionError", "NumericalError", "DivergenceError", "DivergentDerivativeError",
    "Grid", "GridPath",
]
