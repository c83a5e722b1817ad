"""Linear, idempotent observation operators.

Two kinds are supported:

* Fourier truncation: keep modes with ``|k| <= K``.
* Pointwise interpolation: sample at ``m`` evenly spaced collocation points
  and rebuild a periodic spline (linear, quadratic or cubic) on the full grid.

Both return full-grid spectral fields so downstream inner products do not
depend on the operator kind.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy.interpolate import make_interp_spline

from .spectral import Grid, SpectralField

__all__ = [
    "ObservationKind",
    "ObservationOperator",
    "observe",
    "observed_error",
]

_SPLINE_DEGREES = {"linear": 1, "quadratic": 2, "cubic": 3}


class ObservationKind(str, Enum):
    FOURIER = "fourier"
    INTERPOLATION = "interpolation"


@dataclass(frozen=True)
class ObservationOperator:
    """Descriptor for an observation operator ``I_h``.

    Use :meth:`fourier` or :meth:`interpolation` to build one.  The operator is
    bound to a grid lazily; the dense interpolation matrix is cached per grid.
    """

    kind: ObservationKind = ObservationKind.FOURIER
    K: int = 21
    m: int = 40
    interp_order: str = "cubic"

    def __post_init__(self):
        object.__setattr__(self, "kind", ObservationKind(self.kind))
        if self.kind is ObservationKind.FOURIER:
            if self.K < 0:
                raise ValueError(f"mode cutoff must be non-negative, got {self.K}")
        else:
            if self.interp_order not in _SPLINE_DEGREES:
                raise ValueError(
                    f"interp_order must be one of {sorted(_SPLINE_DEGREES)}, "
                    f"got {self.interp_order!r}"
                )
            if self.m < self.degree + 1:
                raise ValueError(
                    f"need at least {self.degree + 1} points for "
                    f"{self.interp_order} interpolation, got m={self.m}"
                )

    @classmethod
    def fourier(cls, K: int = 21) -> "ObservationOperator":
        return cls(ObservationKind.FOURIER, K=int(K))

    @classmethod
    def interpolation(cls, m: int = 40, interp_order: str = "cubic") -> "ObservationOperator":
        return cls(ObservationKind.INTERPOLATION, m=int(m), interp_order=interp_order)

    @property
    def degree(self) -> int:
        return _SPLINE_DEGREES[self.interp_order]

    def describe(self) -> str:
        if self.kind is ObservationKind.FOURIER:
            return f"fourier(K={self.K})"
        return f"{self.interp_order}-spline(m={self.m})"

    def bind(self, grid: Grid) -> "BoundObservation":
        return _bound(self, grid)


def _observation_indices(grid: Grid, m: int) -> np.ndarray:
    # Evenly spaced from x = 0, rounded onto the collocation grid.
    if m > grid.N:
        raise ValueError(f"cannot observe {m} points on a grid of {grid.N}")
    idx = np.round(np.arange(m) * grid.N / m).astype(int)
    if len(np.unique(idx)) != m:
        raise ValueError(f"observation points collide for m={m}, N={grid.N}")
    return idx


class BoundObservation:
    """An :class:`ObservationOperator` specialized to a grid."""

    def __init__(self, op: ObservationOperator, grid: Grid):
        self.op = op
        self.grid = grid
        if op.kind is ObservationKind.INTERPOLATION:
            self.indices  # validates node placement now rather than on first use

    @cached_property
    def fourier_mask(self) -> np.ndarray:
        return np.abs(self.grid.k) <= self.op.K

    @cached_property
    def indices(self) -> np.ndarray:
        return _observation_indices(self.grid, self.op.m)

    @cached_property
    def interpolation_matrix(self) -> np.ndarray:
        """``N x m`` matrix mapping samples to spline values on the grid."""
        grid, m = self.grid, self.op.m
        knots = np.append(grid.x[self.indices], grid.length)
        data = np.vstack([np.eye(m), np.eye(m)[:1]])
        bc = "periodic" if self.op.degree > 1 else None
        spline = make_interp_spline(knots, data, k=self.op.degree, bc_type=bc)
        return spline(grid.x)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        if self.op.kind is ObservationKind.FOURIER:
            return np.where(self.fourier_mask, coeffs, 0.0)
        N = self.grid.N
        samples = (np.fft.ifft(coeffs) * N).real[self.indices]
        return np.fft.fft(self.interpolation_matrix @ samples) / N

    def sample(self, coeffs: np.ndarray) -> np.ndarray:
        """Physical values at the observation points (interpolation kind only)."""
        return (np.fft.ifft(coeffs) * self.grid.N).real[self.indices]


_BOUND_CACHE: dict = {}


def _bound(op: ObservationOperator, grid: Grid) -> BoundObservation:
    key = (op, grid)
    bound = _BOUND_CACHE.get(key)
    if bound is None:
        bound = _BOUND_CACHE[key] = BoundObservation(op, grid)
    return bound


def observe(op: ObservationOperator, f: SpectralField) -> SpectralField:
    """Apply ``I_h`` to ``f``."""
    return SpectralField(op.bind(f.grid).apply(f.coeffs), f.grid)


def observed_error(op: ObservationOperator, u_obs: SpectralField,
                   v: SpectralField) -> SpectralField:
    """``I_h(u) - I_h(v)`` given an already observed ``u_obs``."""
    u_obs.grid.check_same(v.grid)
    return SpectralField(u_obs.coeffs - op.bind(v.grid).apply(v.coeffs), v.grid)
