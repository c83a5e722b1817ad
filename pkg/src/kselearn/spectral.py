"""Fourier representation of real periodic fields on ``[0, 2*pi*L)``.

Coefficients use the standard DFT layout (``numpy.fft.fft`` ordering) and are
normalized so that mode 0 carries the spatial mean.  Mode ``k`` has
wavenumber ``q_k = k / L``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "RealField",
    "SpectralField",
    "SymmetryError",
    "GridMismatchError",
    "transform",
    "inverse_transform",
    "spectral_derivative",
    "dealias_two_thirds",
    "l2_inner_product",
    "l2_norm",
]

_EPS = np.finfo(float).eps
_SYMMETRY_TOL = np.sqrt(_EPS)


class SymmetryError(ValueError):
    """Spectral coefficients do not describe a real field."""


class GridMismatchError(ValueError):
    """Two fields live on different grids."""


@dataclass(frozen=True)
class Grid:
    """Uniform collocation grid with ``N`` points on ``[0, 2*pi*L)``."""

    L: float = 16.0
    N: int = 512

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def length(self) -> float:
        return 2.0 * np.pi * self.L

    @property
    def dx(self) -> float:
        return self.length / self.N

    @cached_property
    def x(self) -> np.ndarray:
        return self.length * np.arange(self.N) / self.N

    @cached_property
    def k(self) -> np.ndarray:
        """Integer mode index per coefficient slot (Nyquist stored as -N/2)."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).round().astype(int)

    @cached_property
    def q(self) -> np.ndarray:
        return self.k / self.L

    @cached_property
    def nyquist(self) -> np.ndarray:
        return np.abs(self.k) == self.N // 2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return np.abs(self.k) <= self.N / 3.0

    @cached_property
    def _multipliers(self) -> dict:
        out = {}
        for order in (1, 2, 3, 4):
            mult = (1j * self.q) ** order
            if order % 2:
                mult[self.nyquist] = 0.0
            mult.flags.writeable = False
            out[order] = mult
        return out

    def derivative_multiplier(self, order: int) -> np.ndarray:
        """``(i q_k)**order`` with the Nyquist mode zeroed for odd orders."""
        return self._multipliers[order]

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


@dataclass(frozen=True, eq=False)
class RealField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.N,):
            raise ValueError(
                f"expected {self.grid.N} samples, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, func, grid: Grid) -> "RealField":
        return cls(np.asarray(func(grid.x), dtype=float) * np.ones(grid.N), grid)


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.grid.N,):
            raise ValueError(
                f"expected {self.grid.N} coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(np.zeros(grid.N, dtype=complex), grid)

    def _other(self, other):
        if isinstance(other, SpectralField):
            self.grid.check_same(other.grid)
            return other.coeffs
        return NotImplemented

    def __add__(self, other):
        c = self._other(other)
        if c is NotImplemented:
            return c
        return SpectralField(self.coeffs + c, self.grid)

    def __sub__(self, other):
        c = self._other(other)
        if c is NotImplemented:
            return c
        return SpectralField(self.coeffs - c, self.grid)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpectralField(self.coeffs * scalar, self.grid)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs, self.grid)

    def symmetry_defect(self) -> float:
        """Max of ``|c(-k) - conj(c(k))|`` over all modes."""
        c = self.coeffs
        mirrored = np.conj(np.roll(c[::-1], 1))
        return float(np.max(np.abs(c - mirrored), initial=0.0))


def transform(f: RealField) -> SpectralField:
    """Forward DFT normalized so that mode 0 is the mean of ``f``."""
    return SpectralField(np.fft.fft(f.values) / f.grid.N, f.grid)


def inverse_transform(F: SpectralField) -> RealField:
    """Inverse of :func:`transform`.

    Raises
    ------
    SymmetryError
        If the imaginary residue exceeds ``sqrt(eps)`` relative to ``||F||``,
        which means the coefficients were not conjugate-symmetric to begin
        with.  Round-off amplified by high-order derivatives stays far below.
    """
    values = np.fft.ifft(F.coeffs) * F.grid.N
    scale = np.sqrt(F.grid.N) * np.linalg.norm(F.coeffs)
    residue = np.max(np.abs(values.imag), initial=0.0)
    if residue > _SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise SymmetryError(
            f"imaginary residue {residue:.3e} exceeds tolerance for norm {scale:.3e}"
        )
    return RealField(values.real, F.grid)


def spectral_derivative(F: SpectralField, order: int) -> SpectralField:
    if order not in (1, 2, 3, 4):
        raise ValueError(f"derivative order must be 1..4, got {order!r}")
    return SpectralField(F.coeffs * F.grid.derivative_multiplier(order), F.grid)


def dealias_two_thirds(F: SpectralField) -> SpectralField:
    return SpectralField(np.where(F.grid.dealias_mask, F.coeffs, 0.0), F.grid)


def l2_inner_product(F: SpectralField, G: SpectralField) -> float:
    """``integral_0^{2 pi L} f g dx`` evaluated through Parseval."""
    F.grid.check_same(G.grid)
    return F.grid.length * float(np.vdot(G.coeffs, F.coeffs).real)


def l2_norm(F: SpectralField) -> float:
    return F.grid.length ** 0.5 * float(np.linalg.norm(F.coeffs))
