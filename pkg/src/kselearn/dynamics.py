"""Generalized Kuramoto-Sivashinsky dynamics.

    u_t + l1 u_x + l2 u_xx + l3 u_xxx + l4 u_xxxx + l5 u u_x = f

The four linear terms are integrated implicitly and the quadratic term (plus
forcing) explicitly with an additive Runge-Kutta scheme.  In Fourier space
the implicit solves are per-mode scalar divisions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .spectral import Grid, RealField, SpectralField, transform

__all__ = [
    "KSE_COEFFICIENTS",
    "N_TERMS",
    "LINEAR_TERMS",
    "NONLINEAR_TERM",
    "BlowUpError",
    "ModelCoefficients",
    "Forcing",
    "ImexScheme",
    "ARK436L2SA",
    "ImexStepper",
    "term_operator",
    "linear_symbol",
    "imex_step",
    "initial_condition",
    "warmup_truth",
]

logger = logging.getLogger(__name__)

N_TERMS = 5
LINEAR_TERMS = (1, 2, 3, 4)
NONLINEAR_TERM = 5
KSE_COEFFICIENTS = (0.0, 1.0, 0.0, 1.0, 1.0)


class BlowUpError(FloatingPointError):
    """A time step produced non-finite values."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class ModelCoefficients:
    """Coefficients of ``u_x, u_xx, u_xxx, u_xxxx, u u_x`` and which are unknown."""

    lam: tuple = KSE_COEFFICIENTS
    unknown_mask: tuple = (False,) * N_TERMS

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lam)
        mask = tuple(bool(m) for m in self.unknown_mask)
        if len(lam) != N_TERMS or len(mask) != N_TERMS:
            raise ValueError(f"expected {N_TERMS} coefficients and mask entries")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "unknown_mask", mask)

    @classmethod
    def kse(cls, unknown: Sequence[int] = ()) -> "ModelCoefficients":
        """Classical KSE with the 1-based term indices in ``unknown`` flagged."""
        return cls(KSE_COEFFICIENTS, tuple(k in unknown for k in range(1, 6)))

    @property
    def unknown(self) -> tuple:
        """1-based indices of the unknown terms, ascending."""
        return tuple(k for k in range(1, 6) if self.unknown_mask[k - 1])

    @property
    def known(self) -> tuple:
        return tuple(k for k in range(1, 6) if not self.unknown_mask[k - 1])

    def __getitem__(self, k: int) -> float:
        return self.lam[k - 1]

    def with_values(self, values: dict) -> "ModelCoefficients":
        lam = list(self.lam)
        for k, val in values.items():
            lam[k - 1] = float(val)
        return ModelCoefficients(tuple(lam), self.unknown_mask)


@dataclass(frozen=True, eq=False)
class Forcing:
    """Time-independent forcing; ``None`` means identically zero."""

    f: Optional[RealField] = None

    def spectral(self, grid: Grid) -> Optional[np.ndarray]:
        if self.f is None:
            return None
        grid.check_same(self.f.grid)
        return transform(self.f).coeffs


@dataclass(frozen=True, eq=False)
class ImexScheme:
    """Butcher data of an additive Runge-Kutta pair (explicit ``a_ex``, implicit ``a_im``)."""

    name: str
    a_ex: np.ndarray
    a_im: np.ndarray
    b: np.ndarray
    order: int
    c: np.ndarray = field(init=False)

    def __post_init__(self):
        a_ex = np.asarray(self.a_ex, dtype=float)
        a_im = np.asarray(self.a_im, dtype=float)
        b = np.asarray(self.b, dtype=float)
        s = len(b)
        if a_ex.shape != (s, s) or a_im.shape != (s, s):
            raise ValueError("tableau shape mismatch")
        if np.any(np.triu(a_ex) != 0):
            raise ValueError("explicit tableau must be strictly lower triangular")
        if np.any(np.triu(a_im, 1) != 0):
            raise ValueError("implicit tableau must be lower triangular")
        object.__setattr__(self, "a_ex", a_ex)
        object.__setattr__(self, "a_im", a_im)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", a_im.sum(axis=1))

    @property
    def stages(self) -> int:
        return len(self.b)


# ARK4(3)6L[2]SA of Kennedy & Carpenter (2003); stiffly accurate ESDIRK part.
ARK436L2SA = ImexScheme(
    name="ARK4(3)6L[2]SA",
    a_ex=[
        [0, 0, 0, 0, 0, 0],
        [1 / 2, 0, 0, 0, 0, 0],
        [13861 / 62500, 6889 / 62500, 0, 0, 0, 0],
        [-116923316275 / 2393684061468, -2731218467317 / 15368042101831,
         9408046702089 / 11113171139209, 0, 0, 0],
        [-451086348788 / 2902428689909, -2682348792572 / 7519795681897,
         12662868775082 / 11960479115383, 3355817975965 / 11060851509271, 0, 0],
        [647845179188 / 3216320057751, 73281519250 / 8382639484533,
         552539513391 / 3454668386233, 3354512671639 / 8306763924573,
         4040 / 17871, 0],
    ],
    a_im=[
        [0, 0, 0, 0, 0, 0],
        [1 / 4, 1 / 4, 0, 0, 0, 0],
        [8611 / 62500, -1743 / 31250, 1 / 4, 0, 0, 0],
        [5012029 / 34652500, -654441 / 2922500, 174375 / 388108, 1 / 4, 0, 0],
        [15267082809 / 155376265600, -71443401 / 120774400,
         730878875 / 902184768, 2285395 / 8070912, 1 / 4, 0],
        [82889 / 524892, 0, 15625 / 83664, 69875 / 102672, -2260 / 8211, 1 / 4],
    ],
    b=[82889 / 524892, 0, 15625 / 83664, 69875 / 102672, -2260 / 8211, 1 / 4],
    order=4,
)


def _to_half(coeffs: np.ndarray) -> np.ndarray:
    return coeffs[: coeffs.shape[-1] // 2 + 1].copy()


def _to_full(half: np.ndarray, N: int) -> np.ndarray:
    full = np.empty(N, dtype=complex)
    full[: N // 2 + 1] = half
    full[N // 2 + 1:] = np.conj(half[1: N // 2][::-1])
    # the mean and Nyquist coefficients of a real field are real
    full[0] = full[0].real
    full[N // 2] = full[N // 2].real
    return full


class _HalfSpectrum:
    """Precomputed rfft-layout data used by the stepping kernels."""

    def __init__(self, grid: Grid):
        n_half = grid.N // 2 + 1
        k = np.arange(n_half)
        self.N = grid.N
        self.ik = 1j * k / grid.L
        self.ik[k == grid.N // 2] = 0.0
        self.drop = k > grid.N / 3.0

    def quadratic(self, half: np.ndarray) -> np.ndarray:
        pair = np.empty((2, half.shape[-1]), dtype=complex)
        pair[0] = half
        np.multiply(half, self.ik, out=pair[1])
        v, vx = np.fft.irfft(pair, self.N)
        # irfft and rfft each carry a factor of N relative to mean normalization
        prod = np.fft.rfft(v * vx)
        prod *= self.N
        prod[self.drop] = 0.0
        return prod


@lru_cache(maxsize=32)
def _half_spectrum(grid: Grid) -> _HalfSpectrum:
    return _HalfSpectrum(grid)


def _quadratic_term(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased spectral coefficients of ``v * v_x`` (no sign, no coefficient)."""
    return _to_full(_half_spectrum(grid).quadratic(_to_half(coeffs)), grid.N)


def term_operator(k: int, v: SpectralField) -> SpectralField:
    """``G_k(v)``: the k-th spatial derivative for k <= 4, ``v v_x`` for k = 5."""
    if k in LINEAR_TERMS:
        return SpectralField(v.coeffs * v.grid.derivative_multiplier(k), v.grid)
    if k == NONLINEAR_TERM:
        return SpectralField(_quadratic_term(v.coeffs, v.grid), v.grid)
    raise ValueError(f"term index must be 1..5, got {k!r}")


def linear_symbol(coeffs: ModelCoefficients, grid: Grid) -> np.ndarray:
    """Per-mode multiplier of the linear part of ``u_t = -sum l_k G_k(u)``."""
    sigma = np.zeros(grid.N, dtype=complex)
    for k in LINEAR_TERMS:
        if coeffs[k] != 0.0:
            sigma -= coeffs[k] * grid.derivative_multiplier(k)
    return sigma


class ImexStepper:
    """Additive RK stepper for fixed coefficients, forcing and step size.

    Per-stage implicit denominators are precomputed, so repeated steps only
    pay for the explicit quadratic-term evaluations.  Internally the state is
    held in rfft (half-spectrum) layout.
    """

    def __init__(self, grid: Grid, coeffs: ModelCoefficients, dt: float,
                 forcing: Optional[Forcing] = None, scheme: ImexScheme = ARK436L2SA):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        if coeffs[4] <= 0:
            raise ValueError("fourth-order coefficient must be positive to time-step")
        self.grid = grid
        self.coeffs = coeffs
        self.dt = float(dt)
        self.scheme = scheme
        self._half = _half_spectrum(grid)
        self.sigma = _to_half(linear_symbol(coeffs, grid))
        self.nonlinear = coeffs[NONLINEAR_TERM]
        fhat = (forcing or Forcing()).spectral(grid)
        if fhat is None:
            self.fhat = None
        else:
            self.fhat = _to_half(fhat)
            self.fhat[self._half.drop] = 0.0
        diag = np.diag(scheme.a_im)
        self._inv_denominators = [
            None if d == 0 else 1.0 / (1.0 - self.dt * d * self.sigma) for d in diag
        ]
        # Stage increments are stored as rows [explicit_0..s-1, implicit_0..s-1];
        # row i of _stage_weights forms the stage-i right-hand side.
        s = scheme.stages
        self._stage_weights = self.dt * np.hstack([scheme.a_ex, np.tril(scheme.a_im, -1)])
        self._stage_weights = self._stage_weights.astype(complex)
        self._b_weights = (self.dt * np.concatenate([scheme.b, scheme.b])).astype(complex)

    def explicit_rhs(self, half: np.ndarray) -> np.ndarray:
        if self.nonlinear != 0.0:
            rhs = self._half.quadratic(half)
            rhs *= -self.nonlinear
        else:
            rhs = np.zeros_like(half)
        if self.fhat is not None:
            rhs += self.fhat
        return rhs

    def step_half(self, v: np.ndarray) -> np.ndarray:
        """One step on rfft-layout coefficients."""
        s = self.scheme.stages
        increments = np.zeros((2 * s, v.shape[-1]), dtype=complex)
        for i in range(s):
            stage = v + self._stage_weights[i] @ increments if i else v.copy()
            inv = self._inv_denominators[i]
            if inv is not None:
                stage *= inv
            increments[i] = self.explicit_rhs(stage)
            np.multiply(self.sigma, stage, out=increments[s + i])
        out = v + self._b_weights @ increments
        out[self._half.drop] = 0.0
        return out

    def step_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """One step on full DFT-layout coefficients."""
        return _to_full(self.step_half(_to_half(coeffs)), self.grid.N)

    def step(self, v: SpectralField, step_index: Optional[int] = None) -> SpectralField:
        self.grid.check_same(v.grid)
        out = self.step_coeffs(v.coeffs)
        if not np.all(np.isfinite(out)):
            where = "" if step_index is None else f" at step {step_index}"
            raise BlowUpError(f"non-finite state{where}", step_index)
        return SpectralField(out, self.grid)


@lru_cache(maxsize=64)
def _cached_stepper(grid: Grid, coeffs: ModelCoefficients, dt: float) -> ImexStepper:
    return ImexStepper(grid, coeffs, dt)


def imex_step(v: SpectralField, coeffs: ModelCoefficients,
              f: Optional[Forcing] = None, dt: float = 1e-3) -> SpectralField:
    """Advance ``v`` by one additive Runge-Kutta step of size ``dt``."""
    if f is None or f.f is None:
        stepper = _cached_stepper(v.grid, coeffs, float(dt))
    else:
        stepper = ImexStepper(v.grid, coeffs, dt, f)
    return stepper.step(v)


def initial_condition(x: np.ndarray, L: float) -> np.ndarray:
    """Six-mode seed state for truth runs."""
    s = np.pi * np.asarray(x) / L
    return (np.sin(6 * s) + 0.1 * np.cos(s) - 0.2 * np.sin(3 * s)
            + 0.05 * np.cos(15 * s) + 0.7 * np.sin(18 * s) - np.cos(13 * s))


def warmup_truth(grid: Grid, coeffs: ModelCoefficients = ModelCoefficients(),
                 dt: float = 1e-3, t_warmup: float = 10.0,
                 startup_time: float = 0.25, startup_substeps: int = 16) -> SpectralField:
    """Integrate the seed state out to ``t_warmup`` and return the result.

    The seed is not periodic on the domain, so it is projected onto the
    dealiased band first and the stiff transient over ``startup_time`` is
    integrated with ``dt / startup_substeps``; without this the result is only
    about second-order accurate in ``dt``.
    """
    n_steps = int(round(t_warmup / dt))
    n_startup = min(n_steps, int(round(startup_time / dt)))
    half = _to_half(transform(RealField(initial_condition(grid.x, grid.L), grid)).coeffs)
    half[_half_spectrum(grid).drop] = 0.0
    logger.debug("warmup: %d steps of dt=%g on %s", n_steps, dt, grid)
    fine = ImexStepper(grid, coeffs, dt / startup_substeps)
    for _ in range(n_startup * startup_substeps):
        half = fine.step_half(half)
    stepper = ImexStepper(grid, coeffs, dt)
    for j in range(n_startup, n_steps):
        half = stepper.step_half(half)
        if j % 1000 == 999 and not np.all(np.isfinite(half)):
            raise BlowUpError(f"non-finite truth state during warmup at step {j}", j)
    if not np.all(np.isfinite(half)):
        raise BlowUpError("non-finite truth state at end of warmup", n_steps)
    return SpectralField(_to_full(half, grid.N), grid)
