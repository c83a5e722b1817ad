"""Concurrent estimation of unknown term coefficients during nudged assimilation.

One call to :func:`assimilation_step` performs a full update:

1. record the new observation and estimate its time derivative by BDF;
2. build an orthonormal basis headed by the observed error ``I_h(u - v)``;
3. assemble and solve the small linear system for point-in-time estimates;
4. relax the running estimates toward them with a trapezoidal step;
5. advance the assimilated state and add the forward-Euler nudging increment.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .dynamics import (
    LINEAR_TERMS,
    _to_full,
    _to_half,
    BlowUpError,
    Forcing,
    ImexStepper,
    ModelCoefficients,
    term_operator,
)
from .observation import ObservationOperator, observe
from .spectral import Grid, SpectralField, l2_inner_product, l2_norm

__all__ = [
    "BDF_COEFFICIENTS",
    "UpdateSuspended",
    "SynchronizedState",
    "DegenerateSystem",
    "InsufficientHistory",
    "EstimatorConfig",
    "ObservationHistory",
    "EstimatorState",
    "BasisSet",
    "bdf_derivative",
    "observed_terms",
    "basis_terms",
    "build_basis",
    "assemble_system",
    "solve_point_estimates",
    "relax_update",
    "initial_state",
    "assimilation_step",
]

logger = logging.getLogger(__name__)

# Weights on f_j, f_{j-1}, ... and the common denominator (times dt).
BDF_COEFFICIENTS = {
    1: ((1.0, -1.0), 1.0),
    2: ((3.0, -4.0, 1.0), 2.0),
    3: ((11.0, -18.0, 9.0, -2.0), 6.0),
}


class UpdateSuspended(ArithmeticError):
    """The parameter update is skipped for this step; the state update is not."""


class SynchronizedState(UpdateSuspended):
    """The observed error is too small to carry information."""


class DegenerateSystem(UpdateSuspended):
    """The basis or the linear system is numerically singular."""


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    """Hyperparameters of the estimator.

    ``e1_min`` is relative to the norm of the current observation;
    ``sigma_min`` is relative to the largest pivot.
    """

    mu: float
    alpha: float = 1.0
    p: int = 3
    sigma_min: float = 1e-10
    e1_min: float = 1e-16

    def validate(self, dt: float) -> None:
        if not self.mu > 0:
            raise ValueError(f"nudging parameter must be positive, got {self.mu}")
        if not self.alpha >= 0:
            raise ValueError(f"relaxation rate must be non-negative, got {self.alpha}")
        if self.p not in BDF_COEFFICIENTS:
            raise ValueError(f"BDF order must be 1, 2 or 3, got {self.p}")
        if not self.mu * dt < 2.0:
            raise ValueError(
                f"mu*dt = {self.mu * dt:g} >= 2 makes forward-Euler nudging unstable"
            )


@dataclass(frozen=True)
class ObservationHistory:
    """The most recent ``p + 1`` observations, newest last."""

    depth: int
    times: Tuple[float, ...] = ()
    values: Tuple[SpectralField, ...] = ()

    def push(self, t: float, obs: SpectralField) -> "ObservationHistory":
        if self.times and not t > self.times[-1]:
            raise ValueError(f"observation times must increase: {t} after {self.times[-1]}")
        times = (self.times + (float(t),))[-self.depth:]
        values = (self.values + (obs,))[-self.depth:]
        return ObservationHistory(self.depth, times, values)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class BasisSet:
    e: Tuple[SpectralField, ...]

    def __len__(self) -> int:
        return len(self.e)

    def gram(self) -> np.ndarray:
        n = len(self.e)
        G = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                G[i, j] = l2_inner_product(self.e[i], self.e[j])
        return G


@dataclass(frozen=True)
class EstimatorState:
    lambda_hat: np.ndarray
    lambda_tilde: np.ndarray
    v: SpectralField
    history: ObservationHistory
    suspended: bool = True
    t: float = 0.0
    step: int = 0
    obs_error_norm: float = float("nan")


def bdf_derivative(history: ObservationHistory, p: int, dt: float) -> SpectralField:
    """Backward-difference estimate of the time derivative at the newest entry."""
    if p not in BDF_COEFFICIENTS:
        raise ValueError(f"BDF order must be 1, 2 or 3, got {p}")
    if len(history) < p + 1:
        raise InsufficientHistory(f"BDF{p} needs {p + 1} samples, have {len(history)}")
    weights, denom = BDF_COEFFICIENTS[p]
    spacing = np.diff(history.times[-(p + 1):])
    if not np.allclose(spacing, dt, rtol=1e-9, atol=0.0):
        raise ValueError(f"history spacing {spacing} does not match dt={dt}")
    newest_first = history.values[::-1]
    acc = np.zeros_like(newest_first[0].coeffs)
    for w, f in zip(weights, newest_first):
        acc += w * f.coeffs
    return SpectralField(acc / (denom * dt), newest_first[0].grid)


def observed_terms(v: SpectralField, op: ObservationOperator,
                   terms: Sequence[int] = (1, 2, 3, 4, 5)) -> Dict[int, SpectralField]:
    """``{k: I_h(G_k(v))}`` for the requested term indices."""
    return {k: observe(op, term_operator(k, v)) for k in terms}


def basis_terms(unknown_terms: Sequence[int]) -> Tuple[int, ...]:
    """Term indices supplying ``e_2 .. e_n``: the first ``n - 1`` unknown linear
    terms in ascending order.  The nonlinear term never contributes."""
    unknown = sorted(unknown_terms)
    n = len(unknown)
    if n < 1:
        raise ValueError("at least one unknown term is required")
    linear = [k for k in unknown if k in LINEAR_TERMS]
    if len(linear) < n - 1:
        raise ValueError(f"cannot build {n} basis vectors from linear terms {linear}")
    return tuple(linear[: n - 1])


def _mgs(vectors: Sequence[np.ndarray], grid: Grid, sigma_min: float) -> Tuple[np.ndarray, ...]:
    length = grid.length
    out = []
    first = None
    for vec in vectors:
        w = vec.copy()
        for q in out:
            w -= (length * np.vdot(q, w).real) * q
        norm = np.sqrt(length) * np.linalg.norm(w)
        if first is None:
            first = norm
        if not np.isfinite(norm) or norm <= sigma_min * first or norm == 0.0:
            raise DegenerateSystem(
                f"basis vector {len(out) + 1} is numerically dependent "
                f"(pivot {norm:.3e}, first pivot {first:.3e})"
            )
        out.append(w / norm)
    return tuple(out)


def build_basis(e1: SpectralField, v: SpectralField, unknown_terms: Sequence[int],
                op: ObservationOperator, e1_min: float = 0.0, sigma_min: float = 1e-10,
                terms: Optional[Dict[int, SpectralField]] = None) -> BasisSet:
    """Orthonormal basis ``e_1 = I_h(w)/|I_h(w)|, e_2, ..`` by modified Gram-Schmidt.

    ``e1_min`` is an absolute threshold on ``|e1|``.
    """
    e1.grid.check_same(v.grid)
    norm = l2_norm(e1)
    if not norm >= e1_min or norm == 0.0:
        raise SynchronizedState(f"|I_h(w)| = {norm:.3e} below threshold {e1_min:.3e}")
    extra = basis_terms(unknown_terms)
    if terms is None:
        terms = observed_terms(v, op, extra)
    vectors = [e1.coeffs] + [terms[k].coeffs for k in extra]
    return BasisSet(tuple(SpectralField(c, v.grid) for c in _mgs(vectors, v.grid, sigma_min)))


def assemble_system(basis: BasisSet, v: SpectralField, u_dot_obs: SpectralField,
                    f: Optional[Forcing], known: ModelCoefficients, op: ObservationOperator,
                    terms: Optional[Dict[int, SpectralField]] = None
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """Matrix ``A[i, k] = <e_i, I_h G_k(v)>`` over unknown k and right-hand side
    ``b_i = <e_i, I_h f - du/dt - I_h F(v)>`` with ``F`` the known terms."""
    unknown = known.unknown
    if terms is None:
        terms = observed_terms(v, op)
    residual = -u_dot_obs.coeffs
    for k in known.known:
        if known[k] != 0.0:
            residual = residual - known[k] * terms[k].coeffs
    fhat = (f or Forcing()).spectral(v.grid)
    if fhat is not None:
        residual = residual + observe(op, SpectralField(fhat, v.grid)).coeffs
    rhs = SpectralField(residual, v.grid)
    n = len(basis)
    A = np.empty((n, len(unknown)))
    b = np.empty(n)
    for i, e in enumerate(basis.e):
        b[i] = l2_inner_product(e, rhs)
        for col, k in enumerate(unknown):
            A[i, col] = l2_inner_product(e, terms[k])
    return A, b


def solve_point_estimates(A: np.ndarray, b: np.ndarray, sigma_min: float = 1e-10) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`DegenerateSystem` when the smallest pivot is below
    ``sigma_min`` times the largest.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system shapes {A.shape} and {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise BlowUpError("non-finite entries in the parameter system")
    with warnings.catch_warnings():
        # exact singularity is reported below as DegenerateSystem
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.max() == 0.0 or pivots.min() < sigma_min * pivots.max():
        raise DegenerateSystem(
            f"relative pivot {pivots.min() / max(pivots.max(), 1e-300):.3e} below {sigma_min:.1e}"
        )
    return lu_solve((lu, piv), b, check_finite=False)


def relax_update(lambda_hat: np.ndarray, lambda_tilde: np.ndarray, alpha: float,
                 dt: float) -> np.ndarray:
    """Trapezoidal step of ``d lambda_hat/dt = -alpha (lambda_hat - lambda_tilde)``."""
    half = 0.5 * alpha * dt
    return ((1.0 - half) * np.asarray(lambda_hat, dtype=float)
            + alpha * dt * np.asarray(lambda_tilde, dtype=float)) / (1.0 + half)


def initial_state(v0: SpectralField, initial_guess: Sequence[float], p: int,
                  t0: float = 0.0) -> EstimatorState:
    guess = np.array(initial_guess, dtype=float)
    return EstimatorState(
        lambda_hat=guess,
        lambda_tilde=guess.copy(),
        v=v0,
        history=ObservationHistory(depth=p + 1),
        t=t0,
    )


def assimilation_step(state: EstimatorState, u_obs: SpectralField, model: ModelCoefficients,
                      cfg: EstimatorConfig, op: ObservationOperator, dt: float,
                      forcing: Optional[Forcing] = None) -> EstimatorState:
    """Advance the estimator by one step of size ``dt`` using observation ``u_obs``.

    ``model`` carries the known coefficient values and the unknown mask; its
    entries at unknown positions are ignored.
    """
    v = state.v
    unknown = model.unknown
    history = state.history.push(state.t, u_obs)
    order = min(cfg.p, len(history) - 1)
    observed_v = observe(op, v)
    e1 = SpectralField(u_obs.coeffs - observed_v.coeffs, v.grid)
    e1_norm = l2_norm(e1)

    lambda_hat = state.lambda_hat
    lambda_tilde = state.lambda_tilde
    suspended = True
    if unknown and order >= 1:
        try:
            threshold = cfg.e1_min * l2_norm(u_obs)
            if not e1_norm >= threshold or e1_norm == 0.0:
                raise SynchronizedState(f"|I_h(w)| = {e1_norm:.3e}")
            u_dot = bdf_derivative(history, order, dt)
            terms = observed_terms(v, op)
            basis = build_basis(e1, v, unknown, op, threshold, cfg.sigma_min, terms)
            A, b = assemble_system(basis, v, u_dot, forcing, model, op, terms)
            lambda_tilde = solve_point_estimates(A, b, cfg.sigma_min)
            lambda_hat = relax_update(lambda_hat, lambda_tilde, cfg.alpha, dt)
            suspended = False
        except UpdateSuspended as exc:
            logger.debug("step %d: parameter update suspended (%s)", state.step, exc)

    current = model.with_values(dict(zip(unknown, lambda_hat)))
    if not current[4] > 0:
        raise BlowUpError(
            f"fourth-order coefficient estimate {current[4]:.3e} is not positive "
            f"at step {state.step}", state.step)
    stepper = ImexStepper(v.grid, current, dt, forcing)
    # Nudge on the half spectrum so the state stays exactly real; a full-layout
    # update would let conjugate-asymmetric round-off grow by mu*dt per step.
    half = stepper.step_half(_to_half(v.coeffs))
    half += (cfg.mu * dt) * _to_half(e1.coeffs)
    advanced = _to_full(half, v.grid.N)
    if not np.all(np.isfinite(advanced)):
        raise BlowUpError(f"non-finite assimilated state at step {state.step}", state.step)
    return replace(
        state,
        lambda_hat=lambda_hat,
        lambda_tilde=lambda_tilde,
        v=SpectralField(advanced, v.grid),
        history=history,
        suspended=suspended,
        t=state.t + dt,
        step=state.step + 1,
        obs_error_norm=e1_norm,
    )
