"""scikit-learn style front end for concurrent state and parameter estimation.

:class:`ConcurrentParameterEstimator` consumes a time-ordered stack of truth
snapshots sampled every ``dt``, observes each one through ``I_h`` and runs the
nudged model alongside, refining the unknown coefficients as it goes::

    est = ConcurrentParameterEstimator(unknown=(2,), dt=1e-3)
    est.fit(U)            # U has shape (n_times, N)
    est.coef_             # estimates of the unknown coefficients
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_guess, check_snapshots, check_unknown
from .dynamics import KSE_COEFFICIENTS, ModelCoefficients
from .estimator import EstimatorConfig, assimilation_step, initial_state
from .observation import ObservationOperator, observe
from .spectral import Grid, RealField, SpectralField, inverse_transform, transform

__all__ = ["ConcurrentParameterEstimator"]


class ConcurrentParameterEstimator(BaseEstimator):
    """Nudging-based estimator of generalized KSE coefficients.

    Parameters
    ----------
    unknown : tuple of int
        1-based indices of the coefficients to learn.
    known : tuple of float
        Values for all five coefficients; entries at unknown positions are
        ignored.
    initial_guess : float or sequence
        Starting estimate, one per unknown or a shared scalar.
    mu : float or None
        Nudging strength; ``None`` uses ``1.8 / dt``.
    observation : {"fourier", "interpolation"}
        Kind of observation operator, configured by ``K`` or ``m`` and
        ``interp_order``.
    """

    def __init__(self, unknown=(2,), known=KSE_COEFFICIENTS, initial_guess=2.0, *,
                 L=16.0, N=512, dt=1e-3, mu=None, alpha=1.0, bdf_order=3,
                 observation="fourier", K=21, m=40, interp_order="cubic",
                 sigma_min=1e-10, e1_min=1e-16, keep_path=False):
        self.unknown = unknown
        self.known = known
        self.initial_guess = initial_guess
        self.L = L
        self.N = N
        self.dt = dt
        self.mu = mu
        self.alpha = alpha
        self.bdf_order = bdf_order
        self.observation = observation
        self.K = K
        self.m = m
        self.interp_order = interp_order
        self.sigma_min = sigma_min
        self.e1_min = e1_min
        self.keep_path = keep_path

    def _setup(self):
        unknown = check_unknown(self.unknown)
        known = tuple(float(v) for v in self.known)
        if len(known) != 5:
            raise ValueError(f"known needs 5 coefficients, got {len(known)}")
        grid = Grid(self.L, self.N)
        mu = 1.8 / self.dt if self.mu is None else float(self.mu)
        cfg = EstimatorConfig(mu, float(self.alpha), int(self.bdf_order),
                              float(self.sigma_min), float(self.e1_min))
        cfg.validate(self.dt)
        if self.observation == "fourier":
            op = ObservationOperator.fourier(self.K)
        elif self.observation in ("interpolation", "spline"):
            op = ObservationOperator.interpolation(self.m, self.interp_order)
        else:
            raise ValueError(f"unknown observation kind {self.observation!r}")
        model = ModelCoefficients(known, tuple(k in unknown for k in range(1, 6)))
        return grid, model, cfg, op

    def fit(self, X, y=None):
        """Assimilate the snapshots in ``X`` starting from a zero state."""
        grid, model, cfg, op = self._setup()
        guess = check_guess(self.initial_guess, len(model.unknown))
        state = initial_state(SpectralField.zeros(grid), guess, cfg.p)
        self._context = (grid, model, cfg, op)
        self.lambda_path_ = np.empty((0, len(model.unknown))) if self.keep_path else None
        return self._consume(state, X)

    def partial_fit(self, X, y=None):
        """Continue assimilation with further snapshots (or start if unfitted)."""
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        return self._consume(self.state_, X)

    def _consume(self, state, X):
        grid, model, cfg, op = self._context
        X = check_snapshots(X, grid.N)
        path = []
        for row in X:
            u_obs = observe(op, transform(RealField(row, grid)))
            state = assimilation_step(state, u_obs, model, cfg, op, self.dt)
            if self.keep_path:
                path.append(state.lambda_hat.copy())
        if self.keep_path:
            self.lambda_path_ = np.vstack([self.lambda_path_] + path) if path else self.lambda_path_
        self.state_ = state
        self.unknown_ = model.unknown
        self.coef_ = np.array(state.lambda_hat, dtype=float)
        self.lambda_hat_ = self.coef_
        self.n_steps_ = state.step
        self.n_features_in_ = grid.N
        return self

    def coefficients(self) -> np.ndarray:
        """All five coefficients with the learned values filled in."""
        check_is_fitted(self, "coef_")
        model = self._context[1]
        return np.array(model.with_values(dict(zip(model.unknown, self.coef_))).lam)

    def predict_state(self) -> np.ndarray:
        """Physical values of the current assimilated state."""
        check_is_fitted(self, "state_")
        return inverse_transform(self.state_.v).values
