"""Concurrent state and coefficient estimation for the generalized
Kuramoto-Sivashinsky equation by continuous data assimilation (nudging)."""
from .dynamics import (
    KSE_COEFFICIENTS,
    BlowUpError,
    Forcing,
    ImexStepper,
    ModelCoefficients,
    imex_step,
    warmup_truth,
)
from .estimator import (
    DegenerateSystem,
    EstimatorConfig,
    EstimatorState,
    SynchronizedState,
    UpdateSuspended,
    assimilation_step,
)
from .estimator_api import ConcurrentParameterEstimator
from .harness import (
    ExperimentSpec,
    estimate_convergence_rate,
    order_of_accuracy_study,
    parameter_sweep,
    run_twin_experiment,
)
from .observation import ObservationOperator, observe
from .spectral import Grid, RealField, SpectralField, transform, inverse_transform

__version__ = "0.1.0"

__all__ = [
    "KSE_COEFFICIENTS", "BlowUpError", "Forcing", "ImexStepper", "ModelCoefficients",
    "imex_step", "warmup_truth", "DegenerateSystem", "EstimatorConfig", "EstimatorState",
    "SynchronizedState", "UpdateSuspended", "assimilation_step",
    "ConcurrentParameterEstimator", "ExperimentSpec", "estimate_convergence_rate",
    "order_of_accuracy_study", "parameter_sweep", "run_twin_experiment",
    "ObservationOperator", "observe", "Grid", "RealField", "SpectralField",
    "transform", "inverse_transform",
]
