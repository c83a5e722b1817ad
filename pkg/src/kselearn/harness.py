"""Twin experiments: a simulated truth observed through ``I_h`` drives the estimator.

The truth is warmed up from the seed state, then truth and assimilated model
are co-evolved with a shared time step.  Every step emits one
:class:`TimeSeriesRecord`; a :class:`ConvergenceSummary` is computed at the end.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (
    KSE_COEFFICIENTS,
    BlowUpError,
    ImexStepper,
    ModelCoefficients,
    warmup_truth,
)
from .estimator import EstimatorConfig, assimilation_step, initial_state
from .observation import ObservationOperator, observe
from .spectral import Grid, SpectralField, l2_norm

__all__ = [
    "ExperimentSpec",
    "TimeSeriesRecord",
    "TimeSeries",
    "ConvergenceSummary",
    "ExperimentResult",
    "SweepRow",
    "OrderStudy",
    "SWEEP_AXES",
    "TIMESERIES_COLUMNS",
    "SWEEP_COLUMNS",
    "ORDER_COLUMNS",
    "cached_warmup",
    "run_twin_experiment",
    "estimate_convergence_rate",
    "final_second_errors",
    "order_of_accuracy_study",
    "parameter_sweep",
    "write_csv",
    "read_csv",
    "write_metadata",
]

logger = logging.getLogger(__name__)

SWEEP_AXES = ("alpha", "mu", "K", "m")
TIMESERIES_COLUMNS = ("t", "state_err_l2", "obs_err_l2")
SWEEP_COLUMNS = ("axis_value", "beta", "t_c", "final_error", "converged")
ORDER_COLUMNS = ("bdf_order", "dt", "final_error", "converged", "included")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one twin experiment.

    ``mu=None`` means ``1.8 / dt``.  ``initial_guess`` is either a scalar used
    for every unknown or one value per unknown.
    """

    L: float = 16.0
    N: int = 512
    truth: Tuple[float, ...] = KSE_COEFFICIENTS
    unknown: Tuple[int, ...] = (2,)
    initial_guess: object = 2.0
    mu: Optional[float] = None
    alpha: float = 1.0
    p: int = 3
    sigma_min: float = 1e-10
    e1_min: float = 1e-16
    observation: str = "fourier"
    K: int = 21
    m: int = 40
    interp_order: str = "cubic"
    dt: float = 1e-3
    t_final: float = 50.0
    warmup: bool = True
    t_warmup: float = 10.0
    converge_tol: float = 1e-6
    output: Optional[str] = None
    cache_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "truth", tuple(float(v) for v in self.truth))
        object.__setattr__(self, "unknown", tuple(sorted(int(k) for k in self.unknown)))
        if len(self.truth) != 5:
            raise ValueError(f"truth needs 5 coefficients, got {len(self.truth)}")
        if any(k not in range(1, 6) for k in self.unknown):
            raise ValueError(f"unknown term indices must be in 1..5, got {self.unknown}")
        if len(set(self.unknown)) != len(self.unknown):
            raise ValueError(f"duplicate unknown indices {self.unknown}")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if isinstance(self.initial_guess, (list, tuple)):
            guess = tuple(float(g) for g in self.initial_guess)
            if len(guess) != len(self.unknown):
                raise ValueError("one initial guess per unknown is required")
            object.__setattr__(self, "initial_guess", guess)
        else:
            object.__setattr__(self, "initial_guess", float(self.initial_guess))

    @property
    def mu_value(self) -> float:
        return 1.8 / self.dt if self.mu is None else float(self.mu)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def grid(self) -> Grid:
        return Grid(self.L, self.N)

    def model(self) -> ModelCoefficients:
        return ModelCoefficients(self.truth, tuple(k in self.unknown for k in range(1, 6)))

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(self.mu_value, self.alpha, self.p, self.sigma_min, self.e1_min)

    def observation_operator(self) -> ObservationOperator:
        if self.observation == "fourier":
            return ObservationOperator.fourier(self.K)
        if self.observation in ("interpolation", "spline"):
            return ObservationOperator.interpolation(self.m, self.interp_order)
        raise ValueError(f"unknown observation kind {self.observation!r}")

    def initial_guesses(self) -> Tuple[float, ...]:
        if isinstance(self.initial_guess, tuple):
            return self.initial_guess
        return (self.initial_guess,) * len(self.unknown)

    def validate(self) -> None:
        self.grid()
        self.estimator_config().validate(self.dt)
        self.observation_operator().bind(self.grid())
        if self.truth[3] <= 0:
            raise ValueError("the fourth-order coefficient must be positive")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TimeSeriesRecord:
    t: float
    state_err_l2: float
    obs_err_l2: float
    param_err: Tuple[float, ...]


@dataclass
class TimeSeries:
    """Column storage for per-step diagnostics."""

    t: np.ndarray
    state_err: np.ndarray
    obs_err: np.ndarray
    param_err: np.ndarray  # shape (n_records, n_unknown)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[TimeSeriesRecord]:
        for j in range(len(self.t)):
            yield TimeSeriesRecord(float(self.t[j]), float(self.state_err[j]),
                                   float(self.obs_err[j]), tuple(map(float, self.param_err[j])))

    @classmethod
    def from_records(cls, records: Sequence[TimeSeriesRecord]) -> "TimeSeries":
        n_par = len(records[0].param_err) if records else 0
        return cls(
            np.array([r.t for r in records], dtype=float),
            np.array([r.state_err_l2 for r in records], dtype=float),
            np.array([r.obs_err_l2 for r in records], dtype=float),
            np.array([r.param_err for r in records], dtype=float).reshape(len(records), n_par),
        )

    def columns(self) -> Tuple[str, ...]:
        return TIMESERIES_COLUMNS + tuple(
            f"param_err_{i + 1}" for i in range(self.param_err.shape[1])
        )

    def rows(self) -> Iterator[tuple]:
        for j in range(len(self.t)):
            yield (self.t[j], self.state_err[j], self.obs_err[j], *self.param_err[j])


@dataclass
class ConvergenceSummary:
    t_c: float
    beta: float
    final_error: float
    final_errors: Tuple[float, ...] = ()
    beta_defined: bool = True
    converged: bool = False
    completed: bool = True
    failure: Optional[str] = None
    plateaued: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    series: TimeSeries
    summary: ConvergenceSummary
    lambda_hat: Tuple[float, ...]

    @property
    def records(self) -> List[TimeSeriesRecord]:
        return list(self.series)


# ---------------------------------------------------------------------------
# warmup cache

_WARMUP_MEMO: Dict[str, np.ndarray] = {}


def _warmup_key(grid: Grid, coeffs: ModelCoefficients, dt: float, t_warmup: float) -> str:
    payload = json.dumps(
        {"L": grid.L, "N": grid.N, "lambda": list(coeffs.lam), "dt": dt,
         "t_warmup": t_warmup, "scheme": "ARK4(3)6L[2]SA", "startup": [0.25, 16]},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def cached_warmup(grid: Grid, coeffs: ModelCoefficients, dt: float, t_warmup: float = 10.0,
                  cache_dir: Optional[str] = None) -> SpectralField:
    """:func:`warmup_truth` memoized in-process and optionally on disk.

    Disk entries are written to a temporary file and renamed into place, so
    concurrent writers never expose a partial file.
    """
    plain = ModelCoefficients(coeffs.lam)
    key = _warmup_key(grid, plain, dt, t_warmup)
    coeffs_arr = _WARMUP_MEMO.get(key)
    path = Path(cache_dir) / f"warmup_{key}.npy" if cache_dir else None
    if coeffs_arr is None and path is not None and path.exists():
        coeffs_arr = np.load(path)
    if coeffs_arr is None:
        coeffs_arr = warmup_truth(grid, plain, dt, t_warmup).coeffs
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npy.tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    np.save(fh, coeffs_arr)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
    _WARMUP_MEMO[key] = coeffs_arr
    return SpectralField(coeffs_arr.copy(), grid)


# ---------------------------------------------------------------------------
# experiments

def final_second_errors(series: TimeSeries, window: float = 1.0) -> Tuple[float, ...]:
    """Mean of each parameter error over the last ``window`` time units."""
    if len(series) == 0 or series.param_err.shape[1] == 0:
        return ()
    t_f = series.t[-1]
    sel = series.t >= t_f - window - 1e-9 * max(1.0, abs(t_f))
    return tuple(float(v) for v in series.param_err[sel].mean(axis=0))


def estimate_convergence_rate(series, window: float = 1.0) -> ConvergenceSummary:
    """Convergence time and exponential rate of the state error.

    ``t_c`` is the first time at which ``|w(t)|`` is no larger than its final
    value, and ``beta = -(log|w(t_c)| - log|w(t_0)|) / (t_c - t_0)``.  When
    the error never drops below its starting value, ``t_c`` is reported as the
    final time and ``beta`` is NaN with ``beta_defined=False``.

    >>> w = np.exp(-2.0 * np.array([0.0, 1.0, 2.0, 2.0]))
    >>> series = TimeSeries(np.arange(4.0), w, w, np.zeros((4, 0)))
    >>> s = estimate_convergence_rate(series)
    >>> s.t_c, s.beta == -(math.log(w[2]) - math.log(w[0])) / 2.0
    (2.0, True)
    """
    if not isinstance(series, TimeSeries):
        series = TimeSeries.from_records(list(series))
    if len(series) == 0:
        raise ValueError("empty time series")
    t, w = series.t, series.state_err
    t0, t_f = float(t[0]), float(t[-1])
    final_errors = final_second_errors(series, window)
    final_error = max(final_errors) if final_errors else float("nan")
    finite = np.isfinite(w)
    if not finite.all():
        return ConvergenceSummary(t_f, float("nan"), final_error, final_errors, False)
    idx = int(np.argmax(w <= w[-1]))
    t_c = float(t[idx])
    if t_c <= t0 or not (w[idx] > 0 and w[0] > 0) or not w[idx] < w[0]:
        return ConvergenceSummary(t_f, float("nan"), final_error, final_errors, False)
    beta = -(math.log(w[idx]) - math.log(w[0])) / (t_c - t0)
    return ConvergenceSummary(t_c, beta, final_error, final_errors, True)


def run_twin_experiment(spec: ExperimentSpec,
                        progress: Optional[Callable[[int, int], None]] = None) -> ExperimentResult:
    """Co-evolve truth and assimilated model, estimating ``spec.unknown``.

    The assimilated state starts from the zero field.  A blow-up ends the run
    early; the partial series is kept and the summary carries the diagnostic.
    """
    spec.validate()
    grid = spec.grid()
    model = spec.model()
    truth_model = ModelCoefficients(spec.truth)
    cfg = spec.estimator_config()
    op = spec.observation_operator()
    dt = spec.dt
    n_steps = spec.n_steps
    truth_values = np.array([spec.truth[k - 1] for k in spec.unknown])

    if spec.warmup:
        u = cached_warmup(grid, truth_model, dt, spec.t_warmup, spec.cache_dir)
    else:
        u = warmup_truth(grid, truth_model, dt, 0.0)
    truth_stepper = ImexStepper(grid, truth_model, dt)
    state = initial_state(SpectralField.zeros(grid), spec.initial_guesses(), cfg.p)

    n_par = len(spec.unknown)
    t = np.empty(n_steps + 1)
    state_err = np.empty(n_steps + 1)
    obs_err = np.empty(n_steps + 1)
    param_err = np.empty((n_steps + 1, n_par))
    failure = None
    count = 0
    try:
        for j in range(n_steps):
            u_obs = observe(op, u)
            w_norm = l2_norm(u - state.v)
            state = assimilation_step(state, u_obs, model, cfg, op, dt)
            t[j] = j * dt
            state_err[j] = w_norm
            obs_err[j] = state.obs_error_norm
            param_err[j] = np.abs(truth_values - state.lambda_hat)
            count = j + 1
            u = truth_stepper.step(u, j)
            if progress is not None and j % 1000 == 0:
                progress(j, n_steps)
        t[n_steps] = n_steps * dt
        state_err[n_steps] = l2_norm(u - state.v)
        obs_err[n_steps] = l2_norm(observe(op, u - state.v))
        param_err[n_steps] = np.abs(truth_values - state.lambda_hat)
        count = n_steps + 1
        if not (np.isfinite(state_err[n_steps]) and np.all(np.isfinite(param_err[n_steps]))):
            raise BlowUpError("non-finite diagnostics at final time", n_steps)
    except BlowUpError as exc:
        failure = f"blow-up: {exc}"
        logger.warning("experiment %s terminated: %s", _label(spec), exc)

    series = TimeSeries(t[:count], state_err[:count], obs_err[:count], param_err[:count])
    summary = summarize(series, spec, failure)
    return ExperimentResult(spec, series, summary, tuple(map(float, state.lambda_hat)))


def summarize(series: TimeSeries, spec: ExperimentSpec,
              failure: Optional[str] = None) -> ConvergenceSummary:
    if len(series) == 0:
        return ConvergenceSummary(0.0, float("nan"), float("nan"), (), False, False, False, failure)
    summary = estimate_convergence_rate(series)
    summary.completed = failure is None
    summary.failure = failure
    if spec.unknown:
        metric = summary.final_error
    else:
        # no parameters: judge the relative state error over the final second
        sel = series.t >= series.t[-1] - 1.0 - 1e-12
        metric = float(np.mean(series.state_err[sel]) / series.state_err[0])
    # A run still decaying at t_f has t_c == t_f: it has not synchronized yet.
    summary.plateaued = bool(summary.beta_defined and summary.t_c < float(series.t[-1]))
    summary.converged = bool(summary.completed and summary.plateaued and np.isfinite(metric)
                             and metric <= spec.converge_tol)
    return summary


def _label(spec: ExperimentSpec) -> str:
    return (f"unknown={list(spec.unknown)} {spec.observation_operator().describe()} "
            f"dt={spec.dt:g} mu={spec.mu_value:g} alpha={spec.alpha:g} p={spec.p}")


def _run_cell(spec: ExperimentSpec) -> ConvergenceSummary:
    try:
        return run_twin_experiment(spec).summary
    except (ValueError, BlowUpError) as exc:
        return ConvergenceSummary(float("nan"), float("nan"), float("nan"), (), False,
                                  False, False, f"{type(exc).__name__}: {exc}")


def _map_cells(specs: Sequence[ExperimentSpec], workers: int) -> List[ConvergenceSummary]:
    if workers <= 1 or len(specs) <= 1:
        return [_run_cell(s) for s in specs]
    # warm the shared cache once so workers only read it
    for spec in specs:
        if spec.warmup:
            cached_warmup(spec.grid(), ModelCoefficients(spec.truth), spec.dt,
                          spec.t_warmup, spec.cache_dir)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, specs))


@dataclass
class SweepRow:
    axis_value: float
    beta: float
    t_c: float
    final_error: float
    converged: bool
    failure: Optional[str] = None

    def row(self) -> tuple:
        return (self.axis_value, self.beta, self.t_c, self.final_error, int(self.converged))


def parameter_sweep(base_spec: ExperimentSpec, axis: str, values: Iterable,
                    workers: int = 1) -> List[SweepRow]:
    """One twin experiment per value of ``axis``; failed cells are kept as rows."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    cast = int if axis in ("K", "m") else float
    specs = []
    for val in values:
        specs.append(base_spec.replace(**{axis: cast(val)}))
    summaries = _map_cells(specs, workers)
    return [
        SweepRow(float(val), s.beta, s.t_c, s.final_error, s.converged, s.failure)
        for val, s in zip(values, summaries)
    ]


@dataclass
class OrderStudy:
    rows: List[tuple]
    slopes: Dict[int, float]
    saturation: float

    def slope(self, order: int) -> float:
        return self.slopes[order]


def _loglog_slope(dts: Sequence[float], errors: Sequence[float]) -> float:
    if len(dts) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)


def order_of_accuracy_study(base_spec: ExperimentSpec, dts: Sequence[float],
                            orders: Sequence[int] = (1, 2, 3), saturation: float = 1e-11,
                            workers: int = 1,
                            errors: Optional[Dict[Tuple[int, float], float]] = None
                            ) -> OrderStudy:
    """Final-second parameter error against ``dt`` for each BDF order.

    ``mu`` follows ``1.8 / dt`` unless the base spec fixes it.  Points below
    ``saturation`` or from runs that blew up are excluded from the fit.  The
    parameter tolerance and the plateau test are not applied here: a low-order
    bias well above the tolerance is what the study measures, and a biased run
    hovering at a noisy floor can end on its running minimum by chance.
    ``errors`` may supply precomputed ``{(order, dt): error}`` values instead of
    running experiments.
    """
    cells = [(p, float(dt)) for p in orders for dt in dts]
    if errors is None:
        summaries = _map_cells([base_spec.replace(p=p, dt=dt) for p, dt in cells], workers)
        measured = [(s.final_error, s.completed and np.isfinite(s.final_error))
                    for s in summaries]
    else:
        measured = [(float(errors[c]), bool(np.isfinite(errors[c]))) for c in cells]
    rows = []
    slopes = {}
    for p in orders:
        xs, ys = [], []
        for (order, dt), (err, ok) in zip(cells, measured):
            if order != p:
                continue
            included = bool(ok and err >= saturation)
            rows.append((p, dt, err, int(ok), int(included)))
            if included:
                xs.append(dt)
                ys.append(err)
        slopes[p] = _loglog_slope(xs, ys)
    return OrderStudy(rows, slopes, saturation)


# ---------------------------------------------------------------------------
# output

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(rows: Iterable[Sequence], path, columns: Sequence[str]) -> Path:
    """Header then one line per row, floats at 17 significant digits."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                if len(row) != len(columns):
                    raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def read_csv(path) -> Tuple[List[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def write_metadata(path, spec: ExperimentSpec, **extra) -> Path:
    """JSON sidecar embedding the full experiment spec."""
    path = Path(path)
    payload = {"spec": spec.to_dict(), **extra}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
