#%% Import libraries
"""
Row-decoupled estimators for A in x_{t+1} = A phi(x_t) + w_t.

- ls: one ridge-augmented least-squares solve per row
- huber: IRLS started at the LS solution, weights 1 inside [-mu, mu] and mu/|r| outside
- l1: graduated smoothed IRLS, weights 1/max(|r|, eps) for a decreasing eps schedule
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import DimensionError, InvalidParameterError, NonFiniteError, RankDeficiencyError
from .loss import Method, RegressionData, huber_deriv, huber_value, objective, row_objective

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
DEFAULT_L1_SMOOTHING = (1e-2, 1e-4, 1e-6, 1e-8)
DEFAULT_RIDGE = 1e-10
# converged Huber rows must also pass ||sum_t H'(r_t) phi_t|| < CERT_SCALE * (1 + mu * sum_t ||phi_t||)
CERT_SCALE = 1e-6
HUBER_STEP_TOL = 1e-9


@dataclass(frozen=True)
class EstimatorConfig:
    method: Method
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    l1_smoothing: Tuple[float, ...] = DEFAULT_L1_SMOOTHING
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if isinstance(self.method, str):
            object.__setattr__(self, 'method', Method.parse(self.method))
        smoothing = tuple(float(e) for e in self.l1_smoothing)
        object.__setattr__(self, 'l1_smoothing', smoothing)
        if not self.tol > 0:
            raise InvalidParameterError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if not smoothing or any(e <= 0 for e in smoothing) or any(b >= a for a, b in zip(smoothing, smoothing[1:])):
            raise InvalidParameterError(f"l1_smoothing must be positive and strictly decreasing, got {smoothing}")
        if self.ridge < 0:
            raise InvalidParameterError(f"ridge must be >= 0, got {self.ridge}")

    @property
    def label(self) -> str:
        return self.method.label

    @classmethod
    def ls(cls, **kwargs) -> 'EstimatorConfig':
        return cls(Method.ls(), **kwargs)

    @classmethod
    def l1(cls, **kwargs) -> 'EstimatorConfig':
        return cls(Method.l1(), **kwargs)

    @classmethod
    def huber(cls, mu: float, **kwargs) -> 'EstimatorConfig':
        return cls(Method.huber(mu), **kwargs)


@dataclass(frozen=True)
class RowFit:
    a_row: np.ndarray
    iterations: int
    converged: bool
    gradient_norm: float
    histories: Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class FitResult:
    a_hat: np.ndarray
    per_row_iterations: Tuple[int, ...]
    final_objective: float
    converged: Tuple[bool, ...]
    gradient_norm: Tuple[float, ...]
    histories: Tuple[Tuple[np.ndarray, ...], ...] = field(default=(), repr=False)
    method: Optional[Method] = None

    @property
    def converged_all(self) -> bool:
        return all(self.converged)


#%% Linear algebra helpers
def _weighted_solve(phi: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray], ridge: float, row: int) -> np.ndarray:
    """Minimize ||W^(1/2) (y - phi a)||^2 + ridge ||a||^2 by least squares on the scaled system"""
    if weights is not None:
        root_w = np.sqrt(weights)
        phi = phi * root_w[:, None]
        y = y * root_w
    m = phi.shape[1]
    if ridge:
        phi = np.vstack([phi, np.sqrt(ridge) * np.eye(m)])
        y = np.concatenate([y, np.zeros(m)])
    try:
        a, _, rank, _ = scipy.linalg.lstsq(phi, y, check_finite=True, lapack_driver='gelsd')
    except (np.linalg.LinAlgError, ValueError) as e:
        raise RankDeficiencyError(row, f"least-squares solve failed ({e})")
    if rank < m:
        raise RankDeficiencyError(row, f"weighted regressor matrix has rank {rank} < {m}")
    if not np.all(np.isfinite(a)):
        raise RankDeficiencyError(row, "solve produced non-finite coefficients")
    return a


def huber_gradient_norm(a_row: np.ndarray, phi: np.ndarray, y_col: np.ndarray, mu: float) -> float:
    """||sum_t H'_mu(r_t) phi_t||_2, zero at a Huber stationary point"""
    r = y_col - phi @ a_row
    return float(np.linalg.norm(phi.T @ huber_deriv(r, mu)))


def huber_certificate_threshold(phi: np.ndarray, mu: float) -> float:
    return CERT_SCALE * (1.0 + mu * float(np.sum(np.linalg.norm(phi, axis=1))))


def _relative_decrease_small(prev: float, new: float, tol: float) -> bool:
    return (prev - new) <= tol * max(abs(prev), np.finfo(float).tiny)


#%% Per-row solvers
def _fit_ls_row(phi, y_col, cfg: EstimatorConfig, row: int) -> RowFit:
    a = _weighted_solve(phi, y_col, None, cfg.ridge, row)
    grad = float(np.linalg.norm(phi.T @ (phi @ a) - phi.T @ y_col))
    hist = np.array([row_objective(Method.ls(), a, phi, y_col)])
    return RowFit(a, 1, True, grad, (hist,))


def _irls(phi, y_col, a0, weight_fn, objective_fn, cfg: EstimatorConfig, row: int,
          extra_check=None, step_tol: float = None):
    """
    Generic IRLS loop. Each weighted solve minimizes a quadratic majorizer of the
    objective, so every iterate is accepted. A row is converged once the relative
    objective decrease drops below tol and extra_check(a) holds. With step_tol the
    loop keeps polishing until the max-entry step is below step_tol * (1 + |a|_inf)
    or stops shrinking.

    Returns:
        (a, iterations, converged, history)
    """
    a = a0
    obj = objective_fn(a)
    history = [obj]
    converged = False
    prev_step = np.inf
    for it in range(1, cfg.max_iter + 1):
        r = y_col - phi @ a
        a_new = _weighted_solve(phi, y_col, weight_fn(r), cfg.ridge, row)
        obj_new = objective_fn(a_new)
        step = float(np.max(np.abs(a_new - a)))
        small = _relative_decrease_small(obj, obj_new, cfg.tol)
        a, obj = a_new, obj_new
        history.append(obj)
        converged = small and (extra_check is None or extra_check(a))
        if not converged:
            prev_step = step
            continue
        if step_tol is None or step <= step_tol * (1.0 + np.max(np.abs(a))) or step >= prev_step:
            return a, it, True, np.array(history)
        prev_step = step
    return a, cfg.max_iter, converged, np.array(history)


def _fit_huber_row(phi, y_col, cfg: EstimatorConfig, row: int) -> RowFit:
    mu = cfg.method.mu
    a0 = _weighted_solve(phi, y_col, None, cfg.ridge, row)
    threshold = huber_certificate_threshold(phi, mu)

    def weights(r):
        ar = np.abs(r)
        return np.where(ar <= mu, 1.0, mu / np.maximum(ar, mu))

    def obj(a):
        return row_objective(cfg.method, a, phi, y_col)

    def certified(a):
        return huber_gradient_norm(a, phi, y_col, mu) < threshold

    a, iterations, converged, history = _irls(phi, y_col, a0, weights, obj, cfg, row, certified, HUBER_STEP_TOL)
    return RowFit(a, iterations, converged, huber_gradient_norm(a, phi, y_col, mu), (history,))


def _fit_l1_row(phi, y_col, cfg: EstimatorConfig, row: int) -> RowFit:
    a = _weighted_solve(phi, y_col, None, cfg.ridge, row)
    histories = []
    total = 0
    converged = False
    for eps in cfg.l1_smoothing:
        def weights(r, eps=eps):
            return 1.0 / np.maximum(np.abs(r), eps)

        def smoothed(a_row, eps=eps):
            # H_eps(r)/eps: |r| - eps/2 outside [-eps, eps], r^2/(2 eps) inside
            r = y_col - phi @ a_row
            return float(np.cumsum(huber_value(r, eps))[-1] / eps) if r.size else 0.0

        a, iterations, converged, history = _irls(phi, y_col, a, weights, smoothed, cfg, row)
        total += iterations
        histories.append(history)
    return RowFit(a, total, converged, float('nan'), tuple(histories))


_ROW_SOLVERS = {
    'ls': _fit_ls_row,
    'huber': _fit_huber_row,
    'l1': _fit_l1_row,
}


def _solve_row(data: RegressionData, row: int, cfg: EstimatorConfig) -> RowFit:
    if not 0 <= row < data.n:
        raise DimensionError(f"Row {row} outside [0, {data.n - 1}]")
    if data.T < data.m:
        raise RankDeficiencyError(row, f"{data.T} samples < {data.m} basis functions")
    phi = data.phi
    y_col = np.ascontiguousarray(data.y[:, row])
    return _ROW_SOLVERS[cfg.method.name](phi, y_col, cfg, row)


#%% Public API
def fit_rowwise(data: RegressionData, row: int, cfg: EstimatorConfig) -> np.ndarray:
    """Estimate row `row` of A only (same code path as fit)"""
    return _solve_row(data, row, cfg).a_row


def fit(data: RegressionData, cfg: EstimatorConfig, max_workers: int = 1) -> FitResult:
    """
    Fit every row of A with the configured method.

    Args:
        data: Regression samples (phi(x_t), x_{t+1})
        cfg: Method and solver controls
        max_workers: Threads used to solve rows concurrently (result does not depend on it)

    Returns:
        FitResult; rows that hit max_iter come back with converged=False

    Raises:
        RankDeficiencyError: T < m or a weighted Gram matrix that cannot be factored
    """
    if not (np.all(np.isfinite(data.phi)) and np.all(np.isfinite(data.y))):
        raise NonFiniteError("Regression data contains non-finite values")
    rows = range(data.n)
    if max_workers and max_workers > 1 and data.n > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            row_fits: List[RowFit] = list(executor.map(lambda i: _solve_row(data, i, cfg), rows))
    else:
        row_fits = [_solve_row(data, i, cfg) for i in rows]

    a_hat = np.vstack([rf.a_row for rf in row_fits])
    a_hat.setflags(write=False)
    return FitResult(
        a_hat=a_hat,
        per_row_iterations=tuple(rf.iterations for rf in row_fits),
        final_objective=objective(cfg.method, a_hat, data),
        converged=tuple(rf.converged for rf in row_fits),
        gradient_norm=tuple(rf.gradient_norm for rf in row_fits),
        histories=tuple(rf.histories for rf in row_fits),
        method=cfg.method,
    )
