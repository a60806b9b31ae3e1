#%% Import libraries
"""
Huber loss machinery and the objective functions of the three estimators.

The Huber estimator
    min_A  sum_t sum_i H_mu(x_{t+1,i} - a_i^T phi(x_t))
is equivalent to the lasso-type problem
    min_{A, v}  sum_t 1/2 ||x_{t+1} - A phi(x_t) - v_t||^2 + mu ||v_t||_1
whose inner minimizer over v is the soft threshold of the residual by mu (inner_v).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import BasisLibrary, Trajectory, as_mat, eval_basis
from .errors import DimensionError, InvalidParameterError


#%% Estimation method tag
@dataclass(frozen=True)
class Method:
    name: str
    mu: Optional[float] = None

    def __post_init__(self):
        if self.name not in ('ls', 'l1', 'huber'):
            raise InvalidParameterError(f"Unknown method '{self.name}' (expected ls, l1 or huber)")
        if self.name == 'huber':
            if self.mu is None or not np.isfinite(self.mu) or self.mu <= 0:
                raise InvalidParameterError(f"Huber threshold mu must be > 0, got {self.mu}")
            object.__setattr__(self, 'mu', float(self.mu))
        elif self.mu is not None:
            raise InvalidParameterError(f"Method '{self.name}' takes no mu")

    @classmethod
    def ls(cls) -> 'Method':
        return cls('ls')

    @classmethod
    def l1(cls) -> 'Method':
        return cls('l1')

    @classmethod
    def huber(cls, mu: float) -> 'Method':
        return cls('huber', float(mu))

    @property
    def label(self) -> str:
        """Short label used in reports: 'ls', 'l1', 'huber(0.1)'"""
        return f"huber({self.mu!r})" if self.name == 'huber' else self.name

    @classmethod
    def parse(cls, text: str) -> 'Method':
        """Accepts 'ls', 'l1', 'huber 0.1' and the label form 'huber(0.1)'"""
        text = text.strip().lower()
        if text.startswith('huber(') and text.endswith(')'):
            return cls.huber(float(text[6:-1]))
        parts = text.split()
        if len(parts) == 2 and parts[0] == 'huber':
            return cls.huber(float(parts[1]))
        if len(parts) == 1:
            return cls(parts[0])
        raise InvalidParameterError(f"Cannot parse method '{text}'")


#%% Regression data
@dataclass(frozen=True)
class RegressionData:
    phi: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        phi = as_mat(self.phi, name='phi')
        y = as_mat(self.y, rows=phi.shape[0], name='y')
        object.__setattr__(self, 'phi', phi)
        object.__setattr__(self, 'y', y)

    @property
    def T(self) -> int:
        return self.phi.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    @property
    def n(self) -> int:
        return self.y.shape[1]

    def permuted(self, order) -> 'RegressionData':
        order = np.asarray(order)
        return RegressionData(self.phi[order], self.y[order])


def regression_data(traj: Trajectory, basis: BasisLibrary, T: int = None) -> RegressionData:
    """Pairs (phi(x_t), x_{t+1}) for t < T (all transitions when T is None)"""
    if T is None:
        T = traj.length
    if T < 0 or T > traj.length:
        raise DimensionError(f"Requested {T} samples from a trajectory with {traj.length} transitions")
    if traj.state_dim != basis.state_dim:
        raise DimensionError(f"Trajectory state dimension {traj.state_dim} != basis state_dim {basis.state_dim}")
    return RegressionData(eval_basis(basis, traj.states[:T]).reshape(T, basis.size), traj.states[1:T + 1])


def residuals(a, data: RegressionData) -> np.ndarray:
    """(T, n) matrix of y_t - a phi_t"""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (data.n, data.m):
        raise DimensionError(f"Coefficient matrix has shape {a.shape}, data needs ({data.n}, {data.m})")
    return data.y - data.phi @ a.T


#%% Scalar pieces
def _check_mu(mu: float):
    if not mu > 0:
        raise InvalidParameterError(f"mu must be > 0, got {mu}")


def _scalar_or_array(out, z):
    return float(out) if np.ndim(z) == 0 else out


def huber_value(z, mu: float):
    """z^2/2 for |z| <= mu, mu|z| - mu^2/2 otherwise (elementwise)"""
    _check_mu(mu)
    z = np.asarray(z, dtype=np.float64)
    az = np.abs(z)
    out = np.where(az <= mu, 0.5 * z * z, mu * az - 0.5 * mu * mu)
    return _scalar_or_array(out, z)


def huber_deriv(z, mu: float):
    """Derivative of huber_value: z clipped to [-mu, mu]"""
    _check_mu(mu)
    z = np.asarray(z, dtype=np.float64)
    out = np.clip(z, -mu, mu)
    return _scalar_or_array(out, z)


def inner_v(residual, mu: float):
    """Soft threshold sign(r) * max(|r| - mu, 0); the minimizing v of the lasso form"""
    _check_mu(mu)
    r = np.asarray(residual, dtype=np.float64)
    out = np.where(r > mu, r - mu, np.where(r < -mu, r + mu, 0.0))
    return _scalar_or_array(out, r)


def _ordered_sum(entries: np.ndarray) -> float:
    # sequential sum over t then i; np.sum would reorder pairwise
    flat = np.ascontiguousarray(entries).ravel()
    if flat.size == 0:
        return 0.0
    return float(np.cumsum(flat)[-1])


#%% Objectives
def objective(method: Method, a, data: RegressionData) -> float:
    """
    ls -> sum_t ||y_t - a phi_t||_2^2
    l1 -> sum_t ||y_t - a phi_t||_1
    huber -> sum_t sum_i H_mu(residual_{t,i})
    """
    r = residuals(a, data)
    if method.name == 'ls':
        return _ordered_sum(r * r)
    if method.name == 'l1':
        return _ordered_sum(np.abs(r))
    return _ordered_sum(huber_value(r, method.mu))


def lasso_form_objective(a, v, data: RegressionData, mu: float) -> float:
    """sum_t [ 1/2 ||y_t - a phi_t - v_t||^2 + mu ||v_t||_1 ]"""
    _check_mu(mu)
    r = residuals(a, data)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != r.shape:
        raise DimensionError(f"v has shape {v.shape}, expected {r.shape}")
    gap = r - v
    return _ordered_sum(0.5 * gap * gap + mu * np.abs(v))


def row_objective(method: Method, a_row: np.ndarray, phi: np.ndarray, y_col: np.ndarray) -> float:
    """Objective restricted to one output coordinate (the problems decouple by row)"""
    r = y_col - phi @ a_row
    if method.name == 'ls':
        return _ordered_sum(r * r)
    if method.name == 'l1':
        return _ordered_sum(np.abs(r))
    return _ordered_sum(huber_value(r, method.mu))
