#%% Import libraries
"""
Trajectory rollouts and diagnostics: simulate the true system under a
disturbance spec, replay an estimate without noise, and report the
stability / excitation quantities the error guarantees depend on.
"""

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from .core import BasisLibrary, SystemModel, Trajectory, as_mat, as_vector, eval_basis
from .disturbance import DisturbanceSpec, RngStream, draw_disturbance
from .errors import ConfigError, DimensionError, DivergenceError, InsufficientDataError, InvalidParameterError

DIVERGENCE_CUTOFF = 1e12
DEFAULT_REGION_HALF_WIDTH = 5.0
DEFAULT_LIPSCHITZ_SAMPLES = 10_000
POWER_ITER_TOL = 1e-10
POWER_ITER_MAX = 10_000


#%% Rollouts
def _rollout(a: np.ndarray, basis: BasisLibrary, x0: np.ndarray, T: int,
             spec: Optional[DisturbanceSpec], rng: Optional[RngStream],
             cutoff: float) -> Trajectory:
    n = basis.state_dim
    states = np.empty((T + 1, n))
    disturbances = np.zeros((T, n))
    flags = np.zeros(T, dtype=bool) if spec is not None else None
    states[0] = x0

    for t in range(T):
        x_next = a @ eval_basis(basis, states[t])
        if spec is not None:
            w_t, attacked = draw_disturbance(spec, states[t], rng)
            disturbances[t] = w_t
            flags[t] = attacked
            x_next = x_next + w_t
        norm = float(np.linalg.norm(x_next))
        if not np.isfinite(norm) or norm > cutoff:
            raise DivergenceError(step=t + 1, norm=norm, cutoff=cutoff)
        states[t + 1] = x_next

    return Trajectory(states, disturbances, flags)


def simulate(model: SystemModel, spec: DisturbanceSpec, x0, T: int, rng: RngStream,
             cutoff: float = DIVERGENCE_CUTOFF) -> Trajectory:
    """
    Roll out x_{t+1} = a_bar phi(x_t) + w_t for T steps.

    Args:
        model: True system
        spec: Disturbance regime; w_t is drawn from it given x_t
        x0: Initial state
        T: Number of transitions (>= 1)
        rng: Stream consumed in time order (prefixes of a longer run are identical)
        cutoff: State norm that counts as divergence

    Returns:
        Trajectory with states x_0..x_T, disturbances and attack flags

    Raises:
        DivergenceError: naming the first t whose state norm exceeds the cutoff
    """
    if T < 1:
        raise InvalidParameterError(f"T must be >= 1, got {T}")
    x0 = as_vector(x0, model.n, name='x0')
    spec.check_dim(model.n)
    return _rollout(model.a_bar, model.basis, x0, T, spec, rng, cutoff)


def reconstruct(a_hat, basis: BasisLibrary, x0, T: int, cutoff: float = DIVERGENCE_CUTOFF) -> Trajectory:
    """Noise-free rollout x_{t+1} = a_hat phi(x_t); divergence of bad estimates raises DivergenceError"""
    a_hat = as_mat(a_hat, basis.state_dim, basis.size, name='a_hat')
    x0 = as_vector(x0, basis.state_dim, name='x0')
    if T < 0:
        raise InvalidParameterError(f"T must be >= 0, got {T}")
    return _rollout(a_hat, basis, x0, T, None, None, cutoff)


def transition_residuals(traj: Trajectory, model: SystemModel) -> np.ndarray:
    """Per-step norms ||x_{t+1} - a_bar phi(x_t) - w_t||"""
    phi = eval_basis(model.basis, traj.states[:-1])
    gap = traj.states[1:] - phi @ model.a_bar.T - traj.disturbances
    return np.linalg.norm(gap, axis=1)


#%% Stability diagnostics
@dataclass(frozen=True)
class AssumptionReport:
    rho: float
    lipschitz_est: float
    rho_L: float
    stable: bool
    phi0_norm: float
    power_iterations: int = 0
    region_half_width: float = DEFAULT_REGION_HALF_WIDTH
    samples: int = 0

    def as_dict(self):
        return {
            'rho': self.rho,
            'lipschitz_est': self.lipschitz_est,
            'rho_L': self.rho_L,
            'stable': self.stable,
            'phi0_norm': self.phi0_norm,
            'power_iterations': self.power_iterations,
            'region_half_width': self.region_half_width,
            'samples': self.samples,
        }


def spectral_norm(a, rng: RngStream = None, tol: float = POWER_ITER_TOL, max_iter: int = POWER_ITER_MAX):
    """
    Largest singular value of `a` by power iteration on a^T a.

    Returns:
        (sigma_max, iterations)
    """
    a = np.asarray(a, dtype=np.float64)
    gram = a.T @ a
    m = gram.shape[0]
    if not np.any(gram):
        return 0.0, 0

    v = rng.normal(1.0, m) if rng is not None else np.ones(m)
    v = v / np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = gram @ v
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            # start vector in the null space; restart on a coordinate axis
            v = np.zeros(m)
            v[it % m] = 1.0
            continue
        v = y / y_norm
        lam_new = float(v @ gram @ v)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return float(np.sqrt(max(lam_new, 0.0))), it
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0))), max_iter


def estimate_lipschitz(basis: BasisLibrary, half_width: float, samples: int, rng: RngStream) -> float:
    """
    Max of ||phi(x) - phi(y)|| / ||x - y|| over random pairs in [-h, h]^n.
    Pairs are drawn row by row, so a larger sample count only adds pairs.
    """
    pairs = rng.uniform(-half_width, half_width, (samples, 2, basis.state_dim))
    x, y = pairs[:, 0, :], pairs[:, 1, :]
    dx = np.linalg.norm(x - y, axis=1)
    dphi = np.linalg.norm(eval_basis(basis, x) - eval_basis(basis, y), axis=1)
    keep = dx > 0
    if not np.any(keep):
        return 0.0
    return float(np.max(dphi[keep] / dx[keep]))


def check_assumptions(model: SystemModel, sample_region_half_width: float = DEFAULT_REGION_HALF_WIDTH,
                      samples: int = DEFAULT_LIPSCHITZ_SAMPLES, rng: RngStream = None) -> AssumptionReport:
    """
    Report rho = ||a_bar||_2, a sampled Lipschitz constant L of phi over the
    hypercube, the product rho*L (stable when < 1) and ||phi(0)||.
    phi(0) != 0 is reported, not rejected.
    """
    if samples < 2:
        raise InvalidParameterError(f"samples must be >= 2, got {samples}")
    if sample_region_half_width <= 0:
        raise InvalidParameterError(f"Region half width must be > 0, got {sample_region_half_width}")
    if rng is None:
        rng = RngStream(0, 0)

    rho, iterations = spectral_norm(model.a_bar, rng)
    lipschitz = estimate_lipschitz(model.basis, sample_region_half_width, samples, rng)
    phi0 = eval_basis(model.basis, np.zeros(model.n))
    rho_l = rho * lipschitz
    return AssumptionReport(
        rho=rho,
        lipschitz_est=lipschitz,
        rho_L=rho_l,
        stable=bool(rho_l < 1),
        phi0_norm=float(np.linalg.norm(phi0)),
        power_iterations=iterations,
        region_half_width=float(sample_region_half_width),
        samples=int(samples),
    )


#%% Excitation diagnostics
@dataclass(frozen=True)
class ExcitationReport:
    lambda_min_sq: float
    subset_size: int


def empirical_excitation(traj: Trajectory, basis: BasisLibrary,
                         subset: Optional[Sequence[int]] = None) -> ExcitationReport:
    """
    Smallest eigenvalue of (1/|T'|) sum_{t in T'} phi(x_t) phi(x_t)^T.

    This is the sample surrogate of the expected-excitation conditions, which are
    stated in conditional expectation and cannot be evaluated from one run.
    """
    T = traj.length
    if subset is None:
        idx = np.arange(T)
    else:
        idx = np.sort(np.asarray(list(subset), dtype=int))
        if idx.size and (idx[0] < 0 or idx[-1] > T - 1):
            raise DimensionError(f"Subset indices must lie in [0, {T - 1}]")
    if idx.size == 0:
        raise InsufficientDataError("Excitation needs at least one time index")

    phi = eval_basis(basis, traj.states[idx])
    gram = phi.T @ phi / idx.size
    lam = scipy.linalg.eigh(gram, eigvals_only=True, subset_by_index=[0, 0])[0]
    return ExcitationReport(lambda_min_sq=max(float(lam), 0.0), subset_size=int(idx.size))


def noise_mass_near_zero(traj: Trajectory, mu: float) -> float:
    """Fraction of disturbance coordinates with |w| <= mu/2 (empirical q for a given mu)"""
    if mu <= 0:
        raise InvalidParameterError(f"mu must be > 0, got {mu}")
    if traj.length == 0:
        raise InsufficientDataError("Trajectory has no disturbances")
    return float(np.mean(np.abs(traj.disturbances) <= mu / 2))


#%% Trajectory CSV
def trajectory_columns(n: int):
    return ['t'] + [f'x_{i}' for i in range(n)] + [f'w_{i}' for i in range(n)] + ['attacked']


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """Row t holds x_t and the w_t that produced x_{t+1}; the last row has empty w / attacked"""
    n, T = traj.state_dim, traj.length
    df = pd.DataFrame({'t': np.arange(T + 1)})
    for i in range(n):
        df[f'x_{i}'] = traj.states[:, i]
    w = np.vstack([traj.disturbances, np.full((1, n), np.nan)])
    for i in range(n):
        df[f'w_{i}'] = w[:, i]
    attacked = pd.array([None] * (T + 1), dtype='Int64')
    if traj.attack_flags is not None:
        attacked[:T] = traj.attack_flags.astype(int)
    df['attacked'] = attacked
    return df


def write_trajectory(traj: Trajectory, path: str):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    trajectory_frame(traj).to_csv(path, index=False, float_format='%.17g', na_rep='')


def read_trajectory(path: str, state_dim: int = None) -> Trajectory:
    """Load a trajectory CSV written by write_trajectory; malformed files raise ConfigError"""
    if not os.path.exists(path):
        raise ConfigError(f"Trajectory file not found: {path}", field='trajectory')
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ConfigError(f"Could not parse trajectory CSV {path}: {e}", field='trajectory')

    n = (len(df.columns) - 2) // 2
    if n < 1 or list(df.columns) != trajectory_columns(n):
        raise ConfigError(f"Unexpected trajectory header in {path}: {list(df.columns)}", field='trajectory')
    if state_dim is not None and n != state_dim:
        raise ConfigError(f"Trajectory has state dimension {n}, model expects {state_dim}", field='trajectory')
    if len(df) < 2:
        raise ConfigError(f"Trajectory {path} needs at least two states", field='trajectory')

    try:
        states = df[[f'x_{i}' for i in range(n)]].to_numpy(dtype=np.float64)
        w = df[[f'w_{i}' for i in range(n)]].to_numpy(dtype=np.float64)
        attacked = pd.to_numeric(df['attacked'], errors='raise').to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"Non-numeric values in trajectory {path}: {e}", field='trajectory')

    if not np.all(np.isnan(w[-1])):
        raise ConfigError("Last trajectory row must have empty disturbance fields", field='trajectory')
    flags = None
    missing = np.isnan(attacked[:-1])
    if missing.any() and not missing.all():
        raise ConfigError(f"Attack flags in {path} are empty on some rows only", field='trajectory')
    if not missing.all():
        flags = attacked[:-1] != 0
    try:
        return Trajectory(states, w[:-1], flags)
    except ValueError as e:
        raise ConfigError(f"Invalid trajectory {path}: {e}", field='trajectory')
