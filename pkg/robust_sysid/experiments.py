#%% Import libraries
"""
Experiment harness: error-vs-T sweeps, log-log slope fits, bounded-error
checks, reconstruction stability and the mu trade-off sweep.
All randomness comes from derive_stream(master_seed, seed_index), so reports
do not depend on how trials are scheduled.
"""

import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from .core import SystemModel, as_vector
from .disturbance import DisturbanceSpec, RngStream, derive_stream
from .errors import DivergenceError, InsufficientDataError, InvalidParameterError, SysIdError
from .estimators import EstimatorConfig, fit
from .loss import Method, regression_data
from .simulate import DIVERGENCE_CUTOFF, empirical_excitation, reconstruct, simulate

DEFAULT_T_GRID = (40, 60, 100, 150, 200, 300, 400, 600, 800, 1000, 1500, 2000, 2500)
DEFAULT_SEEDS = 20
REPORT_COLUMNS = ['T', 'seed', 'method', 'frob_error', 'row_errors', 'converged', 'lambda_min_sq', 'wall_time_ms']


def frobenius_error(a_hat, a_bar) -> float:
    return float(np.linalg.norm(np.asarray(a_bar) - np.asarray(a_hat), 'fro'))


def row_l2_errors(a_hat, a_bar) -> List[float]:
    return [float(v) for v in np.linalg.norm(np.asarray(a_bar) - np.asarray(a_hat), axis=1)]


def _method_label(method: Union[str, Method, EstimatorConfig]) -> str:
    if isinstance(method, EstimatorConfig):
        return method.label
    if isinstance(method, Method):
        return method.label
    return Method.parse(method).label


def _fmt(x: float) -> str:
    return 'nan' if x is None or not np.isfinite(x) else '%.17g' % x


#%% Sweep configuration and report
@dataclass(frozen=True)
class SweepConfig:
    model: SystemModel
    spec: DisturbanceSpec
    x0: Tuple[float, ...]
    t_grid: Tuple[int, ...] = DEFAULT_T_GRID
    seeds: int = DEFAULT_SEEDS
    methods: Tuple[EstimatorConfig, ...] = (EstimatorConfig.ls(), EstimatorConfig.l1(), EstimatorConfig.huber(0.1))
    master_seed: int = 0
    record_timing: bool = False
    max_workers: int = 1
    verbose: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'x0', tuple(as_vector(self.x0, self.model.n, name='x0')))
        grid = tuple(int(t) for t in self.t_grid)
        object.__setattr__(self, 't_grid', grid)
        object.__setattr__(self, 'methods', tuple(self.methods))
        if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidParameterError(f"t_grid must be strictly ascending positive counts, got {grid}")
        if self.seeds < 1:
            raise InvalidParameterError(f"seeds must be >= 1, got {self.seeds}")
        if not self.methods:
            raise InvalidParameterError("At least one estimation method is required")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise InvalidParameterError(f"Duplicate methods in sweep: {labels}")
        self.spec.check_dim(self.model.n)


class SweepReport:
    """
    One row per (T, seed, method), kept in a DataFrame in canonical
    (T, seed, method order) key order.
    """

    def __init__(self, frame: pd.DataFrame):
        missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"Sweep report is missing columns {missing}")
        frame = frame.assign(converged=frame['converged'].astype(bool))
        if 'status' not in frame.columns:
            frame = frame.assign(status=np.where(frame['converged'], 'ok', 'flagged'))
        self.frame = frame.reset_index(drop=True)

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_records(cls, records: Sequence[Dict[str, Any]]) -> 'SweepReport':
        frame = pd.DataFrame(list(records))
        if 'row_errors' not in frame.columns:
            frame['row_errors'] = [[] for _ in range(len(frame))]
        for col, default in (('converged', True), ('lambda_min_sq', float('nan')), ('wall_time_ms', 0.0)):
            if col not in frame.columns:
                frame[col] = default
        return cls(frame)

    def methods(self) -> List[str]:
        return list(dict.fromkeys(self.frame['method']))

    def to_frame(self) -> pd.DataFrame:
        """CSV-ready string table (17 significant digits, row errors joined by ';')"""
        f = self.frame
        return pd.DataFrame({
            'T': f['T'].astype(int).astype(str),
            'seed': f['seed'].astype(int).astype(str),
            'method': f['method'].astype(str),
            'frob_error': [_fmt(v) for v in f['frob_error']],
            'row_errors': [';'.join(_fmt(v) for v in errs) for errs in f['row_errors']],
            'converged': ['1' if c else '0' for c in f['converged']],
            'lambda_min_sq': [_fmt(v) for v in f['lambda_min_sq']],
            'wall_time_ms': [_fmt(v) for v in f['wall_time_ms']],
        }, columns=REPORT_COLUMNS)

    def to_csv(self, path: str = None) -> str:
        text = self.to_frame().to_csv(index=False, lineterminator='\n')
        if path is not None:
            with open(path, 'w', newline='') as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path: str) -> 'SweepReport':
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
        frame = pd.DataFrame({
            'T': raw['T'].astype(int),
            'seed': raw['seed'].astype(int),
            'method': raw['method'],
            'frob_error': raw['frob_error'].astype(float),
            'row_errors': [[float(v) for v in s.split(';')] if s else [] for s in raw['row_errors']],
            'converged': raw['converged'] == '1',
            'lambda_min_sq': raw['lambda_min_sq'].astype(float),
            'wall_time_ms': raw['wall_time_ms'].astype(float),
        })
        return cls(frame)

    def mean_errors(self, method, t_min: int = 0) -> pd.Series:
        """
        Mean Frobenius error over seeds per T (T >= t_min), using converged rows only.
        Reduction order is fixed by sorting on (T, seed).
        """
        label = _method_label(method)
        f = self.frame
        sel = f[(f['method'] == label) & (f['T'] >= t_min) & f['converged'] & np.isfinite(f['frob_error'])]
        sel = sel.sort_values(['T', 'seed'], kind='mergesort')
        return sel.groupby('T', sort=True)['frob_error'].mean()

    def summary(self) -> pd.DataFrame:
        """Per (method, T): mean / max Frobenius error and flagged row count"""
        f = self.frame.sort_values(['T', 'seed'], kind='mergesort')
        grouped = f.groupby(['method', 'T'], sort=False)
        out = grouped.agg(mean_error=('frob_error', 'mean'),
                          max_error=('frob_error', 'max'),
                          flagged=('converged', lambda c: int((~c).sum())),
                          rows=('converged', 'size'))
        return out.reset_index()


#%% Sweep runner
def _flagged_records(T: int, seed: int, cfg: SweepConfig, status: str, lam: float = float('nan')):
    return [{
        'T': T, 'seed': seed, 'method': m.label, 'frob_error': float('nan'),
        'row_errors': [float('nan')] * cfg.model.n, 'converged': False,
        'lambda_min_sq': lam, 'wall_time_ms': 0.0, 'status': status,
    } for m in cfg.methods]


def _run_seed(cfg: SweepConfig, seed: int, progress) -> List[Dict[str, Any]]:
    model = cfg.model
    rng = derive_stream(cfg.master_seed, seed)
    records = []
    try:
        traj = simulate(model, cfg.spec, cfg.x0, max(cfg.t_grid), rng)
    except DivergenceError as e:
        if cfg.verbose:
            print(f"[sweep] seed={seed} diverged: {e}", file=sys.stderr)
        for T in cfg.t_grid:
            records += _flagged_records(T, seed, cfg, 'diverged')
            progress(T, seed, len(cfg.methods))
        return records

    for T in cfg.t_grid:
        # prefix reuse: the first T transitions of the longest run
        data = regression_data(traj, model.basis, T)
        try:
            lam = empirical_excitation(traj.prefix(T), model.basis).lambda_min_sq
        except SysIdError:
            lam = float('nan')
        for method_cfg in cfg.methods:
            start = time.perf_counter()
            try:
                result = fit(data, method_cfg)
                record = {
                    'frob_error': frobenius_error(result.a_hat, model.a_bar),
                    'row_errors': row_l2_errors(result.a_hat, model.a_bar),
                    'converged': result.converged_all,
                    'status': 'ok' if result.converged_all else 'not_converged',
                }
            except SysIdError as e:
                record = {
                    'frob_error': float('nan'),
                    'row_errors': [float('nan')] * model.n,
                    'converged': False,
                    'status': type(e).__name__,
                }
            elapsed = (time.perf_counter() - start) * 1000.0
            record.update({
                'T': T, 'seed': seed, 'method': method_cfg.label, 'lambda_min_sq': lam,
                'wall_time_ms': elapsed if cfg.record_timing else 0.0,
            })
            records.append(record)
            progress(T, seed, 1)
    return records


def run_sweep(cfg: SweepConfig) -> SweepReport:
    """
    Simulate one trajectory of length max(t_grid) per seed, fit every method on
    each T-prefix and collect errors and diagnostics.

    Divergence, rank deficiency and non-convergence become flagged rows.
    """
    total = len(cfg.t_grid) * cfg.seeds * len(cfg.methods)
    done = [0]
    lock = threading.Lock()

    def progress(T, seed, k):
        with lock:
            done[0] += k
            count = done[0]
        if cfg.verbose:
            print(f"[sweep] {count}/{total} T={T} seed={seed}", file=sys.stderr)

    seeds = range(cfg.seeds)
    if cfg.max_workers and cfg.max_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as executor:
            per_seed = list(executor.map(lambda s: _run_seed(cfg, s, progress), seeds))
    else:
        per_seed = [_run_seed(cfg, s, progress) for s in seeds]

    order = {m.label: k for k, m in enumerate(cfg.methods)}
    records = [r for chunk in per_seed for r in chunk]
    records.sort(key=lambda r: (r['T'], r['seed'], order[r['method']]))
    frame = pd.DataFrame(records, columns=REPORT_COLUMNS + ['status'])
    return SweepReport(frame)


#%% Rate checks
@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    t_range: Tuple[int, int]
    points: int


def fit_slope(report: SweepReport, method, t_min: int = 0) -> SlopeFit:
    """OLS fit of log(mean Frobenius error over seeds) against log T, for T >= t_min"""
    means = report.mean_errors(method, t_min)
    means = means[means > 0]
    if len(means) < 4:
        raise InsufficientDataError(
            f"Slope fit for {_method_label(method)} needs >= 4 distinct T >= {t_min} with converged rows, got {len(means)}")
    log_t = np.log(means.index.to_numpy(dtype=np.float64))
    log_e = np.log(means.to_numpy(dtype=np.float64))
    res = stats.linregress(log_t, log_e)
    return SlopeFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue ** 2),
        t_range=(int(means.index.min()), int(means.index.max())),
        points=int(len(means)),
    )


def bounded_error_check(report: SweepReport, method, t_min: int = 0) -> Tuple[float, SlopeFit]:
    """
    Max mean error over T >= t_min plus the slope fit. The caller decides the
    bound (a multiple of mu) and the non-growth tolerance on the slope.
    """
    slope = fit_slope(report, method, t_min)
    means = report.mean_errors(method, t_min)
    return float(means.max()), slope


#%% Reconstruction stability
@dataclass(frozen=True)
class StabilityOutcome:
    label: str
    max_norm: float
    diverged: bool
    final_state: Optional[np.ndarray]
    max_deviation: float = float('nan')
    diverged_at: Optional[int] = None
    status: str = 'ok'
    a_hat: Optional[np.ndarray] = field(default=None, repr=False)


def _rollout_outcome(label, a, model, x0, T, truth, cutoff) -> StabilityOutcome:
    try:
        traj = reconstruct(a, model.basis, x0, T, cutoff=cutoff)
    except DivergenceError as e:
        return StabilityOutcome(label, float(e.norm), True, None, float('inf'), e.step, 'diverged', a)
    deviation = float('nan') if truth is None else float(np.max(np.linalg.norm(traj.states - truth.states, axis=1)))
    return StabilityOutcome(label, traj.max_norm(), False, traj.states[-1].copy(), deviation, None, 'ok', a)


def stability_study(model: SystemModel, spec: DisturbanceSpec, x0, T: int,
                    methods: Sequence[EstimatorConfig], rng: RngStream,
                    cutoff: float = DIVERGENCE_CUTOFF) -> Dict[str, StabilityOutcome]:
    """
    Simulate once, fit each method on the full trajectory, then replay the true
    matrix and every estimate noise-free from x0. Divergence is reported, not raised.

    Returns:
        Dict keyed by 'true' and each method label
    """
    outcomes: Dict[str, StabilityOutcome] = {}
    try:
        truth = reconstruct(model.a_bar, model.basis, x0, T, cutoff=cutoff)
        outcomes['true'] = StabilityOutcome('true', truth.max_norm(), False, truth.states[-1].copy(),
                                            0.0, None, 'ok', model.a_bar)
    except DivergenceError as e:
        truth = None
        outcomes['true'] = StabilityOutcome('true', float(e.norm), True, None, float('inf'), e.step,
                                            'diverged', model.a_bar)

    try:
        traj = simulate(model, spec, x0, T, rng, cutoff=cutoff)
    except DivergenceError as e:
        # no data to fit: every method inherits the simulation's divergence
        for m in methods:
            outcomes[m.label] = StabilityOutcome(m.label, float('nan'), True, None, float('inf'), e.step,
                                                 'simulation_diverged')
        return outcomes

    data = regression_data(traj, model.basis)
    for method_cfg in methods:
        try:
            result = fit(data, method_cfg)
        except SysIdError as e:
            outcomes[method_cfg.label] = StabilityOutcome(method_cfg.label, float('nan'), False, None,
                                                          status=type(e).__name__)
            continue
        outcomes[method_cfg.label] = _rollout_outcome(method_cfg.label, result.a_hat, model, x0, T, truth, cutoff)
    return outcomes


def stability_frame(outcomes: Dict[str, StabilityOutcome]) -> pd.DataFrame:
    """Columns method,max_norm,diverged,max_deviation,final_x_0..final_x_{n-1},diverged_at,status"""
    n = max((len(o.final_state) for o in outcomes.values() if o.final_state is not None), default=0)
    final_cols = [f'final_x_{i}' for i in range(n)]
    rows = []
    for label, o in outcomes.items():
        row = {'method': label, 'max_norm': o.max_norm, 'diverged': o.diverged, 'max_deviation': o.max_deviation}
        final = o.final_state if o.final_state is not None else [float('nan')] * n
        row.update(zip(final_cols, final))
        row.update({'diverged_at': o.diverged_at, 'status': o.status})
        rows.append(row)
    columns = ['method', 'max_norm', 'diverged', 'max_deviation'] + final_cols + ['diverged_at', 'status']
    return pd.DataFrame(rows, columns=columns)


#%% mu trade-off
def mu_sweep(model: SystemModel, spec: DisturbanceSpec, x0, T: int, mu_grid: Sequence[float],
             rng: RngStream, **solver_kwargs) -> pd.DataFrame:
    """
    Huber fits over a grid of thresholds on one trajectory, with LS and L1 references.
    Large mu drifts toward the LS estimate, small mu toward the L1 estimate.
    """
    if not len(mu_grid):
        raise InvalidParameterError("mu_grid is empty")
    traj = simulate(model, spec, x0, T, rng)
    data = regression_data(traj, model.basis)
    ls_fit = fit(data, EstimatorConfig.ls(**solver_kwargs))
    l1_fit = fit(data, EstimatorConfig.l1(**solver_kwargs))

    rows = []
    for mu in sorted(float(m) for m in mu_grid):
        result = fit(data, EstimatorConfig.huber(mu, **solver_kwargs))
        rows.append({
            'mu': mu,
            'frob_error': frobenius_error(result.a_hat, model.a_bar),
            'dist_to_ls': frobenius_error(result.a_hat, ls_fit.a_hat),
            'dist_to_l1': frobenius_error(result.a_hat, l1_fit.a_hat),
            'converged': result.converged_all,
            'ls_frob_error': frobenius_error(ls_fit.a_hat, model.a_bar),
            'l1_frob_error': frobenius_error(l1_fit.a_hat, model.a_bar),
        })
    return pd.DataFrame(rows)
