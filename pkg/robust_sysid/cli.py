#%% Import libraries
"""
Command-line front end.

    python -m robust_sysid simulate  <config>
    python -m robust_sysid fit       <config> <trajectory.csv>
    python -m robust_sysid sweep     <config>
    python -m robust_sysid check     <config> [--trajectory traj.csv] [--mu 0.1]
    python -m robust_sysid stability <config>
    python -m robust_sysid musweep   <config>

Exit codes: 0 ok, 2 config / input error, 3 divergence, 4 numerical failure.
"""

import argparse
import os
import sys
from typing import List, Optional

import numpy as np
import pandas as pd

from .config_utils import RunConfig, load_run_config
from .core import SystemModel, write_model
from .disturbance import derive_stream
from .errors import ConfigError, DivergenceError, InsufficientDataError, SysIdError
from .estimators import fit
from .experiments import (DEFAULT_SEEDS, DEFAULT_T_GRID, SweepConfig, bounded_error_check,
                          frobenius_error, mu_sweep, row_l2_errors, run_sweep, stability_frame,
                          stability_study)
from .loss import regression_data
from .simulate import (check_assumptions, empirical_excitation, noise_mass_near_zero,
                       read_trajectory, simulate, write_trajectory)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3
EXIT_NUMERICAL = 4


def _grid(df: pd.DataFrame, floatfmt: str = '.6g') -> str:
    return df.to_markdown(index=False, tablefmt='grid', floatfmt=floatfmt)


def _ensure_folder(path: str):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)


def _labelled_path(out: str, label: str) -> str:
    """'a_hat.txt' + 'huber(0.1)' -> 'a_hat.huber(0.1).txt'"""
    stem, ext = os.path.splitext(out)
    return f"{stem}.{label}{ext}"


#%% Subcommands
def cmd_simulate(config_path: str) -> int:
    cfg = load_run_config(config_path)
    T = cfg.require('T')
    out = cfg.require('out')

    rng = derive_stream(cfg.master_seed, 0)
    traj = simulate(cfg.model, cfg.spec, cfg.x0, T, rng)
    write_trajectory(traj, out)

    print(f"T: {traj.length}")
    print(f"max norm: {traj.max_norm():.17g}")
    print(f"attack count: {traj.attack_count()}")
    print(f"[Saved] {out}")
    return EXIT_OK


def _print_matrix(model: SystemModel, a: np.ndarray, title: str):
    labels = [term.label() for term in model.basis.terms]
    df = pd.DataFrame(a, columns=labels)
    df.insert(0, 'row', [f'x_{i}' for i in range(model.n)])
    print(title)
    print(_grid(df))


def cmd_fit(config_path: str, trajectory_path: str) -> int:
    cfg = load_run_config(config_path)
    model = cfg.model
    traj = read_trajectory(trajectory_path, state_dim=model.n)
    data = regression_data(traj, model.basis)

    for method_cfg in cfg.methods:
        result = fit(data, method_cfg, max_workers=cfg.workers)
        _print_matrix(model, result.a_hat, f"== {method_cfg.label}: A_hat ({data.T} samples)")

        rows = pd.DataFrame({
            'row': [f'x_{i}' for i in range(model.n)],
            'l2_error': row_l2_errors(result.a_hat, model.a_bar),
            'iterations': result.per_row_iterations,
            'converged': result.converged,
            'gradient_norm': result.gradient_norm,
        })
        print(_grid(rows))
        print(f"frobenius error: {frobenius_error(result.a_hat, model.a_bar):.17g}")
        print(f"objective: {result.final_objective:.17g}")
        print(f"converged: {result.converged_all}")

        if cfg.out is not None:
            path = cfg.out if len(cfg.methods) == 1 else _labelled_path(cfg.out, method_cfg.label)
            _ensure_folder(path)
            write_model(model.with_matrix(result.a_hat), path)
            print(f"[Saved] {path}")
    return EXIT_OK


def _sweep_config(cfg: RunConfig) -> SweepConfig:
    return SweepConfig(
        model=cfg.model,
        spec=cfg.spec,
        x0=cfg.x0,
        t_grid=cfg.t_grid or DEFAULT_T_GRID,
        seeds=cfg.seeds or DEFAULT_SEEDS,
        methods=cfg.methods,
        master_seed=cfg.master_seed,
        record_timing=cfg.timing,
        max_workers=cfg.workers,
        verbose=True,
    )


def cmd_sweep(config_path: str) -> int:
    cfg = load_run_config(config_path)
    out = cfg.require('out')
    sweep_cfg = _sweep_config(cfg)
    print(f"Running sweep: {len(sweep_cfg.t_grid)} T values x {sweep_cfg.seeds} seeds x "
          f"{len(sweep_cfg.methods)} methods")

    report = run_sweep(sweep_cfg)
    _ensure_folder(out)
    report.to_csv(out)
    print(f"[Saved] {out} ({len(report)} rows)")
    print(_grid(report.summary()))

    rows = []
    for label in report.methods():
        try:
            max_err, slope = bounded_error_check(report, label, cfg.tmin)
            rows.append({'method': label, 'max_mean_error': max_err, 'slope': slope.slope,
                         'r_squared': slope.r_squared, 'T_range': f"{slope.t_range[0]}-{slope.t_range[1]}",
                         'points': slope.points})
        except InsufficientDataError as e:
            print(f"[warn] {label}: {e}")
    if rows:
        print(f"Slope of log mean error vs log T (T >= {cfg.tmin}):")
        print(_grid(pd.DataFrame(rows)))

    frame = report.frame
    if frame['converged'].any():
        return EXIT_OK
    return EXIT_DIVERGENCE if (frame['status'] == 'diverged').any() else EXIT_NUMERICAL


def cmd_check(config_path: str, trajectory_path: Optional[str] = None, mu: Optional[float] = None) -> int:
    cfg = load_run_config(config_path)
    report = check_assumptions(cfg.model, cfg.region, cfg.samples, derive_stream(cfg.master_seed, 0))
    print("Stability assumption:")
    print(_grid(pd.DataFrame([report.as_dict()]), floatfmt='.10g'))
    if not report.stable:
        print(f"[warn] rho*L = {report.rho_L:.6g} >= 1 over [-{cfg.region:g}, {cfg.region:g}]^{cfg.model.n}")

    if trajectory_path is not None:
        traj = read_trajectory(trajectory_path, state_dim=cfg.model.n)
        excitation = empirical_excitation(traj, cfg.model.basis)
        print("Excitation:")
        print(f"lambda_min_sq: {excitation.lambda_min_sq:.17g} (|T'| = {excitation.subset_size})")

        mus = [mu] if mu is not None else [m.method.mu for m in cfg.methods if m.method.name == 'huber']
        for value in mus:
            print(f"noise mass |w| <= mu/2 at mu={value:g}: {noise_mass_near_zero(traj, value):.6g}")
    return EXIT_OK


def cmd_stability(config_path: str) -> int:
    cfg = load_run_config(config_path)
    T = cfg.require('T')
    outcomes = stability_study(cfg.model, cfg.spec, cfg.x0, T, cfg.methods, derive_stream(cfg.master_seed, 0))
    df = stability_frame(outcomes)
    print(_grid(df))
    if cfg.out is not None:
        _ensure_folder(cfg.out)
        df.to_csv(cfg.out, index=False, float_format='%.17g', lineterminator='\n')
        print(f"[Saved] {cfg.out}")
    return EXIT_OK


def cmd_mu_sweep(config_path: str) -> int:
    cfg = load_run_config(config_path)
    T = cfg.require('T')
    mu_grid = cfg.require('mu_grid')
    df = mu_sweep(cfg.model, cfg.spec, cfg.x0, T, mu_grid, derive_stream(cfg.master_seed, 0))
    print(_grid(df))
    if cfg.out is not None:
        _ensure_folder(cfg.out)
        df.to_csv(cfg.out, index=False, float_format='%.17g', lineterminator='\n')
        print(f"[Saved] {cfg.out}")
    return EXIT_OK


#%% Entry point
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='robust_sysid',
                                     description="Robust identification of linearly parameterized systems")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help="Simulate a trajectory and write it as CSV")
    p.add_argument('config')

    p = sub.add_parser('fit', help="Fit A from a trajectory CSV")
    p.add_argument('config')
    p.add_argument('trajectory')

    p = sub.add_parser('sweep', help="Run a (T, seed, method) error sweep")
    p.add_argument('config')

    p = sub.add_parser('check', help="Report stability and excitation diagnostics")
    p.add_argument('config')
    p.add_argument('--trajectory', default=None)
    p.add_argument('--mu', type=float, default=None)

    p = sub.add_parser('stability', help="Noise-free replay of the true and estimated matrices")
    p.add_argument('config')

    p = sub.add_parser('musweep', help="Huber error across a grid of thresholds")
    p.add_argument('config')
    return parser


def _dispatch(args) -> int:
    if args.command == 'simulate':
        return cmd_simulate(args.config)
    if args.command == 'fit':
        return cmd_fit(args.config, args.trajectory)
    if args.command == 'sweep':
        return cmd_sweep(args.config)
    if args.command == 'check':
        return cmd_check(args.config, args.trajectory, args.mu)
    if args.command == 'stability':
        return cmd_stability(args.config)
    return cmd_mu_sweep(args.config)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except DivergenceError as e:
        print(f"[error] divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    # RankDeficiencyError is a LinAlgError, which numpy derives from ValueError: test it first
    except np.linalg.LinAlgError as e:
        print(f"[error] numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as e:
        print(f"[error] config: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SysIdError, ValueError, FileNotFoundError) as e:
        print(f"[error] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
