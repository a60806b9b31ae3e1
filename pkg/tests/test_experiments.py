import numpy as np
import pytest

from robust_sysid.core import PAPER_X0
from robust_sysid.disturbance import DisturbanceSpec, NoiseLaw, derive_stream
from robust_sysid.errors import InsufficientDataError, InvalidParameterError
from robust_sysid.estimators import EstimatorConfig
from robust_sysid.experiments import (REPORT_COLUMNS, SweepConfig, SweepReport, bounded_error_check, fit_slope,
                                      frobenius_error, mu_sweep, run_sweep, stability_frame, stability_study)

METHODS = (EstimatorConfig.ls(), EstimatorConfig.l1(), EstimatorConfig.huber(0.1))
ACCEPTANCE_GRID = (100, 200, 400, 800, 1600, 2500)


@pytest.fixture(scope='module')
def small_sweep_cfg(paper_model):
    spec = DisturbanceSpec.zero_mean_noise(NoiseLaw.uniform_sym(0.2))
    return SweepConfig(paper_model, spec, PAPER_X0, t_grid=(40, 60, 100), seeds=2, methods=METHODS)


@pytest.fixture(scope='module')
def small_sweep(small_sweep_cfg):
    return run_sweep(small_sweep_cfg)


def _synthetic_report(error_fn, grid=(100, 200, 400, 800, 1600), seeds=3, method='ls'):
    records = [{'T': T, 'seed': s, 'method': method, 'frob_error': error_fn(T, s)}
               for T in grid for s in range(seeds)]
    return SweepReport.from_records(records)


#%% Sweep report
def test_sweep_cardinality_and_order(small_sweep):
    assert len(small_sweep) == 3 * 2 * 3
    keys = list(zip(small_sweep.frame['T'], small_sweep.frame['seed']))
    assert keys == sorted(keys)
    assert small_sweep.methods() == ['ls', 'l1', 'huber(0.1)']


def test_sweep_csv_layout(small_sweep):
    lines = small_sweep.to_csv().splitlines()
    assert lines[0] == ','.join(REPORT_COLUMNS)
    assert len(lines) == 1 + 18
    first = lines[1].split(',')
    assert first[:3] == ['40', '0', 'ls']
    assert len(first[4].split(';')) == 3
    assert first[-1] == '0'


def test_sweep_rerun_is_byte_identical(small_sweep, small_sweep_cfg):
    assert run_sweep(small_sweep_cfg).to_csv() == small_sweep.to_csv()


def test_sweep_parallel_matches_sequential(small_sweep, small_sweep_cfg, paper_model):
    threaded = SweepConfig(paper_model, small_sweep_cfg.spec, PAPER_X0, t_grid=(40, 60, 100), seeds=2,
                           methods=METHODS, max_workers=2)
    assert run_sweep(threaded).to_csv() == small_sweep.to_csv()


def test_sweep_csv_reload(tmp_path, small_sweep):
    path = str(tmp_path / 'sweep.csv')
    text = small_sweep.to_csv(path)
    with open(path) as f:
        assert f.read() == text
    assert SweepReport.from_csv(path).to_csv() == text


def test_row_errors_consistent_with_frobenius(small_sweep):
    for frob, rows in zip(small_sweep.frame['frob_error'], small_sweep.frame['row_errors']):
        assert frob == pytest.approx(np.sqrt(np.sum(np.square(rows))), rel=1e-12)


def test_diverging_system_gives_flagged_rows(doubling_model):
    cfg = SweepConfig(doubling_model, DisturbanceSpec.none(), (1.0,), t_grid=(10, 100), seeds=2,
                      methods=(EstimatorConfig.ls(),))
    report = run_sweep(cfg)
    assert len(report) == 4
    assert (report.frame['status'] == 'diverged').all()
    assert not report.frame['converged'].any()
    assert 'nan' in report.to_csv()


@pytest.mark.parametrize('kwargs', [
    {'t_grid': (100, 60)},
    {'t_grid': ()},
    {'seeds': 0},
    {'methods': (EstimatorConfig.ls(), EstimatorConfig.ls())},
    {'methods': ()},
])
def test_invalid_sweep_config(kwargs, paper_model):
    with pytest.raises(InvalidParameterError):
        SweepConfig(paper_model, DisturbanceSpec.none(), PAPER_X0, **kwargs)


#%% Slope fits
def test_slope_of_inverse_square_root():
    report = _synthetic_report(lambda T, s: 2.0 / np.sqrt(T))
    fit = fit_slope(report, 'ls')
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.t_range == (100, 1600)
    assert fit.points == 5


def test_slope_respects_t_min():
    report = _synthetic_report(lambda T, s: 1.0 if T < 200 else 0.1)
    assert fit_slope(report, 'ls', t_min=200).slope == pytest.approx(0.0, abs=1e-12)


def test_slope_needs_four_points():
    report = _synthetic_report(lambda T, s: 1.0 / T)
    with pytest.raises(InsufficientDataError):
        fit_slope(report, 'ls', t_min=800)


def test_mean_errors_skip_unconverged_rows():
    records = [{'T': T, 'seed': s, 'method': 'l1', 'frob_error': 1.0 if s == 0 else 100.0, 'converged': s == 0}
               for T in (100, 200, 400, 800) for s in range(2)]
    report = SweepReport.from_records(records)
    np.testing.assert_array_equal(report.mean_errors('l1').to_numpy(), [1.0, 1.0, 1.0, 1.0])


def test_bounded_error_check():
    report = _synthetic_report(lambda T, s: 0.05 + 0.001 * s)
    max_err, slope = bounded_error_check(report, 'ls', t_min=100)
    assert max_err == pytest.approx(0.051)
    assert abs(slope.slope) < 1e-9


#%% Stability and mu trade-off
def test_noiseless_stability_study(paper_model):
    outcomes = stability_study(paper_model, DisturbanceSpec.none(), PAPER_X0, 200, METHODS, derive_stream(0, 0))
    assert list(outcomes) == ['true', 'ls', 'l1', 'huber(0.1)']
    for label, outcome in outcomes.items():
        assert not outcome.diverged, label
        assert outcome.max_deviation < 1e-6, label


def test_stability_frame_columns(paper_model):
    outcomes = stability_study(paper_model, DisturbanceSpec.none(), PAPER_X0, 200, METHODS[:1], derive_stream(0, 0))
    df = stability_frame(outcomes)
    assert list(df.columns[:7]) == ['method', 'max_norm', 'diverged', 'max_deviation',
                                    'final_x_0', 'final_x_1', 'final_x_2']
    assert list(df['method']) == ['true', 'ls']


def test_stability_study_true_divergence_is_reported(doubling_model):
    outcomes = stability_study(doubling_model, DisturbanceSpec.none(), (1.0,), 100, METHODS[:1],
                               derive_stream(0, 0), cutoff=1e6)
    assert outcomes['true'].diverged
    assert outcomes['true'].diverged_at == 20
    assert outcomes['ls'].diverged
    assert outcomes['ls'].diverged_at == 20
    assert outcomes['ls'].status == 'simulation_diverged'
    assert stability_frame(outcomes)['diverged'].all()


def test_mu_sweep_limits(paper_model, paper_attack, attack_stream):
    df = mu_sweep(paper_model, paper_attack, PAPER_X0, 400, (1e6, 0.1, 0.01), attack_stream)
    assert list(df['mu']) == [0.01, 0.1, 1e6]
    assert df['dist_to_ls'].iloc[-1] < 1e-8
    assert df['dist_to_l1'].iloc[0] < df['dist_to_l1'].iloc[-1]
    assert (df['ls_frob_error'] == df['ls_frob_error'].iloc[0]).all()


def test_mu_sweep_needs_grid(paper_model, paper_attack, attack_stream):
    with pytest.raises(InvalidParameterError):
        mu_sweep(paper_model, paper_attack, PAPER_X0, 100, (), attack_stream)


def test_frobenius_error():
    assert frobenius_error(np.zeros((2, 2)), np.array([[3.0, 0.0], [0.0, 4.0]])) == 5.0


#%% Full-scale reproductions
def _acceptance_report(model, spec):
    cfg = SweepConfig(model, spec, PAPER_X0, t_grid=ACCEPTANCE_GRID, seeds=20, methods=METHODS, max_workers=4)
    return run_sweep(cfg)


@pytest.mark.slow
def test_zero_mean_noise_rate(paper_model, uniform_noise):
    report = _acceptance_report(paper_model, uniform_noise)
    for label in ('ls', 'huber(0.1)'):
        slope = fit_slope(report, label, t_min=100).slope
        assert -0.65 <= slope <= -0.35, label
    ls = report.mean_errors('ls', 400)
    huber = report.mean_errors('huber(0.1)', 400)
    assert (huber <= 3.0 * ls).all()


@pytest.mark.slow
def test_sparse_attack_recovery(paper_model, paper_attack):
    report = _acceptance_report(paper_model, paper_attack)
    assert report.mean_errors('l1', 100).max() < 1e-3
    max_err, slope = bounded_error_check(report, 'huber(0.1)', t_min=400)
    assert max_err <= 50 * 0.1
    assert -0.1 <= slope.slope <= 0.1
    assert report.mean_errors('ls')[2500] >= 3.0 * report.mean_errors('huber(0.1)')[2500]


@pytest.mark.slow
def test_reconstruction_under_zero_mean_noise(paper_model, uniform_noise, attack_stream):
    outcomes = stability_study(paper_model, uniform_noise, PAPER_X0, 2500, METHODS, attack_stream)
    assert not outcomes['true'].diverged
    bound = 10 * outcomes['true'].max_norm
    for label in ('ls', 'huber(0.1)'):
        assert not outcomes[label].diverged and outcomes[label].max_norm <= bound, label


@pytest.mark.slow
def test_reconstruction_under_sparse_attack(paper_model, paper_attack, attack_stream):
    outcomes = stability_study(paper_model, paper_attack, PAPER_X0, 2500, METHODS, attack_stream)
    bound = 10 * outcomes['true'].max_norm
    l1, ls = outcomes['l1'], outcomes['ls']
    assert not l1.diverged and l1.max_deviation < 1e-3
    assert ls.diverged or ls.max_deviation > 1.0
    assert ls.diverged or ls.max_deviation > 1e3 * l1.max_deviation
    assert not outcomes['huber(0.1)'].diverged and outcomes['huber(0.1)'].max_norm <= bound
