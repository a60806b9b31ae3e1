import numpy as np
import pytest
from scipy import stats

from robust_sysid.disturbance import (AttackLaw, DisturbanceSpec, NoiseLaw, RngStream, derive_stream,
                                      draw_disturbance, parse_disturbance)
from robust_sysid.errors import ConfigError, DimensionError, InvalidParameterError


@pytest.mark.parametrize('p', [0.5, 0.6, -0.1])
def test_attack_probability_range(p):
    with pytest.raises(InvalidParameterError):
        AttackLaw.paper_state_dependent(p)


@pytest.mark.parametrize('kind, scale', [('uniform', 0.0), ('gaussian', -1.0), ('laplace', 1.0)])
def test_invalid_noise_law(kind, scale):
    with pytest.raises(InvalidParameterError):
        NoiseLaw(kind, scale)


def test_same_key_same_draws():
    a = RngStream(7, 3).uniform(0, 1, 50)
    b = RngStream(7, 3).uniform(0, 1, 50)
    np.testing.assert_array_equal(a, b)


def test_restart_replays_stream():
    rng = derive_stream(1, 2)
    first = rng.random(10)
    np.testing.assert_array_equal(rng.restart().random(10), first)


def test_distinct_trials_are_independent_streams():
    assert not np.array_equal(derive_stream(0, 0).random(20), derive_stream(0, 1).random(20))
    assert not np.array_equal(derive_stream(0, 0).random(20), derive_stream(1, 0).random(20))


def test_uniform_noise_is_zero_mean_and_bounded():
    spec = DisturbanceSpec.zero_mean_noise(NoiseLaw.uniform_sym(0.2))
    rng = derive_stream(0, 0)
    w = np.concatenate([draw_disturbance(spec, np.zeros(3), rng)[0] for _ in range(4000)])
    assert np.all(np.abs(w) <= 0.2)
    assert stats.kstest(w, 'uniform', args=(-0.2, 0.4)).pvalue > 1e-3
    assert stats.ks_2samp(w[:6000], -w[6000:]).pvalue > 1e-3


def test_gaussian_noise_scale():
    spec = DisturbanceSpec.zero_mean_noise(NoiseLaw.gaussian_iso(0.5))
    rng = derive_stream(4, 0)
    w = np.concatenate([draw_disturbance(spec, np.zeros(2), rng)[0] for _ in range(5000)])
    assert abs(np.mean(w)) < 0.03
    assert abs(np.std(w) - 0.5) < 0.02


def test_zero_probability_never_attacks():
    spec = DisturbanceSpec.none()
    rng = derive_stream(0, 0)
    for _ in range(200):
        w, attacked = draw_disturbance(spec, np.ones(3), rng)
        assert not attacked
        np.testing.assert_array_equal(w, np.zeros(3))


def test_attack_frequency_matches_p():
    spec = DisturbanceSpec.sparse_attack(AttackLaw.paper_state_dependent(0.4))
    rng = derive_stream(0, 0)
    flags = [draw_disturbance(spec, np.ones(3), rng)[1] for _ in range(20000)]
    assert abs(np.mean(flags) - 0.4) < 0.02


def test_state_dependent_attack_interval():
    spec = DisturbanceSpec.sparse_attack(AttackLaw.paper_state_dependent(0.45, center=0.2, cap=1.0))
    rng = derive_stream(2, 0)
    for x in ([0.1, 0.0, 0.0], [3.0, 3.0, 3.0]):
        radius = min(np.linalg.norm(x), 1.0)
        for _ in range(300):
            w, attacked = draw_disturbance(spec, np.array(x), rng)
            if attacked:
                assert np.all(w >= 0.2 - radius) and np.all(w <= 0.2 + radius)


def test_attack_at_origin_is_the_center():
    spec = DisturbanceSpec.sparse_attack(AttackLaw.paper_state_dependent(0.45))
    rng = derive_stream(0, 0)
    values = [w for w, attacked in (draw_disturbance(spec, np.zeros(3), rng) for _ in range(100)) if attacked]
    assert values
    np.testing.assert_array_equal(values[0], [0.2, 0.2, 0.2])


def test_constant_bias_attack():
    spec = DisturbanceSpec.sparse_attack(AttackLaw.constant_bias(0.3, [1.0, -2.0]))
    rng = derive_stream(0, 0)
    draws = [draw_disturbance(spec, np.zeros(2), rng) for _ in range(100)]
    for w, attacked in draws:
        expected = [1.0, -2.0] if attacked else [0.0, 0.0]
        np.testing.assert_array_equal(w, expected)


def test_constant_bias_dimension_check():
    spec = DisturbanceSpec.sparse_attack(AttackLaw.constant_bias(0.3, [1.0, -2.0]))
    with pytest.raises(DimensionError):
        spec.check_dim(3)


@pytest.mark.parametrize('line', [
    'noise uniform 0.2',
    'noise gaussian 0.05',
    'attack 0.4 paper 0.2 1.0',
    'attack 0.1 constant 0.5 -0.5 1.0',
])
def test_disturbance_line_parses_back(line):
    spec = parse_disturbance(line)
    assert parse_disturbance(spec.to_line()) == spec


def test_parse_paper_attack():
    spec = parse_disturbance('attack 0.4 paper 0.2 1.0')
    assert spec.is_attack
    assert spec.regime == AttackLaw(0.4, 'paper', 0.2, 1.0)


@pytest.mark.parametrize('line', ['attack 0.6 paper 0.2 1.0', 'noise uniform', 'noise cauchy 1', 'attack x paper 0.2 1'])
def test_bad_disturbance_lines(line):
    with pytest.raises(ConfigError) as err:
        parse_disturbance(line, lineno=4)
    assert err.value.line == 4


def test_derive_stream_distinct_trials_differ():
    assert not np.array_equal(derive_stream(42, 0).random(1000), derive_stream(42, 1).random(1000))
    np.testing.assert_array_equal(derive_stream(42, 0).random(1000), derive_stream(42, 0).random(1000))


def test_uniform_noise_mean_over_a_million_draws():
    spec = DisturbanceSpec.zero_mean_noise(NoiseLaw.uniform_sym(0.2))
    rng = derive_stream(9, 0)
    w = np.concatenate([draw_disturbance(spec, np.zeros(1000), rng)[0] for _ in range(1000)])
    assert w.size == 10 ** 6
    assert abs(np.mean(w)) <= 0.001


def test_uniform_noise_symmetric_in_distribution():
    spec = DisturbanceSpec.zero_mean_noise(NoiseLaw.uniform_sym(0.2))
    rng = derive_stream(9, 1)
    w = np.concatenate([draw_disturbance(spec, np.zeros(1000), rng)[0] for _ in range(100)])
    assert stats.ks_2samp(w, -w).statistic <= 0.01


def test_attack_frequency_over_many_draws():
    spec = DisturbanceSpec.sparse_attack(AttackLaw.paper_state_dependent(0.4))
    rng = derive_stream(9, 2)
    flags = np.array([draw_disturbance(spec, np.ones(3), rng)[1] for _ in range(10 ** 5)])
    assert 0.39 <= flags.mean() <= 0.41
