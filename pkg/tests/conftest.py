import numpy as np
import pytest

from robust_sysid.core import PAPER_X0, BasisLibrary, SystemModel, paper_system
from robust_sysid.disturbance import AttackLaw, DisturbanceSpec, NoiseLaw, derive_stream
from robust_sysid.simulate import simulate

ATTACK_STREAM = (1, 0)


@pytest.fixture(scope='session')
def paper_model():
    return paper_system()


@pytest.fixture(scope='session')
def uniform_noise():
    return DisturbanceSpec.zero_mean_noise(NoiseLaw.uniform_sym(0.2))


@pytest.fixture(scope='session')
def paper_attack():
    return DisturbanceSpec.sparse_attack(AttackLaw.paper_state_dependent(0.4))


@pytest.fixture(scope='session')
def noiseless_traj(paper_model):
    return simulate(paper_model, DisturbanceSpec.none(), PAPER_X0, 200, derive_stream(0, 0))


@pytest.fixture(scope='session')
def noisy_traj(paper_model, uniform_noise):
    return simulate(paper_model, uniform_noise, PAPER_X0, 2500, derive_stream(0, 0))


@pytest.fixture(scope='session')
def attacked_traj(paper_model, paper_attack):
    # stream (0, 0) diverges under this attack law at t=24; (1, 0) stays bounded up to T=2500
    return simulate(paper_model, paper_attack, PAPER_X0, 2500, derive_stream(*ATTACK_STREAM))


@pytest.fixture
def doubling_model():
    """x_{t+1} = 2 x_t in one dimension"""
    return SystemModel(np.array([[2.0]]), BasisLibrary.linear(1))


@pytest.fixture
def attack_stream():
    """Fresh copy of the stream behind attacked_traj"""
    return derive_stream(*ATTACK_STREAM)
