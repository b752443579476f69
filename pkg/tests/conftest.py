import numpy as np
import pytest

from robustmdp import AmbiguitySpec, Singleton, TabularMDP


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mdp(rng, n_states=4, n_actions=3, gamma=0.9):
    nominal = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    cost = 1.0 - rng.random((n_states, n_actions))
    return TabularMDP(cost, gamma, nominal)


def random_policy(rng, n_states, n_actions):
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def singleton_spec(mdp):
    return AmbiguitySpec.uniform(mdp.nominal, Singleton())


def one_state_mdp(cost=1.0, gamma=0.5):
    return TabularMDP(np.array([[cost]]), gamma, np.ones((1, 1, 1)))
