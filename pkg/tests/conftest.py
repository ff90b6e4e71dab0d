import numpy as np
import pytest

from singlepull import ArmModel, Instance
from singlepull.model import point_initial


def random_arm(rng, n_states, active_only_rewards=True, label="arm"):
    """Dirichlet-row kernel with nonnegative rewards; always valid."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, 2))
    r = np.zeros((n_states, 2))
    r[:, 1] = rng.uniform(0.0, 1.0, size=n_states) * (np.arange(n_states) + 1.0)
    if not active_only_rewards:
        r[:, 0] = rng.uniform(0.0, 0.5, size=n_states)
    return ArmModel(n_states=n_states, transitions=P, rewards=r, label=label)


def random_tiny_instance(rng, max_arms=4, max_states=3, max_horizon=4):
    """Oracle-sized instance with point-mass initial states."""
    n_arms = int(rng.integers(2, max_arms + 1))
    rho = int(rng.choice([d for d in (1, 2, n_arms) if n_arms % d == 0]))
    n_types = n_arms // rho
    S = int(rng.integers(2, max_states + 1))
    T = int(rng.integers(2, max_horizon + 1))
    budget = int(rng.integers(1, 3))
    types = tuple(random_arm(rng, S, label=f"t{i}") for i in range(n_types))
    initial = tuple(point_initial(S, int(rng.integers(0, S))) for _ in range(n_types))
    return Instance(types=types, rho=rho, budget=budget, horizon=T, initial=initial)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
