"""Exact optimum and exact policy values for tiny instances.

Both routines work on the joint product space of the dummy-expanded arms,
so pulled-ness is part of the state and the single-pull rule is structural.
The optimum is a backward induction maximizing over all action vectors
within the step budget; the policy value is a forward propagation of the
joint distribution under a given (deterministic or explicitly enumerated
stochastic) selection rule. Sizes are hard-capped: these are desk-scale
certification tools, not solvers.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import Instance, expand_initial, expand_with_dummies, require_valid

CAP_ARMS = 4
CAP_STATES = 3
CAP_HORIZON = 5


class CapExceeded(ValueError):
    """Instance is too large for exact joint-state enumeration."""


def _check_cap(instance: Instance):
    n_arms = instance.n_arms
    max_s = max(m.n_states for m in instance.types)
    joint = (2 * max_s) ** n_arms
    if n_arms > CAP_ARMS or max_s > CAP_STATES or instance.horizon > CAP_HORIZON:
        raise CapExceeded(
            f"instance needs ~{joint * instance.horizon} joint state evaluations; "
            f"cap is arms<={CAP_ARMS}, states<={CAP_STATES}, horizon<={CAP_HORIZON}"
        )


def _arm_setup(instance: Instance):
    """Per-arm expanded models, initial vectors, and joint-space helpers."""
    require_valid(instance)
    expanded = [expand_with_dummies(m) for m in instance.types]
    initials = [expand_initial(m, d) for m, d in zip(instance.types, instance.initial)]
    arm_models = []
    arm_init = []
    arm_type = []
    for n in range(instance.n_types):
        for _ in range(instance.rho):
            arm_models.append(expanded[n])
            arm_init.append(initials[n])
            arm_type.append(n)
    dims = tuple(m.n_states for m in arm_models)
    return arm_models, arm_init, np.array(arm_type), dims


def _action_vectors(n_arms: int, cap: int):
    vecs = []
    for k in range(min(cap, n_arms) + 1):
        for subset in itertools.combinations(range(n_arms), k):
            a = np.zeros(n_arms, dtype=np.int64)
            a[list(subset)] = 1
            vecs.append(a)
    return vecs


def _reward_tensor(arm_models, a: np.ndarray, dims):
    total = np.zeros(dims)
    for i, m in enumerate(arm_models):
        shape = [1] * len(dims)
        shape[i] = dims[i]
        total = total + m.rewards[:, a[i]].reshape(shape)
    return total


def _propagate(W: np.ndarray, arm_models, a: np.ndarray):
    """E[W(next) | current] for a fixed action vector, arm by arm."""
    out = W
    for i, m in enumerate(arm_models):
        P = m.transitions[:, a[i], :]
        out = np.moveaxis(np.tensordot(P, out, axes=(1, i)), 0, i)
    return out


def exact_optimum(instance: Instance) -> float:
    """Optimal expected total reward by joint backward induction.

    Action vectors that activate a dummy arm duplicate a cheaper vector
    (dummy actions are indifferent), so enumerating all vectors within the
    budget and maximizing is exact for the single-pull problem.
    """
    _check_cap(instance)
    arm_models, arm_init, _, dims = _arm_setup(instance)
    cap = instance.step_budget
    vectors = _action_vectors(len(arm_models), cap)
    rewards = [_reward_tensor(arm_models, a, dims) for a in vectors]

    V = np.zeros(dims)
    for _ in range(instance.horizon):
        best = None
        for a, R in zip(vectors, rewards):
            Q = R + _propagate(V, arm_models, a)
            best = Q if best is None else np.maximum(best, Q)
        V = best
    dist = _joint_initial(arm_init, dims)
    return float((dist * V).sum())


def _joint_initial(arm_init, dims):
    dist = np.ones(dims)
    for i, d in enumerate(arm_init):
        shape = [1] * len(dims)
        shape[i] = dims[i]
        dist = dist * d.reshape(shape)
    return dist


def _joint_states(dims) -> np.ndarray:
    grids = np.indices(dims)
    return grids.reshape(len(dims), -1).T  # (J, M)


def policy_select_adapter(instance: Instance, policy):
    """Wrap a prepared policy object as select(states_row, pulled_row, t).

    The oracle state space is always the expanded one; mask-space policies
    receive collapsed state indices plus the pulled flags.
    """
    arm_models, _, arm_type, _ = _arm_setup(instance)
    n_normal = np.array([m.n_normal for m in arm_models])
    cap = instance.step_budget
    rng = np.random.default_rng(0)  # deterministic policies never draw

    def select(states_row, pulled_row, t):
        if policy.expanded:
            return policy.select(arm_type, states_row, pulled_row, t, cap, rng)
        collapsed = np.where(states_row >= n_normal, states_row - n_normal, states_row)
        return policy.select(arm_type, collapsed, pulled_row, t, cap, rng)

    return select


def uniform_random_select(instance: Instance):
    """Exact action distribution of the uniform random policy."""
    cap = instance.step_budget

    def select(states_row, pulled_row, t):
        free = np.flatnonzero(~pulled_row)
        k = min(cap, free.size)
        if k == 0:
            return [(1.0, np.zeros(len(states_row), dtype=np.int64))]
        subsets = list(itertools.combinations(free, k))
        out = []
        for subset in subsets:
            a = np.zeros(len(states_row), dtype=np.int64)
            a[list(subset)] = 1
            out.append((1.0 / len(subsets), a))
        return out

    return select


def exact_policy_value(instance: Instance, select) -> float:
    """Exact expected total reward of a selection rule, no sampling.

    select(states_row, pulled_row, t) returns an action vector, or a list
    of (probability, action vector) pairs for stochastic rules.
    """
    _check_cap(instance)
    arm_models, arm_init, _, dims = _arm_setup(instance)
    n_normal = np.array([m.n_normal for m in arm_models])
    states = _joint_states(dims)
    pulled_all = states >= n_normal[None, :]
    dist = _joint_initial(arm_init, dims).reshape(-1)

    total = 0.0
    for t in range(instance.horizon):
        groups: dict[tuple, np.ndarray] = {}
        support = np.flatnonzero(dist > 0)
        for j in support:
            chosen = select(states[j], pulled_all[j], t)
            if isinstance(chosen, np.ndarray):
                chosen = [(1.0, chosen)]
            for p, a in chosen:
                key = tuple(int(x) for x in a)
                vec = groups.setdefault(key, np.zeros(dist.size))
                vec[j] += p * dist[j]
        nxt = np.zeros(dims)
        for key, weights in groups.items():
            a = np.array(key, dtype=np.int64)
            W = weights.reshape(dims)
            total += float((W * _reward_tensor(arm_models, a, dims)).sum())
            moved = W
            for i, m in enumerate(arm_models):
                P = m.transitions[:, a[i], :]
                moved = np.moveaxis(np.tensordot(P.T, moved, axes=(1, i)), 0, i)
            nxt += moved
        dist = nxt.reshape(-1)
    return total
