"""Arm MDPs, bandit instances, dummy-state expansion, and validation.

An arm is a two-action MDP (action 1 = pull/activate, action 0 = passive).
Pulling an arm at most once over the horizon is encoded structurally by
expanding the state space with *dummy states*: the dummy copy of state s is
entered when s is pulled, evolves like s under the passive kernel, and pays
the passive reward under both actions, so a pulled arm can never gain from
further activation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9

ERROR = "ERROR"
WARNING = "WARNING"


def _freeze(a):
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ArmModel:
    """One arm type: transition tensor, reward table, dummy bookkeeping.

    transitions[s, a, s2] is P(s2 | s, a); rewards[s, a] is the immediate
    reward. dummy_of maps a dummy state index to the normal state it shadows
    (None for unexpanded models). Arrays are frozen after construction and
    safe to share across threads.
    """

    n_states: int
    transitions: np.ndarray
    rewards: np.ndarray
    dummy_of: dict[int, int] | None = None
    label: str = ""

    def __post_init__(self):
        P = _freeze(self.transitions)
        r = _freeze(self.rewards)
        if P.shape != (self.n_states, 2, self.n_states):
            raise ValueError(
                f"transitions must have shape ({self.n_states}, 2, {self.n_states}), got {P.shape}"
            )
        if r.shape != (self.n_states, 2):
            raise ValueError(f"rewards must have shape ({self.n_states}, 2), got {r.shape}")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)

    @property
    def expanded(self) -> bool:
        return self.dummy_of is not None

    @property
    def n_normal(self) -> int:
        """Count of non-dummy states."""
        if self.dummy_of is None:
            return self.n_states
        return self.n_states - len(self.dummy_of)

    def is_dummy(self, s: int) -> bool:
        return self.dummy_of is not None and s in self.dummy_of

    @property
    def dummy_mask(self) -> np.ndarray:
        m = np.zeros(self.n_states, dtype=bool)
        if self.dummy_of:
            m[list(self.dummy_of)] = True
        return m


@dataclass(frozen=True)
class Instance:
    """N arm types replicated rho times each, with budget and horizon.

    budget is the per-class activation budget K; the physical per-step cap
    in a replicated population is K * rho. initial[n] is the initial state
    distribution of type n over its non-dummy states.
    """

    types: tuple[ArmModel, ...]
    rho: int
    budget: int
    horizon: int
    initial: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "initial", tuple(_freeze(d) for d in self.initial))

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def n_arms(self) -> int:
        return self.rho * len(self.types)

    @property
    def step_budget(self) -> int:
        """Hard per-step activation cap for the replicated population."""
        return self.budget * self.rho


@dataclass
class ValidationReport:
    issues: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(sev == ERROR for sev, _ in self.issues)

    def add(self, severity: str, message: str):
        self.issues.append((severity, message))

    def errors(self) -> list[str]:
        return [msg for sev, msg in self.issues if sev == ERROR]


@dataclass
class Population:
    """Materialized arm slots: type index, current state, pulled flag."""

    type_of: np.ndarray
    states: np.ndarray
    pulled: np.ndarray

    @property
    def n_arms(self) -> int:
        return len(self.type_of)


def validate_arm(model: ArmModel) -> ValidationReport:
    """Check stochasticity and dummy-state invariants; report, never raise."""
    report = ValidationReport()
    P, r = model.transitions, model.rewards
    S = model.n_states

    if np.any(P < -1e-15) or np.any(P > 1 + 1e-15):
        bad = int(np.sum((P < -1e-15) | (P > 1 + 1e-15)))
        report.add(ERROR, f"{bad} transition entries outside [0, 1]")
    row_sums = P.sum(axis=2)
    for s in range(S):
        for a in (0, 1):
            if abs(row_sums[s, a] - 1.0) > ROW_SUM_TOL:
                report.add(ERROR, f"row sum {row_sums[s, a]:.12g} != 1 at state {s}, action {a}")
    if not np.all(np.isfinite(r)):
        report.add(ERROR, "non-finite reward entries")

    if model.dummy_of is not None:
        for sd, s in model.dummy_of.items():
            if not (0 <= sd < S and 0 <= s < S):
                report.add(ERROR, f"dummy_of maps out-of-range states {sd} -> {s}")
                continue
            if not np.allclose(P[sd, 0], P[sd, 1], atol=ROW_SUM_TOL, rtol=0):
                report.add(ERROR, f"dummy state {sd}: action rows differ")
            if abs(r[sd, 0] - r[sd, 1]) > ROW_SUM_TOL or abs(r[sd, 0] - r[s, 0]) > ROW_SUM_TOL:
                report.add(
                    ERROR,
                    f"dummy state {sd}: rewards ({r[sd, 0]:g}, {r[sd, 1]:g}) "
                    f"not tied to passive reward {r[s, 0]:g} of origin {s}",
                )
            normal = [t for t in range(S) if t not in model.dummy_of]
            if normal and np.any(P[sd][:, normal] > ROW_SUM_TOL):
                report.add(ERROR, f"dummy state {sd} leaks probability onto normal states")

    # Unreachability is a warning only: unichain-ness is assumed, not verified.
    incoming = P.sum(axis=(0, 1)) - P[np.arange(S), :, np.arange(S)].sum(axis=1)
    for s in np.flatnonzero(incoming <= ROW_SUM_TOL):
        report.add(WARNING, f"state {int(s)} has no incoming transitions from other states")
    return report


def validate_instance(instance: Instance) -> ValidationReport:
    """Instance-level checks on top of per-type validate_arm."""
    report = ValidationReport()
    if instance.rho < 1:
        report.add(ERROR, f"rho must be positive, got {instance.rho}")
    if instance.horizon < 1:
        report.add(ERROR, f"horizon must be positive, got {instance.horizon}")
    if instance.budget < 0:
        report.add(ERROR, f"budget must be non-negative, got {instance.budget}")
    if len(instance.initial) != len(instance.types):
        report.add(ERROR, "one initial distribution required per type")
        return report
    for n, (model, dist) in enumerate(zip(instance.types, instance.initial)):
        sub = validate_arm(model)
        for sev, msg in sub.issues:
            report.add(sev, f"type {n}: {msg}")
        if len(dist) != model.n_states:
            report.add(ERROR, f"type {n}: initial distribution has length {len(dist)}, "
                              f"expected {model.n_states}")
            continue
        if abs(dist.sum() - 1.0) > ROW_SUM_TOL:
            report.add(ERROR, f"type {n}: initial distribution sums to {dist.sum():.12g}")
        if np.any(dist < -1e-15):
            report.add(ERROR, f"type {n}: negative initial probabilities")
        if model.dummy_of and np.any(dist[list(model.dummy_of)] > 0):
            report.add(ERROR, f"type {n}: initial mass on dummy states")
    if instance.budget > instance.rho * len(instance.types):
        report.add(WARNING, f"budget {instance.budget} exceeds rho*N = "
                            f"{instance.rho * len(instance.types)}; never binding")
    return report


def require_valid(instance: Instance):
    report = validate_instance(instance)
    if not report.ok:
        raise ValueError("invalid instance: " + "; ".join(report.errors()))
    return report


def expand_with_dummies(model: ArmModel) -> ArmModel:
    """Duplicate the state space with absorbing dummy copies.

    The dummy copy of state s has index s + n_states. Pulling a normal state
    routes its action-1 transition onto the dummy copies of the targets;
    dummy states evolve like their origin's passive kernel under both actions
    and pay the origin's passive reward under both actions.
    """
    if model.expanded:
        raise ValueError("model already contains dummy states")
    S = model.n_states
    P, r = model.transitions, model.rewards
    P2 = np.zeros((2 * S, 2, 2 * S))
    r2 = np.zeros((2 * S, 2))
    P2[:S, 0, :S] = P[:, 0, :]
    P2[:S, 1, S:] = P[:, 1, :]
    P2[S:, 0, S:] = P[:, 0, :]
    P2[S:, 1, S:] = P[:, 0, :]
    r2[:S, :] = r
    r2[S:, 0] = r[:, 0]
    r2[S:, 1] = r[:, 0]
    return ArmModel(
        n_states=2 * S,
        transitions=P2,
        rewards=r2,
        dummy_of={S + s: s for s in range(S)},
        label=model.label,
    )


def expand_initial(model: ArmModel, initial: np.ndarray) -> np.ndarray:
    """Pad an initial distribution with zero mass on the dummy half."""
    out = np.zeros(2 * model.n_states)
    out[: model.n_states] = initial
    return out


def replicate(instance: Instance, seed: int) -> Population:
    """Materialize rho arms per type with initial states sampled per type."""
    require_valid(instance)
    rng = np.random.default_rng(seed)
    type_of = np.repeat(np.arange(instance.n_types), instance.rho)
    states = np.empty(instance.n_arms, dtype=np.int64)
    for n, (model, dist) in enumerate(zip(instance.types, instance.initial)):
        lo, hi = n * instance.rho, (n + 1) * instance.rho
        states[lo:hi] = rng.choice(model.n_states, size=instance.rho, p=dist)
    return Population(type_of=type_of, states=states, pulled=np.zeros(instance.n_arms, dtype=bool))


def point_initial(n_states: int, s: int) -> np.ndarray:
    d = np.zeros(n_states)
    d[s] = 1.0
    return d


def _renormalize_rows(P: np.ndarray) -> np.ndarray:
    """Renormalize rows whose sums are within ROW_SUM_TOL of 1; reject others."""
    P = np.array(P, dtype=float)
    sums = P.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise ValueError(f"transition row sums deviate from 1 by up to {worst:.3g} "
                         f"(tolerance {ROW_SUM_TOL:g})")
    return P / sums[..., None]


def save_instance(instance: Instance, path: str):
    """Serialize an (unexpanded) instance to the JSON model file format."""
    doc = {
        "types": [
            {
                "n_states": m.n_states,
                "transitions": m.transitions.tolist(),
                "rewards": m.rewards.tolist(),
                "label": m.label,
            }
            for m in instance.types
        ],
        "rho": instance.rho,
        "budget": instance.budget,
        "horizon": instance.horizon,
        "initial": [d.tolist() for d in instance.initial],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_instance(path: str) -> Instance:
    """Load an instance document, renormalizing rows within tolerance."""
    with open(path) as fh:
        doc = json.load(fh)
    types = []
    for td in doc["types"]:
        P = _renormalize_rows(np.asarray(td["transitions"], dtype=float))
        types.append(
            ArmModel(
                n_states=int(td["n_states"]),
                transitions=P,
                rewards=np.asarray(td["rewards"], dtype=float),
                label=str(td.get("label", "")),
            )
        )
    initial = [np.asarray(d, dtype=float) for d in doc["initial"]]
    instance = Instance(
        types=tuple(types),
        rho=int(doc["rho"]),
        budget=int(doc["budget"]),
        horizon=int(doc["horizon"]),
        initial=tuple(initial),
    )
    require_valid(instance)
    return instance
