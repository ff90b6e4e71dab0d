"""Whittle-style subsidy indices by bisection over single-arm DPs.

The infinite-horizon index of a state is the passive subsidy at which
activating and resting are equally attractive under the average-reward
criterion; the inner evaluation is relative value iteration. The
finite-horizon variant replaces the inner evaluation with backward
induction from the end of the horizon, giving a time-dependent index.
Indexability is assumed, not verified: a bracket whose endpoints do not
straddle the activation/passivity switch raises BracketFail instead of
reporting a spurious crossing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ArmModel

BISECT_MAX_ITERS = 60
DEFAULT_TOL = 1e-6
RVI_SPAN_TOL = 1e-9
RVI_MAX_SWEEPS = 100_000


class BracketFail(RuntimeError):
    """Subsidy bracket does not straddle the indifference point."""


class NonConvergent(RuntimeError):
    """Relative value iteration failed to contract."""


@dataclass
class IndexTable:
    """Index values per (type, state, time).

    values[n] has shape (S_n, T) for time-dependent tables and (S_n, 1)
    for stationary ones; stationary lookups ignore t.
    """

    values: list[np.ndarray]
    time_dependent: bool

    def value(self, n: int, s: int, t: int = 0) -> float:
        v = self.values[n]
        return float(v[s, t]) if self.time_dependent else float(v[s, 0])

    def lookup(self, type_of: np.ndarray, states: np.ndarray, t: int) -> np.ndarray:
        """Vectorized per-arm index lookup."""
        out = np.empty(len(type_of))
        col = t if self.time_dependent else 0
        for n in np.unique(type_of):
            mask = type_of == n
            out[mask] = self.values[n][states[mask], col]
        return out

    @classmethod
    def stack(cls, tables: list["IndexTable"]) -> "IndexTable":
        flags = {tb.time_dependent for tb in tables}
        if len(flags) != 1:
            raise ValueError("cannot stack stationary and time-dependent tables")
        return cls(values=[tb.values[0] for tb in tables], time_dependent=flags.pop())


BRACKET_GROWTH_LIMIT = 24  # doublings of the initial half-width


def _bracket_halfwidth(model: ArmModel) -> float:
    span = float(model.rewards.max() - model.rewards.min())
    return 2.0 * span if span > 0 else 1.0


def _expand_bracket(hw0: float, qdiff_at):
    """Grow [-hw, hw] geometrically until the endpoint gaps straddle zero.

    The equalizing subsidy can exceed the per-step reward span by the bias
    range, which is large for lazy chains (small per-step motion), so a
    fixed bracket is not enough. Returns (hw, qd_lo, qd_hi).
    """
    hw = hw0
    qd_lo = qdiff_at(-hw)
    qd_hi = qdiff_at(hw)
    for _ in range(BRACKET_GROWTH_LIMIT):
        if (qd_lo >= 0.0).all() and (qd_hi <= 0.0).all():
            return hw, qd_lo, qd_hi
        hw *= 2.0
        qd_lo = qdiff_at(-hw)
        qd_hi = qdiff_at(hw)
    return hw, qd_lo, qd_hi


def relative_value_iteration(model: ArmModel, lam: float, v0: np.ndarray | None = None,
                             span_tol: float = RVI_SPAN_TOL,
                             max_sweeps: int = RVI_MAX_SWEEPS,
                             damping: float = 0.5):
    """Average-reward DP with passive subsidy lam.

    Damped relative value iteration (aperiodicity transform): the update
    averages the Bellman image with the current iterate, which leaves the
    gain and bias structure untouched but removes the near-periodic modes
    that stall plain value iteration on nearly deterministic cycles. The
    span criterion applies to the undamped Bellman residual.

    Returns (qdiff, h): qdiff[s] = Q(s, 1) - Q(s, 0) at the fixed point and
    h the relative value function (reference state 0). Raises NonConvergent
    when the span criterion is not met within the sweep budget.
    """
    P0 = model.transitions[:, 0, :]
    P1 = model.transitions[:, 1, :]
    r0 = model.rewards[:, 0] + lam
    r1 = model.rewards[:, 1]
    v = np.zeros(model.n_states) if v0 is None else v0.copy()
    for _ in range(max_sweeps):
        q0 = r0 + P0 @ v
        q1 = r1 + P1 @ v
        bellman = np.maximum(q0, q1)
        residual = bellman - v
        if residual.max() - residual.min() < span_tol:
            return q1 - q0, v
        v = (1.0 - damping) * v + damping * bellman
        v = v - v[0]
    raise NonConvergent(
        f"relative value iteration did not reach span {span_tol:g} "
        f"in {max_sweeps} sweeps (lambda={lam:g})"
    )


def whittle_index_infinite(model: ArmModel, tol: float = DEFAULT_TOL) -> IndexTable:
    """Stationary subsidy index per state, by bisection over the average-reward DP.

    Every bisection evaluation solves the subsidized DP from scratch by
    relative value iteration; the search stops once activating and resting
    are equal within tol (or after the iteration cap).
    """
    S = model.n_states
    out = np.zeros((S, 1))

    def qdiff_at(lam):
        qd, _ = relative_value_iteration(model, lam)
        return qd

    hw, qd_lo, qd_hi = _expand_bracket(_bracket_halfwidth(model), qdiff_at)
    for s in range(S):
        if qd_lo[s] < -tol or qd_hi[s] > tol:
            raise BracketFail(
                f"state {s}: no activation/passivity crossing in [{-hw:g}, {hw:g}] "
                f"(endpoint gaps {qd_lo[s]:.3g}, {qd_hi[s]:.3g})"
            )
        lo, hi = -hw, hw
        lam = 0.0
        for _ in range(BISECT_MAX_ITERS):
            lam = 0.5 * (lo + hi)
            qd = qdiff_at(lam)
            if abs(qd[s]) <= 0.5 * tol:
                break
            if qd[s] > 0:
                lo = lam
            else:
                hi = lam
        out[s, 0] = lam
    return IndexTable(values=[out], time_dependent=False)


def finite_horizon_qdiff(model: ArmModel, T: int, lam: float) -> np.ndarray:
    """Q_t(s,1) - Q_t(s,0) for all (s, t) under per-step passive subsidy lam."""
    P0 = model.transitions[:, 0, :]
    P1 = model.transitions[:, 1, :]
    r0 = model.rewards[:, 0] + lam
    r1 = model.rewards[:, 1]
    qdiff = np.empty((model.n_states, T))
    v = np.zeros(model.n_states)
    for t in range(T - 1, -1, -1):
        q0 = r0 + P0 @ v
        q1 = r1 + P1 @ v
        qdiff[:, t] = q1 - q0
        v = np.maximum(q0, q1)
    return qdiff


def whittle_index_finite(model: ArmModel, T: int, tol: float = DEFAULT_TOL) -> IndexTable:
    """Time-dependent subsidy index: bisection per (state, t) with backward induction inside."""
    S = model.n_states
    hw, qd_lo, qd_hi = _expand_bracket(
        _bracket_halfwidth(model), lambda lam: finite_horizon_qdiff(model, T, lam)
    )
    out = np.zeros((S, T))
    for s in range(S):
        for t in range(T):
            if qd_lo[s, t] < -tol or qd_hi[s, t] > tol:
                raise BracketFail(
                    f"state {s}, t {t}: no crossing in [{-hw:g}, {hw:g}]"
                )
            lo, hi = -hw, hw
            lam = 0.0
            for _ in range(BISECT_MAX_ITERS):
                lam = 0.5 * (lo + hi)
                qd = finite_horizon_qdiff(model, T, lam)[s, t]
                if abs(qd) <= 0.5 * tol:
                    break
                if qd > 0:
                    lo = lam
                else:
                    hi = lam
            out[s, t] = lam
    return IndexTable(values=[out], time_dependent=True)


def q_difference_indices(model: ArmModel, T: int) -> IndexTable:
    """Plain Q-value gaps from unsubsidized backward induction."""
    return IndexTable(values=[finite_horizon_qdiff(model, T, 0.0)], time_dependent=True)
