"""Occupancy-measure linear programs for replicated bandit instances.

Three variants share the flow/initial structure and differ in the state
space and in whether an expected single-activation row is present:

* MEAN_FIELD   -- original states, per-step activation budget only.
* SPRMAB_LP    -- original states, plus one expected single-activation row
                  per type (total activation mass over the horizon <= 1).
* DUMMY        -- dummy-expanded states, no single-activation row; the
                  absorbing dummy copies make repeated activation worthless,
                  so the single-pull behaviour emerges from the dynamics.

The program is posed per class: one occupancy measure per arm type, with
the replication factor rho as an objective weight and the activation budget
normalized to K per class. This keeps the LP size independent of rho.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from . import simplex
from .model import ArmModel, Instance, expand_initial, expand_with_dummies, require_valid

MEAN_FIELD = "mean_field"
SPRMAB_LP = "sprmab_lp"
DUMMY = "dummy"
VARIANTS = (MEAN_FIELD, SPRMAB_LP, DUMMY)

OPTIMAL = simplex.OPTIMAL
INFEASIBLE = simplex.INFEASIBLE
UNBOUNDED = simplex.UNBOUNDED

MEASURE_TOL = 1e-7


@dataclass(frozen=True)
class VarIndex:
    """Bijection (type n, state s, action a, time t) <-> column index.

    Times are 0-based decision epochs 0..T-1. Types may have different
    state counts; columns are laid out type-major, then time, state, action.
    """

    n_states: tuple[int, ...]
    horizon: int

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.n_states:
            out.append(acc)
            acc += s * 2 * self.horizon
        return tuple(out)

    @property
    def n_vars(self) -> int:
        return sum(s * 2 * self.horizon for s in self.n_states)

    def col(self, n: int, s: int, a: int, t: int) -> int:
        S = self.n_states[n]
        if not (0 <= s < S and a in (0, 1) and 0 <= t < self.horizon):
            raise IndexError(f"bad variable key ({n}, {s}, {a}, {t})")
        return self.offsets[n] + (t * S + s) * 2 + a

    def key(self, col: int) -> tuple[int, int, int, int]:
        offs = self.offsets
        n = int(np.searchsorted(np.array(offs + (self.n_vars,)), col, side="right")) - 1
        rel = col - offs[n]
        S = self.n_states[n]
        t, rem = divmod(rel, S * 2)
        s, a = divmod(rem, 2)
        return n, s, a, t


@dataclass
class LpConstraint:
    cols: np.ndarray
    vals: np.ndarray
    relation: str  # "<=" or "="
    rhs: float


@dataclass
class LpProblem:
    n_vars: int
    objective: np.ndarray
    constraints: list[LpConstraint]
    bounds: np.ndarray  # (n_vars, 2) lower/upper
    var_index: VarIndex
    variant: str = ""
    basis_hint: list | np.ndarray | None = None  # warm-start bases, tried in order

    def rows_matrix(self) -> sps.csr_matrix:
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            rows.extend([i] * len(con.cols))
            cols.extend(con.cols.tolist())
            vals.extend(con.vals.tolist())
        return sps.csr_matrix(
            (vals, (rows, cols)), shape=(len(self.constraints), self.n_vars)
        )


@dataclass
class LpSolution:
    status: str
    objective: float | None
    occupancy: list[np.ndarray] | None  # per type, shape (S_n, 2, T)
    var_index: VarIndex | None = None
    iterations: int = 0

    def mu(self, n: int, s: int, a: int, t: int) -> float:
        return float(self.occupancy[n][s, a, t])


def build_occupancy_lp(instance: Instance, variant: str) -> LpProblem:
    """Assemble one of the three occupancy LPs for a validated instance."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    require_valid(instance)
    if instance.horizon < 1:
        raise ValueError("horizon must be at least 1")

    if variant == DUMMY:
        if any(m.expanded for m in instance.types):
            raise ValueError("dummy variant expects unexpanded types")
        models = [expand_with_dummies(m) for m in instance.types]
        initials = [expand_initial(m, d) for m, d in zip(instance.types, instance.initial)]
    else:
        models = list(instance.types)
        initials = list(instance.initial)

    T = instance.horizon
    N = len(models)
    vi = VarIndex(n_states=tuple(m.n_states for m in models), horizon=T)
    nv = vi.n_vars

    c = np.zeros(nv)
    for n, m in enumerate(models):
        for t in range(T):
            for s in range(m.n_states):
                for a in (0, 1):
                    c[vi.col(n, s, a, t)] = instance.rho * m.rewards[s, a]

    cons: list[LpConstraint] = []
    # Per-step activation budget, normalized per class.
    for t in range(T):
        cols = np.array(
            [vi.col(n, s, 1, t) for n, m in enumerate(models) for s in range(m.n_states)],
            dtype=np.int64,
        )
        cons.append(LpConstraint(cols, np.ones(cols.size), "<=", float(instance.budget)))
    # Flow balance for t >= 1 (0-based): mass into (n, s, t) from t-1.
    for n, m in enumerate(models):
        S = m.n_states
        for t in range(1, T):
            for s in range(S):
                cols = [vi.col(n, s, 0, t), vi.col(n, s, 1, t)]
                vals = [1.0, 1.0]
                for sp in range(S):
                    for a in (0, 1):
                        p = m.transitions[sp, a, s]
                        if p != 0.0:
                            cols.append(vi.col(n, sp, a, t - 1))
                            vals.append(-p)
                cons.append(
                    LpConstraint(np.array(cols, dtype=np.int64), np.array(vals), "=", 0.0)
                )
    # Initial distribution at t = 0 (dummy states carry zero initial mass).
    for n, m in enumerate(models):
        for s in range(m.n_states):
            cols = np.array([vi.col(n, s, 0, 0), vi.col(n, s, 1, 0)], dtype=np.int64)
            cons.append(LpConstraint(cols, np.ones(2), "=", float(initials[n][s])))
    # Expected single-activation row per type.
    if variant == SPRMAB_LP:
        for n, m in enumerate(models):
            cols = np.array(
                [vi.col(n, s, 1, t) for t in range(T) for s in range(m.n_states)],
                dtype=np.int64,
            )
            cons.append(LpConstraint(cols, np.ones(cols.size), "<=", 1.0))

    bounds = np.column_stack([np.zeros(nv), np.full(nv, np.inf)])
    # Passive columns form a feasible triangular starting basis: the flow
    # rows propagate the initial distribution under the passive kernel.
    hints = []
    if variant != SPRMAB_LP and instance.budget >= N:
        # Activation rows cannot bind (per-type activation mass <= 1), so
        # the LP decouples and the per-type backward-induction policy gives
        # an optimal basis outright.
        hints.append(_policy_basis(models, vi))
    hints.append(np.array(
        [vi.col(n, s, 0, t) for n, m in enumerate(models) for t in range(T)
         for s in range(m.n_states)],
        dtype=np.int64,
    ))
    return LpProblem(
        n_vars=nv,
        objective=c,
        constraints=cons,
        bounds=bounds,
        var_index=vi,
        variant=variant,
        basis_hint=hints,
    )


def _policy_basis(models, vi: VarIndex) -> np.ndarray:
    """Basis columns of the per-type optimal deterministic policy's flow."""
    cols = []
    for n, m in enumerate(models):
        v = np.zeros(m.n_states)
        acts = np.zeros((m.n_states, vi.horizon), dtype=np.int64)
        for t in range(vi.horizon - 1, -1, -1):
            q0 = m.rewards[:, 0] + m.transitions[:, 0, :] @ v
            q1 = m.rewards[:, 1] + m.transitions[:, 1, :] @ v
            acts[:, t] = q1 > q0 + 1e-12  # ties resolved passive
            v = np.maximum(q0, q1)
        for t in range(vi.horizon):
            for s in range(m.n_states):
                cols.append(vi.col(n, s, int(acts[s, t]), t))
    return np.array(cols, dtype=np.int64)


def solve_lp(problem: LpProblem) -> LpSolution:
    """Solve to a deterministic basic optimum; raises SolverStall on failure."""
    senses = [con.relation for con in problem.constraints]
    rhs = np.array([con.rhs for con in problem.constraints])
    res = simplex.solve(
        problem.objective,
        problem.rows_matrix(),
        senses,
        rhs,
        lower=problem.bounds[:, 0],
        upper=problem.bounds[:, 1],
        basis_hint=problem.basis_hint,
    )
    if res.status != simplex.OPTIMAL:
        return LpSolution(res.status, None, None, problem.var_index, res.iterations)
    vi = problem.var_index
    occupancy = []
    for n, S in enumerate(vi.n_states):
        block = np.empty((S, 2, vi.horizon))
        for t in range(vi.horizon):
            for s in range(S):
                for a in (0, 1):
                    block[s, a, t] = res.x[vi.col(n, s, a, t)]
        occupancy.append(block)
    return LpSolution(simplex.OPTIMAL, res.objective, occupancy, vi, res.iterations)


def upper_bound(instance: Instance) -> float:
    """Total-reward upper bound: optimum of the dummy-expanded LP.

    The objective already carries the per-class weight rho, so the LP value
    bounds the expected total reward of any feasible policy on the
    replicated population from above.
    """
    sol = solve_lp(build_occupancy_lp(instance, DUMMY))
    if sol.status != OPTIMAL:
        raise RuntimeError(f"upper-bound LP terminated with status {sol.status}")
    return float(sol.objective)


def measure_residuals(solution: LpSolution) -> float:
    """Largest deviation of any per-(type, t) occupancy sum from 1."""
    worst = 0.0
    for block in solution.occupancy:
        sums = block.sum(axis=(0, 1))
        worst = max(worst, float(np.abs(sums - 1.0).max()))
    return worst


def write_lp_text(problem: LpProblem, path: str | None = None) -> str:
    """Dump the program in LP interchange format for external cross-checks."""
    lines = ["Maximize", " obj:"]
    terms = []
    for j, coef in enumerate(problem.objective):
        if coef != 0.0:
            terms.append(f" {'+' if coef >= 0 else '-'} {abs(coef):.12g} x{j}")
    lines[1] += "".join(terms) if terms else " 0 x0"
    lines.append("Subject To")
    for i, con in enumerate(problem.constraints):
        parts = []
        for jj, vv in zip(con.cols, con.vals):
            parts.append(f" {'+' if vv >= 0 else '-'} {abs(vv):.12g} x{jj}")
        rel = "<=" if con.relation == "<=" else "="
        lines.append(f" c{i}:{''.join(parts)} {rel} {con.rhs:.12g}")
    lines.append("Bounds")
    for j in range(problem.n_vars):
        lo, hi = problem.bounds[j]
        if np.isinf(hi):
            lines.append(f" {lo:.12g} <= x{j}")
        else:
            lines.append(f" {lo:.12g} <= x{j} <= {hi:.12g}")
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
