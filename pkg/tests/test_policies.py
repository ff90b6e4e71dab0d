import numpy as np
import pytest

from singlepull import (
    ArmModel,
    Instance,
    build_occupancy_lp,
    compute_chi,
    expand_with_dummies,
    greedy_budget_select,
    make_policy,
    mean_field_select,
    random_select,
    solve_lp,
    spi_indices,
    spi_select,
)
from singlepull import lp
from singlepull.model import point_initial
from singlepull.policies import dummy_mask_for
from singlepull.whittle import IndexTable

from conftest import random_arm


def fake_solution(mu_blocks):
    """LpSolution stand-in from explicit occupancy blocks (S, 2, T)."""
    return lp.LpSolution(status=lp.OPTIMAL, objective=0.0,
                         occupancy=[np.asarray(b, dtype=float) for b in mu_blocks])


class TestChi:
    def test_direct_ratio(self):
        sol = fake_solution([np.array([[[0.6], [0.2]]])])  # mu0=0.6, mu1=0.2
        chi = compute_chi(sol)
        assert chi.value(0, 0, 0) == pytest.approx(0.25)

    def test_zero_denominator_gives_zero(self):
        sol = fake_solution([np.array([[[0.0], [0.0]]])])
        assert compute_chi(sol).value(0, 0, 0) == 0.0

    def test_boundary_one(self):
        sol = fake_solution([np.array([[[0.0], [0.5]]])])
        assert compute_chi(sol).value(0, 0, 0) == pytest.approx(1.0)

    def test_range_invariant_on_solved_lp(self, rng):
        types = tuple(random_arm(rng, 3) for _ in range(2))
        inst = Instance(types=types, rho=2, budget=1, horizon=3,
                        initial=(point_initial(3, 0), point_initial(3, 1)))
        sol = solve_lp(build_occupancy_lp(inst, lp.DUMMY))
        chi = compute_chi(sol)
        for n, block in enumerate(sol.occupancy):
            c = chi.chi[n]
            assert np.all(c >= 0.0) and np.all(c <= 1.0)
            dead = (block[:, 0, :] + block[:, 1, :]) <= 1e-12
            assert np.all(c[dead] == 0.0)


class TestSpiIndices:
    def test_product(self):
        m = expand_with_dummies(ArmModel(
            n_states=1, transitions=np.ones((1, 2, 1)), rewards=np.array([[0.5, 2.0]])
        ))
        chi_blocks = [np.array([[0.25], [0.3]])]
        from singlepull.policies import ActivationProbabilities
        table = spi_indices(ActivationProbabilities(chi=chi_blocks), [m])
        assert table.value(0, 0, 0) == pytest.approx(0.25 * 2.0)
        # dummy state: active reward ties to the origin's passive reward
        assert table.value(0, 1, 0) == pytest.approx(0.3 * 0.5)

    def test_zero_chi_zero_index(self, rng):
        m = expand_with_dummies(random_arm(rng, 2))
        from singlepull.policies import ActivationProbabilities
        table = spi_indices(ActivationProbabilities(chi=[np.zeros((4, 2))]), [m])
        assert np.allclose(table.values[0], 0.0)


def manual_table(values):
    return IndexTable(values=[np.asarray(values, dtype=float)], time_dependent=True)


class TestSpiSelect:
    def setup_method(self):
        # 2 normal states (0, 1) + dummies (2, 3)
        self.model = expand_with_dummies(ArmModel(
            n_states=2,
            transitions=np.stack([np.eye(2), np.eye(2)], axis=1),
            rewards=np.array([[0.0, 1.0], [0.0, 2.0]]),
        ))

    def select(self, idx_by_state, states, budget, **kw):
        table = manual_table(np.asarray(idx_by_state, dtype=float)[:, None])
        type_of = np.zeros(len(states), dtype=int)
        return spi_select(table, [self.model], type_of, np.asarray(states), 0, budget, **kw)

    def test_dummy_arm_consumes_budget(self):
        # highest index sits on a dummy arm; budget one unit -> nothing pulled
        actions = self.select([0.1, 0.8, 0.9, 0.0], states=[2, 1, 0], budget=1)
        assert actions.sum() == 0

    def test_two_pulls_within_budget(self):
        actions = self.select([0.8, 0.5, 0.0, 0.0], states=[0, 1], budget=2)
        assert actions.tolist() == [1, 1]

    def test_zero_indices_spend_nothing(self):
        actions = self.select([0.0, 0.0, 0.0, 0.0], states=[0, 1, 0], budget=5)
        assert actions.sum() == 0

    def test_cutoff_toggle(self):
        actions = self.select([0.0, 0.0, 0.0, 0.0], states=[0, 1], budget=5,
                              stop_at_nonpositive=False)
        assert actions.tolist() == [1, 1]

    def test_invariant_under_appended_zero_arms(self):
        base = self.select([0.5, 0.4, 0.0, 0.0], states=[0, 1], budget=1)
        padded = self.select([0.5, 0.4, 0.0, 0.0], states=[0, 1, 3, 3, 3], budget=1)
        assert padded[:2].tolist() == base.tolist()
        assert padded[2:].sum() == 0

    def test_tie_break_lowest_arm_id(self):
        actions = self.select([0.5, 0.4, 0.0, 0.0], states=[0, 0, 0], budget=1)
        assert actions.tolist() == [1, 0, 0]


class TestMeanFieldSelect:
    def make_solution(self, mu0, mu1):
        block = np.zeros((len(mu0), 2, 1))
        block[:, 0, 0] = mu0
        block[:, 1, 0] = mu1
        return fake_solution([block])

    def test_high_priority_pulled_first(self):
        sol = self.make_solution([0.0, 0.5], [0.4, 0.1])
        actions = mean_field_select(sol, np.zeros(2, dtype=int), np.array([0, 1]),
                                    np.zeros(2, dtype=bool), 0, budget=1)
        assert actions.tolist() == [1, 0]

    def test_low_priority_never_pulled(self):
        sol = self.make_solution([0.5, 0.5], [0.0, 0.0])
        actions = mean_field_select(sol, np.zeros(2, dtype=int), np.array([0, 1]),
                                    np.zeros(2, dtype=bool), 0, budget=5)
        assert actions.sum() == 0

    def test_medium_filled_by_descending_chi(self):
        # chi = 0.7 vs 0.3; exhaustive check over the two single-pull choices
        sol = self.make_solution([0.3, 0.7], [0.7, 0.3])
        actions = mean_field_select(sol, np.zeros(2, dtype=int), np.array([0, 1]),
                                    np.zeros(2, dtype=bool), 0, budget=1)
        chis = [0.7, 0.3]
        best = int(np.argmax(chis))
        assert actions[best] == 1 and actions.sum() == 1

    def test_skips_pulled_arms(self):
        sol = self.make_solution([0.0], [0.4])
        actions = mean_field_select(sol, np.zeros(2, dtype=int), np.array([0, 0]),
                                    np.array([True, False]), 0, budget=2)
        assert actions.tolist() == [0, 1]


class TestGreedySelect:
    def test_descending_order(self):
        table = manual_table([[3.0], [2.0], [1.0]])
        actions = greedy_budget_select(table, np.zeros(3, dtype=int),
                                       np.array([0, 1, 2]), 0, 2,
                                       np.zeros(3, dtype=bool))
        assert actions.tolist() == [1, 1, 0]

    def test_pulled_mask_blocks_top(self):
        table = manual_table([[3.0], [2.0]])
        actions = greedy_budget_select(table, np.zeros(2, dtype=int),
                                       np.array([0, 1]), 0, 1,
                                       np.array([True, False]))
        assert actions.tolist() == [0, 1]

    def test_equal_indices_lowest_id(self):
        table = manual_table([[1.0], [1.0]])
        for _ in range(5):
            actions = greedy_budget_select(table, np.zeros(3, dtype=int),
                                           np.array([0, 0, 0]), 0, 1,
                                           np.zeros(3, dtype=bool))
            assert actions.tolist() == [1, 0, 0]

    def test_dummy_mask_excludes(self, rng):
        model = expand_with_dummies(random_arm(rng, 2))
        table = manual_table(np.ones((4, 1)))
        states = np.array([2, 0])  # arm 0 in dummy space
        dmask = dummy_mask_for([model], np.zeros(2, dtype=int), states)
        actions = greedy_budget_select(table, np.zeros(2, dtype=int), states, 0, 2,
                                       np.zeros(2, dtype=bool), dummy_mask=dmask)
        assert actions.tolist() == [0, 1]


class TestRandomSelect:
    def test_budget_zero(self):
        rng = np.random.default_rng(0)
        assert random_select(np.zeros(4, dtype=bool), 0, rng).sum() == 0

    def test_budget_covers_everyone(self):
        rng = np.random.default_rng(0)
        actions = random_select(np.array([False, True, False]), 5, rng)
        assert actions.tolist() == [1, 0, 1]

    def test_uniformity(self):
        rng = np.random.default_rng(123)
        counts = np.zeros(4)
        n = 10_000
        for _ in range(n):
            counts += random_select(np.zeros(4, dtype=bool), 1, rng)
        p = 0.25
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 3 * sigma)


class TestSelectorInvariants:
    def test_budget_and_pulled_respected_everywhere(self, rng):
        types = tuple(random_arm(rng, 3) for _ in range(2))
        inst = Instance(types=types, rho=3, budget=1, horizon=3,
                        initial=(point_initial(3, 1), point_initial(3, 2)))
        for name in ("spi", "meanfield", "whittle-original", "whittle-infinite",
                     "whittle-finite", "qdiff", "random"):
            pol = make_policy(name)
            pol.prepare(inst)
            local = np.random.default_rng(7)
            states = np.array([1, 2, 1, 2, 0, 1])
            pulled = np.array([True, False, False, True, False, False])
            if pol.expanded:
                S = inst.types[0].n_states
                states = np.where(pulled, states + S, states)
            for budget in (0, 1, 3, 10):
                actions = pol.select(np.repeat([0, 1], 3), states, pulled, 0,
                                     budget, local)
                assert actions.sum() <= budget
                assert not np.any(actions[pulled] == 1)

    def test_dominant_action_spends_full_budget(self, rng):
        # action 1 strictly dominates in reward, transitions identical
        P = rng.dirichlet(np.ones(3), size=(3, 1))
        P = np.repeat(P, 2, axis=1)
        r = np.zeros((3, 2))
        r[:, 1] = [1.0, 2.0, 3.0]
        r[:, 0] = 0.0
        m = ArmModel(n_states=3, transitions=P, rewards=r)
        inst = Instance(types=(m,), rho=4, budget=1, horizon=3,
                        initial=(point_initial(3, 2),))
        for name in ("spi", "whittle-original", "whittle-infinite",
                     "whittle-finite", "qdiff"):
            pol = make_policy(name)
            pol.prepare(inst)
            local = np.random.default_rng(3)
            states = np.full(4, 2)
            pulled = np.zeros(4, dtype=bool)
            actions = pol.select(np.zeros(4, dtype=int), states, pulled, 0,
                                 inst.step_budget, local)
            assert actions.sum() == min(inst.step_budget, 4)
