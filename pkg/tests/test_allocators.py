import numpy as np
import pytest

from capgame import (
    CappedBudgetProblem,
    CappedEntry,
    NetworkInstance,
    capped_water_fill,
    iterated_allocation,
    nash_check,
    one_step_allocation,
    one_step_profile,
    rates_of,
    renumber_links,
    two_link_instance,
    utility,
    welfare,
)
from capgame.model import link_payoffs, profile_loads

from conftest import fuzz_corpus


def grid_argmax_two_flow(budget, w, gamma, step=1e-4):
    """Brute-force the two-flow split by scanning one coordinate."""
    s = np.arange(0.0, budget + step / 2, step)
    vals = [
        utility(a, w[0], gamma) + utility(budget - a, w[1], gamma) for a in s
    ]
    return s[int(np.argmax(vals))]


class TestOneStep:
    def test_example_rows(self, example_net):
        assert one_step_allocation(example_net, 0) == pytest.approx([5, 5, 0])
        assert one_step_allocation(example_net, 1) == pytest.approx([50, 0, 50])

    def test_single_flow_gets_everything(self):
        inst = NetworkInstance(
            routing=[[1]], capacities=[7.0], gamma=0.5, flow_weights=[3.0]
        )
        assert one_step_allocation(inst, 0) == pytest.approx([7.0])

    def test_sublinear_shares_follow_squared_weights(self):
        # gamma=0.5 makes shares proportional to w**2: (1, 16) -> 10/17, 160/17.
        inst = NetworkInstance(
            routing=[[1, 1]], capacities=[10.0], gamma=0.5, flow_weights=[1.0, 4.0]
        )
        row = one_step_allocation(inst, 0)
        assert row == pytest.approx([10 / 17, 160 / 17])
        best = grid_argmax_two_flow(10.0, (1.0, 4.0), 0.5)
        assert row[0] == pytest.approx(best, abs=1e-4)

    def test_flowless_link_gets_zero_row(self):
        inst = NetworkInstance(
            routing=[[1], [0]],
            capacities=[3.0, 4.0],
            gamma=1.0,
            flow_weights=[1.0],
        )
        assert one_step_allocation(inst, 1) == pytest.approx([0.0])

    def test_rows_sum_to_capacity(self):
        for inst in fuzz_corpus(8, seed_base=50, max_links=10, max_flows=15):
            S = one_step_profile(inst)
            loads = profile_loads(inst, S)
            carrying = inst.routing.sum(axis=1) > 0
            np.testing.assert_allclose(loads[carrying], inst.capacities[carrying])


class TestCappedWaterFill:
    def test_unbounded_matches_one_step_shares(self):
        problem = CappedBudgetProblem(
            budget=10.0,
            entries=(CappedEntry(0, 1.0), CappedEntry(1, 1.0)),
        )
        alloc, slack = capped_water_fill(problem)
        assert alloc == pytest.approx([5.0, 5.0])
        assert slack == pytest.approx(0.0)

    def test_example_bottleneck_cap(self):
        problem = CappedBudgetProblem(
            budget=100.0,
            entries=(CappedEntry(0, 1.0, cap=5.0), CappedEntry(2, 1.0)),
        )
        alloc, slack = capped_water_fill(problem)
        assert alloc == pytest.approx([5.0, 95.0])
        assert slack == pytest.approx(0.0)

    def test_inactive_cap_no_clamp(self):
        # Shares (10/17, 160/17): the first stays below its cap of 2.
        problem = CappedBudgetProblem(
            budget=10.0,
            entries=(CappedEntry(0, 1.0, cap=2.0), CappedEntry(1, 16.0)),
        )
        alloc, _ = capped_water_fill(problem)
        assert alloc == pytest.approx([10 / 17, 160 / 17])
        best = grid_argmax_two_flow(10.0, (1.0, 4.0), 0.5)
        assert alloc[0] == pytest.approx(best, abs=1e-4)

    def test_slack_reported_when_caps_short(self):
        problem = CappedBudgetProblem(
            budget=10.0,
            entries=(CappedEntry(0, 1.0, cap=2.0), CappedEntry(1, 1.0, cap=3.0)),
        )
        alloc, slack = capped_water_fill(problem)
        assert alloc == pytest.approx([2.0, 3.0])
        assert slack == pytest.approx(5.0)

    def test_capped_result_beats_grid_search(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            w = rng.uniform(0.2, 3.0, n)
            caps = np.where(rng.random(n) < 0.5, rng.uniform(0.2, 2.0, n), np.inf)
            budget = float(rng.uniform(1.0, 6.0))
            problem = CappedBudgetProblem(
                budget=budget,
                entries=tuple(
                    CappedEntry(i, (w[i]) ** 2, cap=caps[i]) for i in range(n)
                ),
            )
            alloc, _ = capped_water_fill(problem)
            value = sum(utility(a, wi, 0.5) for a, wi in zip(alloc, w))
            # Random feasible candidates never beat the water-fill solution.
            for _ in range(200):
                cand = rng.dirichlet(np.ones(n)) * budget
                cand = np.minimum(cand, caps)
                cand_value = sum(utility(a, wi, 0.5) for a, wi in zip(cand, w))
                assert cand_value <= value + 1e-9


class TestIteratedAllocation:
    def test_example_trace(self, example_net):
        final, trace = iterated_allocation(example_net)
        np.testing.assert_allclose(
            final.alloc, [[5, 5, 0], [5, 0, 95]], atol=1e-12
        )
        assert len(trace) == 2
        first, second = trace.iterations
        assert first.filled == {0}
        assert first.phi == 0
        assert first.unsaturated == {0, 1, 2}
        np.testing.assert_allclose(first.profile.alloc, [[5, 5, 0], [50, 0, 50]])
        assert second.unsaturated == {2}
        assert second.filled == {0, 1}
        assert second.phi == 1

    def test_single_link_equals_one_step(self):
        inst = NetworkInstance(
            routing=[[1, 1, 1]],
            capacities=[9.0],
            gamma=0.5,
            flow_weights=[1.0, 2.0, 3.0],
        )
        final, trace = iterated_allocation(inst)
        assert len(trace) == 1
        np.testing.assert_allclose(final.alloc, one_step_profile(inst).alloc)

    def test_serial_two_link_hand_trace(self):
        # Both links fill in the first iteration at rates (3, 3, 3); the
        # low-index link is pinned first and the other one right after.
        inst = NetworkInstance(
            routing=[[1, 1, 0], [1, 0, 1]],
            capacities=[6.0, 6.0],
            gamma=1.0,
            flow_weights=[1.0, 1.0, 1.0],
        )
        final, trace = iterated_allocation(inst)
        np.testing.assert_allclose(final.alloc, [[3, 3, 0], [3, 0, 3]], atol=1e-12)
        assert rates_of(inst, final).rates == pytest.approx([3, 3, 3])
        assert trace.iterations[0].filled == {0, 1}
        assert trace.iterations[0].phi == 0
        assert nash_check(inst, final).is_nash

    def test_path_minimum_form(self):
        for inst in fuzz_corpus(10, seed_base=300, max_links=12, max_flows=20):
            final, _ = iterated_allocation(inst)
            x = rates_of(inst, final).rates
            on_path = inst.routing == 1
            np.testing.assert_array_equal(
                final.alloc[on_path], (inst.routing * x[None, :])[on_path]
            )

    def test_iteration_budget_and_shrinking_unsaturated(self):
        for inst in fuzz_corpus(10, seed_base=80):
            _, trace = iterated_allocation(inst)
            assert len(trace) <= inst.num_links
            sizes = [len(it.unsaturated) for it in trace.iterations]
            assert all(a > b for a, b in zip(sizes, sizes[1:]))
            assert all(it.filled for it in trace.iterations)
            assert all(it.phi in it.filled for it in trace.iterations)

    def test_filled_links_stay_exactly_full(self):
        for inst in fuzz_corpus(10, seed_base=130):
            final, trace = iterated_allocation(inst)
            ever_filled = sorted(set().union(*(it.filled for it in trace.iterations)))
            loads = profile_loads(inst, final)
            for l in ever_filled:
                assert loads[l] == pytest.approx(inst.capacities[l], rel=1e-8)

    def test_dominates_one_step(self):
        for inst in fuzz_corpus(12, seed_base=220):
            S1 = one_step_profile(inst)
            SII, _ = iterated_allocation(inst)
            w1 = welfare(inst, S1).value
            w2 = welfare(inst, SII).value
            assert w2 >= w1 - 1e-9 * max(1.0, abs(w1))
            q1 = link_payoffs(inst, S1)
            q2 = link_payoffs(inst, SII)
            assert (q2 >= q1 - 1e-9 * np.maximum(1.0, np.abs(q1))).all()

    def test_batch_removal_identical_profile(self):
        for inst in fuzz_corpus(12, seed_base=410):
            literal, _ = iterated_allocation(inst)
            batched, batch_trace = iterated_allocation(inst, batch_removal=True)
            assert np.array_equal(literal.alloc, batched.alloc)
            assert len(batch_trace) <= inst.num_links


class TestExhaustedFilledLinks:
    def test_pick_skips_links_with_no_growing_flows(self):
        # Links 0 and 1 are identical and both fill in the first wave; when
        # link 2 fills later, the pick must pass over the already-exhausted
        # link 1 without stalling an iteration.
        inst = NetworkInstance(
            routing=[[1, 1, 0], [1, 1, 0], [0, 1, 1]],
            capacities=[10.0, 10.0, 20.0],
            gamma=1.0,
            flow_weights=[1.0, 1.0, 1.0],
        )
        final, trace = iterated_allocation(inst)
        assert trace.pin_order() == [0, 2]
        np.testing.assert_allclose(
            final.alloc, [[5, 5, 0], [5, 5, 0], [0, 5, 15]], atol=1e-12
        )
        assert renumber_links(inst, trace) == [0, 2, 1]
        assert nash_check(inst, final).is_nash
        sizes = [len(it.unsaturated) for it in trace.iterations]
        assert sizes == [3, 1]
        batched, batch_trace = iterated_allocation(inst, batch_removal=True)
        assert np.array_equal(final.alloc, batched.alloc)
        assert batch_trace.pin_order() == [0, 2]

    def test_steep_utilities_still_equilibrate(self):
        # gamma above 1 flips utilities negative; the closed forms and the
        # equilibrium property are unaffected.
        from capgame import random_instance

        inst = random_instance(8, 12, 0.5, (10, 100), 2.0, seed=5)
        final, _ = iterated_allocation(inst)
        assert nash_check(inst, final, rel_tol=1e-6).is_nash

    def test_heterogeneous_weights_equilibrate(self):
        from capgame import random_instance

        inst = random_instance(
            10, 20, 0.5, (10, 100), 0.5, seed=6, randomize_weights=True
        )
        final, _ = iterated_allocation(inst)
        assert nash_check(inst, final, rel_tol=1e-6).is_nash


class TestRenumberLinks:
    def test_example_is_identity(self, example_net):
        _, trace = iterated_allocation(example_net)
        assert renumber_links(example_net, trace) == [0, 1]

    def test_single_link_identity(self):
        inst = NetworkInstance(
            routing=[[1]], capacities=[4.0], gamma=1.0, flow_weights=[1.0]
        )
        _, trace = iterated_allocation(inst)
        assert renumber_links(inst, trace) == [0]

    def test_swapped_capacities_swap_order(self):
        # With capacities (100, 10) the second link bottlenecks first.
        inst = two_link_instance(capacities=(100.0, 10.0))
        final, trace = iterated_allocation(inst)
        assert renumber_links(inst, trace) == [1, 0]
        np.testing.assert_allclose(final.alloc, [[5, 95, 0], [5, 0, 5]], atol=1e-12)


class TestBudgetMonotonicityAcrossLinks:
    def test_resplit_budget_growth_never_hurts(self):
        # Seeded version of the kernel property at the problem level.
        rng = np.random.default_rng(77)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            entries = tuple(
                CappedEntry(
                    i,
                    float(rng.uniform(0.05, 5.0)),
                    cap=float(rng.uniform(0.1, 4.0)) if rng.random() < 0.5 else np.inf,
                )
                for i in range(n)
            )
            b1 = float(rng.uniform(0.05, 10.0))
            b2 = b1 + float(rng.uniform(0.01, 10.0))
            a1, _ = capped_water_fill(CappedBudgetProblem(b1, entries))
            a2, _ = capped_water_fill(CappedBudgetProblem(b2, entries))
            assert (a2 >= a1 - 1e-12).all()
