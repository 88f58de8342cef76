import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from capgame import (
    NetworkInstance,
    PayoffMode,
    SerialPoAInputs,
    StrategyProfile,
    best_response,
    chain_instance,
    equal_allocation_equilibria,
    iterated_allocation,
    nash_check,
    one_step_allocation,
    one_step_profile,
    pareto_dominance_sample,
    payoff,
    pinned_profile,
    poa_pos_empirical,
    rates_of,
    serial_instance,
    serial_poa,
    two_link_instance,
    utility,
    welfare,
)

from conftest import fuzz_corpus


def serial_welfare_optimum(inst):
    """Independent 1-d oracle for the serial topology.

    Every link is tight at the optimum, so all local flows run at C - y
    where y is the long flow's rate; maximize over y numerically.
    """
    cap = float(inst.capacities[0])
    w = inst.flow_weights
    gamma = inst.gamma

    def negated(y):
        locals_part = sum(utility(cap - y, wi, gamma) for wi in w[:-1])
        return -(locals_part + utility(y, w[-1], gamma))

    res = minimize_scalar(
        negated, bounds=(1e-12, cap - 1e-12), method="bounded",
        options={"xatol": 1e-13},
    )
    return -res.fun, float(res.x)


def serial_candidate_equilibria(inst):
    """The two worst-case equilibrium profiles of the serial topology:
    starve the long flow entirely, or give every local flow the largest
    one-step local share."""
    num_links = inst.num_links
    cap = float(inst.capacities[0])
    starve = np.zeros((num_links, num_links + 1))
    for l in range(num_links):
        starve[l, l] = cap

    shares = [one_step_allocation(inst, l)[l] for l in range(num_links)]
    k = max(shares)
    matched = np.zeros((num_links, num_links + 1))
    for l in range(num_links):
        matched[l, l] = k
        matched[l, num_links] = cap - k
    return StrategyProfile(starve), StrategyProfile(matched)


class TestBestResponse:
    def test_example_improving_deviation(self, example_net):
        S = one_step_profile(example_net)
        row, value = best_response(example_net, S, 1)
        assert row == pytest.approx([5, 0, 95])
        assert value == pytest.approx(math.log(5) + math.log(95))
        assert value > payoff(example_net, S, 1)

    def test_isolated_link_plays_one_step(self):
        inst = NetworkInstance(
            routing=[[1, 1]],
            capacities=[10.0],
            gamma=0.5,
            flow_weights=[1.0, 4.0],
        )
        S = StrategyProfile([[2.0, 8.0]])
        row, _ = best_response(inst, S, 0)
        assert row == pytest.approx(one_step_allocation(inst, 0))

    def test_chain_first_link_exploits_path_weighting(self):
        inst = chain_instance()
        S = pinned_profile(inst, np.array([5.0, 1.0]))
        row, value = best_response(inst, S, 0)
        assert row == pytest.approx([2.0, 4.0])
        assert value == pytest.approx(math.log(2) + 2 * math.log(4))
        assert value > payoff(inst, S, 0)

    def test_caps_above_budget_are_inactive(self):
        from capgame._backend import waterfill

        rng = np.random.default_rng(12)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            v = rng.uniform(0.1, 3.0, n)
            budget = float(rng.uniform(0.5, 10.0))
            caps = np.where(
                rng.random(n) < 0.5, rng.uniform(0.1, 2.0, n), budget * 10
            )
            raised = np.where(caps > budget, caps * 7.3, caps)
            np.testing.assert_array_equal(
                waterfill(v, caps, budget), waterfill(v, raised, budget)
            )

    def test_br_never_below_current_payoff(self):
        for inst in fuzz_corpus(8, seed_base=600, max_links=8, max_flows=12):
            S, _ = iterated_allocation(inst)
            for link in range(inst.num_links):
                _, value = best_response(inst, S, link)
                assert value >= payoff(inst, S, link) - 1e-12


class TestNashCheck:
    def test_iterated_profile_is_equilibrium(self, example_net):
        S, _ = iterated_allocation(example_net)
        report = nash_check(example_net, S)
        assert report.is_nash
        assert report.max_gap <= 1e-6

    def test_one_step_profile_is_not(self, example_net):
        report = nash_check(example_net, one_step_profile(example_net))
        assert not report.is_nash
        gap = report.per_link[1]
        assert gap.best_response_payoff - gap.payoff == pytest.approx(
            math.log(95) - math.log(50)
        )

    def test_uniform_pinned_optimum_is_equilibrium(self):
        inst = chain_instance(payoff_mode=PayoffMode.UNIFORM)
        S = pinned_profile(inst, np.array([5.0, 1.0]))
        assert nash_check(inst, S).is_nash

    def test_path_length_pinned_optimum_is_not(self):
        inst = chain_instance()
        S = pinned_profile(inst, np.array([5.0, 1.0]))
        report = nash_check(inst, S)
        assert not report.is_nash
        assert report.per_link[0].relative_gap > 0.1

    def test_neg_inf_payoffs_give_zero_gap(self):
        inst = two_link_instance(gamma=1.0)
        zero = StrategyProfile(np.zeros((2, 3)))
        report = nash_check(inst, zero)
        assert report.is_nash
        assert report.welfare.value == float("-inf")

    def test_welfare_ratio_field(self, example_net):
        S, _ = iterated_allocation(example_net)
        report = nash_check(example_net, S, oracle_welfare=7.7734)
        assert report.welfare_ratio == pytest.approx(
            7.7734 / report.welfare.value
        )


class TestParetoSampling:
    def test_iterated_profile_has_no_sampled_dominator(self, example_net):
        S, _ = iterated_allocation(example_net)
        result = pareto_dominance_sample(example_net, S, trials=100_000, seed=42)
        assert not result.dominating_found
        assert result.trials_run == 100_000

    def test_zero_profile_dominated_immediately(self):
        inst = two_link_instance(gamma=0.5)
        zero = StrategyProfile(np.zeros((2, 3)))
        result = pareto_dominance_sample(inst, zero, trials=1000, seed=3)
        assert result.dominating_found
        assert result.trials_run < 50
        assert result.witness is not None

    def test_one_step_profile_no_sampled_dominator(self, example_net):
        # Dominating profiles exist (see the grid test below) but form a
        # measure-zero set: they must reproduce link 0's row exactly, which
        # the all-link Dirichlet perturbation never does.
        S = one_step_profile(example_net)
        result = pareto_dominance_sample(example_net, S, trials=20_000, seed=42)
        assert not result.dominating_found

    def test_grid_search_strongly_dominates_one_step(self, example_net):
        # Exhaustive 0.5-step joint deviation search: the iterated profile
        # (5, 5, 0)/(5, 0, 95) strongly dominates the one-step profile, so
        # the one-step profile is weakly but not strongly Pareto-optimal.
        from capgame.model import link_payoffs

        S = one_step_profile(example_net)
        base = link_payoffs(example_net, S)
        step = 0.5
        s00, s01 = np.meshgrid(
            np.arange(0, 10.01, step), np.arange(0, 10.01, step), indexing="ij"
        )
        keep0 = (s00 + s01 <= 10.0).ravel()
        rows0 = np.stack([s00.ravel()[keep0], s01.ravel()[keep0]], axis=1)
        s10, s12 = np.meshgrid(
            np.arange(0, 100.01, step), np.arange(0, 100.01, step), indexing="ij"
        )
        keep1 = (s10 + s12 <= 100.0).ravel()
        rows1 = np.stack([s10.ravel()[keep1], s12.ravel()[keep1]], axis=1)

        x0 = np.minimum(rows0[:, 0][:, None], rows1[:, 0][None, :])
        with np.errstate(divide="ignore"):
            u0 = np.log(x0)
            u1 = np.log(rows0[:, 1])[:, None]
            u2 = np.log(rows1[:, 1])[None, :]
        q0 = u0 + u1
        q1 = u0 + u2
        weak = (q0 >= base[0]) & (q1 >= base[1])
        strict = (q0 > base[0]) | (q1 > base[1])
        assert (weak & strict).any()


class TestSerialPoA:
    def test_vanishing_long_weight_limit(self):
        inputs = SerialPoAInputs(
            num_links=5,
            gamma=0.5,
            local_weights=(1.0,) * 5,
            long_weight=1e-6 * 5,
            long_b=1.0,
        )
        result = serial_poa(inputs)
        assert 1.0 <= result.poa <= 1.001

    def test_balanced_uniform_bound(self):
        for num_links in range(2, 11):
            for gamma in (0.25, 0.5, 0.75):
                inputs = SerialPoAInputs(
                    num_links=num_links,
                    gamma=gamma,
                    local_weights=(1.0,) * num_links,
                    long_weight=float(num_links),
                    long_b=1.0,
                )
                assert serial_poa(inputs).poa <= 2.0

    def test_monotone_in_weight_ratio(self):
        values = []
        for chi in np.geomspace(1e-6, 1e4, 25):
            inputs = SerialPoAInputs(
                num_links=4,
                gamma=0.5,
                local_weights=(1.0,) * 4,
                long_weight=float(chi) * 4,
                long_b=1.0,
            )
            values.append(serial_poa(inputs).poa)
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_gamma_domain_enforced(self):
        with pytest.raises(ValueError):
            SerialPoAInputs(
                num_links=2, gamma=1.0, local_weights=(1.0, 1.0), long_weight=1.0
            )

    def test_formulas_match_equilibrium_enumeration(self):
        # Uniform payoffs, L=2, gamma=0.5, locals (1, 1), long weight 2.
        inst = serial_instance(2, 6.0, (1.0, 1.0), 2.0, gamma=0.5)
        starve, matched = serial_candidate_equilibria(inst)
        for profile in (starve, matched):
            assert nash_check(inst, profile).is_nash
        optimum, _ = serial_welfare_optimum(inst)
        ratios = [
            optimum / welfare(inst, p).value for p in (starve, matched)
        ]
        result = serial_poa(
            SerialPoAInputs(
                num_links=2,
                gamma=0.5,
                local_weights=(1.0, 1.0),
                long_weight=2.0,
                long_b=1.0,
            )
        )
        assert result.poa1 == pytest.approx(ratios[0], abs=1e-6)
        assert result.poa2 == pytest.approx(ratios[1], abs=1e-6)
        assert result.poa == pytest.approx(max(ratios), abs=1e-6)

    def test_heterogeneous_locals_against_enumeration(self):
        inst = serial_instance(3, 8.0, (1.0, 2.0, 0.5), 3.0, gamma=0.5)
        starve, matched = serial_candidate_equilibria(inst)
        for profile in (starve, matched):
            assert nash_check(inst, profile).is_nash
        optimum, _ = serial_welfare_optimum(inst)
        ratios = [optimum / welfare(inst, p).value for p in (starve, matched)]
        result = serial_poa(
            SerialPoAInputs(
                num_links=3,
                gamma=0.5,
                local_weights=(1.0, 2.0, 0.5),
                long_weight=3.0,
                long_b=1.0,
            )
        )
        assert result.poa == pytest.approx(max(ratios), abs=1e-6)


class TestEmpiricalPoA:
    def test_zero_equilibrium_marks_unbounded(self):
        inst = NetworkInstance(
            routing=[[1, 1], [1, 1]],
            capacities=[6.0, 8.0],
            gamma=0.5,
            flow_weights=[1.0, 1.0],
        )
        zero = equal_allocation_equilibria(inst, np.zeros(2))
        report = poa_pos_empirical(inst, [zero], oracle_welfare=12.0)
        assert report.poa_unbounded
        assert report.poa_lower_bound is None
        assert report.pos_unbounded

    def test_optimal_equilibrium_gives_unit_bounds(self):
        inst = serial_instance(2, 6.0, (1.0, 1.0), 2.0, gamma=0.5)
        optimum, y = serial_welfare_optimum(inst)
        rates = np.array([6.0 - y, 6.0 - y, y])
        pinned = pinned_profile(inst, rates)
        assert nash_check(inst, pinned, rel_tol=1e-9).is_nash
        report = poa_pos_empirical(inst, [pinned], oracle_welfare=optimum)
        assert report.poa_lower_bound == pytest.approx(1.0, abs=1e-9)
        assert report.pos_upper_bound == pytest.approx(1.0, abs=1e-9)

    def test_matches_serial_closed_form(self):
        inst = serial_instance(2, 6.0, (1.0, 1.0), 2.0, gamma=0.5)
        starve, matched = serial_candidate_equilibria(inst)
        optimum, _ = serial_welfare_optimum(inst)
        report = poa_pos_empirical(
            inst, [starve, matched], oracle_welfare=optimum
        )
        closed = serial_poa(
            SerialPoAInputs(
                num_links=2,
                gamma=0.5,
                local_weights=(1.0, 1.0),
                long_weight=2.0,
                long_b=1.0,
            )
        )
        assert report.poa_lower_bound == pytest.approx(closed.poa, abs=1e-6)

    def test_rejects_log_utilities(self):
        inst = two_link_instance(gamma=1.0)
        S, _ = iterated_allocation(inst)
        with pytest.raises(ValueError, match="gamma"):
            poa_pos_empirical(inst, [S], oracle_welfare=1.0)

    def test_rejects_non_equilibrium(self):
        inst = two_link_instance(gamma=0.5)
        with pytest.raises(ValueError, match="not an equilibrium"):
            poa_pos_empirical(
                inst, [one_step_profile(inst)], oracle_welfare=1.0
            )


class TestEqualAllocation:
    def no_local_instance(self):
        return NetworkInstance(
            routing=[[1, 1], [1, 1]],
            capacities=[6.0, 8.0],
            gamma=0.5,
            flow_weights=[1.0, 2.0],
        )

    def test_zero_rates_are_equilibrium(self):
        inst = self.no_local_instance()
        S = equal_allocation_equilibria(inst, np.zeros(2))
        assert nash_check(inst, S).is_nash
        for mode in PayoffMode:
            other = NetworkInstance(
                routing=inst.routing,
                capacities=inst.capacities,
                gamma=inst.gamma,
                flow_weights=inst.flow_weights,
                payoff_mode=mode,
            )
            assert nash_check(other, S).is_nash

    def test_iterated_profile_is_fixed_point(self):
        inst = self.no_local_instance()
        S, _ = iterated_allocation(inst)
        rebuilt = equal_allocation_equilibria(inst, rates_of(inst, S))
        assert rebuilt == S

    def test_single_flow_partial_rate(self):
        inst = NetworkInstance(
            routing=[[1], [1]],
            capacities=[6.0, 6.0],
            gamma=0.5,
            flow_weights=[1.0],
        )
        S = equal_allocation_equilibria(inst, np.array([4.0]))
        np.testing.assert_allclose(S.alloc, [[4.0], [4.0]])
        assert nash_check(inst, S).is_nash

    def test_local_flow_rejected(self, example_net):
        with pytest.raises(ValueError, match="single-link"):
            equal_allocation_equilibria(example_net, np.zeros(3))

    def test_infeasible_rates_rejected(self):
        inst = self.no_local_instance()
        with pytest.raises(ValueError, match="infeasible"):
            equal_allocation_equilibria(inst, np.array([5.0, 5.0]))
