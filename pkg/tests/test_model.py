import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import allocations
from multissp.errors import DimensionError, InfeasibleAllocationError, UndefinedShareError
from multissp.model import (
    AllocationMatrix,
    AttackPlan,
    EconomicParams,
    ModelKind,
    PriceVector,
    StakeTable,
    attack_cost,
    attack_profitable,
    attack_share,
    attack_utility,
    honest_utility,
    proportional_rewards,
    require_feasible,
    ssp_stake,
    to_usd,
    total_attack_cost,
    total_stake,
    uniform_allocation,
    validate_allocation,
)

OMEGA = AllocationMatrix(np.array([[30.0, 30.0], [20.0, 20.0]]))


def test_feasible_allocation():
    report = validate_allocation(OMEGA, StakeTable([60, 40]))
    assert report.feasible
    assert report.describe() == "feasible"


def test_row_deficit_reported():
    report = validate_allocation(AllocationMatrix([[30, 20], [20, 20]]), StakeTable([60, 40]))
    assert not report.feasible
    (v,) = report.row_violations
    assert v.row == 0 and v.difference == -10


def test_negative_entry_flagged():
    report = validate_allocation(AllocationMatrix([[-1, 61], [20, 20]]), StakeTable([60, 40]))
    assert report.negative_entries == ((0, 0, -1.0),)
    with pytest.raises(InfeasibleAllocationError):
        require_feasible(AllocationMatrix([[-1, 61], [20, 20]]), StakeTable([60, 40]))


def test_dimension_mismatch_names_counts():
    with pytest.raises(DimensionError, match="expected 3.*got 2"):
        validate_allocation(OMEGA, StakeTable([1, 2, 3]))


def test_total_and_column_stake():
    assert total_stake(OMEGA) == 100
    assert total_stake(AllocationMatrix([[30, 30, 0], [20, 20, 0]])) == 100
    assert ssp_stake(AllocationMatrix([[10], [20], [30]]), 0) == 60
    assert ssp_stake(AllocationMatrix([[0, 1], [0, 2]]), 0) == 0


def test_honest_utility():
    stakes = StakeTable([50, 10])
    assert honest_utility(0, stakes, EconomicParams(pi=1, theta=0.5, r=0.1)) == pytest.approx(5)
    assert honest_utility(1, stakes, EconomicParams(pi=1, theta=0.5, r=0)) == 0


def test_attack_cost_capped_at_stake():
    stakes = StakeTable([50])
    assert attack_cost(0, AttackPlan([[10, 20]]), stakes) == 30
    assert attack_cost(0, AttackPlan([[40, 40]]), stakes) == 50
    assert attack_cost(0, AttackPlan([[0, 0]]), stakes) == 0


def test_total_attack_cost():
    stakes = StakeTable([30, 50])
    assert total_attack_cost(AttackPlan([[30], [50]]), stakes) == 80
    assert total_attack_cost(AttackPlan.zeros(2, 1), stakes) == 0


def test_attack_shares():
    stakes = StakeTable([30, 50, 20])
    alpha = AttackPlan([[30], [50], [20]])
    assert [attack_share(i, alpha, stakes) for i in range(3)] == pytest.approx([0.3, 0.5, 0.2])
    assert attack_share(0, AttackPlan([[5], [0], [0]]), stakes) == 1
    with pytest.raises(UndefinedShareError):
        attack_share(0, AttackPlan.zeros(3, 1), stakes)


def test_attack_utility_examples():
    params = EconomicParams(pi=50, theta=Fraction(1, 3))
    assert attack_utility(0, AttackPlan([[40]]), StakeTable([40]), params) == 10
    stakes = StakeTable([40, 40])
    alpha = AttackPlan([[40], [40]])
    params = EconomicParams(pi=100, theta=Fraction(1, 3))
    assert attack_utility(0, alpha, stakes, params) == 10
    # break-even
    params = EconomicParams(pi=80, theta=Fraction(1, 3))
    assert [attack_utility(i, alpha, stakes, params) for i in range(2)] == [0, 0]


def test_shared_profitability_window():
    alloc = AllocationMatrix([[45, 45]])
    params = EconomicParams(pi=50, theta=Fraction(1, 3))
    verdict = attack_profitable(AttackPlan([[20, 20]]), alloc, params, ModelKind.shared())
    assert verdict.globally_profitable
    # committed equal to pi is excluded
    edge = attack_profitable(AttackPlan([[25, 25]]), alloc, params, ModelKind.shared())
    assert not edge.globally_profitable


def test_capture_at_threshold():
    alloc = AllocationMatrix([[30, 30]])
    verdict = attack_profitable(AttackPlan([[10, 0]]), alloc, EconomicParams(pi=50, theta=Fraction(1, 3)),
                                ModelKind.isolated())
    assert verdict.capture_per_ssp == (True, False)
    assert verdict.globally_profitable


def test_zero_column_capture_undefined():
    alloc = AllocationMatrix([[30, 0]])
    verdict = attack_profitable(AttackPlan([[0, 0]]), alloc, EconomicParams(pi=5, theta=0.5), ModelKind.isolated())
    assert verdict.capture_per_ssp == (False, None)
    assert verdict.undefined_columns == (1,)


def test_single_model_uses_designated_column():
    alloc = AllocationMatrix([[10, 50]])
    params = EconomicParams(pi=100, theta=0.5)
    plan = AttackPlan([[5, 0]])
    assert not attack_profitable(plan, alloc, params, ModelKind.single()).globally_profitable
    assert attack_profitable(plan, alloc, params, ModelKind.single(0)).globally_profitable
    with pytest.raises(IndexError):
        attack_profitable(plan, alloc, params, ModelKind.single(3))


def test_attack_plan_cannot_exceed_allocation():
    with pytest.raises(ValueError, match="exceeds allocation"):
        attack_profitable(AttackPlan([[31, 0]]), AllocationMatrix([[30, 30]]), EconomicParams(pi=1, theta=0.5))


def test_uniform_allocation():
    np.testing.assert_allclose(uniform_allocation(StakeTable([60, 40]), 2).entries, [[30, 30], [20, 20]])
    np.testing.assert_allclose(uniform_allocation(StakeTable([60, 40]), 1).entries, [[60], [40]])


def test_params_validation():
    with pytest.raises(ValueError):
        EconomicParams(pi=1, theta=1)
    with pytest.raises(ValueError):
        EconomicParams(pi=-1, theta=0.5)
    with pytest.raises(ValueError, match="inconsistent"):
        EconomicParams(pi=1, theta=0.5, r=0.1, R=50).total_reward(100)
    assert EconomicParams(pi=1, theta=0.5, r=0.1).with_total_stake(100).R == pytest.approx(10)


def test_to_usd():
    usd = to_usd(AllocationMatrix([[1, 2]]), PriceVector([10, 0.5]))
    np.testing.assert_allclose(usd.entries, [[10, 1]])


def test_inputs_are_immutable():
    with pytest.raises(ValueError):
        OMEGA.entries[0, 0] = 1


@settings(max_examples=200, deadline=None)
@given(allocations())
def test_uniform_conserves_stake(pair):
    stakes, _ = pair
    k = 3
    alloc = uniform_allocation(stakes, k)
    assert validate_allocation(alloc, stakes).feasible
    assert math.isclose(total_stake(alloc), stakes.total, rel_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(allocations(), st.floats(0, 1000))
def test_proportional_rewards_are_rate_times_stake(pair, reward):
    stakes, alloc = pair
    rewards = proportional_rewards(alloc, reward)
    np.testing.assert_allclose(rewards, reward / stakes.total * stakes.stakes, rtol=1e-9, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1000), min_size=1, max_size=8), st.floats(0, 1e5))
def test_utilities_sum_to_prize_minus_cost(costs, pi):
    stakes = StakeTable(costs)
    alpha = AttackPlan(np.array(costs)[:, None])
    params = EconomicParams(pi=pi, theta=0.5)
    total = math.fsum(attack_utility(i, alpha, stakes, params) for i in range(len(costs)))
    assert math.isclose(total, pi - math.fsum(costs), rel_tol=1e-9, abs_tol=1e-6)
