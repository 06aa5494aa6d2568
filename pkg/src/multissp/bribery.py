"""Bribery-attack economics: per-unit bribe requirements and cheapest compromising coalitions.

Coalition search is exact. Column stakes are floats, which are dyadic
rationals, so each column is rescaled to Python integers without loss and
the threshold ``theta * delta_j`` becomes an integer ceiling. Subset sums are
then compared exactly; only the final cost ``(1 + lambda*) * stake`` is a
float, computed the same way for the solver and the brute-force oracle.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateColumnError, DimensionError, InfeasibleCoalitionError
from .model import AllocationMatrix, EconomicParams, StakeTable, honest_utility

#: exhaustive enumeration limit for the oracle
ORACLE_MAX_VALIDATORS = 20


def committed_stake_slashing(alpha_row) -> float:
    return float(math.fsum(alpha_row))


@dataclass(frozen=True)
class BriberyConfig:
    """Slashing rule and (optional) threshold override.

    ``slashing`` maps a validator's attack row to the USD amount slashed;
    the default slashes everything committed. ``theta=None`` uses the
    threshold from the economic parameters.
    """

    slashing: Callable[[Sequence[float]], float] = committed_stake_slashing
    theta: float | Fraction | None = None

    def threshold(self, params: EconomicParams):
        theta = params.theta if self.theta is None else self.theta
        if not 0 < theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {theta}")
        return theta


@dataclass(frozen=True)
class BriberyPlan:
    ssp: int
    coalition: tuple[int, ...]
    lambda_star: float
    coalition_stake: float
    cost: float
    target: float = field(default=0.0)

    def to_dict(self) -> dict:
        return {
            "ssp": self.ssp,
            "coalition": list(self.coalition),
            "lambda_star": self.lambda_star,
            "coalition_stake": self.coalition_stake,
            "target": self.target,
            "cost": self.cost,
        }


def per_unit_bribe(i: int, j: int, alloc: AllocationMatrix, stakes: StakeTable, params: EconomicParams) -> float:
    """Honest utility of validator ``i`` per unit of its stake in SSP ``j``.

    ``math.inf`` when the validator has nothing in ``j`` (it cannot help there).
    """
    w = float(alloc.entries[i, j])
    if w <= 0:
        return math.inf
    return float(honest_utility(i, stakes, params)) / w


def bribe_acceptance(bribe, committed, slashed, honest) -> bool:
    """A validator takes the bribe only if it strictly beats staying honest."""
    for name, value in (("bribe", bribe), ("committed", committed), ("slashed", slashed), ("honest", honest)):
        if value < 0:
            raise ValueError(f"{name} must be nonnegative, got {value}")
    return bribe - committed - slashed > honest


def min_acceptable_bribe(i: int, alpha_row, stakes: StakeTable, params: EconomicParams, cfg: BriberyConfig | None = None) -> float:
    """Acceptance boundary: any bribe strictly above this is taken."""
    cfg = cfg or BriberyConfig()
    committed = float(math.fsum(alpha_row))
    return committed + float(cfg.slashing(alpha_row)) + float(honest_utility(i, stakes, params))


@dataclass(frozen=True)
class _Column:
    """One SSP column in exact integer form."""

    weights: tuple[int, ...]   # scaled stake per validator
    denom: int                 # power of two: stake = weight / denom
    target: int                # smallest scaled sum that compromises the SSP
    lambdas: tuple[float, ...]

    def stake(self, scaled: int) -> float:
        return scaled / self.denom

    def usable(self) -> list[int]:
        return [v for v, w in enumerate(self.weights) if w > 0]


def _column(j, alloc, stakes, params, cfg) -> _Column:
    if alloc.n != stakes.n:
        raise DimensionError("number of validators", stakes.n, alloc.n)
    if not 0 <= j < alloc.k:
        raise IndexError(f"SSP index {j} out of range for k={alloc.k}")
    col = [float(x) for x in alloc.entries[:, j]]
    if any(x < 0 for x in col):
        raise ValueError(f"negative stake in SSP column {j}")
    ratios = [x.as_integer_ratio() for x in col]
    denom = max(d for _, d in ratios)
    weights = tuple(num * (denom // d) for num, d in ratios)
    total = sum(weights)
    if total == 0:
        raise DegenerateColumnError(j)
    theta = Fraction(cfg.threshold(params))
    target = math.ceil(theta * total)
    lambdas = tuple(per_unit_bribe(i, j, alloc, stakes, params) for i in range(alloc.n))
    return _Column(weights, denom, max(target, 1), lambdas)


def _plan(j, column: _Column, coalition, scaled_sum) -> BriberyPlan:
    lam = max(column.lambdas[v] for v in coalition)
    stake = column.stake(scaled_sum)
    return BriberyPlan(
        ssp=j,
        coalition=tuple(sorted(coalition)),
        lambda_star=lam,
        coalition_stake=stake,
        cost=(1 + lam) * stake,
        target=column.stake(column.target),
    )


def _plan_key(plan: BriberyPlan):
    return (plan.cost, len(plan.coalition), plan.coalition)


def _subset_sums(items):
    """All subset sums of ``items`` as parallel lists ``(sums, members)``."""
    sums = [0]
    members = [()]
    for v, w in items:
        sums += [s + w for s in sums]
        members += [m + (v,) for m in members]
    return sums, members


def _min_subset_at_least(items, target):
    """Subsets of ``items`` with the smallest sum ``>= target``.

    ``items`` is a list of ``(validator, weight)``. Meet in the middle: split
    the items, enumerate each half, and pair every left sum with the
    smallest right sum that reaches the target. Returns ``(best_sum, [coalitions])``
    or ``None`` when even the full set falls short.
    """
    if sum(w for _, w in items) < target:
        return None
    half = len(items) // 2
    left_sums, left_members = _subset_sums(items[:half])
    right_sums, right_members = _subset_sums(items[half:])
    order = sorted(range(len(right_sums)), key=right_sums.__getitem__)
    right_sorted = [right_sums[o] for o in order]

    best = None
    ties = []
    for ls, lm in zip(left_sums, left_members):
        pos = bisect_left(right_sorted, target - ls)
        if pos == len(right_sorted):
            continue
        s = ls + right_sorted[pos]
        if best is None or s < best:
            best, ties = s, [(lm, pos)]
        elif s == best:
            ties.append((lm, pos))

    coalitions = []
    for lm, pos in ties:
        rs = right_sorted[pos]
        while pos < len(right_sorted) and right_sorted[pos] == rs:
            coalition = lm + right_members[order[pos]]
            if coalition:
                coalitions.append(coalition)
            pos += 1
    return best, coalitions


def min_bribery_cost_ssp(
    j: int,
    alloc: AllocationMatrix,
    stakes: StakeTable,
    params: EconomicParams,
    cfg: BriberyConfig | None = None,
) -> BriberyPlan:
    """Cheapest coalition compromising SSP ``j``.

    For each candidate ``lambda*`` (the distinct per-unit requirements, in
    increasing order) the coalition may only use validators at or below it,
    and the cheapest such coalition is the one with the least stake that still
    reaches ``theta * delta_j``. Candidates whose lower bound
    ``(1 + lambda*) * theta * delta_j`` already exceeds the best cost are skipped.
    Ties go to the smaller coalition, then the lexicographically smaller one.
    """
    cfg = cfg or BriberyConfig()
    column = _column(j, alloc, stakes, params, cfg)
    usable = column.usable()
    target_stake = column.stake(column.target)
    best = None
    for cand in sorted({column.lambdas[v] for v in usable}):
        if best is not None and best.cost < (1 + cand) * target_stake:
            break
        items = [(v, column.weights[v]) for v in usable if column.lambdas[v] <= cand]
        found = _min_subset_at_least(items, column.target)
        if found is None:
            continue
        scaled, coalitions = found
        for coalition in coalitions:
            plan = _plan(j, column, coalition, scaled)
            if best is None or _plan_key(plan) < _plan_key(best):
                best = plan
    if best is None:
        raise InfeasibleCoalitionError(f"no coalition compromises SSP {j}")
    return best


def brute_force_bribery_oracle(
    j: int,
    alloc: AllocationMatrix,
    stakes: StakeTable,
    params: EconomicParams,
    cfg: BriberyConfig | None = None,
) -> BriberyPlan:
    """Reference answer by enumerating every coalition of validators."""
    if alloc.n > ORACLE_MAX_VALIDATORS:
        raise ValueError(f"oracle enumerates 2^n coalitions; n={alloc.n} exceeds {ORACLE_MAX_VALIDATORS}")
    cfg = cfg or BriberyConfig()
    column = _column(j, alloc, stakes, params, cfg)
    n = alloc.n
    sums = [0] * (1 << n)
    best = None
    for mask in range(1, 1 << n):
        low = mask & -mask
        v = low.bit_length() - 1
        sums[mask] = sums[mask ^ low] + column.weights[v]
        if sums[mask] < column.target:
            continue
        coalition = tuple(i for i in range(n) if mask >> i & 1)
        if any(column.weights[i] == 0 for i in coalition):
            continue
        plan = _plan(j, column, coalition, sums[mask])
        if best is None or _plan_key(plan) < _plan_key(best):
            best = plan
    if best is None:
        raise InfeasibleCoalitionError(f"no coalition compromises SSP {j}")
    return best


@dataclass(frozen=True)
class MultiBriberyResult:
    cost: float
    weakest: int
    plans: tuple[BriberyPlan, ...]

    def __iter__(self):
        return iter((self.cost, self.weakest, self.plans))


def bribery_cost_multi(
    alloc: AllocationMatrix,
    stakes: StakeTable,
    params: EconomicParams,
    cfg: BriberyConfig | None = None,
) -> MultiBriberyResult:
    """Isolated-model bribery cost: the cheapest SSP to compromise."""
    plans = tuple(min_bribery_cost_ssp(j, alloc, stakes, params, cfg) for j in range(alloc.k))
    weakest = min(range(len(plans)), key=lambda j: (plans[j].cost, j))
    return MultiBriberyResult(plans[weakest].cost, weakest, plans)


def bribery_cost_single(stakes: StakeTable, params: EconomicParams, lambdas=None, theta=None) -> float:
    """Shared-model bribery cost ``(1 + max lambda) * theta * delta``.

    ``lambdas`` defaults to honest utility over total stake, which is ``r``
    for every validator under proportional rewards.
    """
    theta = params.theta if theta is None else theta
    delta = stakes.total
    if delta <= 0:
        raise ValueError("total stake must be positive")
    if lambdas is None:
        lambdas = [float(honest_utility(i, stakes, params)) / stakes[i] for i in range(stakes.n)]
    lam = max(lambdas)
    return float((1 + lam) * theta * delta)


def bribery_lower_bound(alloc: AllocationMatrix, stakes: StakeTable, params: EconomicParams) -> float:
    """``(1 + r) * theta * min_j delta_j``; no SSP can be bribed more cheaply.

    Holds because a validator's stake in one SSP never exceeds its total, so
    every per-unit requirement is at least ``r``.
    """
    return float((1 + params.require_rate()) * params.theta * np.min(alloc.column_sums()))
