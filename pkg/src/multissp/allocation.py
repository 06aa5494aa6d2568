"""Maximin stake allocation across SSPs and market-equilibrium checks."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import (
    AllocationMatrix,
    EconomicParams,
    StakeTable,
    proportional_rewards,
    require_feasible,
    total_stake,
    uniform_allocation,
)


def maximin_allocate(stakes: StakeTable, k: int) -> AllocationMatrix:
    """Allocation maximizing the smallest per-SSP stake.

    The optimum has every column at ``delta / k``, which the even split of each
    validator's stake attains.
    """
    return uniform_allocation(stakes, k)


def maximin_objective(stakes: StakeTable, k: int, theta) -> Fraction:
    """Exact objective ``theta * min_j delta_j`` of :func:`maximin_allocate`.

    Evaluated in rational arithmetic on the exact even split, where each
    column holds ``sigma_i / k`` of every validator.
    """
    if k < 1:
        raise ValueError(f"need at least one SSP, got k={k}")
    shares = [Fraction(s) / k for s in stakes.stakes.tolist()]
    column = sum(shares, Fraction(0))
    return Fraction(theta) * min([column] * k)


def equilibrium_min_cost(delta, k: int, theta):
    """Minimum attack cost once all SSPs hold equal stake."""
    if k < 1:
        raise ValueError(f"need at least one SSP, got k={k}")
    return theta * delta / k


def iter_equalize(alloc: AllocationMatrix, tol=None):
    """Yield successive allocations of the exchange procedure, starting with ``alloc``.

    Each step moves half the spread between the heaviest and lightest column,
    routed through the validator holding the most stake in the heaviest
    column (capped by that holding). Rows keep their sums, and the lightest
    column never gets lighter. Stops once the spread is at most ``tol``.
    """
    w = np.array(alloc.entries, dtype=float)
    delta = total_stake(alloc)
    tol = 1e-9 * delta if tol is None else tol
    yield alloc
    while True:
        cols = w.sum(axis=0)
        hi, lo = int(np.argmax(cols)), int(np.argmin(cols))
        spread = cols[hi] - cols[lo]
        if spread <= tol:
            return
        donor = int(np.argmax(w[:, hi]))
        amount = min(spread / 2, w[donor, hi])
        if amount <= 0:
            return
        w[donor, hi] -= amount
        w[donor, lo] += amount
        yield AllocationMatrix(w.copy())


def equalize_iterative(
    alloc: AllocationMatrix,
    max_iters: int | None = None,
    tol=None,
    stakes: StakeTable | None = None,
) -> AllocationMatrix:
    """Equalize column stakes by repeated pairwise transfers.

    Defaults: ``tol = 1e-9 * delta``, ``max_iters = 10 * n * k``. Returns the
    input object unchanged when it is already within tolerance.
    """
    require_feasible(alloc, stakes)
    if max_iters is None:
        max_iters = 10 * alloc.n * alloc.k
    current = alloc
    for step, candidate in enumerate(iter_equalize(alloc, tol)):
        if step > max_iters:
            break
        current = candidate
    return current


@dataclass(frozen=True)
class EquilibriumReport:
    equalized: bool
    delta_spread: float
    min_cost: float
    utility_invariant: bool
    deviation_gain: float
    probes: int

    def to_dict(self) -> dict:
        return {
            "equalized": self.equalized,
            "delta_spread": float(self.delta_spread),
            "min_cost": float(self.min_cost),
            "utility_invariant": self.utility_invariant,
            "deviation_gain": float(self.deviation_gain),
            "probes": self.probes,
        }


def equilibrium_check(
    alloc: AllocationMatrix,
    stakes: StakeTable,
    params: EconomicParams,
    probes: int = 100,
    *,
    seed=0,
    tol=None,
) -> EquilibriumReport:
    """Test the equilibrium conditions of ``alloc``.

    Rewards are recomputed with the per-SSP proportional scheme after each
    probe moves one random validator's stake to a random split; a validator's
    reward must not change, so no unilateral deviation gains anything.
    """
    require_feasible(alloc, stakes)
    cols = alloc.column_sums()
    delta = stakes.total
    tol = 1e-9 * delta if tol is None else tol
    spread = float(cols.max() - cols.min())
    total_reward = params.total_reward(delta)
    base = proportional_rewards(alloc, total_reward)

    rng = np.random.default_rng(seed)
    gain = 0.0
    invariant = True
    w = np.array(alloc.entries)
    for _ in range(probes):
        i = int(rng.integers(alloc.n))
        row = rng.dirichlet(np.ones(alloc.k)) * stakes[i]
        moved = w.copy()
        moved[i] = row
        after = proportional_rewards(AllocationMatrix(moved), total_reward)
        change = after[i] - base[i]
        if abs(change) > 1e-9 * max(abs(base[i]), 1.0):
            invariant = False
        gain = max(gain, change)
    # float noise below the invariance tolerance is not a gain
    if invariant:
        gain = 0.0
    return EquilibriumReport(
        equalized=spread <= tol,
        delta_spread=spread,
        min_cost=float(params.theta * cols.min()),
        utility_invariant=invariant,
        deviation_gain=float(gain),
        probes=probes,
    )
