"""Security verdicts, validator-count bound and minimum attack costs per architecture."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import AllocationMatrix, AttackPlan, EconomicParams, ModelKind, require_feasible


class BindingConstraint(enum.Enum):
    WEAK_THRESHOLD = "weak_threshold"
    STRONG_AVERAGE = "strong_average"
    PER_SSP_MIN = "per_ssp_min"


@dataclass(frozen=True)
class SecurityVerdict:
    """Outcome of a security check.

    ``margin`` is the slack of the binding constraint in USD. For the
    non-strict weak condition ``secure == (margin >= 0)``; for the strict
    conditions ``secure == (margin > 0)``.
    """

    secure: bool
    margin: float
    binding_constraint: BindingConstraint

    def to_dict(self) -> dict:
        return {
            "secure": self.secure,
            "margin": float(self.margin),
            "binding_constraint": self.binding_constraint.value,
        }


def weak_security(delta, params: EconomicParams) -> SecurityVerdict:
    """Secure iff the attack profit does not exceed ``theta * delta``."""
    if delta <= 0:
        raise ValueError(f"total stake must be positive, got {delta}")
    capacity = params.theta * delta
    return SecurityVerdict(params.pi <= capacity, capacity - params.pi, BindingConstraint.WEAK_THRESHOLD)


def strong_security(alpha: AttackPlan | float, params: EconomicParams, n: int) -> SecurityVerdict:
    """Secure iff the average of attack stake plus reward per validator strictly exceeds ``pi``.

    ``alpha`` may be an :class:`AttackPlan` or its precomputed total. ``params.R``
    must be set (see :meth:`EconomicParams.with_total_stake`).
    """
    if n < 1:
        raise ValueError(f"need at least one validator, got n={n}")
    if params.R is None:
        raise ValueError("strong security needs the total reward R")
    committed = alpha.total if isinstance(alpha, AttackPlan) else alpha
    margin = (committed + params.R) / n - params.pi
    return SecurityVerdict(margin > 0, margin, BindingConstraint.STRONG_AVERAGE)


@dataclass(frozen=True)
class ValidatorBound:
    """Largest validator count with ``n < (theta + r) * delta / pi``.

    ``max_n`` is ``math.inf`` (and ``bound`` is ``inf``) when ``pi == 0``.
    """

    bound: float
    max_n: int | float

    @property
    def unbounded(self) -> bool:
        return self.max_n == math.inf

    def to_dict(self) -> dict:
        return {
            "bound": None if self.unbounded else float(self.bound),
            "max_n": None if self.unbounded else int(self.max_n),
            "unbounded": self.unbounded,
        }


def validator_bound(delta, params: EconomicParams) -> ValidatorBound:
    r = params.require_rate()
    if params.pi == 0:
        return ValidatorBound(math.inf, math.inf)
    bound = (params.theta + r) * delta / params.pi
    if bound <= 1:
        return ValidatorBound(bound, 0)
    # largest integer strictly below the bound
    max_n = math.ceil(bound) - 1
    return ValidatorBound(bound, int(max_n))


def honest_average_chain(alpha_total, delta, params: EconomicParams, n: int):
    """Both sides of the honest-average inequality for ``n`` validators.

    Returns ``(upper, average)`` with ``upper = (theta + r) * delta / n`` and
    ``average = (alpha_total + r * delta) / n``. Whenever no SSP is captured,
    ``upper > average``. Exact for ``Fraction`` inputs.
    """
    r = params.require_rate()
    return (params.theta + r) * delta / n, (alpha_total + r * delta) / n


def no_ssp_captured(alpha: AttackPlan, alloc: AllocationMatrix, theta) -> bool:
    """True when every SSP's attack stake stays strictly below ``theta`` of its stake."""
    return all(a < theta * d for a, d in zip(alpha.column_sums(), alloc.column_sums()))


@dataclass(frozen=True)
class AttackCostBreakdown:
    model: ModelKind
    min_cost: float
    weakest_ssp: int | None
    per_ssp_costs: tuple[float, ...]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "model": str(self.model),
            "min_cost": float(self.min_cost),
            "weakest_ssp": self.weakest_ssp,
            "per_ssp_costs": [float(c) for c in self.per_ssp_costs],
            "degenerate": self.degenerate,
        }


def min_attack_cost(
    alloc: AllocationMatrix,
    params: EconomicParams,
    model: ModelKind,
    *,
    check: bool = True,
) -> AttackCostBreakdown:
    """Cheapest stake an attacker must capture under ``model``.

    Shared: ``theta * delta``. Isolated: ``theta`` times the smallest pool,
    which is also the weakest SSP. Single-SSP: ``theta`` times the designated
    pool. A zero-stake column makes the isolated cost 0 and sets ``degenerate``.
    """
    if check:
        require_feasible(alloc)
    cols = alloc.column_sums()
    per_ssp = tuple(float(params.theta * d) for d in cols)
    degenerate = bool(np.any(cols == 0))
    if model.variant == ModelKind.SHARED:
        cost = params.theta * math.fsum(cols)
        return AttackCostBreakdown(model, float(cost), None, per_ssp, degenerate)
    if model.variant == ModelKind.ISOLATED:
        j = int(np.argmin(cols))
        return AttackCostBreakdown(model, per_ssp[j], j, per_ssp, degenerate)
    j0 = model.resolve_column(cols)
    return AttackCostBreakdown(model, per_ssp[j0], j0, per_ssp, bool(cols[j0] == 0))


def tightened_threshold(alloc: AllocationMatrix, params: EconomicParams) -> float:
    """Strict upper bound on ``pi`` for the isolated model to be secure."""
    return float(params.theta * alloc.column_sums().min())


def security_level(x, theta) -> float:
    """``theta`` times the weakest SSP's stake; concave in ``x``."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("security level of an empty stake vector")
    if np.any(x < 0):
        raise ValueError("per-SSP stake must be nonnegative")
    return float(theta * x.min())
