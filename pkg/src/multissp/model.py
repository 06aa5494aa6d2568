"""Core primitives: validators, SSPs, stake allocations, rewards and attack economics.

Matrices are ``n x k`` with one row per validator (node operator) and one
column per shared security provider (SSP). All values are stake units,
USD-denominated unless converted from token units with :func:`to_usd`.
Scalar parameters may be ``fractions.Fraction`` for exact boundary checks;
matrix arithmetic is done in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from numbers import Real

import numpy as np

from .errors import DimensionError, InfeasibleAllocationError, UndefinedShareError

#: relative tolerance for row-sum conservation (membership in the feasible set)
FEASIBILITY_RTOL = 1e-9


def _frozen_array(values, ndim, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} dimensions", ndim, arr.ndim)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StakeTable:
    """Total stake per validator."""

    stakes: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.stakes, 1, "stakes")
        if arr.size < 1:
            raise ValueError("a stake table needs at least one validator")
        if np.any(arr <= 0):
            bad = [int(i) for i in np.flatnonzero(arr <= 0)]
            raise ValueError(f"stakes must be positive; offending validators {bad}")
        object.__setattr__(self, "stakes", arr)

    @property
    def n(self) -> int:
        return int(self.stakes.size)

    @property
    def total(self) -> float:
        return float(math.fsum(self.stakes))

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return float(self.stakes[i])


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    """Stake each validator assigns to each SSP.

    Construction only checks shape; row conservation and signs are checked by
    :func:`validate_allocation` so that violations can be reported rather
    than raised.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.entries, 2, "allocation")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"allocation must be at least 1x1, got {arr.shape}")
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def k(self) -> int:
        return int(self.entries.shape[1])

    def column_sums(self) -> np.ndarray:
        return np.array([math.fsum(col) for col in self.entries.T])

    def row_sums(self) -> np.ndarray:
        return np.array([math.fsum(row) for row in self.entries])

    def column(self, j) -> np.ndarray:
        return self.entries[:, j]

    def stake_table(self) -> StakeTable:
        """Stake table implied by the row sums."""
        return StakeTable(self.row_sums())


@dataclass(frozen=True)
class EconomicParams:
    """Attack profit ``pi``, attack threshold ``theta``, reward rate ``r`` and total reward ``R``.

    ``R`` may be left out and derived as ``r * delta`` via :meth:`total_reward`.
    """

    pi: Real
    theta: Real
    r: Real | None = None
    R: Real | None = None

    def __post_init__(self):
        if self.pi < 0:
            raise ValueError(f"attack profit must be >= 0, got {self.pi}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.r is not None and self.r < 0:
            raise ValueError(f"reward rate must be >= 0, got {self.r}")
        if self.R is not None and self.R < 0:
            raise ValueError(f"total reward must be >= 0, got {self.R}")

    def total_reward(self, delta):
        if self.R is None:
            if self.r is None:
                raise ValueError("neither r nor R is set")
            return self.r * delta
        if self.r is not None:
            expected = self.r * delta
            if abs(self.R - expected) > 1e-9 * max(1, self.R):
                raise ValueError(
                    f"R={self.R} inconsistent with r*delta={expected} (r={self.r}, delta={delta})"
                )
        return self.R

    def with_total_stake(self, delta) -> EconomicParams:
        """Copy with ``R`` filled in (and checked) for total stake ``delta``."""
        return replace(self, R=self.total_reward(delta))

    def require_rate(self):
        if self.r is None:
            raise ValueError("reward rate r is required")
        return self.r


@dataclass(frozen=True, eq=False)
class AttackPlan:
    """Stake each validator commits to an attack through each SSP."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.entries, 2, "attack plan")
        if np.any(arr < 0):
            raise ValueError("attack stake must be nonnegative")
        object.__setattr__(self, "entries", arr)

    @classmethod
    def zeros(cls, n, k) -> AttackPlan:
        return cls(np.zeros((n, k)))

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def k(self) -> int:
        return int(self.entries.shape[1])

    @property
    def total(self) -> float:
        return float(math.fsum(self.entries.ravel()))

    def column_sums(self) -> np.ndarray:
        return np.array([math.fsum(col) for col in self.entries.T])

    def check_against(self, alloc: AllocationMatrix) -> None:
        """Raise unless ``0 <= alpha <= omega`` elementwise."""
        if self.entries.shape != alloc.entries.shape:
            raise DimensionError("attack plan shape", alloc.entries.shape, self.entries.shape)
        over = np.argwhere(self.entries > alloc.entries)
        if over.size:
            i, j = (int(x) for x in over[0])
            raise ValueError(
                f"attack stake {self.entries[i, j]} exceeds allocation {alloc.entries[i, j]} "
                f"at validator {i}, SSP {j}"
            )


@dataclass(frozen=True)
class ModelKind:
    """Architecture under analysis.

    ``isolated`` is one consensus pool per SSP, ``shared`` a single pool across
    all SSPs, ``single`` the baseline of a lone designated SSP (``j0``; ``None``
    means the column with the most stake).
    """

    variant: str
    j0: int | None = None

    ISOLATED = "isolated"
    SHARED = "shared"
    SINGLE = "single"

    def __post_init__(self):
        if self.variant not in (self.ISOLATED, self.SHARED, self.SINGLE):
            raise ValueError(f"unknown model variant {self.variant!r}")
        if self.variant != self.SINGLE and self.j0 is not None:
            raise ValueError("only the single-SSP model takes a designated column")
        if self.j0 is not None and self.j0 < 0:
            raise ValueError(f"invalid column index {self.j0}")

    @classmethod
    def isolated(cls) -> ModelKind:
        return cls(cls.ISOLATED)

    @classmethod
    def shared(cls) -> ModelKind:
        return cls(cls.SHARED)

    @classmethod
    def single(cls, j0=None) -> ModelKind:
        return cls(cls.SINGLE, j0)

    def resolve_column(self, column_sums) -> int:
        """Designated column for the single-SSP model, validated against ``k``."""
        if self.variant != self.SINGLE:
            raise ValueError(f"{self.variant} model has no designated column")
        k = len(column_sums)
        if self.j0 is None:
            return int(np.argmax(column_sums))
        if self.j0 >= k:
            raise IndexError(f"designated SSP {self.j0} out of range for k={k}")
        return self.j0

    def __str__(self):
        if self.variant == self.SINGLE and self.j0 is not None:
            return f"single[{self.j0}]"
        return self.variant


@dataclass(frozen=True, eq=False)
class PriceVector:
    """USD price of the asset restaked through each SSP."""

    prices: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.prices, 1, "prices")
        if np.any(arr <= 0):
            raise ValueError("prices must be positive")
        object.__setattr__(self, "prices", arr)

    @property
    def k(self) -> int:
        return int(self.prices.size)


def to_usd(alloc: AllocationMatrix, prices: PriceVector) -> AllocationMatrix:
    """Convert a token-denominated allocation to USD, column by column."""
    if prices.k != alloc.k:
        raise DimensionError("price vector length", alloc.k, prices.k)
    return AllocationMatrix(alloc.entries * prices.prices[np.newaxis, :])


@dataclass(frozen=True)
class RowViolation:
    row: int
    expected: float
    actual: float

    @property
    def difference(self) -> float:
        """Positive for excess, negative for deficit."""
        return self.actual - self.expected

    def __str__(self):
        kind = "excess" if self.difference > 0 else "deficit"
        return (
            f"row {self.row}: sum {self.actual:g} vs stake {self.expected:g} "
            f"({kind} {abs(self.difference):g})"
        )


@dataclass(frozen=True)
class FeasibilityReport:
    row_violations: tuple[RowViolation, ...] = ()
    negative_entries: tuple[tuple[int, int, float], ...] = ()
    zero_columns: tuple[int, ...] = field(default=())

    @property
    def feasible(self) -> bool:
        return not self.row_violations and not self.negative_entries

    def describe(self) -> str:
        lines = [str(v) for v in self.row_violations]
        lines += [f"entry ({i}, {j}) is negative: {x:g}" for i, j, x in self.negative_entries]
        return "\n".join(lines) if lines else "feasible"

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "row_violations": [
                {"row": v.row, "expected": v.expected, "actual": v.actual, "difference": v.difference}
                for v in self.row_violations
            ],
            "negative_entries": [{"row": i, "ssp": j, "value": x} for i, j, x in self.negative_entries],
            "zero_columns": list(self.zero_columns),
        }


def validate_allocation(alloc: AllocationMatrix, stakes: StakeTable) -> FeasibilityReport:
    """Check ``alloc`` against the feasible set for ``stakes``."""
    if alloc.n != stakes.n:
        raise DimensionError("number of validators", stakes.n, alloc.n)
    rows = alloc.row_sums()
    violations = []
    for i, (actual, expected) in enumerate(zip(rows, stakes.stakes)):
        if abs(actual - expected) > FEASIBILITY_RTOL * abs(expected):
            violations.append(RowViolation(i, float(expected), float(actual)))
    negatives = tuple(
        (int(i), int(j), float(alloc.entries[i, j])) for i, j in np.argwhere(alloc.entries < 0)
    )
    zero_cols = tuple(int(j) for j in np.flatnonzero(alloc.column_sums() == 0))
    return FeasibilityReport(tuple(violations), negatives, zero_cols)


def require_feasible(alloc: AllocationMatrix, stakes: StakeTable | None = None) -> StakeTable:
    """Raise :class:`InfeasibleAllocationError` unless feasible; returns the stake table used."""
    if stakes is None:
        stakes = StakeTable(np.maximum(alloc.row_sums(), np.finfo(float).tiny))
    report = validate_allocation(alloc, stakes)
    if not report.feasible:
        raise InfeasibleAllocationError(report)
    return stakes


def total_stake(alloc: AllocationMatrix) -> float:
    return float(math.fsum(alloc.entries.ravel()))


def ssp_stake(alloc: AllocationMatrix, j: int) -> float:
    if not 0 <= j < alloc.k:
        raise IndexError(f"SSP index {j} out of range for k={alloc.k}")
    return float(math.fsum(alloc.entries[:, j]))


def honest_utility(i: int, stakes: StakeTable, params: EconomicParams):
    """Reward of an honest validator under proportional rewards: ``r * sigma_i``.

    Does not depend on how the validator splits its stake across SSPs.
    """
    return params.require_rate() * stakes[i]


def proportional_rewards(alloc: AllocationMatrix, total_reward) -> np.ndarray:
    """Per-validator rewards from the two-level proportional scheme.

    Each SSP receives a share of ``total_reward`` proportional to its stake and
    pays it out to validators in proportion to their stake in that SSP.
    Columns with no stake receive and pay nothing.
    """
    delta = total_stake(alloc)
    cols = alloc.column_sums()
    rewards = np.zeros(alloc.n)
    for j in range(alloc.k):
        if cols[j] == 0:
            continue
        ssp_reward = cols[j] / delta * total_reward
        rewards += alloc.entries[:, j] / cols[j] * ssp_reward
    return rewards


def _attack_costs(alpha: AttackPlan, stakes: StakeTable) -> np.ndarray:
    if alpha.n != stakes.n:
        raise DimensionError("number of validators", stakes.n, alpha.n)
    committed = np.array([math.fsum(row) for row in alpha.entries])
    return np.minimum(stakes.stakes, committed)


def attack_cost(i: int, alpha: AttackPlan, stakes: StakeTable) -> float:
    """Cost to validator ``i``: committed attack stake capped at its total stake."""
    return float(min(stakes[i], math.fsum(alpha.entries[i])))


def total_attack_cost(alpha: AttackPlan, stakes: StakeTable) -> float:
    return float(math.fsum(_attack_costs(alpha, stakes)))


def attack_share(i: int, alpha: AttackPlan, stakes: StakeTable) -> float:
    """Share of the attack prize owed to validator ``i`` (proportional to cost)."""
    costs = _attack_costs(alpha, stakes)
    total = math.fsum(costs)
    if total <= 0:
        raise UndefinedShareError("prize share is undefined when the total attack cost is zero")
    return float(costs[i] / total)


def attack_utility(i: int, alpha: AttackPlan, stakes: StakeTable, params: EconomicParams) -> float:
    return attack_share(i, alpha, stakes) * params.pi - attack_cost(i, alpha, stakes)


@dataclass(frozen=True)
class ProfitabilityVerdict:
    model: ModelKind
    capture_per_ssp: tuple[bool | None, ...]
    globally_profitable: bool
    committed: float
    undefined_columns: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "model": str(self.model),
            "capture_per_ssp": list(self.capture_per_ssp),
            "globally_profitable": self.globally_profitable,
            "committed": self.committed,
            "undefined_columns": list(self.undefined_columns),
        }


def attack_profitable(
    alpha: AttackPlan,
    alloc: AllocationMatrix,
    params: EconomicParams,
    model: ModelKind | None = None,
) -> ProfitabilityVerdict:
    """Per-SSP capture flags and whether the attack pays off.

    An SSP is captured when the attack stake routed through it reaches
    ``theta`` of its stake. In the shared model the attack pays off iff
    ``theta * delta < total attack stake < pi``; in the isolated model iff some
    pool is captured with less than ``pi`` committed to it; in the single-SSP
    model iff the designated pool is.
    """
    model = model or ModelKind.shared()
    alpha.check_against(alloc)
    cols = alloc.column_sums()
    attack_cols = alpha.column_sums()
    capture: list[bool | None] = []
    undefined = []
    for j, (a, d) in enumerate(zip(attack_cols, cols)):
        if d == 0:
            capture.append(None)
            undefined.append(j)
        else:
            capture.append(bool(a >= params.theta * d))

    committed = alpha.total
    if model.variant == ModelKind.SHARED:
        delta = math.fsum(cols)
        profitable = params.theta * delta < committed < params.pi
    elif model.variant == ModelKind.ISOLATED:
        profitable = any(c and attack_cols[j] < params.pi for j, c in enumerate(capture))
    else:
        j0 = model.resolve_column(cols)
        profitable = bool(capture[j0]) and attack_cols[j0] < params.pi
    return ProfitabilityVerdict(model, tuple(capture), bool(profitable), float(committed), tuple(undefined))


def uniform_allocation(stakes: StakeTable, k: int) -> AllocationMatrix:
    """Split every validator's stake evenly over ``k`` SSPs."""
    if k < 1:
        raise ValueError(f"need at least one SSP, got k={k}")
    return AllocationMatrix(np.repeat(stakes.stakes[:, np.newaxis] / k, k, axis=1))
