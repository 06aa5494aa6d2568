"""Price risk: ingestion, log returns, correlations, security variance, dominance and shocks."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, PriceFileError

PRICE_HEADER = ("date", "asset", "close")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    asset: str
    dates: tuple[dt.date, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 1 or prices.size != len(self.dates):
            raise DimensionError(f"{self.asset} price count", len(self.dates), prices.size)
        if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
            raise ValueError(f"{self.asset}: prices must be positive and finite")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError(f"{self.asset}: dates must be strictly increasing")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def __len__(self):
        return len(self.dates)


def ingest_prices(path) -> list[PriceSeries]:
    """Read a ``date,asset,close`` CSV into one sorted series per asset.

    Series come back in order of first appearance.
    """
    path = Path(path)
    rows: dict[str, dict[dt.date, float]] = defaultdict(dict)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != PRICE_HEADER:
            raise PriceFileError(path, 1, f"expected header {','.join(PRICE_HEADER)}, got {header}")
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise PriceFileError(path, line, f"expected 3 fields, got {len(row)}")
            date_s, asset, close_s = (cell.strip() for cell in row)
            try:
                date = dt.date.fromisoformat(date_s)
            except ValueError:
                raise PriceFileError(path, line, f"bad ISO-8601 date {date_s!r}") from None
            try:
                close = float(close_s)
            except ValueError:
                raise PriceFileError(path, line, f"bad price {close_s!r}") from None
            if not math.isfinite(close) or close <= 0:
                raise PriceFileError(path, line, f"price must be positive, got {close_s}")
            if not asset:
                raise PriceFileError(path, line, "empty asset id")
            if date in rows[asset]:
                raise PriceFileError(path, line, f"duplicate row for {asset} on {date}")
            rows[asset][date] = close
    series = []
    for asset, by_date in rows.items():
        dates = tuple(sorted(by_date))
        series.append(PriceSeries(asset, dates, np.array([by_date[d] for d in dates])))
    return series


def log_returns(series: PriceSeries) -> np.ndarray:
    if len(series) < 2:
        raise ValueError(f"{series.asset}: need at least two prices for a return")
    return np.diff(np.log(series.prices))


@dataclass(frozen=True, eq=False)
class ReturnMatrix:
    """Log returns on common dates, one column per asset."""

    assets: tuple[str, ...]
    dates: tuple[dt.date, ...]
    returns: np.ndarray

    @classmethod
    def from_series(cls, series: list[PriceSeries], window: int | None = None) -> ReturnMatrix:
        """Inner-join series on date, optionally keep the last ``window`` prices, take log returns."""
        if not series:
            raise ValueError("no price series given")
        common = set(series[0].dates)
        for s in series[1:]:
            common &= set(s.dates)
        dates = sorted(common)
        if window is not None:
            dates = dates[-window:]
        if len(dates) < 2:
            raise ValueError("fewer than two common dates across assets")
        cols = []
        for s in series:
            index = {d: p for d, p in zip(s.dates, s.prices)}
            cols.append(np.diff(np.log([index[d] for d in dates])))
        return cls(tuple(s.asset for s in series), tuple(dates[1:]), np.column_stack(cols))

    @property
    def m(self) -> int:
        return len(self.assets)


def correlation_matrix(rm: ReturnMatrix) -> np.ndarray:
    """Pearson correlation of the return columns.

    Rows and columns of zero-variance assets are NaN (with a warning).
    """
    if rm.returns.shape[0] < 2:
        raise ValueError("need at least two aligned returns")
    x = rm.returns - rm.returns.mean(axis=0)
    cov = x.T @ x
    sd = np.sqrt(np.diag(cov))
    flat = sd == 0
    if np.any(flat):
        names = [a for a, f in zip(rm.assets, flat) if f]
        warnings.warn(f"zero-variance returns for {names}; correlations undefined", RuntimeWarning)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = cov / np.outer(sd, sd)
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    for i in np.flatnonzero(~flat):
        corr[i, i] = 1.0
    corr[flat, :] = np.nan
    corr[:, flat] = np.nan
    return corr


@dataclass(frozen=True, eq=False)
class CovModel:
    """Covariance of per-unit-value returns for a set of assets."""

    assets: tuple[str, ...]
    covariances: np.ndarray

    def __post_init__(self):
        cov = np.array(self.covariances, dtype=float)
        m = len(self.assets)
        if cov.shape != (m, m):
            raise DimensionError("covariance shape", (m, m), cov.shape)
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0):
            raise ValueError("covariance matrix must be symmetric")
        if np.any(np.diag(cov) < 0):
            raise ValueError("variances must be nonnegative")
        cov.setflags(write=False)
        object.__setattr__(self, "covariances", cov)

    @classmethod
    def from_returns(cls, rm: ReturnMatrix) -> CovModel:
        return cls(rm.assets, np.cov(rm.returns, rowvar=False, ddof=1).reshape(rm.m, rm.m))

    @classmethod
    def from_volatilities(cls, assets, vols, corr) -> CovModel:
        vols = np.asarray(vols, dtype=float)
        return cls(tuple(assets), np.asarray(corr, dtype=float) * np.outer(vols, vols))

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariances).copy()

    @property
    def volatilities(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def correlation(self) -> np.ndarray:
        sd = self.volatilities
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.covariances / np.outer(sd, sd)

    def index(self, asset) -> int:
        try:
            return self.assets.index(asset)
        except ValueError:
            raise KeyError(f"unknown asset {asset!r}; have {list(self.assets)}") from None


def security_variance(column, price_variance) -> float:
    """Variance of an SSP's dollar security when every holding shares one asset price.

    Sums the per-holding variance terms and the pairwise covariance terms
    (where the covariance of the price with itself is its variance).
    """
    if price_variance < 0:
        raise ValueError("price variance must be nonnegative")
    w = [float(x) for x in column]
    own = math.fsum(x * x * price_variance for x in w)
    cross = math.fsum(
        w[a] * w[b] * price_variance for a in range(len(w)) for b in range(len(w)) if a != b
    )
    return own + cross


def portfolio_variance(weights, cov: CovModel) -> float:
    """``w' C w`` for one validator's USD stake per asset."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(cov.assets),):
        raise DimensionError("weights length", len(cov.assets), w.shape[0] if w.ndim else 0)
    return float(w @ cov.covariances @ w)


def ecdf(samples, points) -> np.ndarray:
    """Empirical CDF of ``samples`` evaluated at ``points``."""
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(points, dtype=float), side="right") / s.size


@dataclass(frozen=True)
class DominanceResult:
    dominates: bool
    bound: float
    paired_min_cost: float | None = None
    bound_holds: bool | None = None

    def to_dict(self) -> dict:
        return {
            "dominates": self.dominates,
            "bound": self.bound,
            "paired_min_cost": self.paired_min_cost,
            "bound_holds": self.bound_holds,
        }


def fsd_check(samples_a, samples_b, theta) -> DominanceResult:
    """Does ``a`` sit below ``b`` in first-order stochastic dominance?

    ``dominates`` is true when the empirical CDF of ``a`` is at least that of
    ``b`` everywhere (weak dominance). ``bound`` is ``theta * mean(b)``. When the
    samples have equal length they are treated as paired draws, and the
    expected minimum attack cost ``theta * mean(min(a, b))`` is checked against
    the bound.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("dominance check needs nonempty samples")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("security samples must be nonnegative")
    support = np.union1d(a, b)
    dominates = bool(np.all(ecdf(a, support) >= ecdf(b, support)))
    bound = float(theta * b.mean())
    if a.size != b.size:
        return DominanceResult(dominates, bound)
    min_cost = float(theta * np.minimum(a, b).mean())
    return DominanceResult(dominates, bound, min_cost, min_cost <= bound)


def volatility_shock(cov: CovModel, asset, factor) -> CovModel:
    """Scale one asset's volatility by ``factor``; correlations are unchanged."""
    if factor <= 0:
        raise ValueError(f"shock factor must be positive, got {factor}")
    i = cov.index(asset)
    scale = np.ones(len(cov.assets))
    scale[i] = factor
    return CovModel(cov.assets, cov.covariances * np.outer(scale, scale))


def correlated_normal_returns(cov: CovModel, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` zero-mean Gaussian return vectors with covariance ``cov``."""
    return rng.multivariate_normal(np.zeros(len(cov.assets)), cov.covariances, size=size, method="eigh")


def price_multipliers(cov: CovModel, size: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-one lognormal price moves: ``exp(x - var/2)`` with ``x ~ N(0, cov)``."""
    x = correlated_normal_returns(cov, size, rng)
    return np.exp(x - cov.variances / 2)


def format_correlation_csv(assets, corr) -> str:
    """Correlation table with an ``Asset`` header column and 4-decimal values."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Asset", *assets])
    for name, row in zip(assets, corr):
        writer.writerow([name, *("nan" if math.isnan(x) else f"{x:.4f}" for x in row)])
    return buf.getvalue()


def format_correlation_json(assets, corr) -> str:
    table = {
        a: {b: (None if math.isnan(x) else round(float(x), 4)) for b, x in zip(assets, row)}
        for a, row in zip(assets, corr)
    }
    return json.dumps({"assets": list(assets), "correlation": table}, indent=2) + "\n"
