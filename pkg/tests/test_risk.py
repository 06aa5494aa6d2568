import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multissp.errors import PriceFileError
from multissp.risk import (
    CovModel,
    PriceSeries,
    ReturnMatrix,
    correlation_matrix,
    ecdf,
    format_correlation_csv,
    format_correlation_json,
    fsd_check,
    ingest_prices,
    log_returns,
    portfolio_variance,
    price_multipliers,
    security_variance,
    volatility_shock,
)

D = [dt.date(2024, 1, d) for d in range(1, 6)]


def write(tmp_path, text):
    path = tmp_path / "p.csv"
    path.write_text(text)
    return path


def test_ingest_two_assets(tmp_path):
    path = write(tmp_path, "date,asset,close\n2024-01-01,A,1\n2024-01-01,B,2\n2024-01-02,A,1.5\n"
                           "2024-01-02,B,2.5\n2024-01-03,B,3\n2024-01-03,A,2\n")
    a, b = ingest_prices(path)
    assert (a.asset, len(a), b.asset, len(b)) == ("A", 3, "B", 3)
    assert list(a.prices) == [1, 1.5, 2]


@pytest.mark.parametrize(
    "body, line",
    [
        ("2024-01-01,A,1\n2024-01-01,A,2\n", 3),
        ("2024-01-01,A,0\n", 2),
        ("2024-01-01,A\n", 2),
        ("01/02/2024,A,1\n", 2),
        ("2024-01-01,A,x\n", 2),
    ],
)
def test_ingest_errors_carry_line(tmp_path, body, line):
    with pytest.raises(PriceFileError) as info:
        ingest_prices(write(tmp_path, "date,asset,close\n" + body))
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_ingest_header_checked(tmp_path):
    with pytest.raises(PriceFileError):
        ingest_prices(write(tmp_path, "day,asset,price\n"))


def test_log_returns():
    assert log_returns(PriceSeries("A", tuple(D[:2]), [100, 100]))[0] == 0
    assert log_returns(PriceSeries("A", tuple(D[:2]), [100, 100 * math.e]))[0] == pytest.approx(1)
    np.testing.assert_array_equal(log_returns(PriceSeries("A", tuple(D), [3.0] * 5)), 0)


def test_inner_join():
    a = PriceSeries("A", tuple(D), [1, 2, 3, 4, 5])
    b = PriceSeries("B", (D[0], D[2], D[4]), [1, 2, 4])
    rm = ReturnMatrix.from_series([a, b])
    assert rm.dates == (D[2], D[4])
    np.testing.assert_allclose(rm.returns, [[math.log(3), math.log(2)], [math.log(5 / 3), math.log(2)]])


def test_window_keeps_latest_prices():
    a = PriceSeries("A", tuple(D), [1, 2, 3, 4, 5])
    rm = ReturnMatrix.from_series([a], window=3)
    assert rm.dates == (D[3], D[4])


def test_correlation_identity_and_negation():
    x = np.random.default_rng(0).standard_normal(50)
    rm = ReturnMatrix(("A", "B"), tuple(range(50)), np.column_stack([x, -x]))
    corr = correlation_matrix(rm)
    assert corr[0, 0] == 1.0 and corr[0, 1] == pytest.approx(-1.0)


def test_zero_variance_flagged():
    x = np.random.default_rng(0).standard_normal(10)
    rm = ReturnMatrix(("A", "B"), tuple(range(10)), np.column_stack([x, np.zeros(10)]))
    with pytest.warns(RuntimeWarning, match="zero-variance"):
        corr = correlation_matrix(rm)
    assert corr[0, 0] == 1.0 and np.isnan(corr[1, 1]) and np.isnan(corr[0, 1])


def test_security_variance_examples():
    assert security_variance([2, 3], 4) == 100
    assert security_variance([5], 2) == 50
    assert security_variance([1, 2], 0) == 0


def test_portfolio_variance():
    cov = CovModel(("A", "B"), [[2.0, 0.0], [0.0, 3.0]])
    assert portfolio_variance([1, 2], cov) == 2 + 12
    assert portfolio_variance([1, 2], CovModel(("A", "B"), [[2.0, 0.5], [0.5, 3.0]])) == 14 + 2
    assert portfolio_variance([0, 0], cov) == 0


def test_fsd_examples():
    r = fsd_check([1, 2, 3], [2, 3, 4], 1 / 3)
    assert r.dominates and r.bound == pytest.approx(1.0)
    same = fsd_check([1, 2], [1, 2], 0.5)
    assert same.dominates and same.bound == 0.75
    assert not fsd_check([5], [1], 0.5).dominates


def test_ecdf():
    np.testing.assert_allclose(ecdf([1, 2, 2, 3], [0, 2, 3]), [0, 0.75, 1])


def test_shock_identity_and_scaling():
    cov = CovModel(("A", "B"), [[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_array_equal(volatility_shock(cov, "A", 1).covariances, cov.covariances)
    assert volatility_shock(cov, "A", 2).variances[0] == 4
    with pytest.raises(KeyError):
        volatility_shock(cov, "C", 2)


def test_shock_keeps_correlation():
    cov = CovModel.from_volatilities(("A", "B"), [0.5, 0.2], [[1, 0.6], [0.6, 1]])
    shocked = volatility_shock(cov, "B", 3)
    np.testing.assert_allclose(shocked.correlation(), cov.correlation())


def test_price_multipliers_have_unit_mean():
    cov = CovModel.from_volatilities(("A",), [0.3], [[1.0]])
    m = price_multipliers(cov, 200_000, np.random.default_rng(1))
    assert m.mean() == pytest.approx(1.0, abs=0.01)


def test_fixture_formatting(fixtures_dir):
    rm = ReturnMatrix.from_series(ingest_prices(fixtures_dir / "prices.csv"), window=60)
    text = format_correlation_csv(rm.assets, correlation_matrix(rm))
    assert text == (fixtures_dir / "expected_correlation.csv").read_text()
    js = format_correlation_json(rm.assets, correlation_matrix(rm))
    assert '"ETH": 1.0' in js


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=10), st.floats(0, 10))
def test_security_variance_identity(column, var):
    expected = math.fsum(column) ** 2 * var
    assert security_variance(column, var) == pytest.approx(expected, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.lists(st.floats(0, 5), min_size=1, max_size=30))
def test_shifting_down_dominates(base, cut):
    b = np.array(base)
    a = np.maximum(b - np.resize(cut, b.size), 0)
    result = fsd_check(a, b, 0.5)
    assert result.dominates
    assert result.bound_holds
