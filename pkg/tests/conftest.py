import csv
from datetime import date, timedelta

import numpy as np
import pytest

from levsim.marketdata import MarketHistory

_acceptance: dict[str, str] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when not in ("setup", "call"):
        return
    name = marker.args[0]
    if call.excinfo is None:
        if call.when == "call":
            _acceptance.setdefault(name, "PASS")
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        _acceptance[name] = f"SKIP ({call.excinfo.value.msg})"
    else:
        _acceptance[name] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda n: int(n.split()[0]) if n.split()[0].isdigit() else 99):
        terminalreporter.write_line(f"criterion {name}: {_acceptance[name]}")


def trading_days(start, n):
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def random_history(n=2000, seed=0, assets=("S", "B"), with_dates=False, libor=3.0):
    rng = np.random.default_rng(seed)
    dp = {a: rng.normal(0.04, 1.1, n) for a in assets}
    tr = {a: dp[a] + 0.01 for a in assets}
    dates = None
    base = None
    if with_dates:
        days = trading_days(date(1999, 12, 31), n + 1)
        base, dates = days[0], tuple(days[1:])
    return MarketHistory(dp, tr, np.full(n, float(libor)), dates=dates, base_date=base)


def write_price_csv(path, days, closes, adj=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"] if adj is not None
                   else ["Date", "Close"])
        for k, (d, c) in enumerate(zip(days, closes)):
            if adj is not None:
                w.writerow([d.isoformat(), c, c, c, c, adj[k], 1000])
            else:
                w.writerow([d.isoformat(), c])


@pytest.fixture
def market_dir(tmp_path):
    """A small synthetic data directory: stock index, bond fund with Adj Close, monthly LIBOR."""
    rng = np.random.default_rng(7)
    days = trading_days(date(2001, 1, 2), 800)
    stock = 100 * np.cumprod(1 + rng.normal(0.0004, 0.012, len(days)))
    bond = 50 * np.cumprod(1 + rng.normal(0.0001, 0.006, len(days)))
    bond_adj = bond * np.cumprod(np.full(len(days), 1.0002))
    write_price_csv(tmp_path / "STOCK.csv", days, stock)
    write_price_csv(tmp_path / "BOND.csv", days, bond, bond_adj)
    with open(tmp_path / "LIBOR.csv", "w") as fh:
        fh.write("Date,Rate\n")
        for y in range(2000, 2005):
            for m in range(1, 13):
                fh.write(f"{y}-{m:02d}-01,{1 + (y - 2000) * 0.5 + m * 0.01:.2f}\n")
    return tmp_path


def base_config(data_dir, **overrides):
    cfg = {
        "data_dir": str(data_dir),
        "libor_file": "LIBOR.csv",
        "assets": [
            {"id": "STOCK", "price_file": "STOCK.csv", "dividend_model": {"base": 2.0},
             "expense_ratio": 0.03, "letf_expense_ratio": 0.92},
            {"id": "BOND", "price_file": "BOND.csv", "total_return": {"source": "adj_close"},
             "dividend_model": {"base": 5.0, "libor_coefficient": 0.5},
             "expense_ratio": 0.05, "letf_expense_ratio": 1.0},
        ],
        "portfolio": {"fractions": {"STOCK": 0.5, "BOND": 0.5}},
        "horizon_years": 2,
        "sampler": {"realizations": 40, "bootstrap_resamples": 50, "seed": 11},
    }
    cfg.update(overrides)
    return cfg
