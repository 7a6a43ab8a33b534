"""Historical price/rate ingestion and alignment onto a joint trading-day calendar.

Percent conventions: daily changes are in percent (1.0 means +1%), rates and
dividend yields are yearly percent.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class PriceSeries:
    asset_id: str
    dates: tuple[date, ...]
    close: np.ndarray
    adj_close: np.ndarray | None = None
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        n = len(self.dates)
        if len(self.close) != n or (self.adj_close is not None and len(self.adj_close) != n):
            raise DataError(f"{self.asset_id}: column lengths differ")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError(f"{self.asset_id}: dates not strictly increasing")
        if n and not np.all(self.close > 0):
            raise DataError(f"{self.asset_id}: non-positive close price")

    def __len__(self) -> int:
        return len(self.dates)

    def total_return(self) -> PriceSeries:
        """The Adj Close column as its own series."""
        if self.adj_close is None:
            raise DataError(f"{self.asset_id}: no Adj Close column")
        return PriceSeries(self.asset_id, self.dates, self.adj_close)


@dataclass(frozen=True)
class RateSeries:
    dates: tuple[date, ...]
    rate: np.ndarray

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("rate series: dates not strictly increasing")
        if not np.all(np.isfinite(self.rate)):
            raise DataError("rate series: non-finite rate")

    def on(self, days: Sequence[date]) -> np.ndarray:
        """Most recent rate on or before each day; the first rate before the series starts."""
        if not self.dates:
            raise DataError("rate series is empty")
        ordinals = np.fromiter((d.toordinal() for d in self.dates), dtype=np.int64)
        query = np.fromiter((d.toordinal() for d in days), dtype=np.int64, count=len(days))
        idx = np.searchsorted(ordinals, query, side="right") - 1
        return self.rate[np.clip(idx, 0, None)]

    @classmethod
    def constant(cls, rate: float) -> RateSeries:
        return cls((date(1900, 1, 1),), np.array([float(rate)]))


@dataclass(frozen=True)
class DividendModel:
    """Yearly dividend yield ``base + libor_coefficient * LIBOR`` in percent."""

    base: float = 0.0
    libor_coefficient: float = 0.0

    def rate(self, libor):
        return self.base + self.libor_coefficient * libor

    @property
    def is_zero(self) -> bool:
        return self.base == 0.0 and self.libor_coefficient == 0.0


@dataclass(frozen=True)
class MarketHistory:
    """Joint per-day records: row k holds the percent changes *into* ``dates[k]``.

    ``dates`` is None for synthetic (bootstrapped) histories, whose calendar is
    the idealised 252-day year of 12 21-day months.
    """

    dp_price: Mapping[str, np.ndarray]
    dp_total_return: Mapping[str, np.ndarray]
    libor: np.ndarray
    dates: tuple[date, ...] | None = None
    base_date: date | None = None
    _n: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.libor)
        if set(self.dp_price) != set(self.dp_total_return):
            raise DataError("price and total-return assets differ")
        for arr in (*self.dp_price.values(), *self.dp_total_return.values()):
            if len(arr) != n:
                raise DataError("market history columns have different lengths")
        if self.dates is not None and len(self.dates) != n:
            raise DataError("market history dates length mismatch")
        object.__setattr__(self, "_n", n)

    def __len__(self) -> int:
        return self._n

    @property
    def assets(self) -> tuple[str, ...]:
        return tuple(self.dp_price)

    def take(self, indices: np.ndarray) -> MarketHistory:
        """Synthetic history built from whole source rows (no calendar)."""
        return MarketHistory(
            dp_price={k: v[indices] for k, v in self.dp_price.items()},
            dp_total_return={k: v[indices] for k, v in self.dp_total_return.items()},
            libor=self.libor[indices],
        )

    def calendar_flags(self) -> tuple[np.ndarray, np.ndarray]:
        """(first trading day of month, last trading day of year) per row."""
        n = len(self)
        if self.dates is None:
            k = np.arange(n)
            month_start = (k > 0) & (k % (TRADING_DAYS_PER_YEAR // 12) == 0)
            year_end = (k + 1) % TRADING_DAYS_PER_YEAR == 0
            return month_start, year_end
        months = [(d.year, d.month) for d in self.dates]
        prev = (self.base_date.year, self.base_date.month) if self.base_date else None
        month_start = np.zeros(n, dtype=bool)
        year_end = np.zeros(n, dtype=bool)
        for k, ym in enumerate(months):
            before = months[k - 1] if k else prev
            month_start[k] = before is not None and before != ym
            if k + 1 < n:
                year_end[k] = months[k + 1][0] != ym[0]
            else:
                # nothing follows in the data: treat a December finish as the year's close
                year_end[k] = ym[1] == 12
        return month_start, year_end


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    return [h.strip() for h in rows[0]], rows[1:]


def _column(header: list[str], name: str, path: Path, required: bool = True) -> int | None:
    lowered = [h.lower() for h in header]
    if name.lower() in lowered:
        return lowered.index(name.lower())
    if required:
        raise DataError(f"{path}: missing column {name!r}")
    return None


def _number(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_price_csv(path: str | Path, asset_id: str) -> PriceSeries:
    """Parse a Yahoo-style CSV (Date, Close, optional Adj Close).

    Rows with a missing, non-numeric or non-positive Close (or Adj Close, when
    that column exists) are dropped and counted in ``dropped_rows``.
    """
    path = Path(path)
    header, rows = _read_rows(path)
    i_date = _column(header, "Date", path)
    i_close = _column(header, "Close", path)
    i_adj = _column(header, "Adj Close", path, required=False)

    parsed: list[tuple[date, float, float | None]] = []
    dropped = 0
    for row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        try:
            day = date.fromisoformat(row[i_date].strip())
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: bad date in row {row!r}") from exc
        close = _number(row[i_close]) if i_close < len(row) else None
        adj = None
        if i_adj is not None:
            adj = _number(row[i_adj]) if i_adj < len(row) else None
            if adj is None or adj <= 0:
                close = None
        if close is None or close <= 0:
            dropped += 1
            continue
        parsed.append((day, close, adj))

    if not parsed:
        raise DataError(f"{path}: no valid rows")
    parsed.sort(key=lambda r: r[0])
    days = tuple(r[0] for r in parsed)
    if len(set(days)) != len(days):
        raise DataError(f"{path}: duplicate dates")
    close = np.array([r[1] for r in parsed])
    adj_close = np.array([r[2] for r in parsed]) if i_adj is not None else None
    return PriceSeries(asset_id, days, close, adj_close, dropped)


def load_rate_csv(path: str | Path) -> RateSeries:
    """Parse a (Date, Rate) CSV of yearly percent rates; unparseable rates are skipped."""
    path = Path(path)
    header, rows = _read_rows(path)
    i_date = _column(header, "Date", path)
    i_rate = _column(header, "Rate", path)
    points: dict[date, float] = {}
    for row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        try:
            day = date.fromisoformat(row[i_date].strip())
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: bad date in row {row!r}") from exc
        value = _number(row[i_rate]) if i_rate < len(row) else None
        if value is None:
            continue
        if day in points:
            raise DataError(f"{path}: duplicate date {day}")
        points[day] = value
    if not points:
        raise DataError(f"{path}: no valid rows")
    days = tuple(sorted(points))
    return RateSeries(days, np.array([points[d] for d in days]))


def compute_daily_changes(series: PriceSeries | Sequence[float] | np.ndarray) -> np.ndarray:
    prices = np.asarray(series.close if isinstance(series, PriceSeries) else series, dtype=float)
    if prices.size < 2:
        raise DataError("need at least two prices to compute daily changes")
    return 100.0 * (prices[1:] / prices[:-1] - 1.0)


def synthesize_total_return(series: PriceSeries, model: DividendModel, libor: RateSeries) -> PriceSeries:
    """Total-return index from a price index plus a daily-accrued dividend yield."""
    if not len(series):
        raise DataError(f"{series.asset_id}: empty series")
    if model.is_zero:
        return PriceSeries(series.asset_id, series.dates, series.close.copy())
    tr = np.empty(len(series))
    tr[0] = series.close[0]
    if len(series) > 1:
        dp = compute_daily_changes(series)
        d = model.rate(libor.on(series.dates[:-1]))
        tr[1:] = series.close[0] * np.cumprod(1.0 + dp / 100.0 + d / (100.0 * TRADING_DAYS_PER_YEAR))
    return PriceSeries(series.asset_id, series.dates, tr)


def splice_total_return(synthetic: PriceSeries, actual: PriceSeries) -> PriceSeries:
    """Use ``synthetic`` up to the first date of ``actual``, then chain ``actual``'s returns."""
    start = actual.dates[0]
    head = [k for k, d in enumerate(synthetic.dates) if d <= start]
    if not head or synthetic.dates[head[-1]] != start:
        raise DataError(f"{actual.asset_id}: splice date {start} not in synthetic series")
    anchor = synthetic.close[head[-1]]
    tail = anchor * actual.close[1:] / actual.close[0]
    dates = synthetic.dates[: head[-1] + 1] + actual.dates[1:]
    close = np.concatenate([synthetic.close[: head[-1] + 1], tail])
    return PriceSeries(synthetic.asset_id, dates, close)


def align_histories(
    price_series_set: Mapping[str, PriceSeries],
    tr_series_set: Mapping[str, PriceSeries],
    libor: RateSeries,
) -> MarketHistory:
    """Intersect all calendars and compute per-day changes on the common dates."""
    if not price_series_set:
        raise DataError("no assets to align")
    if set(price_series_set) != set(tr_series_set):
        raise DataError("each asset needs both a price and a total-return series")
    common: set[date] | None = None
    for s in (*price_series_set.values(), *tr_series_set.values()):
        common = set(s.dates) if common is None else common & set(s.dates)
    days = tuple(sorted(common or ()))
    if len(days) < 2:
        raise DataError("calendar intersection has fewer than two trading days")

    def on_calendar(s: PriceSeries) -> np.ndarray:
        lookup = dict(zip(s.dates, s.close))
        return np.array([lookup[d] for d in days])

    return MarketHistory(
        dp_price={a: compute_daily_changes(on_calendar(s)) for a, s in price_series_set.items()},
        dp_total_return={a: compute_daily_changes(on_calendar(tr_series_set[a])) for a in price_series_set},
        libor=libor.on(days[1:]).astype(float),
        dates=days[1:],
        base_date=days[0],
    )


def slice_window(history: MarketHistory, start: date, end: date) -> MarketHistory:
    if history.dates is None:
        raise DataError("cannot window a history without dates")
    if start > end:
        raise DataError(f"window start {start} after end {end}")
    keep = np.array([start <= d <= end for d in history.dates])
    if not keep.any():
        raise DataError(f"window {start}..{end} selects no trading days")
    first = int(np.argmax(keep))
    return MarketHistory(
        dp_price={k: v[keep] for k, v in history.dp_price.items()},
        dp_total_return={k: v[keep] for k, v in history.dp_total_return.items()},
        libor=history.libor[keep],
        dates=tuple(d for d, k in zip(history.dates, keep) if k),
        base_date=history.dates[first - 1] if first else history.base_date,
    )
