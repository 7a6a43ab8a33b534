"""Machine-readable outputs: CSV tables, JSON summaries and histogram data.

Floats are written with ``repr`` so files are lossless and byte-stable.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .engine import Trajectory
from .montecarlo import FrontierRow, MetricsSummary, RealizationResult

SCHEMA_VERSION = 1
HISTOGRAM_BINS = 60


def _num(x: float) -> str:
    return repr(float(x))


def _writer(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["date", "yield", "total", "margin_debt",
                    *[f"fraction_{a}" for a in traj.asset_ids], "leverage", "gains", "cumulative_tax"])
        for k in range(len(traj.yields)):
            day = traj.dates[k] if traj.dates else None
            w.writerow([
                day.isoformat() if day else str(k),
                _num(traj.yields[k]),
                _num(traj.total[k]),
                _num(traj.margin_debt[k]),
                *[_num(f) for f in traj.fractions[k]],
                _num(traj.leverage[k]),
                _num(traj.gains[k]),
                _num(traj.cumulative_tax[k]),
            ])


def write_results_csv(path: Path, results: Sequence[RealizationResult]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["realization", "final_yield", "min_yield", "max_drawdown", "insolvent"])
        for i, r in enumerate(results):
            w.writerow([i, _num(r.final_yield), _num(r.min_yield), _num(r.max_drawdown), int(r.insolvent)])


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(body, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def histogram(values: np.ndarray, bins: int = HISTOGRAM_BINS, log: bool = True) -> list[tuple[float, float, int]]:
    """(lo, hi, count) rows. Log bins cover the positive values; non-positive ones
    are counted in a leading ``(-inf, 0)`` row."""
    values = np.asarray(values, dtype=float)
    rows: list[tuple[float, float, int]] = []
    if log:
        positive = values[values > 0]
        rows.append((-math.inf, 0.0, int(np.sum(values <= 0))))
        if positive.size == 0:
            return rows
        lo, hi = positive.min(), positive.max()
        edges = np.geomspace(lo, hi, bins + 1) if hi > lo else np.array([lo, hi])
        data = positive
    else:
        lo, hi = values.min(), values.max()
        edges = np.linspace(lo, hi, bins + 1) if hi > lo else np.array([lo, hi])
        data = values
    # constant data: a single degenerate bin; np.histogram needs increasing edges
    counts = np.histogram(data, bins=edges)[0] if hi > lo else np.array([data.size])
    rows.extend((float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts))
    return rows


def write_histogram_csv(path: Path, results: Sequence[RealizationResult], bins: int = HISTOGRAM_BINS) -> None:
    fh, w = _writer(path)
    columns = [
        ("final_yield", np.array([r.final_yield for r in results]), True),
        ("min_yield", np.array([r.min_yield for r in results]), True),
        ("max_drawdown", np.array([r.max_drawdown for r in results]), False),
    ]
    with fh:
        w.writerow(["metric", "bin_lo", "bin_hi", "count"])
        for name, values, log in columns:
            for lo, hi, count in histogram(values, bins, log):
                w.writerow([name, _num(lo), _num(hi), count])


FRONTIER_COLUMNS = [
    "stock_fraction", "variant",
    "reward_median", "reward_ci_lo", "reward_ci_hi", "cagr",
    "risk5_final", "risk5_ci_lo", "risk5_ci_hi",
    "risk5_min_yield", "risk5_min_yield_ci_lo", "risk5_min_yield_ci_hi",
    "drawdown_median", "drawdown_ci_lo", "drawdown_ci_hi",
    "insolvent_fraction",
]


def frontier_record(row: FrontierRow) -> list[str]:
    s: MetricsSummary = row.summary
    return [
        _num(row.stock_fraction), row.variant,
        _num(s.reward), _num(s.reward_ci[0]), _num(s.reward_ci[1]), _num(s.cagr_reward),
        _num(s.risk_rational), _num(s.risk_rational_ci[0]), _num(s.risk_rational_ci[1]),
        _num(s.risk_min_yield), _num(s.risk_min_yield_ci[0]), _num(s.risk_min_yield_ci[1]),
        _num(s.risk_drawdown), _num(s.risk_drawdown_ci[0]), _num(s.risk_drawdown_ci[1]),
        _num(s.insolvent_fraction),
    ]


def write_frontier_csv(path: Path, rows: Sequence[FrontierRow]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(FRONTIER_COLUMNS)
        for row in rows:
            w.writerow(frontier_record(row))
