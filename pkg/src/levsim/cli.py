"""levsim command line: ``levsim backtest|mc|frontier --config scenario.json``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 outputs written
but the insolvent share of realizations exceeded ``insolvency_warning_fraction``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import report
from .config import ScenarioConfig, load_market, parse_config
from .engine import run_backtest
from .errors import ConfigError, DataError
from .marketdata import TRADING_DAYS_PER_YEAR
from .montecarlo import cagr, frontier_fractions, run_monte_carlo, summarize, sweep_frontier

log = logging.getLogger("levsim")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INSOLVENCY = 0, 1, 2, 3


def cmd_backtest(cfg: ScenarioConfig, out: Path) -> int:
    history = load_market(cfg)
    traj = run_backtest(cfg.scenario(), history)
    report.write_trajectory_csv(out / "trajectory.csv", traj)
    years = (len(traj.yields) - 1) / TRADING_DAYS_PER_YEAR
    report.write_json(out / "backtest.json", {
        "mode": "backtest",
        "start": history.base_date.isoformat() if history.base_date else None,
        "end": history.dates[-1].isoformat() if history.dates else None,
        "trading_days": len(traj.yields) - 1,
        "final_yield": traj.final_yield,
        "cagr": cagr(traj.final_yield, years) if years > 0 else 0.0,
        "cumulative_tax": float(traj.cumulative_tax[-1]),
        "bankrupt": traj.bankrupt,
    })
    log.info("backtest: final yield %.4f over %.1f years", traj.final_yield, years)
    return EXIT_OK


def cmd_mc(cfg: ScenarioConfig, out: Path) -> int:
    history = load_market(cfg)
    sampler = cfg.sampler_config()
    results = run_monte_carlo(cfg.scenario(), history, sampler)
    summary = summarize(results, sampler)
    report.write_results_csv(out / "realizations.csv", results)
    report.write_json(out / "summary.json", {
        "mode": "mc",
        "seed": sampler.seed,
        "block_length": sampler.block_length,
        "horizon_years": sampler.horizon_years,
        "bootstrap_resamples": sampler.bootstrap_resamples,
        "metrics": summary.as_dict(),
    })
    report.write_histogram_csv(out / "histogram.csv", results)
    log.info("mc: reward %.4f, rational risk %.4f", summary.reward, summary.risk_rational)
    return _insolvency_code(cfg, summary.insolvent_fraction)


def cmd_frontier(cfg: ScenarioConfig, out: Path) -> int:
    history = load_market(cfg)
    stock, bond = cfg.frontier_pair()
    rows = sweep_frontier(
        stock, bond, history, cfg.sampler_config(), cfg.engine_config(),
        fractions=frontier_fractions(cfg.frontier.step_percent),
        variants=cfg.frontier.variants,
        margin_target=cfg.frontier.margin_target,
        progress=lambda r: log.info("frontier: %3.0f%% %s reward %.3f", 100 * r.stock_fraction, r.variant,
                                    r.summary.reward),
    )
    report.write_frontier_csv(out / "frontier.csv", rows)
    worst = max(r.summary.insolvent_fraction for r in rows)
    return _insolvency_code(cfg, worst)


def _insolvency_code(cfg: ScenarioConfig, fraction: float) -> int:
    if fraction > cfg.insolvency_warning_fraction:
        log.warning("%.1f%% of realizations ended insolvent", 100 * fraction)
        return EXIT_INSOLVENCY
    return EXIT_OK


COMMANDS = {"backtest": cmd_backtest, "mc": cmd_mc, "frontier": cmd_frontier}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--realizations", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        sampler = cfg.sampler.model_copy(update={
            k: v for k, v in (("seed", args.seed), ("realizations", args.realizations)) if v is not None
        })
        cfg = cfg.model_copy(update={"mode": args.command, "sampler": sampler})
        if sampler.realizations < 1 or not 0 <= sampler.seed < 2**64:
            raise ConfigError("sampler: --realizations must be >= 1 and --seed an unsigned 64-bit integer")
        out = args.out or Path(cfg.output)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"levsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"levsim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
