import csv
import json

import numpy as np
import pytest

from levsim import cli
from levsim.config import load_market, parse_config, parse_config_dict
from levsim.errors import ConfigError

from .conftest import base_config


def write_config(tmp_path, cfg, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParse:
    def test_defaults_filled(self):
        cfg = parse_config_dict({
            "assets": [{"id": "A", "price_file": "A.csv"}],
            "portfolio": {"fractions": {"A": 1.0}},
        })
        eng = cfg.engine_config()
        assert eng.transaction_fee == 0.001 and eng.margin_rate == 1.59
        assert eng.rebalance_fraction_trigger == 20.0 and eng.rebalance_leverage_trigger == 0.10
        assert eng.cgt == 0.25 and not eng.tax_enabled and eng.tax_scheme == "optimized"
        s = cfg.sampler_config()
        assert (s.block_length, s.horizon_years, s.realizations, s.bootstrap_resamples) == (5, 10, 2000, 300)
        assert cfg.scenario().target_leverage == 1.0

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="portfolio.fractions"):
            parse_config_dict({
                "assets": [{"id": "A", "price_file": "a"}, {"id": "B", "price_file": "b"}],
                "portfolio": {"fractions": {"A": 0.5, "B": 0.6}},
            })

    def test_letf_and_margin_exclusive(self):
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_config_dict({
                "assets": [{"id": "A", "price_file": "a"}],
                "portfolio": {"fractions": {"A": 1.0}},
                "leverage": {"letf": 3, "margin": 1.8},
            })

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="engine.fee"):
            parse_config_dict({
                "assets": [{"id": "A", "price_file": "a"}],
                "portfolio": {"fractions": {"A": 1.0}},
                "engine": {"fee": 0.1},
            })

    def test_unknown_asset_in_fractions(self):
        with pytest.raises(ConfigError, match="unknown assets"):
            parse_config_dict({"assets": [{"id": "A", "price_file": "a"}],
                               "portfolio": {"fractions": {"Z": 1.0}}})

    def test_letf_scenario(self, market_dir):
        cfg = parse_config_dict(base_config(market_dir, leverage={"letf": 3}))
        sc = cfg.scenario()
        assert [a.asset_id for a in sc.assets] == ["STOCK3X", "BOND3X"]
        assert sc.assets[0].expense_ratio == 0.92

    def test_data_dir_relative_to_config(self, market_dir, tmp_path):
        sub = tmp_path / "cfg"
        sub.mkdir()
        path = write_config(sub, base_config("..", window=None))
        cfg = parse_config(path)
        assert len(load_market(cfg)) == 799

    def test_bad_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(p)

    def test_window(self, market_dir):
        cfg = parse_config_dict(base_config(market_dir, window={"start": "2002-01-01", "end": "2002-12-31"}))
        h = load_market(cfg)
        assert h.dates[0].year == 2002 and h.dates[-1].year == 2002


class TestCli:
    def run(self, tmp_path, cfg, *args):
        path = write_config(tmp_path, cfg)
        return cli.main([args[0], "--config", str(path), "--out", str(tmp_path / "out"), *args[1:]])

    def test_backtest_outputs(self, market_dir):
        cfg = base_config(market_dir, engine={"tax_enabled": True}, initial_investment=1000.0)
        assert self.run(market_dir, cfg, "backtest") == 0
        rows = read_csv(market_dir / "out" / "trajectory.csv")
        assert list(rows[0]) == ["date", "yield", "total", "margin_debt", "fraction_STOCK", "fraction_BOND",
                                 "leverage", "gains", "cumulative_tax"]
        assert len(rows) == 800
        tax = [float(r["cumulative_tax"]) for r in rows]
        assert all(b >= a for a, b in zip(tax, tax[1:]))
        assert tax[-1] > 0
        for r in rows:
            equity = float(r["total"]) - float(r["margin_debt"])
            assert equity == pytest.approx(float(r["yield"]) * 1000.0, rel=1e-6)
        summary = json.loads((market_dir / "out" / "backtest.json").read_text())
        assert summary["schema_version"] == 1
        assert summary["final_yield"] == pytest.approx(float(rows[-1]["yield"]))

    def test_margin_backtest_leverage_band(self, market_dir):
        cfg = base_config(market_dir, leverage={"margin": 1.8})
        assert self.run(market_dir, cfg, "backtest") == 0
        lev = np.array([float(r["leverage"]) for r in read_csv(market_dir / "out" / "trajectory.csv")])
        assert np.all(np.abs(lev[1:] / 1.8 - 1) <= 0.10 + 1e-9)

    def test_mc_outputs(self, market_dir):
        assert self.run(market_dir, base_config(market_dir), "mc") == 0
        out = market_dir / "out"
        rows = read_csv(out / "realizations.csv")
        assert len(rows) == 40
        assert list(rows[0]) == ["realization", "final_yield", "min_yield", "max_drawdown", "insolvent"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["schema_version"] == 1 and summary["seed"] == 11
        m = summary["metrics"]
        assert set(m["ci"]) == {"reward", "risk_rational", "risk_min_yield", "risk_drawdown"}
        hist = read_csv(out / "histogram.csv")
        finals = [r for r in hist if r["metric"] == "final_yield"]
        assert len(finals) == 61 and sum(int(r["count"]) for r in finals) == 40

    def test_mc_single_realization(self, market_dir):
        assert self.run(market_dir, base_config(market_dir), "mc", "--realizations", "1") == 0
        out = market_dir / "out"
        (row,) = read_csv(out / "realizations.csv")
        m = json.loads((out / "summary.json").read_text())["metrics"]
        assert m["reward"] == m["risk_rational"] == float(row["final_yield"])
        assert m["risk_min_yield"] == float(row["min_yield"])
        assert m["risk_drawdown"] == float(row["max_drawdown"])
        assert m["ci"]["reward"] == [m["reward"], m["reward"]]

    def test_seed_override_changes_output(self, market_dir):
        self.run(market_dir, base_config(market_dir), "mc")
        a = (market_dir / "out" / "realizations.csv").read_bytes()
        self.run(market_dir, base_config(market_dir), "mc", "--seed", "12")
        assert (market_dir / "out" / "realizations.csv").read_bytes() != a

    def test_frontier(self, market_dir):
        cfg = base_config(market_dir, frontier={"step_percent": 50},
                          sampler={"realizations": 8, "bootstrap_resamples": 10, "seed": 1})
        assert self.run(market_dir, cfg, "frontier") == 0
        rows = read_csv(market_dir / "out" / "frontier.csv")
        assert len(rows) == 12
        assert {"stock_fraction", "variant", "reward_median", "reward_ci_lo", "reward_ci_hi", "cagr",
                "risk5_final", "risk5_min_yield", "drawdown_median"} <= set(rows[0])

    def test_taxes_reduce_frontier_reward(self, market_dir):
        rewards = {}
        for taxed in (False, True):
            cfg = base_config(market_dir, frontier={"step_percent": 50, "variants": ["1x", "3x_letf"]},
                              engine={"tax_enabled": taxed},
                              sampler={"realizations": 20, "bootstrap_resamples": 10, "seed": 2})
            assert self.run(market_dir, cfg, "frontier") == 0
            rewards[taxed] = [float(r["reward_median"]) for r in read_csv(market_dir / "out" / "frontier.csv")]
        assert all(t <= f + 1e-12 for t, f in zip(rewards[True], rewards[False]))

    def test_config_error_exit(self, market_dir, capsys):
        cfg = base_config(market_dir, portfolio={"fractions": {"STOCK": 0.5, "BOND": 0.6}})
        assert self.run(market_dir, cfg, "backtest") == 1
        assert "portfolio.fractions" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["mc", "--config", str(tmp_path / "none.json")]) == 1

    def test_data_error_exit(self, market_dir, capsys):
        (market_dir / "STOCK.csv").write_text("Date,Close\n2001-01-02,-5\n")
        assert self.run(market_dir, base_config(market_dir), "backtest") == 2
        assert "data error" in capsys.readouterr().err

    def test_missing_data_file_exit(self, market_dir):
        cfg = base_config(market_dir)
        cfg["assets"][0]["price_file"] = "NOPE.csv"
        assert self.run(market_dir, cfg, "mc") == 2

    def test_insolvency_flood_exit(self, market_dir):
        cfg = base_config(market_dir, leverage={"margin": 40.0}, insolvency_warning_fraction=0.0,
                          engine={"rebalance_leverage_trigger": 5.0, "margin_rate": 500.0})
        code = self.run(market_dir, cfg, "mc")
        rows = read_csv(market_dir / "out" / "realizations.csv")
        assert any(r["insolvent"] == "1" for r in rows)
        assert code == 3
