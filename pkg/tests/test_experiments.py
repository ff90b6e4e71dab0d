import json

import numpy as np
import pytest

from singlepull import cli
from singlepull.experiments import (
    ConfigError,
    ExperimentConfig,
    fit_loglog_slope,
    load_config,
    parse_config,
    run_experiment,
    sweep_rho,
    time_policies,
)
from singlepull.simulator import Summary
from singlepull import lp
from singlepull.domains import make_instance


def small_config(tmp_path, **overrides):
    doc = {
        "domain": {"family": "RANDOM"},
        "setting": {"n_types": 2, "n_states": 3, "budget": 1, "rho": 2, "horizon": 3},
        "policies": ["spi", "random"],
        "episodes": 10,
        "base_seed": 0,
        "resample_instances": 1,
        "out_dir": str(tmp_path / "out"),
    }
    doc.update(overrides)
    return doc


class TestConfig:
    def test_parse_round_trip(self, tmp_path):
        cfg = parse_config(small_config(tmp_path))
        assert cfg.setting == (2, 3, 1, 2, 3)
        assert cfg.instance_seeds == [0]

    def test_schema_rejects_unknown_policy(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(small_config(tmp_path, policies=["bogus"]))

    def test_schema_rejects_missing_setting(self, tmp_path):
        doc = small_config(tmp_path)
        del doc["setting"]
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(small_config(tmp_path)))
        cfg = load_config(str(path))
        assert cfg.episodes == 10

    def test_load_config_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestRunExperiment:
    def test_writes_results_with_normalization(self, tmp_path):
        cfg = parse_config(small_config(tmp_path))
        rows = run_experiment(cfg)
        assert len(rows) == 2
        by_policy = {r.policy: r for r in rows}
        assert by_policy["random"].normalized == pytest.approx(0.0, abs=1e-12)
        spi = by_policy["spi"]
        assert spi.mean_reward <= spi.upper_bound + 3 * spi.ci95 + 1e-9
        csv = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert csv[0].startswith("domain,setting,instance_seed,policy,mean_reward")
        assert len(csv) == 3
        assert (tmp_path / "out" / "results.txt").exists()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = parse_config(small_config(tmp_path))
        run_experiment(cfg)
        first = (tmp_path / "out" / "results.csv").read_bytes()
        run_experiment(cfg)
        second = (tmp_path / "out" / "results.csv").read_bytes()
        assert first == second

    def test_runtime_column_zero_without_timing(self, tmp_path):
        cfg = parse_config(small_config(tmp_path))
        rows = run_experiment(cfg)
        assert all(r.runtime_ms == 0.0 for r in rows)
        cfg.measure_runtime = True
        rows = run_experiment(cfg)
        assert all(r.runtime_ms > 0.0 for r in rows)

    def test_bound_holds_up_to_noise(self, tmp_path):
        cfg = parse_config(small_config(tmp_path, episodes=50,
                                        policies=["spi", "qdiff", "random"]))
        rows = run_experiment(cfg)
        for r in rows:
            assert r.mean_reward <= r.upper_bound + 3 * r.ci95 + 1e-9

    def test_trajectory_dump(self, tmp_path):
        cfg = parse_config(small_config(tmp_path, episodes=3,
                                        dump_trajectories=True))
        run_experiment(cfg)
        lines = (tmp_path / "out" / "trajectories.jsonl").read_text().splitlines()
        # (2 policies) x (3 episodes) x (T=3 steps) x (4 arms)
        assert len(lines) == 2 * 3 * 3 * 4
        rec = json.loads(lines[0])
        assert set(rec) == {"instance_seed", "policy", "episode", "t", "arm",
                            "state", "action", "reward"}


class TestSweepRho:
    def test_single_rho_single_row(self, tmp_path):
        cfg = parse_config(small_config(tmp_path, policies=["spi"]))
        rows, slope = sweep_rho(cfg, [2])
        assert len(rows) == 1
        assert np.isnan(slope)
        text = (tmp_path / "out" / "gap_curve.csv").read_text()
        assert text.startswith("rho,gap,ci,normalized_gap")
        assert "# loglog_slope=" in text

    def test_rejects_unsorted(self, tmp_path):
        cfg = parse_config(small_config(tmp_path))
        with pytest.raises(ConfigError):
            sweep_rho(cfg, [4, 2])

    def test_injected_constant_gap(self, tmp_path):
        cfg = parse_config(small_config(tmp_path, policies=["spi"]))
        g = 0.125  # per-arm gap to inject

        def fake_evaluate(instance, name, episodes, base_seed):
            ub = lp.upper_bound(instance)
            mean = ub - g * instance.n_arms
            return Summary(mean=mean, half_width=0.0, n_episodes=episodes,
                           wall_clock=0.0, rewards=np.full(episodes, mean))

        rows, slope = sweep_rho(cfg, [1, 2, 4], evaluate_fn=fake_evaluate)
        for r in rows:
            assert r["gap"] == pytest.approx(g, abs=1e-12)

    def test_slope_fit(self):
        xs = [1, 2, 4, 8]
        ys = [1.0, 0.5, 0.25, 0.125]
        assert fit_loglog_slope(xs, ys) == pytest.approx(-1.0, abs=1e-12)


class TestTiming:
    def test_requires_spi_and_whittle(self, tmp_path):
        cfg = parse_config(small_config(tmp_path, policies=["spi", "random"]))
        with pytest.raises(ConfigError):
            time_policies(cfg)

    def test_emits_positive_times(self, tmp_path):
        cfg = parse_config(small_config(tmp_path, episodes=2,
                                        policies=["spi", "whittle-finite"]))
        stats = time_policies(cfg)
        assert {s["policy"] for s in stats} == {"spi", "whittle-finite"}
        assert all(s["mean_ms"] > 0 for s in stats)
        assert (tmp_path / "out" / "timing.csv").exists()


class TestCli:
    def write_config(self, tmp_path, **overrides):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(small_config(tmp_path, **overrides)))
        return str(path)

    def test_happy_path(self, tmp_path, capsys):
        rc = cli.main(["--config", self.write_config(tmp_path), "--episodes", "5"])
        assert rc == cli.EXIT_OK
        assert (tmp_path / "out" / "results.csv").exists()

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{}")
        assert cli.main(["--config", str(path)]) == cli.EXIT_CONFIG

    def test_bad_policy_override(self, tmp_path):
        rc = cli.main(["--config", self.write_config(tmp_path),
                       "--policies", "nonsense"])
        assert rc == cli.EXIT_CONFIG

    def test_seed_range_override(self, tmp_path):
        rc = cli.main(["--config", self.write_config(tmp_path, episodes=4),
                       "--seeds", "3..4"])
        assert rc == cli.EXIT_OK
        csv = (tmp_path / "out" / "results.csv").read_text().splitlines()
        seeds = {line.split(",")[2] for line in csv[1:]}
        assert seeds == {"3", "4"}

    def test_sweep_mode(self, tmp_path):
        rc = cli.main(["--config", self.write_config(tmp_path, policies=["spi"],
                                                     episodes=4),
                       "--sweep-rho", "1,2"])
        assert rc == cli.EXIT_OK
        assert (tmp_path / "out" / "gap_curve.csv").exists()

    def test_threads_env_same_output(self, tmp_path, monkeypatch):
        cfg_path = self.write_config(tmp_path, episodes=5)
        assert cli.main(["--config", cfg_path, "--out", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("SINGLEPULL_THREADS", "4")
        assert cli.main(["--config", cfg_path, "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "results.csv").read_bytes() == \
               (tmp_path / "b" / "results.csv").read_bytes()
