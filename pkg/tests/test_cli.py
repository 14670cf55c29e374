import csv
import json
from pathlib import Path

import numpy as np
import pytest

from ccgames.cli import main, read_strategies_csv, write_strategies_csv
from ccgames.config import ConfigError, build_game, emit_config, parse_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def small_lq_doc(**solver_overrides):
    solver = {
        "delta": 0.7, "step_a0": 20.0, "step_offset": 400.0,
        "batch_scale": 1e-9, "batch_offset": 2.0, "batch_exponent": 1.01,
        "max_iterations": 3000, "residual_tolerance": 1e-5,
        "residual_batch": 32, "seed": 11,
    }
    solver.update(solver_overrides)
    return {
        "game": {
            "kind": "linear_quadratic", "horizon": 2, "state_dim": 1,
            "initial_state": [0.0],
            "players": [
                {"input_dim": 1, "box_lower": [-5, -5], "box_upper": [5, 5],
                 "quad_self": 1.0, "quad_couple": 0.25, "linear": [-1, -1]}
                for _ in range(3)
            ],
            "constraints": [
                {"input_coeffs": [1, 1, 1, 1, 1, 1], "offset": -3.0, "gamma": 0.5}
            ],
        },
        "com": {"kind": "gaussian-standard"},
        "solver": solver,
        "output": {"trace": "trace.csv", "summary": "summary.json",
                   "strategies": "strategies.csv"},
        "verification": {"satisfaction_samples": 200,
                         "epsilon_gap_candidates": 3, "epsilon_gap_samples": 50},
    }


def small_microgrid_doc():
    return {
        "game": {"kind": "microgrid", "n_households": 2, "horizon": 4,
                 "delta_t": 6.0},
        "solver": {"delta": 0.9, "step_a0": 1.4e-4, "step_offset": 2.0,
                   "max_iterations": 5, "residual_batch": 64, "seed": 3},
        "verification": {"satisfaction_samples": 300},
    }


def write_doc(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestParseConfig:
    def test_shipped_configs_parse(self):
        for name in ("quadratic_oracle.json", "microgrid_reduced.json",
                     "microgrid_paper.json"):
            cfg = parse_config(CONFIG_DIR / name)
            game, offsets = build_game(cfg)
            assert game.input_dim > 0
            assert offsets.offsets.shape == (game.constraint_count,)

    def test_round_trip(self, tmp_path):
        for name in ("quadratic_oracle.json", "microgrid_reduced.json",
                     "microgrid_paper.json"):
            cfg = parse_config(CONFIG_DIR / name)
            emit_config(cfg, tmp_path / name)
            again = parse_config(tmp_path / name)
            assert again.to_json_dict() == cfg.to_json_dict()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.json")

    def test_bad_gamma_names_field(self, tmp_path):
        doc = small_microgrid_doc()
        doc["game"]["gamma_soc"] = 1.5
        with pytest.raises(ConfigError, match="gamma_soc"):
            parse_config(write_doc(tmp_path, doc))

    def test_unknown_key_rejected(self, tmp_path):
        doc = small_microgrid_doc()
        doc["solver"]["stepsize"] = 1.0
        with pytest.raises(ConfigError, match="solver.stepsize"):
            parse_config(write_doc(tmp_path, doc))

    def test_delta_half_parses_but_fails_validation(self, tmp_path):
        doc = small_microgrid_doc()
        doc["solver"]["delta"] = 0.5
        cfg = parse_config(write_doc(tmp_path, doc))  # schema accepts it
        assert cfg.solver.delta == 0.5
        code = main(["validate", "--config", str(write_doc(tmp_path, doc))])
        assert code == 2

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"game": }')
        with pytest.raises(ConfigError, match="bad.json:1"):
            parse_config(path)


class TestValidateCommand:
    def test_shipped_paper_config_passes(self):
        assert main(["validate", "--config",
                     str(CONFIG_DIR / "microgrid_paper.json")]) == 0

    def test_oracle_config_passes(self):
        assert main(["validate", "--config",
                     str(CONFIG_DIR / "quadratic_oracle.json")]) == 0

    def test_oversized_step_fails(self, tmp_path):
        doc = small_lq_doc(step_a0=5000.0, step_offset=50.0)
        assert main(["validate", "--config", str(write_doc(tmp_path, doc))]) == 2


class TestRunCommand:
    def test_zero_budget_exit_two_one_row(self, tmp_path):
        doc = small_lq_doc(max_iterations=0)
        code = main(["run", "--config", str(write_doc(tmp_path, doc)),
                     "--out-dir", str(tmp_path / "out")])
        assert code == 2
        rows = (tmp_path / "out" / "trace.csv").read_text().strip().splitlines()
        assert len(rows) == 2  # header + the single initial record

    def test_oracle_run_converges_exit_zero(self, tmp_path):
        doc = small_lq_doc()
        code = main(["run", "--config", str(write_doc(tmp_path, doc)),
                     "--out-dir", str(tmp_path / "out")])
        assert code == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["termination_reason"] == "tolerance"
        cfg = parse_config(write_doc(tmp_path, doc))
        game, _ = build_game(cfg)
        u = read_strategies_csv(tmp_path / "out" / "strategies.csv", game)
        assert np.linalg.norm(u - 0.5) <= 1e-2  # closed-form equilibrium

    def test_unwritable_output_exit_one(self, tmp_path):
        doc = small_lq_doc(max_iterations=0)
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        code = main(["run", "--config", str(write_doc(tmp_path, doc)),
                     "--out-dir", str(blocker / "out")])
        assert code == 1

    def test_validation_gate_and_force(self, tmp_path):
        doc = small_lq_doc()
        doc["solver"]["delta"] = 0.5
        doc["solver"]["max_iterations"] = 1
        path = write_doc(tmp_path, doc)
        assert main(["run", "--config", str(path),
                     "--out-dir", str(tmp_path / "o1")]) == 1
        assert main(["run", "--config", str(path), "--force",
                     "--out-dir", str(tmp_path / "o2")]) == 2

    def test_seed_override_changes_run(self, tmp_path):
        doc = small_microgrid_doc()
        path = write_doc(tmp_path, doc)
        main(["run", "--config", str(path), "--out-dir", str(tmp_path / "a"),
              "--seed", "1"])
        main(["run", "--config", str(path), "--out-dir", str(tmp_path / "b"),
              "--seed", "2"])
        a = (tmp_path / "a" / "strategies.csv").read_text()
        b = (tmp_path / "b" / "strategies.csv").read_text()
        assert a != b

    def test_rerun_bit_identical_except_wall_time(self, tmp_path):
        doc = small_microgrid_doc()
        path = write_doc(tmp_path, doc)
        main(["run", "--config", str(path), "--out-dir", str(tmp_path / "a")])
        main(["run", "--config", str(path), "--out-dir", str(tmp_path / "b")])
        assert (tmp_path / "a" / "strategies.csv").read_text() == \
            (tmp_path / "b" / "strategies.csv").read_text()
        for name in ("a", "b"):
            pass
        rows_a = (tmp_path / "a" / "trace.csv").read_text().splitlines()
        rows_b = (tmp_path / "b" / "trace.csv").read_text().splitlines()
        # wall_ms is the last column and inherently nondeterministic
        strip = lambda rows: ["," .join(r.split(",")[:-1]) for r in rows]
        assert strip(rows_a) == strip(rows_b)


class TestStrategyFiles:
    def test_round_trip(self, tmp_path):
        cfg = parse_config(CONFIG_DIR / "quadratic_oracle.json")
        game, _ = build_game(cfg)
        u = np.linspace(-1.0, 1.0, game.input_dim)
        write_strategies_csv(tmp_path / "s.csv", game, u)
        assert np.array_equal(read_strategies_csv(tmp_path / "s.csv", game), u)

    def test_player_t_u_header_alias(self, tmp_path):
        cfg = parse_config(CONFIG_DIR / "quadratic_oracle.json")
        game, _ = build_game(cfg)
        with open(tmp_path / "s.csv", "w") as fh:
            fh.write("player,t,u\n")
            for i in range(3):
                for t in range(2):
                    fh.write(f"{i},{t},{0.1 * (i + 1)}\n")
        u = read_strategies_csv(tmp_path / "s.csv", game)
        assert u[0] == pytest.approx(0.1) and u[-1] == pytest.approx(0.3)

    def test_dimension_mismatch_rejected(self, tmp_path):
        cfg = parse_config(CONFIG_DIR / "quadratic_oracle.json")
        game, _ = build_game(cfg)
        with open(tmp_path / "s.csv", "w") as fh:
            fh.write("player,t,component,value\n0,0,0,0.5\n")
        with pytest.raises(ValueError, match="expects"):
            read_strategies_csv(tmp_path / "s.csv", game)


class TestCheckConstraints:
    def test_feasible_strategies_pass(self, tmp_path):
        doc = small_microgrid_doc()
        path = write_doc(tmp_path, doc)
        cfg = parse_config(path)
        game, _ = build_game(cfg)
        write_strategies_csv(tmp_path / "s.csv", game, np.zeros(game.input_dim))
        assert main(["check-constraints", "--config", str(path),
                     "--strategies", str(tmp_path / "s.csv")]) == 0

    def test_deterministic_violation_fails(self, tmp_path):
        doc = small_lq_doc()
        path = write_doc(tmp_path, doc)
        cfg = parse_config(path)
        game, _ = build_game(cfg)
        # sum(u) = 12 > 3: the affine constraint is violated surely
        write_strategies_csv(tmp_path / "s.csv", game, 2 * np.ones(game.input_dim))
        assert main(["check-constraints", "--config", str(path),
                     "--strategies", str(tmp_path / "s.csv")]) == 2

    def test_mismatched_file_exit_one(self, tmp_path):
        doc = small_lq_doc()
        path = write_doc(tmp_path, doc)
        (tmp_path / "s.csv").write_text("player,t,component,value\n0,0,0,1.0\n")
        assert main(["check-constraints", "--config", str(path),
                     "--strategies", str(tmp_path / "s.csv")]) == 1

    def test_no_constraints_vacuous_pass(self, tmp_path):
        doc = small_lq_doc()
        doc["game"]["constraints"] = []
        path = write_doc(tmp_path, doc)
        cfg = parse_config(path)
        game, _ = build_game(cfg)
        write_strategies_csv(tmp_path / "s.csv", game, np.zeros(game.input_dim))
        assert main(["check-constraints", "--config", str(path),
                     "--strategies", str(tmp_path / "s.csv")]) == 0


class TestEpsilonGap:
    def test_runs_and_exits_zero(self, tmp_path, capsys):
        doc = small_lq_doc()
        path = write_doc(tmp_path, doc)
        cfg = parse_config(path)
        game, _ = build_game(cfg)
        write_strategies_csv(tmp_path / "s.csv", game, 0.5 * np.ones(game.input_dim))
        assert main(["epsilon-gap", "--config", str(path),
                     "--strategies", str(tmp_path / "s.csv")]) == 0
        assert "M_hat" in capsys.readouterr().out

    def test_zero_candidates_exit_one(self, tmp_path):
        doc = small_lq_doc()
        doc["verification"]["epsilon_gap_candidates"] = 0
        path = write_doc(tmp_path, doc)
        cfg = parse_config(path)
        game, _ = build_game(cfg)
        write_strategies_csv(tmp_path / "s.csv", game, np.zeros(game.input_dim))
        assert main(["epsilon-gap", "--config", str(path),
                     "--strategies", str(tmp_path / "s.csv")]) == 1


class TestPlotData:
    def run_small_microgrid(self, tmp_path):
        doc = small_microgrid_doc()
        doc["solver"]["snapshot_every"] = 2
        path = write_doc(tmp_path, doc)
        out = tmp_path / "out"
        main(["run", "--config", str(path), "--out-dir", str(out)])
        return path, out

    def test_residual_file_matches_trace(self, tmp_path):
        path, out = self.run_small_microgrid(tmp_path)
        code = main(["plot-data", "--config", str(path), "--trace",
                     str(out / "trace.csv"), "--out-dir", str(out / "plots")])
        assert code == 0
        with open(out / "plots" / "residual_vs_iteration.csv") as fh:
            rows = list(csv.DictReader(fh))
        trace_rows = (out / "trace.csv").read_text().strip().splitlines()
        assert len(rows) == len(trace_rows) - 1

    def test_profiles_cover_horizon(self, tmp_path):
        path, out = self.run_small_microgrid(tmp_path)
        main(["plot-data", "--config", str(path), "--trace",
              str(out / "trace.csv"), "--strategies", str(out / "strategies.csv"),
              "--out-dir", str(out / "plots")])
        with open(out / "plots" / "aggregate_profiles.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["t"]) for r in rows] == list(range(4))
        assert (out / "plots" / "strategies_vs_iteration.csv").exists()

    def test_empty_trace_exit_one(self, tmp_path):
        path = write_doc(tmp_path, small_microgrid_doc())
        empty = tmp_path / "trace.csv"
        empty.write_text("k,residual,g_hat_max,g_hat_norm,alpha,batch,wall_ms\n")
        assert main(["plot-data", "--config", str(path), "--trace", str(empty),
                     "--out-dir", str(tmp_path / "plots")]) == 1
