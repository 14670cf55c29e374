"""Command-line front end.

Subcommands:

    run                solve the configured game, write trace/summary/strategies
    validate           check the solver schedules against the estimated operator bound
    check-constraints  Monte Carlo chance-constraint verification of a strategy file
    epsilon-gap        equilibrium-gap certificate terms at a strategy file
    plot-data          tidy CSV extracts (residual decay, profiles) from a trace

Exit codes for ``run``: 0 tolerance reached, 2 iteration budget exhausted,
3 divergence guard tripped, 1 configuration or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import com as com_mod
from . import game as game_mod
from . import solver as solver_mod
from .config import ConfigError, RunConfig, build_game, parse_config
from .rng import PURPOSE_PROBE, substream


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, seed=args.seed))
    return cfg


def write_strategies_csv(path, game, u) -> None:
    """Strategy interchange file: one row per (player, step, component)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("player,t,component,value\n")
        for i, sl in enumerate(game.player_slices):
            n_i = game.players[i].input_dim
            block = u[sl].reshape(game.dynamics.horizon, n_i)
            for t in range(game.dynamics.horizon):
                for comp in range(n_i):
                    fh.write(f"{i},{t},{comp},{float(block[t, comp])!r}\n")


def read_strategies_csv(path, game) -> np.ndarray:
    """Read a strategy file; accepts a 'u' column as alias for 'value'."""
    u = np.zeros(game.input_dim)
    seen = 0
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty strategy file")
        cols = set(reader.fieldnames)
        if "value" in cols:
            value_col, comp_col = "value", "component"
        elif "u" in cols:
            value_col, comp_col = "u", None
        else:
            raise ValueError(f"{path}: expected a 'value' or 'u' column")
        for row in reader:
            i = int(row["player"])
            t = int(row["t"])
            comp = int(row[comp_col]) if comp_col and row.get(comp_col) else 0
            if not (0 <= i < game.n_players):
                raise ValueError(f"{path}: player index {i} out of range")
            n_i = game.players[i].input_dim
            if not (0 <= t < game.dynamics.horizon and 0 <= comp < n_i):
                raise ValueError(f"{path}: entry (t={t}, component={comp}) out of range")
            u[game.player_slices[i].start + t * n_i + comp] = float(row[value_col])
            seen += 1
    if seen != game.input_dim:
        raise ValueError(
            f"{path}: {seen} entries, game expects {game.input_dim}")
    return u


def _write_snapshots_csv(path, trace, game) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,player,t,component,value\n")
        for rec in trace.records:
            if rec.strategies is None:
                continue
            for i, sl in enumerate(game.player_slices):
                n_i = game.players[i].input_dim
                block = rec.strategies[sl].reshape(game.dynamics.horizon, n_i)
                for t in range(game.dynamics.horizon):
                    for comp in range(n_i):
                        fh.write(f"{rec.k},{i},{t},{comp},{float(block[t, comp])!r}\n")


def _estimate_lipschitz(game, offsets, cfg) -> float:
    return solver_mod.estimate_lipschitz(game, offsets, seed=cfg.solver.seed)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
        game, offsets = build_game(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    lip = _estimate_lipschitz(game, offsets, cfg)
    report = solver_mod.validate_config(cfg.solver, lip)
    print(f"estimated operator Lipschitz bound: {lip:.6g}")
    for check in report.checks:
        status = "ok  " if check.passed else "FAIL"
        print(f"  [{status}] {check.name}: {check.detail}")
    print("validation " + ("passed" if report.passed else "failed"))
    return 0 if report.passed else 2


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
        game, offsets = build_game(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1

    if not args.force:
        lip = _estimate_lipschitz(game, offsets, cfg)
        report = solver_mod.validate_config(cfg.solver, lip)
        if not report.passed:
            for check in report.failures:
                print(f"validation failure: {check.name}: {check.detail}", file=sys.stderr)
            print("refusing to run; pass --force to override", file=sys.stderr)
            return 1

    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return 1

    trace = solver_mod.run(game, offsets, cfg.solver,
                           checkpoint_dir=out_dir if cfg.solver.checkpoint_every else None)
    state = trace.final_state
    rng = substream(cfg.solver.seed, PURPOSE_PROBE, 3)
    satisfaction = com_mod.estimate_constraint_satisfaction(
        game, state.u, cfg.verification.satisfaction_samples, rng)

    summary = {
        "termination_reason": trace.termination_reason,
        "iterations": state.k,
        "final_residual": trace.records[-1].residual if trace.records else None,
        "final_multiplier": [float(x) for x in state.lam],
        "constraint_satisfaction": [
            {"index": j, "p_hat": float(satisfaction.p_hat[j]),
             "ci_lower": float(satisfaction.ci_lower[j]),
             "ci_upper": float(satisfaction.ci_upper[j]),
             "target": float(satisfaction.targets[j])}
            for j in range(game.constraint_count)
        ],
        "all_constraints_met": satisfaction.all_met,
        "seed": cfg.solver.seed,
        "config": cfg.to_json_dict(),
    }
    if cfg.verification.epsilon_gap_in_summary and cfg.verification.epsilon_gap_candidates:
        cand_rng = substream(cfg.solver.seed, PURPOSE_PROBE, 1)
        candidates = [game_mod.random_feasible_profile(game, cand_rng)
                      for _ in range(cfg.verification.epsilon_gap_candidates)]
        gap = com_mod.estimate_epsilon_gap(
            game, state.u, candidates, cfg.verification.epsilon_gap_samples,
            substream(cfg.solver.seed, PURPOSE_PROBE, 2), offsets=offsets)
        summary["epsilon_gap"] = {
            "m_hat": [float(x) for x in gap.m_hat],
            "bound_with_final_multiplier": float(np.dot(state.lam, gap.m_hat)),
            "candidates_evaluated": gap.candidates_evaluated,
        }

    try:
        solver_mod.write_trace_csv(trace, out_dir / cfg.output.trace,
                                   m_constraints=game.constraint_count)
        write_strategies_csv(out_dir / cfg.output.strategies, game, state.u)
        if cfg.solver.snapshot_every:
            _write_snapshots_csv(out_dir / "strategy_snapshots.csv", trace, game)
        with open(out_dir / cfg.output.summary, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        print(f"failed to write outputs: {exc}", file=sys.stderr)
        return 1

    print(f"terminated: {trace.termination_reason} after {state.k} iterations, "
          f"residual {summary['final_residual']:.6g}")
    return {solver_mod.TERMINATION_TOLERANCE: 0,
            solver_mod.TERMINATION_BUDGET: 2,
            solver_mod.TERMINATION_DIVERGENCE: 3}[trace.termination_reason]


def cmd_check_constraints(args) -> int:
    try:
        cfg = _load(args)
        game, offsets = build_game(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        u = read_strategies_csv(args.strategies, game)
    except (OSError, ValueError) as exc:
        print(f"cannot read strategies: {exc}", file=sys.stderr)
        return 1
    rng = substream(cfg.solver.seed, PURPOSE_PROBE, 3)
    rep = com_mod.estimate_constraint_satisfaction(
        game, u, args.samples or cfg.verification.satisfaction_samples, rng)
    print(f"constraint satisfaction over {rep.n_samples} samples:")
    for j in range(game.constraint_count):
        ok = rep.ci_lower[j] >= rep.targets[j]
        print(f"  [{'ok  ' if ok else 'FAIL'}] constraint {j}: "
              f"p_hat={rep.p_hat[j]:.4f} CI=[{rep.ci_lower[j]:.4f}, {rep.ci_upper[j]:.4f}] "
              f"target={rep.targets[j]:.4f}")
    if game.constraint_count == 0:
        print("  no coupled constraints; vacuous pass")
    return 0 if rep.all_met or game.constraint_count == 0 else 2


def cmd_epsilon_gap(args) -> int:
    try:
        cfg = _load(args)
        game, offsets = build_game(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        u_star = read_strategies_csv(args.strategies, game)
    except (OSError, ValueError) as exc:
        print(f"cannot read strategies: {exc}", file=sys.stderr)
        return 1
    n_cand = cfg.verification.epsilon_gap_candidates
    if n_cand < 1:
        print("verification.epsilon_gap_candidates must be at least 1", file=sys.stderr)
        return 1
    cand_rng = substream(cfg.solver.seed, PURPOSE_PROBE, 1)
    candidates = [game_mod.random_feasible_profile(game, cand_rng) for _ in range(n_cand)]
    gap = com_mod.estimate_epsilon_gap(
        game, u_star, candidates, cfg.verification.epsilon_gap_samples,
        substream(cfg.solver.seed, PURPOSE_PROBE, 2), offsets=offsets)
    print(f"gap terms over {gap.candidates_evaluated} unilateral deviations "
          f"({gap.samples_used} samples each); sampled max is a lower bound on the sup:")
    for j, m in enumerate(gap.m_hat):
        print(f"  constraint {j}: M_hat = {m:.6g}")
    print("certificate form: unilateral improvement <= sum_j lambda_j * M_hat_j "
          "for any dual-feasible lambda")
    return 0


def _read_trace(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "k" not in reader.fieldnames:
            raise ValueError(f"{path}: not a trace file")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: trace has no rows")
    return rows


def cmd_plot_data(args) -> int:
    try:
        cfg = _load(args)
        game, _ = build_game(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        rows = _read_trace(args.trace)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "residual_vs_iteration.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("k,residual,alpha,batch\n")
        for row in rows:
            fh.write(f"{row['k']},{row['residual']},{row['alpha']},{row['batch']}\n")
    written = ["residual_vs_iteration.csv"]

    snaps = Path(args.trace).parent / "strategy_snapshots.csv"
    if snaps.exists():
        with open(snaps, encoding="utf-8") as src, \
                open(out_dir / "strategies_vs_iteration.csv", "w", encoding="utf-8",
                     newline="\n") as dst:
            dst.write(src.read())
        written.append("strategies_vs_iteration.csv")

    strategies_path = Path(args.strategies) if args.strategies else \
        Path(args.trace).parent / cfg.output.strategies
    if cfg.game_kind == "microgrid" and strategies_path.exists():
        try:
            u = read_strategies_csv(strategies_path, game)
        except ValueError as exc:
            print(f"cannot read strategies: {exc}", file=sys.stderr)
            return 1
        p = cfg.microgrid
        profile = u.reshape(p.n_households, p.horizon)
        total_demand = p.demand.sum(axis=0)
        battery = profile.sum(axis=0)
        with open(out_dir / "aggregate_profiles.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("t,total_demand,grid_exchange,battery_discharge,renewable_mean\n")
            for t in range(p.horizon):
                fh.write(f"{t},{float(total_demand[t])!r},{float(total_demand[t] - battery[t])!r},"
                         f"{float(battery[t])!r},{float(p.renewable_mean[t])!r}\n")
        written.append("aggregate_profiles.csv")

    print("wrote " + ", ".join(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccgames",
        description="equilibrium seeking for dynamic games with coupled chance constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=False):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
        if needs_out:
            p.add_argument("--out-dir", default=".", help="output directory")

    p_run = sub.add_parser("run", help="solve and write trace/summary/strategies")
    common(p_run, needs_out=True)
    p_run.add_argument("--force", action="store_true",
                       help="run even if schedule validation fails")

    p_val = sub.add_parser("validate", help="check solver schedules")
    common(p_val)

    p_chk = sub.add_parser("check-constraints",
                           help="verify chance constraints at a strategy file")
    common(p_chk)
    p_chk.add_argument("--strategies", required=True, help="strategy CSV to verify")
    p_chk.add_argument("--samples", type=int, default=None,
                       help="override verification sample count")

    p_eps = sub.add_parser("epsilon-gap",
                           help="equilibrium-gap certificate terms at a strategy file")
    common(p_eps)
    p_eps.add_argument("--strategies", required=True, help="strategy CSV to probe")

    p_plot = sub.add_parser("plot-data", help="emit tidy CSVs from a trace")
    common(p_plot, needs_out=True)
    p_plot.add_argument("--trace", required=True, help="trace CSV from a run")
    p_plot.add_argument("--strategies", default=None,
                        help="strategy CSV for profile extracts")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "validate": cmd_validate,
        "check-constraints": cmd_check_constraints,
        "epsilon-gap": cmd_epsilon_gap,
        "plot-data": cmd_plot_data,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
