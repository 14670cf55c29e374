#!/usr/bin/env python3
"""Solve the closed-form quadratic test game and compare against its KKT solution.

Prints the iteration count, the final distance to the directly-solved
equilibrium, and the multiplier error. A quick sanity check that the
iteration machinery is wired correctly.
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

import ccgames.solver as solver  # noqa: E402
from ccgames.config import build_game, parse_config  # noqa: E402
from ccgames.lqgame import solve_vgne_kkt  # noqa: E402

sys.path.insert(0, str(ROOT / "tests"))
from conftest import quadratic_oracle_params  # noqa: E402


def main() -> int:
    cfg = parse_config(ROOT / "configs" / "quadratic_oracle.json")
    game, offsets = build_game(cfg)
    u_star, lam_star = solve_vgne_kkt(quadratic_oracle_params())
    trace = solver.run(game, offsets, cfg.solver)
    state = trace.final_state
    print(f"terminated: {trace.termination_reason} at k = {state.k}")
    print(f"|u - u*|      = {np.linalg.norm(state.u - u_star):.3e}")
    print(f"|lam - lam*|  = {abs(float(state.lam[0]) - lam_star):.3e}")
    print(f"final residual = {trace.records[-1].residual:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
