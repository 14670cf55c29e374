import json
from pathlib import Path

import numpy as np
import pytest

from ccgames import MicrogridParams, build_microgrid_game
from ccgames.dynamics import TimeVaryingLinearDynamics
from ccgames.lqgame import LqConstraint, LqGameParams, LqPlayer, build_lq_game

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def random_dynamics(rng, n_s=None, n_players=None, horizon=None):
    """A random stable-ish time-varying system for lift/simulate cross-checks."""
    n_s = n_s or rng.integers(1, 5)
    n_players = n_players or rng.integers(1, 5)
    horizon = horizon or rng.integers(1, 11)
    a = rng.normal(scale=0.7, size=(horizon, n_s, n_s))
    b = tuple(rng.normal(size=(horizon, n_s, rng.integers(1, 3)))
              for _ in range(n_players))
    s0 = rng.normal(size=n_s)
    return TimeVaryingLinearDynamics(a_mats=a, b_mats=b, s0=s0)


def central_difference(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in range(x.size):
        step = np.zeros_like(x)
        step[idx] = h
        g[idx] = (f(x + step) - f(x - step)) / (2.0 * h)
    return g


def relative_error(approx, exact):
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(1.0, np.linalg.norm(exact)))


def quadratic_oracle_params():
    """The shipped closed-form test game, rebuilt from its config file."""
    doc = json.loads((CONFIG_DIR / "quadratic_oracle.json").read_text())
    g = doc["game"]
    players = tuple(LqPlayer(
        input_dim=p["input_dim"], box_lower=np.array(p["box_lower"]),
        box_upper=np.array(p["box_upper"]), quad_self=p["quad_self"],
        quad_couple=p["quad_couple"], linear=np.array(p["linear"]))
        for p in g["players"])
    cons = tuple(LqConstraint(
        input_coeffs=np.array(c["input_coeffs"]), offset=c["offset"],
        gamma=c["gamma"]) for c in g["constraints"])
    return LqGameParams(horizon=g["horizon"], state_dim=g["state_dim"],
                        initial_state=np.array(g["initial_state"]),
                        players=players, constraints=cons)


@pytest.fixture(scope="session")
def quadratic_game():
    return build_lq_game(quadratic_oracle_params())


@pytest.fixture(scope="session")
def reduced_microgrid():
    params = MicrogridParams(n_households=5, horizon=12, delta_t=2.0)
    game, offsets = build_microgrid_game(params)
    return params, game, offsets
