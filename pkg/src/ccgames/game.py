"""Game description and per-sample gradient / constraint evaluation.

A game couples N players through shared linear dynamics, convex coupled
constraints, and each other's inputs. Players hold cost oracles split into
a state part (function of the stacked trajectory) and an input part
(function of the stacked profile); constraints are split the same way.

Oracles are batched: state-part callables receive an (M, state_dim) array of
sampled trajectories and return either an (M, dim) array or a 1-D array when
the result does not depend on the sample (the evaluators then skip the
averaging). Gradients, not values, are the primary contract; values are only
needed for reporting.

All evaluation here is pure: identical (u, w) inputs give bit-identical
outputs, and a game object is immutable after construction, so concurrent
evaluation across players and samples is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .com import ComModel
from .dynamics import CompactLift, TimeVaryingLinearDynamics, build_compact_lift, simulate_state


@dataclass(frozen=True)
class PlayerSpec:
    """One player's strategy space and cost oracles.

    input_dim       : n_i, inputs per time step.
    box_lower/upper : per-coordinate bounds on the stacked strategy
                      (length T * n_i); ignored when ``projector`` is given.
    projector       : optional custom Euclidean projector onto the local set.
    cost_state_grad : S -> gradient of the state cost along each sampled
                      trajectory; None means no state cost.
    cost_input_grad : u -> gradient of the input cost in this player's block.
    cost_value      : optional (u, S) -> per-sample total cost, reporting only.
    """

    input_dim: int
    box_lower: np.ndarray | None = None
    box_upper: np.ndarray | None = None
    projector: Callable | None = None
    cost_state_grad: Callable | None = None
    cost_input_grad: Callable | None = None
    cost_value: Callable | None = None

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.projector is None:
            lo = np.asarray(self.box_lower, dtype=float).reshape(-1)
            hi = np.asarray(self.box_upper, dtype=float).reshape(-1)
            if lo.shape != hi.shape:
                raise ValueError("box bounds must have equal length")
            if np.any(lo > hi):
                raise ValueError("box lower bounds exceed upper bounds")
            object.__setattr__(self, "box_lower", lo)
            object.__setattr__(self, "box_upper", hi)


@dataclass(frozen=True)
class CouplingConstraintSpec:
    """One scalar coupled constraint value = state part + input part <= 0.

    gamma     : violation tolerance in (0, 1) of the chance constraint.
    beta      : extra nonnegative tightening margin.
    com_scale : converts the concentration offset into the constraint's
                units (standard deviation of the sampled value for
                affine-in-noise constraints; 0 for deterministic ones).
    state_value/state_grad : batched oracles in the stacked trajectory.
    input_value/input_grad : oracles in the stacked profile (full-length
                             gradient; players slice their own block).
    """

    gamma: float
    beta: float = 0.0
    com_scale: float = 1.0
    state_value: Callable | None = None
    state_grad: Callable | None = None
    input_value: Callable | None = None
    input_grad: Callable | None = None

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.com_scale < 0:
            raise ValueError("com_scale must be nonnegative")


@dataclass(frozen=True)
class DisturbanceModel:
    """I.i.d. disturbance sampler plus its concentration model.

    sample(rng, n) must return an (n, T * n_s) array of stacked draws,
    independent within and across batches.
    """

    dim: int
    sample: Callable
    com_model: ComModel


@dataclass(frozen=True)
class GameSpec:
    """Full game: dynamics with cached lift, players, constraints, noise."""

    dynamics: TimeVaryingLinearDynamics
    lift: CompactLift
    players: tuple
    constraints: tuple
    disturbance: DisturbanceModel
    player_slices: tuple = field(default=())

    @classmethod
    def build(cls, dynamics: TimeVaryingLinearDynamics, players, constraints,
              disturbance: DisturbanceModel) -> "GameSpec":
        players = tuple(players)
        constraints = tuple(constraints)
        if len(players) != dynamics.n_players:
            raise ValueError("player count does not match the dynamics input maps")
        for i, (p, nj) in enumerate(zip(players, dynamics.input_dims)):
            if p.input_dim != nj:
                raise ValueError(f"player {i} input_dim {p.input_dim} != dynamics {nj}")
            if p.projector is None and p.box_lower.shape[0] != dynamics.horizon * nj:
                raise ValueError(f"player {i} box bounds must cover T * n_i entries")
        if disturbance.dim != dynamics.horizon * dynamics.state_dim:
            raise ValueError("disturbance dimension must be T * n_s")
        lift = build_compact_lift(dynamics)
        slices, off = [], 0
        for nj in dynamics.input_dims:
            slices.append(slice(off, off + dynamics.horizon * nj))
            off += dynamics.horizon * nj
        game = cls(dynamics, lift, players, constraints, disturbance, tuple(slices))
        game._check_lift()
        return game

    def _check_lift(self):
        # cheap construction-time cross-check of the cached lift against the recursion
        rng = np.random.default_rng(0)
        for _ in range(2):
            u = rng.normal(size=self.input_dim)
            w = rng.normal(size=self.disturbance.dim)
            direct = simulate_state(self.dynamics, u, w)
            lifted = state_batch(self, u, w[None, :])[0]
            if not np.allclose(direct, lifted, atol=1e-9):
                raise ValueError("compact lift disagrees with the stepped dynamics")

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def input_dim(self) -> int:
        return self.dynamics.input_dim_total

    @property
    def constraint_count(self) -> int:
        return len(self.constraints)

    @property
    def state_traj_dim(self) -> int:
        return (self.dynamics.horizon + 1) * self.dynamics.state_dim


def state_batch(game: GameSpec, u: np.ndarray, w_batch: np.ndarray) -> np.ndarray:
    """Sampled stacked trajectories, one row per disturbance draw."""
    u = np.asarray(u, dtype=float).reshape(-1)
    w_batch = np.atleast_2d(np.asarray(w_batch, dtype=float))
    if u.shape[0] != game.input_dim:
        raise ValueError(f"profile length {u.shape[0]}, expected {game.input_dim}")
    if w_batch.shape[1] != game.disturbance.dim:
        raise ValueError("disturbance sample dimension mismatch")
    base = game.lift.init_map @ game.dynamics.s0
    for gm, sl in zip(game.lift.input_maps, game.player_slices):
        base = base + gm @ u[sl]
    return base[None, :] + w_batch @ game.lift.noise_map.T


def _mean_over_batch(values: np.ndarray) -> np.ndarray:
    """Average a batched oracle result; 1-D results are sample-independent."""
    values = np.asarray(values, dtype=float)
    return values if values.ndim == 1 else values.mean(axis=0)


def player_pseudo_gradient_mean(game: GameSpec, i: int, u: np.ndarray,
                                w_batch: np.ndarray,
                                states: np.ndarray | None = None) -> np.ndarray:
    """Batch mean of player i's cost gradient block."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if states is None:
        states = state_batch(game, u, w_batch)
    p = game.players[i]
    out = np.zeros(game.player_slices[i].stop - game.player_slices[i].start)
    if p.cost_input_grad is not None:
        out = out + np.asarray(p.cost_input_grad(u), dtype=float)
    if p.cost_state_grad is not None:
        out = out + game.lift.input_maps[i].T @ _mean_over_batch(p.cost_state_grad(states))
    return out


def pseudo_gradient_mean(game: GameSpec, u: np.ndarray, w_batch: np.ndarray) -> np.ndarray:
    """Batch mean of the stacked pseudo-gradient (all players, one batch)."""
    states = state_batch(game, u, w_batch)
    return np.concatenate([
        player_pseudo_gradient_mean(game, i, u, w_batch, states=states)
        for i in range(game.n_players)
    ])


def pseudo_gradient_sample(game: GameSpec, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Single-sample pseudo-gradient; block i is player i's own cost gradient."""
    w = np.asarray(w, dtype=float).reshape(-1)
    return pseudo_gradient_mean(game, u, w[None, :])


def constraint_values(game: GameSpec, u: np.ndarray, w_batch: np.ndarray,
                      states: np.ndarray | None = None) -> np.ndarray:
    """Raw coupled-constraint values, shape (batch, m)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if states is None:
        states = state_batch(game, u, w_batch)
    out = np.zeros((states.shape[0], game.constraint_count))
    for j, c in enumerate(game.constraints):
        if c.state_value is not None:
            out[:, j] += np.asarray(c.state_value(states), dtype=float)
        if c.input_value is not None:
            out[:, j] += float(c.input_value(u))
    return out


def constraint_sample(game: GameSpec, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Single-sample raw constraint vector."""
    w = np.asarray(w, dtype=float).reshape(-1)
    return constraint_values(game, u, w[None, :])[0]


def player_constraint_gradient_mean(game: GameSpec, i: int, u: np.ndarray,
                                    w_batch: np.ndarray,
                                    states: np.ndarray | None = None) -> np.ndarray:
    """Batch mean of player i's block of the constraint Jacobian, (T n_i, m)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if states is None:
        states = state_batch(game, u, w_batch)
    sl = game.player_slices[i]
    out = np.zeros((sl.stop - sl.start, game.constraint_count))
    gm_t = game.lift.input_maps[i].T
    for j, c in enumerate(game.constraints):
        if c.state_grad is not None:
            out[:, j] += gm_t @ _mean_over_batch(c.state_grad(states))
        if c.input_grad is not None:
            out[:, j] += np.asarray(c.input_grad(u), dtype=float)[sl]
    return out


def constraint_gradient_mean(game: GameSpec, u: np.ndarray, w_batch: np.ndarray) -> np.ndarray:
    """Batch mean of the full constraint Jacobian stacked over players, (dim, m)."""
    states = state_batch(game, u, w_batch)
    return np.vstack([
        player_constraint_gradient_mean(game, i, u, w_batch, states=states)
        for i in range(game.n_players)
    ])


def constraint_gradient_sample(game: GameSpec, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Single-sample constraint Jacobian, column j = gradient of constraint j."""
    w = np.asarray(w, dtype=float).reshape(-1)
    return constraint_gradient_mean(game, u, w[None, :])


def project_local(game: GameSpec, u: np.ndarray) -> np.ndarray:
    """Project each player's block onto its local set (Euclidean)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != game.input_dim:
        raise ValueError(f"profile length {u.shape[0]}, expected {game.input_dim}")
    out = u.copy()
    for p, sl in zip(game.players, game.player_slices):
        if p.projector is not None:
            out[sl] = p.projector(u[sl])
        else:
            out[sl] = np.clip(u[sl], p.box_lower, p.box_upper)
    return out


def random_feasible_profile(game: GameSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the local boxes (projected for custom local sets)."""
    u = np.empty(game.input_dim)
    for p, sl in zip(game.players, game.player_slices):
        if p.projector is not None:
            u[sl] = p.projector(rng.normal(size=sl.stop - sl.start))
        else:
            u[sl] = rng.uniform(p.box_lower, p.box_upper)
    return u


def monotonicity_probe(game: GameSpec, n_pairs: int, batch: int,
                       rng: np.random.Generator) -> float:
    """Smallest sampled pairing <F(u1) - F(u2), u1 - u2> over random feasible pairs.

    Diagnostic support for the monotone pseudo-gradient assumption; Monte
    Carlo noise means small negative values do not disprove monotonicity.
    """
    worst = np.inf
    for _ in range(n_pairs):
        u1 = random_feasible_profile(game, rng)
        u2 = random_feasible_profile(game, rng)
        w = game.disturbance.sample(rng, batch)
        f1 = pseudo_gradient_mean(game, u1, w)
        f2 = pseudo_gradient_mean(game, u2, w)
        worst = min(worst, float(np.dot(f1 - f2, u1 - u2)))
    return worst
