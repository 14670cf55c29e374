"""Semi-decentralized sampling-based equilibrium iteration.

Each iteration k runs through a coordinator and the players:

    coordinator:  G_hat    = batch mean of the tightened constraint values
                  lam_avg  = (1 - delta) lam_k + delta lam_avg_{k-1}
                  lam_{k+1} = proj_{>=0}( lam_avg + alpha_k G_hat )
                  broadcasts lam_k (the pre-update multiplier)
    player i:     F_hat_i  = batch mean of its cost-gradient block
                  Jac_i    = batch mean of its constraint-Jacobian block
                  u_avg_i  = (1 - delta) u_i + delta u_avg_prev_i
                  u_i'     = proj_local( u_avg_i - alpha_k (F_hat_i + Jac_i lam_k) )

The averaging weight delta lives in [1/golden_ratio, 1); this inertia is what
lets the scheme converge under a merely monotone pseudo-gradient. Batches
grow superlinearly and step sizes decay so sampling error is summable.

Every entity draws its own fresh batch each iteration from a substream keyed
by (seed, iteration, entity), so a run is bit-reproducible regardless of
execution order and can be resumed from a checkpoint.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import game as game_mod
from .com import UnderApproxOffsets
from .rng import iteration_stream, residual_stream, substream, PURPOSE_PROBE

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

TERMINATION_TOLERANCE = "tolerance"
TERMINATION_BUDGET = "budget"
TERMINATION_DIVERGENCE = "divergence-guard"

CHECKPOINT_TAG = "ccgames-state v1"


@dataclass(frozen=True)
class StepSchedule:
    """Decaying step sizes a0 / (k + offset)."""

    a0: float
    offset: float = 2.0

    def value(self, k: int) -> float:
        return self.a0 / (k + self.offset)


@dataclass(frozen=True)
class BatchSchedule:
    """Growing batch sizes ceil(scale * (k + offset)^exponent), at least 1."""

    scale: float = 1.0
    offset: float = 2.0
    exponent: float = 1.1

    def value(self, k: int) -> int:
        return max(1, math.ceil(self.scale * (k + self.offset) ** self.exponent))


@dataclass(frozen=True)
class SolverConfig:
    delta: float = 0.9
    step: StepSchedule = field(default_factory=lambda: StepSchedule(a0=1.4e-4))
    batch: BatchSchedule = field(default_factory=BatchSchedule)
    max_iterations: int = 1000
    residual_tolerance: float = 1e-8
    residual_batch: int = 2000
    seed: int = 0
    checkpoint_every: int = 0
    snapshot_every: int = 0
    divergence_factor: float = 1e6
    # experimental: broadcast lam_{k+1} instead of lam_k (Gauss-Seidel flavor)
    broadcast_updated_multiplier: bool = False


def step_size(cfg: SolverConfig, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    return cfg.step.value(k)


def batch_size(cfg: SolverConfig, k: int) -> int:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    return cfg.batch.value(k)


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]


def validate_config(cfg: SolverConfig, lipschitz_estimate: float) -> ValidationReport:
    """Check the schedule conditions the convergence theory needs.

    Returns a report rather than raising; callers decide whether to gate.
    ``lipschitz_estimate`` is the empirical Lipschitz bound of the sampled
    operator (see ``estimate_lipschitz``).
    """
    checks = []
    inv_phi = 1.0 / GOLDEN_RATIO
    checks.append(ValidationCheck(
        "averaging-lower", cfg.delta >= inv_phi,
        f"delta={cfg.delta} must be >= 1/golden_ratio ~ {inv_phi:.6f}"))
    checks.append(ValidationCheck(
        "averaging-upper", cfg.delta < 1.0,
        f"delta={cfg.delta} must be < 1 (strict)"))
    checks.append(ValidationCheck(
        "step-positive", cfg.step.a0 > 0 and cfg.step.offset > 0,
        f"step schedule a0={cfg.step.a0}, offset={cfg.step.offset} must be positive"))
    if lipschitz_estimate <= 0:
        checks.append(ValidationCheck(
            "step-bound", False, "lipschitz estimate must be positive"))
    else:
        bound = 1.0 / (4.0 * cfg.delta * (2.0 * lipschitz_estimate + 1.0))
        a0 = step_size(cfg, 0)
        checks.append(ValidationCheck(
            "step-bound", a0 <= bound,
            f"alpha(0)={a0:.3e} must be <= 1/(4 delta (2 L + 1)) = {bound:.3e} "
            f"for L={lipschitz_estimate:.3e}"))
    ratios_ok = all(step_size(cfg, k + 1) <= step_size(cfg, k) for k in range(100))
    checks.append(ValidationCheck(
        "step-decreasing", ratios_ok, "alpha(k) must be nonincreasing"))
    checks.append(ValidationCheck(
        "batch-growth", cfg.batch.exponent > 1.0,
        f"batch exponent {cfg.batch.exponent} must exceed 1 (superlinear growth)"))
    checks.append(ValidationCheck(
        "batch-scale", cfg.batch.scale > 0 and cfg.batch.offset > 0,
        f"batch schedule scale={cfg.batch.scale}, offset={cfg.batch.offset} must be positive"))
    return ValidationReport(tuple(checks))


@dataclass
class SolverState:
    """Iterate (u, multiplier) plus the lagged averaged companions."""

    k: int
    u: np.ndarray
    u_avg_prev: np.ndarray
    lam: np.ndarray
    lam_avg_prev: np.ndarray
    seed: int

    def z_norm(self) -> float:
        return math.hypot(float(np.linalg.norm(self.u)), float(np.linalg.norm(self.lam)))

    def to_text(self) -> str:
        def row(name, arr):
            return name + " " + " ".join(repr(float(x)) for x in arr)

        lines = [
            CHECKPOINT_TAG,
            f"seed {self.seed}",
            f"k {self.k}",
            row("u", self.u),
            row("u_avg_prev", self.u_avg_prev),
            row("multiplier", self.lam),
            row("multiplier_avg_prev", self.lam_avg_prev),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SolverState":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != CHECKPOINT_TAG:
            raise ValueError("not a recognized checkpoint (bad version tag)")
        fields = {}
        for ln in lines[1:]:
            name, _, rest = ln.partition(" ")
            fields[name] = rest
        try:
            seed = int(fields["seed"])
            k = int(fields["k"])
            vec = lambda name: np.array(
                [float(x) for x in fields[name].split()] if fields[name].strip() else [])
            return cls(k, vec("u"), vec("u_avg_prev"),
                       vec("multiplier"), vec("multiplier_avg_prev"), seed)
        except KeyError as exc:
            raise ValueError(f"checkpoint missing field {exc}") from exc


def initial_state(game, cfg: SolverConfig) -> SolverState:
    """Start at the projected origin with a zero multiplier.

    The averaged companions are seeded with the initial point itself, which
    makes the first averaging step a no-op.
    """
    u0 = game_mod.project_local(game, np.zeros(game.input_dim))
    lam0 = np.zeros(game.constraint_count)
    return SolverState(0, u0, u0.copy(), lam0, lam0.copy(), cfg.seed)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    residual: float
    g_hat_max: float
    g_hat_norm: float
    lam: np.ndarray
    alpha: float
    batch: int
    wall_ms: float
    strategies: np.ndarray | None = None


@dataclass(frozen=True)
class RunTrace:
    config: SolverConfig
    records: tuple
    termination_reason: str
    final_state: SolverState


def _operator_estimate(game, offsets: UnderApproxOffsets, u, lam, w_batch):
    """Sampled extended operator: (gradient block, minus tightened values)."""
    states = game_mod.state_batch(game, u, w_batch)
    f_hat = np.concatenate([
        game_mod.player_pseudo_gradient_mean(game, i, u, w_batch, states=states)
        for i in range(game.n_players)
    ])
    jac = np.vstack([
        game_mod.player_constraint_gradient_mean(game, i, u, w_batch, states=states)
        for i in range(game.n_players)
    ]) if game.constraint_count else np.zeros((game.input_dim, 0))
    g_hat = game_mod.constraint_values(game, u, w_batch, states=states).mean(axis=0) \
        + offsets.offsets
    return f_hat + jac @ lam, -g_hat, g_hat


def coordinator_step(state: SolverState, game, offsets: UnderApproxOffsets,
                     cfg: SolverConfig, rng: np.random.Generator):
    """One multiplier update; returns (lam_avg, lam_next, g_hat)."""
    m_k = batch_size(cfg, state.k)
    alpha = step_size(cfg, state.k)
    w0 = game.disturbance.sample(rng, m_k)
    g_hat = game_mod.constraint_values(game, state.u, w0).mean(axis=0) + offsets.offsets
    lam_avg = (1.0 - cfg.delta) * state.lam + cfg.delta * state.lam_avg_prev
    lam_next = np.maximum(lam_avg + alpha * g_hat, 0.0)
    return lam_avg, lam_next, g_hat


def player_step(i: int, state: SolverState, lam: np.ndarray, game,
                cfg: SolverConfig, rng: np.random.Generator):
    """One strategy update for player i; returns (u_avg_i, u_next_i)."""
    if np.any(lam < 0):
        raise ValueError("broadcast multiplier must be nonnegative")
    m_k = batch_size(cfg, state.k)
    alpha = step_size(cfg, state.k)
    w = game.disturbance.sample(rng, m_k)
    states = game_mod.state_batch(game, state.u, w)
    f_i = game_mod.player_pseudo_gradient_mean(game, i, state.u, w, states=states)
    jac_i = game_mod.player_constraint_gradient_mean(game, i, state.u, w, states=states)
    sl = game.player_slices[i]
    u_avg_i = (1.0 - cfg.delta) * state.u[sl] + cfg.delta * state.u_avg_prev[sl]
    raw = u_avg_i - alpha * (f_i + jac_i @ lam)
    p = game.players[i]
    u_next_i = p.projector(raw) if p.projector is not None else np.clip(
        raw, p.box_lower, p.box_upper)
    return u_avg_i, u_next_i


def iterate(state: SolverState, game, offsets: UnderApproxOffsets, cfg: SolverConfig,
            residual: float | None = None):
    """Run one full iteration; returns (next state, record for iteration k)."""
    t0 = time.perf_counter()
    if residual is None:
        residual = residual_estimate(state, game, offsets, cfg)
    k = state.k
    lam_avg, lam_next, g_hat = coordinator_step(
        state, game, offsets, cfg, iteration_stream(state.seed, k, 0))
    lam_broadcast = lam_next if cfg.broadcast_updated_multiplier else state.lam

    u_next = np.empty_like(state.u)
    u_avg = np.empty_like(state.u)
    for i in range(game.n_players):
        u_avg_i, u_next_i = player_step(
            i, state, lam_broadcast, game, cfg, iteration_stream(state.seed, k, 1 + i))
        sl = game.player_slices[i]
        u_avg[sl] = u_avg_i
        u_next[sl] = u_next_i

    new_state = SolverState(k + 1, u_next, u_avg, lam_next, lam_avg, state.seed)
    snapshot = state.u.copy() if cfg.snapshot_every and k % cfg.snapshot_every == 0 else None
    record = IterationRecord(
        k=k, residual=residual,
        g_hat_max=float(g_hat.max()) if g_hat.size else 0.0,
        g_hat_norm=float(np.linalg.norm(g_hat)),
        lam=state.lam.copy(), alpha=step_size(cfg, k), batch=batch_size(cfg, k),
        wall_ms=(time.perf_counter() - t0) * 1e3, strategies=snapshot)
    return new_state, record


def residual_estimate(state: SolverState, game, offsets: UnderApproxOffsets,
                      cfg: SolverConfig, rng: np.random.Generator | None = None,
                      w_batch: np.ndarray | None = None) -> float:
    """Distance from the iterate to one exact projected forward step.

    The expected operator is replaced by a large-reference-batch estimate
    (``cfg.residual_batch`` samples); the backward step is the product of the
    local-set projection and the nonnegative-orthant projection. Zero exactly
    at equilibrium-multiplier pairs, up to estimator noise. The reference
    batch comes from the dedicated residual substream (common random numbers
    across iterations), so callers may precompute and reuse it via
    ``w_batch``.
    """
    if w_batch is None:
        if rng is None:
            rng = residual_stream(state.seed)
        w_batch = game.disturbance.sample(rng, cfg.residual_batch)
    alpha = step_size(cfg, state.k)
    a_u, a_lam, _ = _operator_estimate(game, offsets, state.u, state.lam, w_batch)
    u_step = game_mod.project_local(game, state.u - alpha * a_u)
    lam_step = np.maximum(state.lam - alpha * a_lam, 0.0)
    return math.hypot(float(np.linalg.norm(state.u - u_step)),
                      float(np.linalg.norm(state.lam - lam_step)))


def _evaluation_record(state: SolverState, game, offsets, cfg, residual: float,
                       wall_ms: float) -> IterationRecord:
    """Record for a state that is evaluated but not advanced (final row)."""
    rng = iteration_stream(state.seed, state.k, 0)
    w0 = game.disturbance.sample(rng, batch_size(cfg, state.k))
    g_hat = game_mod.constraint_values(game, state.u, w0).mean(axis=0) + offsets.offsets
    return IterationRecord(
        k=state.k, residual=residual,
        g_hat_max=float(g_hat.max()) if g_hat.size else 0.0,
        g_hat_norm=float(np.linalg.norm(g_hat)),
        lam=state.lam.copy(), alpha=step_size(cfg, state.k),
        batch=batch_size(cfg, state.k), wall_ms=wall_ms,
        strategies=state.u.copy() if cfg.snapshot_every else None)


def run(game, offsets: UnderApproxOffsets, cfg: SolverConfig,
        initial: SolverState | None = None, checkpoint_dir=None) -> RunTrace:
    """Iterate until the residual tolerance, the budget, or the divergence guard.

    The trace holds one record per completed iteration plus a final
    evaluation record at the last iterate (so a zero-iteration run still
    yields the initial record).
    """
    state = initial if initial is not None else initial_state(game, cfg)
    guard = cfg.divergence_factor * (1.0 + state.z_norm())
    w_res = game.disturbance.sample(residual_stream(state.seed), cfg.residual_batch)
    records = []
    reason = TERMINATION_BUDGET
    while True:
        t0 = time.perf_counter()
        res = residual_estimate(state, game, offsets, cfg, w_batch=w_res)
        if res <= cfg.residual_tolerance:
            reason = TERMINATION_TOLERANCE
            records.append(_evaluation_record(
                state, game, offsets, cfg, res, (time.perf_counter() - t0) * 1e3))
            break
        if state.k >= cfg.max_iterations:
            reason = TERMINATION_BUDGET
            records.append(_evaluation_record(
                state, game, offsets, cfg, res, (time.perf_counter() - t0) * 1e3))
            break
        state, record = iterate(state, game, offsets, cfg, residual=res)
        records.append(record)
        if checkpoint_dir is not None and cfg.checkpoint_every > 0 \
                and state.k % cfg.checkpoint_every == 0:
            write_checkpoint(state, checkpoint_dir)
        if state.z_norm() > guard:
            reason = TERMINATION_DIVERGENCE
            break
    return RunTrace(cfg, tuple(records), reason, state)


def write_checkpoint(state: SolverState, directory) -> str:
    from pathlib import Path

    path = Path(directory) / f"checkpoint_{state.k:08d}.txt"
    path.write_text(state.to_text(), encoding="utf-8")
    return str(path)


def load_checkpoint(path) -> SolverState:
    from pathlib import Path

    return SolverState.from_text(Path(path).read_text(encoding="utf-8"))


def estimate_lipschitz(game, offsets: UnderApproxOffsets, seed: int = 0,
                       n_pairs: int = 16, batch: int = 256,
                       multiplier_scale: float = 1.0) -> float:
    """Empirical Lipschitz bound of the sampled operator over feasible pairs.

    Samples random (u, multiplier) pairs, evaluates the operator on a shared
    batch, and returns the largest difference ratio. Used to size the step
    bound in ``validate_config`` since no analytic constant is available.
    """
    rng = substream(seed, PURPOSE_PROBE, 0)
    worst = 0.0
    m = game.constraint_count
    for _ in range(n_pairs):
        u1 = game_mod.random_feasible_profile(game, rng)
        u2 = game_mod.random_feasible_profile(game, rng)
        l1 = rng.uniform(0.0, multiplier_scale, size=m)
        l2 = rng.uniform(0.0, multiplier_scale, size=m)
        w = game.disturbance.sample(rng, batch)
        a1u, a1l, _ = _operator_estimate(game, offsets, u1, l1, w)
        a2u, a2l, _ = _operator_estimate(game, offsets, u2, l2, w)
        dz = math.hypot(float(np.linalg.norm(u1 - u2)), float(np.linalg.norm(l1 - l2)))
        if dz < 1e-12:
            continue
        da = math.hypot(float(np.linalg.norm(a1u - a2u)), float(np.linalg.norm(a1l - a2l)))
        worst = max(worst, da / dz)
    return worst


@dataclass(frozen=True)
class EstimatorDiagnostics:
    """Empirical mean squared estimator errors against a reference batch."""

    batch_sizes: tuple
    pseudo_gradient_mse: np.ndarray
    jacobian_mse: np.ndarray
    constraint_mse: np.ndarray
    total_mse: np.ndarray
    slope: float | None
    reference_batch: int
    repetitions: int


def estimator_diagnostics(game, u: np.ndarray, lam: np.ndarray, batch_sizes,
                          repetitions: int, rng: np.random.Generator,
                          offsets: UnderApproxOffsets | None = None) -> EstimatorDiagnostics:
    """Measure how estimator error decays with batch size.

    For each batch size M the three estimators (gradient mean, Jacobian mean
    applied to the multiplier, tightened-constraint mean) are re-drawn
    ``repetitions`` times and compared against one reference evaluation with
    a 10x-larger batch. The fitted log-log slope of the total error should
    sit near -1 for i.i.d. sample means.
    """
    if not batch_sizes:
        raise ValueError("batch_sizes must be nonempty")
    if offsets is None:
        offsets = UnderApproxOffsets.from_game(game)
    batch_sizes = tuple(int(m) for m in batch_sizes)
    u = np.asarray(u, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    m_ref = 10 * max(batch_sizes)
    w_ref = game.disturbance.sample(rng, m_ref)
    states_ref = game_mod.state_batch(game, u, w_ref)
    f_ref = np.concatenate([
        game_mod.player_pseudo_gradient_mean(game, i, u, w_ref, states=states_ref)
        for i in range(game.n_players)])
    jac_ref = game_mod.constraint_gradient_mean(game, u, w_ref)
    g_ref = game_mod.constraint_values(game, u, w_ref).mean(axis=0) + offsets.offsets

    mse_f, mse_j, mse_g = [], [], []
    for m in batch_sizes:
        acc = np.zeros(3)
        for _ in range(repetitions):
            w = game.disturbance.sample(rng, m)
            states = game_mod.state_batch(game, u, w)
            f_hat = np.concatenate([
                game_mod.player_pseudo_gradient_mean(game, i, u, w, states=states)
                for i in range(game.n_players)])
            jac = game_mod.constraint_gradient_mean(game, u, w)
            g_hat = game_mod.constraint_values(game, u, w).mean(axis=0) + offsets.offsets
            acc[0] += float(np.sum((f_hat - f_ref) ** 2))
            acc[1] += float(np.sum(((jac - jac_ref) @ lam) ** 2))
            acc[2] += float(np.sum((g_hat - g_ref) ** 2))
        acc /= repetitions
        mse_f.append(acc[0])
        mse_j.append(acc[1])
        mse_g.append(acc[2])
    mse_f, mse_j, mse_g = np.array(mse_f), np.array(mse_j), np.array(mse_g)
    total = mse_f + mse_j + mse_g
    slope = None
    if np.all(total > 0):
        slope = float(np.polyfit(np.log(batch_sizes), np.log(total), 1)[0])
    return EstimatorDiagnostics(batch_sizes, mse_f, mse_j, mse_g, total, slope,
                                m_ref, repetitions)


def write_trace_csv(trace: RunTrace, path, m_constraints: int | None = None) -> None:
    """Trace CSV: one row per record, '.' decimals, LF endings, UTF-8."""
    if m_constraints is None:
        m_constraints = trace.records[0].lam.shape[0] if trace.records else 0
    lam_cols = [f"lambda_{j}" for j in range(m_constraints)]
    header = ["k", "residual", "g_hat_max", "g_hat_norm", *lam_cols,
              "alpha", "batch", "wall_ms"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for rec in trace.records:
            row = [str(rec.k), repr(rec.residual), repr(rec.g_hat_max),
                   repr(rec.g_hat_norm), *(repr(float(x)) for x in rec.lam),
                   repr(rec.alpha), str(rec.batch), f"{rec.wall_ms:.3f}"]
            fh.write(",".join(row) + "\n")
