"""Newton drivers: all-at-once space-time solve and the sequential baseline.

Both use plain Newton (full steps, no globalization) with right-preconditioned
GMRES for the linear solves. The sequential baseline tightens its per-step
absolute tolerance by sqrt(N_t) so the accumulated residual matches the
space-time tolerance, warm-starts every step from the previous solution, and
records steps whose warm start already meets the tolerance as frozen; frozen
steps are excluded from the per-step iteration averages.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceError
from .linalg import BlockVector, GmresConfig, gmres
from .precond import SpaceTimePreconditioner, Variant
from .problems import Discretization, initial_state
from .spacetime import SpaceTimeState, assemble_jacobian, residual


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-10
    max_iters: int = 25
    gmres: GmresConfig = field(default_factory=GmresConfig)
    variant: Variant = Variant.TRIANGULAR

    def __post_init__(self):
        if self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")


@dataclass
class SolveStats:
    """Iteration counts and residual history of one solve.

    For sequential runs the per-step lists are populated and the averages are
    taken over effective (non-frozen) steps only.
    """

    mode: str
    newton_iters: int = 0
    gmres_iters: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    converged: bool = True
    monotone: bool = True
    wall_time: float = 0.0
    per_step_newton: list | None = None
    per_step_gmres: list | None = None
    frozen_steps: list | None = None

    @property
    def total_gmres(self) -> int:
        return int(sum(self.gmres_iters))

    @property
    def avg_gmres(self) -> float:
        if self.newton_iters == 0:
            return 0.0
        return self.total_gmres / self.newton_iters

    @property
    def effective_steps(self) -> int:
        if self.per_step_newton is None:
            return 0
        return sum(1 for n in self.per_step_newton if n > 0)

    @property
    def avg_newton_per_step(self) -> float:
        eff = [n for n in self.per_step_newton if n > 0]
        return sum(eff) / len(eff) if eff else 0.0

    @property
    def avg_gmres_per_step(self) -> float:
        eff = [
            sum(g)
            for n, g in zip(self.per_step_newton, self.per_step_gmres)
            if n > 0
        ]
        return sum(eff) / len(eff) if eff else 0.0


def _newton(state: SpaceTimeState, disc: Discretization, abs_tol: float,
            cfg: NewtonConfig, stats: SolveStats) -> bool:
    """Run Newton on the given state in place; returns convergence flag."""
    for _ in range(cfg.max_iters + 1):
        r = residual(state, disc)
        rn = r.norm()
        stats.residual_norms.append(rn)
        if rn <= abs_tol:
            return True
        if stats.newton_iters >= cfg.max_iters:
            return False
        jac = assemble_jacobian(state, disc)
        prec = SpaceTimePreconditioner(jac, disc, state, cfg.variant)
        result = gmres(jac.apply, prec.apply_inverse, -r.data, config=cfg.gmres)
        state.vec.data += result.x
        stats.newton_iters += 1
        stats.gmres_iters.append(result.iterations)
    return False


def _check_monotone(stats: SolveStats):
    h = stats.residual_norms
    stats.monotone = all(h[i + 1] <= h[i] for i in range(len(h) - 1)) and stats.monotone


def solve_all_at_once(disc: Discretization, cfg: NewtonConfig | None = None):
    """Newton on the full space-time system from the equilibrium projection
    initial guess."""
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    state = initial_state(disc)
    stats = SolveStats(mode="spacetime")
    stats.converged = _newton(state, disc, cfg.abs_tol, cfg, stats)
    _check_monotone(stats)
    stats.wall_time = time.perf_counter() - t0
    return state, stats


def solve_sequential(disc: Discretization, cfg: NewtonConfig | None = None):
    """Classical time stepping with the single-step preconditioner.

    Each step is one-slab Newton with absolute tolerance abs_tol/sqrt(N_t),
    warm-started from the previous step. Raises ConvergenceError with the
    failing step index if a step does not converge.
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    n_steps = disc.n_steps
    step_tol = cfg.abs_tol / np.sqrt(n_steps)

    guess = initial_state(disc, n_steps=1)
    prev_u = guess.ic_u.copy()
    prev_a = guess.ic_a.copy()
    slab_guess = guess.vec.slab(0).copy()

    full = BlockVector(disc.layout, n_steps)
    stats = SolveStats(mode="sequential", per_step_newton=[], per_step_gmres=[],
                       frozen_steps=[])
    for k in range(n_steps):
        vec = BlockVector(disc.layout, 1, slab_guess.copy())
        step_state = SpaceTimeState(vec=vec, ic_u=prev_u, ic_a=prev_a)
        step_stats = SolveStats(mode="step")
        ok = _newton(step_state, disc, step_tol, cfg, step_stats)
        if not ok:
            raise ConvergenceError(
                f"time step {k + 1} did not converge below {step_tol:.3e} "
                f"in {cfg.max_iters} Newton iterations",
                step=k + 1,
            )
        if step_stats.newton_iters == 0:
            stats.frozen_steps.append(k + 1)
        stats.per_step_newton.append(step_stats.newton_iters)
        stats.per_step_gmres.append(step_stats.gmres_iters)
        stats.newton_iters += step_stats.newton_iters
        stats.gmres_iters.extend(step_stats.gmres_iters)
        stats.residual_norms.extend(step_stats.residual_norms)
        stats.monotone = stats.monotone and all(
            step_stats.residual_norms[i + 1] <= step_stats.residual_norms[i]
            for i in range(len(step_stats.residual_norms) - 1)
        )
        full.slab(k)[:] = step_state.vec.slab(0)
        slab_guess = step_state.vec.slab(0).copy()
        prev_u = disc.clamp(u=step_state.vec.field(0, "u"))
        prev_a = disc.clamp(a=step_state.vec.field(0, "A"))
    state = SpaceTimeState(vec=full, ic_u=guess.ic_u, ic_a=guess.ic_a)
    stats.wall_time = time.perf_counter() - t0
    return state, stats


def compute_overhead_ratios(st: SolveStats, seq: SolveStats) -> tuple[float, float]:
    """Space-time iteration totals over sequential per-effective-step averages.

    The Newton ratio divides the space-time Newton count by the average
    Newton iterations per effective sequential step; the GMRES ratio does the
    same with total linear iterations.
    """
    if seq.per_step_newton is None or st.per_step_newton is not None:
        raise ConfigurationError("expected (space-time, sequential) stats in that order")
    if seq.effective_steps == 0:
        raise ConfigurationError("sequential run has no effective steps to average over")
    newton_ratio = st.newton_iters / seq.avg_newton_per_step
    gmres_ratio = st.total_gmres / seq.avg_gmres_per_step
    return newton_ratio, gmres_ratio
