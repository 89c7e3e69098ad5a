"""Tearing-mode and island-coalescence model problems.

Both problems perturb an analytic magnetic equilibrium on a rectangle with
symmetry conditions on three sides and a Dirichlet condition for the vector
potential (plus velocity slip) on the top side. The flow is fully enclosed:
the normal velocity vanishes on every side, so the pressure is determined up
to a constant and one pressure DOF is pinned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fem
from .errors import ConfigurationError
from .fem import BCSpec, FESpace, dirichlet, natural, slip
from .linalg import FieldLayout, LUFactor
from .mesh import Mesh, Side, build_rect_mesh
from .spacetime import SpaceTimeState


@dataclass(frozen=True)
class ProblemSpec:
    """A model problem: domain, physical parameters, equilibrium fields,
    initial perturbation, and boundary conditions.

    ``p_eq`` is the unshifted equilibrium pressure; the mesh-dependent mean
    is subtracted when the field is interpolated so the discrete pressure is
    exactly zero-mean. ``a_perturbation`` already carries the amplitude eps
    and is added to the equilibrium potential in the initial condition only.
    """

    name: str
    domain: tuple[float, float, float, float]
    mu: float
    eta: float
    mu0: float
    eps: float
    a_eq: Callable
    e_eq: Callable
    p_eq: Callable
    a_perturbation: Callable
    a_eq_normal_flux_top: Callable
    bcs: BCSpec


def _enclosed_bcs(a_eq) -> BCSpec:
    """Symmetry on left/right/bottom, Dirichlet potential + velocity slip on top."""
    sym = {Side.LEFT: slip(), Side.RIGHT: slip(), Side.BOTTOM: slip(), Side.TOP: slip()}
    nat = {s: natural() for s in Side}
    a_conditions = dict(nat)
    a_conditions[Side.TOP] = dirichlet(a_eq)
    return BCSpec(
        conditions={
            "u": sym,
            "p": {s: natural() for s in Side},
            "j": {s: natural() for s in Side},
            "A": a_conditions,
        }
    )


def tearing_mode(eps: float = 1e-3, lam: float = 5.0, length: float = 3.0,
                 mu: float = 1.0, eta: float = 1.0, mu0: float = 1.0) -> ProblemSpec:
    """Harris-sheet equilibrium on [0, length] x [0, 1/2] with a tearing
    perturbation of amplitude eps."""

    def a_eq(x, y):
        return np.log(np.cosh(lam * y)) / lam

    def e_eq(x, y):
        return (lam * eta / mu0) * np.cosh(lam * y) ** -2 + 0.0 * x

    def p_eq(x, y):
        return np.cosh(lam * y) ** -2 / (2.0 * mu0) + 0.0 * x

    def a_pert(x, y):
        return -eps * np.cos(np.pi * y) * np.cos(2.0 * np.pi * x / length)

    def a_flux(x, y):
        return np.tanh(lam * y) + 0.0 * x

    return ProblemSpec(
        name="tearing_mode",
        domain=(0.0, length, 0.0, 0.5),
        mu=mu, eta=eta, mu0=mu0, eps=eps,
        a_eq=a_eq, e_eq=e_eq, p_eq=p_eq, a_perturbation=a_pert,
        a_eq_normal_flux_top=a_flux,
        bcs=_enclosed_bcs(a_eq),
    )


def island_coalescence(eps: float = 1e-3, beta: float = 0.2,
                       mu: float = 1.0, eta: float = 1.0, mu0: float = 1.0) -> ProblemSpec:
    """Fadeev (corrugated sheet pinch) equilibrium on the unit square with a
    coalescence perturbation of amplitude eps."""
    twopi = 2.0 * np.pi

    def sheet(x, y):
        return np.cosh(twopi * y) + beta * np.cos(twopi * x)

    def a_eq(x, y):
        return np.log(sheet(x, y)) / twopi

    def e_eq(x, y):
        return (eta / mu0) * twopi * (1.0 - beta**2) / sheet(x, y) ** 2

    def p_eq(x, y):
        return (1.0 - beta**2) / (2.0 * mu0 * sheet(x, y) ** 2)

    def a_pert(x, y):
        return eps * np.cos(0.5 * np.pi * y) * np.cos(np.pi * x)

    def a_flux(x, y):
        return np.sinh(twopi * y) / sheet(x, y)

    return ProblemSpec(
        name="island_coalescence",
        domain=(0.0, 1.0, 0.0, 1.0),
        mu=mu, eta=eta, mu0=mu0, eps=eps,
        a_eq=a_eq, e_eq=e_eq, p_eq=p_eq, a_perturbation=a_pert,
        a_eq_normal_flux_top=a_flux,
        bcs=_enclosed_bcs(a_eq),
    )


PROBLEMS = {"tearing_mode": tearing_mode, "island_coalescence": island_coalescence}


def by_name(name: str, **kwargs) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(f"unknown problem '{name}'") from None
    return factory(**kwargs)


class Discretization:
    """A problem discretized on one space-time grid.

    Holds the FE spaces (vector P3 velocity, P2 pressure, P1 current and
    potential), the constant Galerkin operators, boundary constraint data,
    prefactored constant solves for the preconditioner, and the shared
    boundary-aware coupling blocks of the space-time Jacobian.
    """

    def __init__(self, problem: ProblemSpec, dx: float, dt: float, t_final: float):
        if dt <= 0 or t_final <= 0:
            raise ConfigurationError("dt and T must be positive")
        n_steps = t_final / dt
        if abs(n_steps - round(n_steps)) > 1e-9 or round(n_steps) < 1:
            raise ConfigurationError(f"T={t_final} is not an integer multiple of dt={dt}")
        self.problem = problem
        self.dt = dt
        self.t_final = t_final
        self.n_steps = int(round(n_steps))

        x0, x1, y0, y1 = problem.domain
        self.mesh: Mesh = build_rect_mesh(x0, x1, y0, y1, dx)
        self.vel = FESpace(self.mesh, 3, components=2)
        self.prs = FESpace(self.mesh, 2)
        self.cur = FESpace(self.mesh, 1)
        self.pot = FESpace(self.mesh, 1)
        self.layout = FieldLayout(
            self.vel.dof_count, self.prs.dof_count, self.cur.dof_count, self.pot.dof_count
        )

        self.mu, self.eta, self.mu0 = problem.mu, problem.eta, problem.mu0

        self.mass_u = fem.assemble_mass(self.vel)
        self.stiff_u = fem.assemble_stiffness(self.vel)
        self.mass_p = fem.assemble_mass(self.prs)
        self.stiff_p = fem.assemble_stiffness(self.prs)
        self.mass_j = fem.assemble_mass(self.cur)
        self.mass_a = fem.assemble_mass(self.pot)
        self.stiff_a = fem.assemble_stiffness(self.pot)
        self.mixed_ja = fem.assemble_mixed_grad(self.cur, self.pot)
        self.div = fem.assemble_divergence(self.vel, self.prs)
        self.e_load = fem.assemble_load(self.pot, problem.e_eq)
        # natural flux of the current equation; only the top side carries a
        # nonzero normal derivative of the potential (symmetry elsewhere)
        self.current_flux = (
            fem.assemble_edge_load(self.cur, Side.TOP, problem.a_eq_normal_flux_top)
            / problem.mu0
        )

        self.u_bc_idx, self.u_bc_vals = fem.constrained_dofs(self.vel, problem.bcs, "u")
        self.a_bc_idx, self.a_bc_vals = fem.constrained_dofs(self.pot, problem.bcs, "A")

        # The flow is enclosed, so the pressure is determined up to a
        # constant. One continuity row (index p_pin) is replaced by a scaled
        # mean constraint w^T p = target: unlike pinning a single node this
        # keeps the constant mode's image O(1), which the PCD approximation
        # can match. Pressure-block solves inside the preconditioner still
        # pin the stiffness at p_pin to stay invertible.
        self.p_pin = 0
        m_vec = fem.assemble_load(self.prs, lambda x, y: 1.0 + 0.0 * x)
        self.p_mean_row = m_vec / np.linalg.norm(m_vec)
        self.p_mean_mass = float(self.p_mean_row @ np.ones(self.prs.dof_count))
        p_interp = self.prs.interpolate(problem.p_eq)
        p_interp -= fem.field_mean(self.prs, p_interp)
        self._p_init = p_interp
        self.p_mean_target = float(self.p_mean_row @ p_interp)

        # boundary-aware shared Jacobian blocks
        pin = np.array([self.p_pin])
        self.div_bc = fem.bc_zero(self.div, rows=pin, cols=self.u_bc_idx)
        self.div_t_bc = fem.bc_zero(self.div.T.tocsr(), rows=self.u_bc_idx)
        self.mixed_ja_bc = fem.bc_zero((self.mixed_ja / self.mu0).tocsr(), cols=self.a_bc_idx)
        self.mass_u_dt_bc = fem.bc_zero(
            (self.mass_u / dt).tocsr(), rows=self.u_bc_idx, cols=self.u_bc_idx
        )
        self.mass_a_dt_bc = fem.bc_zero(
            (self.mass_a / dt).tocsr(), rows=self.a_bc_idx, cols=self.a_bc_idx
        )
        self.mass_a_bc = fem.bc_identity(self.mass_a, self.a_bc_idx)
        self.mass_a_coupling = fem.bc_zero(self.mass_a, rows=self.a_bc_idx, cols=self.a_bc_idx)
        self.stiff_a_bc0 = fem.bc_zero(self.stiff_a, rows=self.a_bc_idx, cols=self.a_bc_idx)
        self.stiff_p_pinned = fem.bc_identity(self.stiff_p, pin)

        # constant factorizations shared by every preconditioner application
        self.lu_mass_j = LUFactor(self.mass_j)
        self.lu_mass_a = LUFactor(self.mass_a_bc)
        self.lu_mass_p = LUFactor(self.mass_p)
        self.lu_stiff_p = LUFactor(self.stiff_p_pinned)

    def clamp(self, u=None, p=None, j=None, a=None):
        """Copies of slab fields with constrained entries set to their
        boundary values. Pressure has no constrained DOF (mean constraint
        instead) and passes through unchanged."""
        out = []
        if u is not None:
            u = u.copy()
            u[self.u_bc_idx] = self.u_bc_vals
            out.append(u)
        if p is not None:
            out.append(p.copy())
        if j is not None:
            out.append(j.copy())
        if a is not None:
            a = a.copy()
            a[self.a_bc_idx] = self.a_bc_vals
            out.append(a)
        return out if len(out) > 1 else out[0]

    def project_zero_mean(self, p_coef: np.ndarray) -> np.ndarray:
        """Reported pressures have their domain mean removed."""
        return p_coef - fem.field_mean(self.prs, p_coef)

    def solve_current_init(self, a_coef: np.ndarray) -> np.ndarray:
        """Current consistent with a potential field: the mass solve that
        zeroes the current-equation residual at the initial guess."""
        return self.lu_mass_j.solve(self.current_flux - (self.mixed_ja @ a_coef) / self.mu0)


def discretize(problem: ProblemSpec, dx: float, dt: float, t_final: float) -> Discretization:
    return Discretization(problem, dx, dt, t_final)


def initial_state(disc: Discretization, n_steps: int | None = None) -> SpaceTimeState:
    """Equilibrium projection initial guess.

    Velocity is zero, the pressure is the zero-mean equilibrium interpolant,
    the guess slabs carry the unperturbed potential, and the current solves
    its mass system so its initial residual vanishes. The time-zero initial
    condition uses the perturbed potential.
    """
    if n_steps is None:
        n_steps = disc.n_steps
    prob = disc.problem
    a_guess = disc.pot.interpolate(prob.a_eq)
    a_ic = disc.pot.interpolate(lambda x, y: prob.a_eq(x, y) + prob.a_perturbation(x, y))
    j_guess = disc.solve_current_init(a_guess)

    from .linalg import BlockVector

    vec = BlockVector(disc.layout, n_steps)
    for k in range(n_steps):
        vec.field(k, "u")[:] = 0.0
        vec.field(k, "p")[:] = disc._p_init
        vec.field(k, "j")[:] = j_guess
        vec.field(k, "A")[:] = a_guess
    ic_u = np.zeros(disc.layout.n_u)
    return SpaceTimeState(vec=vec, ic_u=ic_u, ic_a=a_ic)
