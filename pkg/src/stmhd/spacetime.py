"""All-at-once residual and block space-time Jacobian.

The state stacks the four fields over the time slabs; the Jacobian is kept
as per-slab sparse blocks plus shared coupling matrices. The velocity and
potential parts are block bidiagonal in time (backward Euler), every other
block is block diagonal.

Constrained rows of the residual read ``value - boundary_value`` and the
corresponding Jacobian rows are identity, with coupling columns zeroed; the
Galerkin rows are evaluated on the state with constrained entries clamped to
their boundary values, so the Jacobian is the exact derivative of the
residual in every direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .linalg import BlockVector


@dataclass
class SpaceTimeState:
    """Field values on slabs 1..N_t plus the time-zero initial condition."""

    vec: BlockVector
    ic_u: np.ndarray
    ic_a: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.vec.n_steps

    def copy(self) -> "SpaceTimeState":
        return SpaceTimeState(self.vec.copy(), self.ic_u.copy(), self.ic_a.copy())


def _slab_galerkin(disc, u, p, j, a, u_prev, a_prev):
    """Raw Galerkin residual rows of one backward-Euler step."""
    adv_res, _, _ = fem.advection_u_parts(disc.vel, u)
    lor_res, _, _ = fem.assemble_lorentz_blocks(disc.vel, disc.cur, disc.pot, j, a)
    r_u = (
        disc.mass_u @ (u - u_prev) / disc.dt
        + disc.mu * (disc.stiff_u @ u)
        + disc.div.T @ p
        + adv_res
        + lor_res
    )
    r_p = disc.div @ u
    r_j = disc.mass_j @ j + (disc.mixed_ja @ a) / disc.mu0 - disc.current_flux
    adva_res, _, _ = fem.assemble_advection_A(disc.pot, disc.vel, u, a)
    r_a = (
        disc.mass_a @ (a - a_prev) / disc.dt
        + (disc.eta / disc.mu0) * (disc.stiff_a @ a)
        + adva_res
        + disc.e_load
    )
    return r_u, r_p, r_j, r_a


def residual(state: SpaceTimeState, disc) -> BlockVector:
    """Backward-Euler residual of every slab, boundary rows replaced by the
    constraint residuals."""
    out = BlockVector(disc.layout, state.n_steps)
    u_prev, a_prev = state.ic_u, state.ic_a
    for k in range(state.n_steps):
        u_raw = state.vec.field(k, "u")
        p_raw = state.vec.field(k, "p")
        j_raw = state.vec.field(k, "j")
        a_raw = state.vec.field(k, "A")
        u, p, j, a = disc.clamp(u_raw, p_raw, j_raw, a_raw)
        r_u, r_p, r_j, r_a = _slab_galerkin(disc, u, p, j, a, u_prev, a_prev)
        r_u[disc.u_bc_idx] = u_raw[disc.u_bc_idx] - disc.u_bc_vals
        r_p[disc.p_pin] = disc.p_mean_row @ p_raw - disc.p_mean_target
        r_a[disc.a_bc_idx] = a_raw[disc.a_bc_idx] - disc.a_bc_vals
        out.field(k, "u")[:] = r_u
        out.field(k, "p")[:] = r_p
        out.field(k, "j")[:] = r_j
        out.field(k, "A")[:] = r_a
        u_prev, a_prev = u, a
    return out


@dataclass
class SlabBlocks:
    """Linearized blocks of one time slab, boundary conditions applied."""

    f_u: sp.csr_matrix  # M_u/dt + mu K_u + advection linearization
    z_j: sp.csr_matrix  # current -> momentum (depends on A)
    z_a: sp.csr_matrix  # potential -> momentum (depends on j)
    y: sp.csr_matrix  # velocity -> potential equation (depends on A)
    f_a: sp.csr_matrix  # M_A/dt + (eta/mu0) K_A + advection by u


def linearize_slab(disc, u, j, a) -> SlabBlocks:
    """Assemble the state-dependent blocks of one slab at clamped fields."""
    _, adv_lin = fem.assemble_advection_u(disc.vel, u)
    f_u = disc.mass_u / disc.dt + disc.mu * disc.stiff_u + adv_lin
    _, z_j, z_a = fem.assemble_lorentz_blocks(disc.vel, disc.cur, disc.pot, j, a)
    _, lin_a, lin_u = fem.assemble_advection_A(disc.pot, disc.vel, u, a)
    f_a = disc.mass_a / disc.dt + (disc.eta / disc.mu0) * disc.stiff_a + lin_a
    return SlabBlocks(
        f_u=fem.bc_identity(f_u.tocsr(), disc.u_bc_idx),
        z_j=fem.bc_zero(z_j, rows=disc.u_bc_idx),
        z_a=fem.bc_zero(z_a, rows=disc.u_bc_idx, cols=disc.a_bc_idx),
        y=fem.bc_zero(lin_u, rows=disc.a_bc_idx, cols=disc.u_bc_idx),
        f_a=fem.bc_identity(f_a.tocsr(), disc.a_bc_idx),
    )


class SpaceTimeJacobian:
    """The 4x4 block space-time Jacobian, stored as per-slab sparse blocks.

    ``apply`` is matrix-free over the block structure; slab k of the output
    depends on slabs k and k-1 of the input only. ``block_multiplies`` counts
    sparse block matvecs for the cost-scaling checks.
    """

    def __init__(self, disc, slabs: list[SlabBlocks]):
        self.disc = disc
        self.slabs = slabs
        self.n_steps = len(slabs)
        self.layout = disc.layout
        self.size = self.n_steps * disc.layout.slab_size
        self.block_multiplies = 0

    def apply(self, v: np.ndarray) -> np.ndarray:
        d = self.disc
        vin = BlockVector(self.layout, self.n_steps, np.asarray(v, dtype=float))
        out = BlockVector(self.layout, self.n_steps)
        for k in range(self.n_steps):
            blk = self.slabs[k]
            vu, vp = vin.field(k, "u"), vin.field(k, "p")
            vj, va = vin.field(k, "j"), vin.field(k, "A")
            o_u = blk.f_u @ vu + d.div_t_bc @ vp + blk.z_j @ vj + blk.z_a @ va
            o_p = d.div_bc @ vu
            o_p[d.p_pin] += d.p_mean_row @ vp
            o_j = d.mass_j @ vj + d.mixed_ja_bc @ va
            o_a = blk.y @ vu + blk.f_a @ va
            self.block_multiplies += 8
            if k > 0:
                o_u -= d.mass_u_dt_bc @ vin.field(k - 1, "u")
                o_a -= d.mass_a_dt_bc @ vin.field(k - 1, "A")
                self.block_multiplies += 2
            out.field(k, "u")[:] = o_u
            out.field(k, "p")[:] = o_p
            out.field(k, "j")[:] = o_j
            out.field(k, "A")[:] = o_a
        return out.data

    def to_dense(self) -> np.ndarray:
        """Materialize by applying to unit vectors (tests only)."""
        n = self.size
        out = np.empty((n, n))
        e = np.zeros(n)
        for i in range(n):
            e[i] = 1.0
            out[:, i] = self.apply(e)
            e[i] = 0.0
        return out


def assemble_jacobian(state: SpaceTimeState, disc) -> SpaceTimeJacobian:
    """Linearize the residual at the given state, slab by slab."""
    slabs = []
    for k in range(state.n_steps):
        u, j, a = disc.clamp(
            u=state.vec.field(k, "u"), j=state.vec.field(k, "j"), a=state.vec.field(k, "A")
        )
        slabs.append(linearize_slab(disc, u, j, a))
    return SpaceTimeJacobian(disc, slabs)


def apply_jacobian(jacobian: SpaceTimeJacobian, v: BlockVector) -> BlockVector:
    """Matrix-free application of the space-time Jacobian."""
    data = jacobian.apply(v.data if isinstance(v, BlockVector) else v)
    if isinstance(v, BlockVector):
        return BlockVector(jacobian.layout, jacobian.n_steps, data)
    return data
