"""Space-time block preconditioners for the all-at-once MHD Jacobian.

Three variants share the same building blocks:

* ``TRIANGULAR`` (default): the block upper-triangular preconditioner.
  Its inverse is one back-substitution sweep: potential solve through the
  approximate magnetic Schur complement, current mass solve, pressure solve
  through the PCD Schur approximation, then one space-time velocity solve.
* ``SIMPLIFIED``: additionally applies the velocity-pressure lower factor
  (one extra space-time velocity solve).
* ``FULL``: the complete approximate block-LU factorization (two extra
  velocity solves and one extra current mass solve versus TRIANGULAR).

The pressure Schur complement is approximated by the pressure
convection-diffusion product ``-K_p F_p^{-1} M_p`` with F_p block bidiagonal
in time. The magnetic Schur complement uses the Alfven-wave limit: the
velocity feedback on the potential is replaced by a Laplacian scaled with
the squared mean magnetic field, giving the block tridiagonal wave operator
``C_A = F_A D^{-1} F_A + K_A`` (D the diagonal of the potential mass matrix)
and the approximation ``S_A^{-1} = C_A^{-1} F_A M_A^{-1}``.

Inner space-time solves (velocity operator and wave operator) are exact
sequential block forward substitutions with per-slab LU factors; every other
per-slab solve is independent across slabs.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import fem
from .errors import PreconditionerError
from .linalg import BlockVector, LUFactor
from .spacetime import SpaceTimeJacobian


class Variant(str, Enum):
    FULL = "full"
    SIMPLIFIED = "simplified"
    TRIANGULAR = "triangular"


def compute_alfven_scaling(pot_space, a_coefs, mu0: float) -> np.ndarray:
    """Squared norm of the mean magnetic field over mu0, one value per slab.

    The mean field is the exact spatial average of curl(A k); its norm equals
    the norm of the average potential gradient.
    """
    a_coefs = np.atleast_2d(np.asarray(a_coefs, dtype=float))
    out = np.empty(len(a_coefs))
    for k, a in enumerate(a_coefs):
        g = fem.mean_gradient(pot_space, a)
        out[k] = float(g @ g) / mu0
    return out


class SpaceTimePreconditioner:
    """Factorized blocks at one Newton linearization point.

    Per-slab LU factors are built once here and reused by every GMRES
    iteration of that Newton step; applications are read-only.
    """

    def __init__(self, jacobian: SpaceTimeJacobian, disc, state, variant=Variant.TRIANGULAR):
        self.disc = disc
        self.jac = jacobian
        self.variant = Variant(variant)
        self.n_steps = jacobian.n_steps
        self.layout = disc.layout
        d = disc

        self.lu_f_u = [self._factor(b.f_u, "F_u") for b in jacobian.slabs]

        # pressure convection-diffusion blocks  F_p = M_p/dt + W_p(u^k) + mu K_p
        # (invertible without the pin; constants must pass through exactly for
        # the mean-constraint repair below)
        self.f_p = []
        for k in range(self.n_steps):
            u = d.clamp(u=state.vec.field(k, "u"))
            w_p = fem.assemble_pcd_advection(d.prs, d.vel, u)
            self.f_p.append((d.mass_p / d.dt + w_p + d.mu * d.stiff_p).tocsr())
        self.lu_f_p = [self._factor(m, "F_p") for m in self.f_p]
        self.stiff_p_zrow = fem.bc_zero(d.stiff_p, rows=np.array([d.p_pin]))

        # magnetic wave blocks, scaled by the Alfven speed of the current iterate
        a_coefs = [d.clamp(a=state.vec.field(k, "A")) for k in range(self.n_steps)]
        self.alfven = compute_alfven_scaling(d.pot, a_coefs, d.mu0)
        d_inv = sp.diags(1.0 / d.mass_a_bc.diagonal()).tocsr()
        self.c_a = []
        for k in range(self.n_steps):
            f_a = jacobian.slabs[k].f_a
            self.c_a.append((f_a @ d_inv @ f_a + self.alfven[k] * d.stiff_a_bc0).tocsr())
        self.lu_c_a = [self._factor(m, "C_A") for m in self.c_a]
        # sub-diagonals of the wave operator; the signs follow from expanding
        # F_A D^{-1} F_A with the -M_A/dt time coupling inside F_A
        m_c = d.mass_a_coupling
        self.c_a_sub1 = [
            ((-1.0 / d.dt) * (m_c @ d_inv @ jacobian.slabs[k].f_a
                              + jacobian.slabs[k + 1].f_a @ d_inv @ m_c)).tocsr()
            for k in range(self.n_steps - 1)
        ]
        self.c_a_sub2 = ((1.0 / d.dt**2) * (m_c @ d_inv @ m_c)).tocsr()
        self._lu_f_a = None

    @staticmethod
    def _factor(matrix, name):
        try:
            return LUFactor(matrix)
        except Exception as exc:
            raise PreconditionerError(name, str(exc)) from exc

    def lu_f_a(self, k: int) -> LUFactor:
        if self._lu_f_a is None:
            self._lu_f_a = [self._factor(b.f_a, "F_A") for b in self.jac.slabs]
        return self._lu_f_a[k]

    # -- space-time single-variable solves/applies --------------------------

    def solve_velocity(self, r: np.ndarray) -> np.ndarray:
        """Sequential block forward substitution through the bidiagonal
        space-time velocity operator."""
        d = self.disc
        r = r.reshape(self.n_steps, -1)
        x = np.empty_like(r)
        x[0] = self.lu_f_u[0].solve(r[0])
        for k in range(1, self.n_steps):
            x[k] = self.lu_f_u[k].solve(r[k] + d.mass_u_dt_bc @ x[k - 1])
        return x.ravel()

    def apply_velocity(self, v: np.ndarray) -> np.ndarray:
        d = self.disc
        v = v.reshape(self.n_steps, -1)
        out = np.empty_like(v)
        for k in range(self.n_steps):
            out[k] = self.jac.slabs[k].f_u @ v[k]
            if k > 0:
                out[k] -= d.mass_u_dt_bc @ v[k - 1]
        return out.ravel()

    def apply_pressure_cd(self, v: np.ndarray) -> np.ndarray:
        """Block bidiagonal pressure convection-diffusion operator."""
        coupling = self.disc.mass_p / self.disc.dt
        v = v.reshape(self.n_steps, -1)
        out = np.empty_like(v)
        for k in range(self.n_steps):
            out[k] = self.f_p[k] @ v[k]
            if k > 0:
                out[k] -= coupling @ v[k - 1]
        return out.ravel()

    def solve_pressure_cd(self, r: np.ndarray) -> np.ndarray:
        coupling = self.disc.mass_p / self.disc.dt
        r = r.reshape(self.n_steps, -1)
        x = np.empty_like(r)
        x[0] = self.lu_f_p[0].solve(r[0])
        for k in range(1, self.n_steps):
            x[k] = self.lu_f_p[k].solve(r[k] + coupling @ x[k - 1])
        return x.ravel()

    def apply_potential(self, v: np.ndarray) -> np.ndarray:
        d = self.disc
        v = v.reshape(self.n_steps, -1)
        out = np.empty_like(v)
        for k in range(self.n_steps):
            out[k] = self.jac.slabs[k].f_a @ v[k]
            if k > 0:
                out[k] -= d.mass_a_dt_bc @ v[k - 1]
        return out.ravel()

    def solve_potential(self, r: np.ndarray) -> np.ndarray:
        d = self.disc
        r = r.reshape(self.n_steps, -1)
        x = np.empty_like(r)
        x[0] = self.lu_f_a(0).solve(r[0])
        for k in range(1, self.n_steps):
            x[k] = self.lu_f_a(k).solve(r[k] + d.mass_a_dt_bc @ x[k - 1])
        return x.ravel()

    def apply_wave(self, v: np.ndarray) -> np.ndarray:
        """Block tridiagonal wave operator C_A."""
        v = v.reshape(self.n_steps, -1)
        out = np.empty_like(v)
        for k in range(self.n_steps):
            out[k] = self.c_a[k] @ v[k]
            if k >= 1:
                out[k] += self.c_a_sub1[k - 1] @ v[k - 1]
            if k >= 2:
                out[k] += self.c_a_sub2 @ v[k - 2]
        return out.ravel()

    def solve_wave(self, r: np.ndarray) -> np.ndarray:
        """Sequential forward solve through the tridiagonal wave operator."""
        r = r.reshape(self.n_steps, -1)
        x = np.empty_like(r)
        for k in range(self.n_steps):
            rhs = r[k].copy()
            if k >= 1:
                rhs -= self.c_a_sub1[k - 1] @ x[k - 1]
            if k >= 2:
                rhs -= self.c_a_sub2 @ x[k - 2]
            x[k] = self.lu_c_a[k].solve(rhs)
        return x.ravel()

    # -- Schur complement approximations -------------------------------------

    def pressure_schur_inverse(self, r: np.ndarray) -> np.ndarray:
        """Inverse of the PCD Schur approximation -K_p F_p^{-1} M_p with the
        mean-constraint row in place of the continuity row at the pin index.

        The zero-mean part runs through per-slab pinned stiffness solves, one
        bidiagonal apply, and per-slab mass solves; the constant component of
        every slab is then chosen so the mean constraint is met exactly.
        """
        d = self.disc
        r = r.reshape(self.n_steps, -1)
        r_pin = r[:, d.p_pin].copy()
        r_hat = r.copy()
        r_hat[:, d.p_pin] = 0.0
        y = np.vstack([d.lu_stiff_p.solve(rk) for rk in r_hat])
        z = self.apply_pressure_cd(y.ravel()).reshape(self.n_steps, -1)
        x = -np.vstack([d.lu_mass_p.solve(zk) for zk in z])
        alpha = (r_pin - x @ d.p_mean_row) / d.p_mean_mass
        return (x + alpha[:, None]).ravel()

    def pressure_schur_apply(self, x: np.ndarray) -> np.ndarray:
        d = self.disc
        x = x.reshape(self.n_steps, -1)
        y = np.vstack([d.mass_p @ xk for xk in x])
        z = self.solve_pressure_cd(y.ravel()).reshape(self.n_steps, -1)
        out = -np.vstack([self.stiff_p_zrow @ zk for zk in z])
        out[:, d.p_pin] = x @ d.p_mean_row
        return out.ravel()

    def magnetic_schur_inverse(self, r: np.ndarray) -> np.ndarray:
        """C_A^{-1} F_A M_A^{-1}: per-slab mass solves, one bidiagonal apply,
        then the sequential wave solve."""
        d = self.disc
        r = r.reshape(self.n_steps, -1)
        v = np.vstack([d.lu_mass_a.solve(rk) for rk in r])
        w = self.apply_potential(v.ravel())
        return self.solve_wave(w)

    def magnetic_schur_apply(self, x: np.ndarray) -> np.ndarray:
        d = self.disc
        w = self.apply_wave(x)
        v = self.solve_potential(w).reshape(self.n_steps, -1)
        return np.vstack([d.mass_a_bc @ vk for vk in v]).ravel()

    # -- preconditioner applications ------------------------------------------

    def _fields(self, flat):
        vec = BlockVector(self.layout, self.n_steps, np.asarray(flat, dtype=float).copy())
        return tuple(
            np.vstack([vec.field(k, name) for k in range(self.n_steps)])
            for name in ("u", "p", "j", "A")
        )

    def _assemble(self, u, p, j, a):
        out = BlockVector(self.layout, self.n_steps)
        for k in range(self.n_steps):
            out.field(k, "u")[:] = u[k]
            out.field(k, "p")[:] = p[k]
            out.field(k, "j")[:] = j[k]
            out.field(k, "A")[:] = a[k]
        return out.data

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        """Apply the selected variant's inverse to a space-time residual."""
        d = self.disc
        r_u, r_p, r_j, r_a = self._fields(r)
        slabs = self.jac.slabs

        if self.variant == Variant.FULL:
            # velocity-magnetic lower factor:
            # r_A += Y F_u^{-1} (Z_j M_j^{-1} r_j - r_u)
            t = np.vstack(
                [slabs[k].z_j @ d.lu_mass_j.solve(r_j[k]) - r_u[k] for k in range(self.n_steps)]
            )
            w = self.solve_velocity(t.ravel()).reshape(self.n_steps, -1)
            r_a = r_a + np.vstack([slabs[k].y @ w[k] for k in range(self.n_steps)])

        x_a = self.magnetic_schur_inverse(r_a.ravel()).reshape(self.n_steps, -1)
        x_j = np.vstack(
            [d.lu_mass_j.solve(r_j[k] - d.mixed_ja_bc @ x_a[k]) for k in range(self.n_steps)]
        )
        t_u = np.vstack(
            [r_u[k] - slabs[k].z_j @ x_j[k] - slabs[k].z_a @ x_a[k] for k in range(self.n_steps)]
        )

        if self.variant in (Variant.FULL, Variant.SIMPLIFIED):
            # velocity-pressure lower factor: r_p -= B F_u^{-1} t_u
            w = self.solve_velocity(t_u.ravel()).reshape(self.n_steps, -1)
            r_p = r_p - np.vstack([d.div_bc @ w[k] for k in range(self.n_steps)])

        x_p = self.pressure_schur_inverse(r_p.ravel()).reshape(self.n_steps, -1)
        rhs_u = t_u - np.vstack([d.div_t_bc @ x_p[k] for k in range(self.n_steps)])
        x_u = self.solve_velocity(rhs_u.ravel()).reshape(self.n_steps, -1)
        return self._assemble(x_u, x_p, x_j, x_a)

    def apply_forward(self, x: np.ndarray) -> np.ndarray:
        """Apply the selected variant itself (round-trip tests)."""
        d = self.disc
        x_u, x_p, x_j, x_a = self._fields(x)
        slabs = self.jac.slabs

        coup = np.vstack(
            [slabs[k].z_j @ x_j[k] + slabs[k].z_a @ x_a[k] for k in range(self.n_steps)]
        )
        o_j = np.vstack(
            [d.mass_j @ x_j[k] + d.mixed_ja_bc @ x_a[k] for k in range(self.n_steps)]
        )
        o_a = self.magnetic_schur_apply(x_a.ravel()).reshape(self.n_steps, -1)

        if self.variant == Variant.TRIANGULAR:
            o_u = self.apply_velocity(x_u.ravel()).reshape(self.n_steps, -1) + coup
            o_u += np.vstack([d.div_t_bc @ x_p[k] for k in range(self.n_steps)])
            o_p = self.pressure_schur_apply(x_p.ravel()).reshape(self.n_steps, -1)
            return self._assemble(o_u, o_p, o_j, o_a)

        # velocity-pressure upper factor
        t_u = self.apply_velocity(x_u.ravel()).reshape(self.n_steps, -1)
        t_u += np.vstack([d.div_t_bc @ x_p[k] for k in range(self.n_steps)])
        o_p = self.pressure_schur_apply(x_p.ravel()).reshape(self.n_steps, -1)
        # velocity-pressure lower factor: o_p += B F_u^{-1} t_u
        w = self.solve_velocity(t_u.ravel()).reshape(self.n_steps, -1)
        o_p += np.vstack([d.div_bc @ w[k] for k in range(self.n_steps)])
        # velocity-magnetic upper factor absorbed the velocity solve factor,
        # so its velocity diagonal is the identity
        o_u = t_u + coup
        if self.variant == Variant.FULL:
            # velocity-magnetic lower factor: o_A += Y F_u^{-1}(o_u - Z_j M_j^{-1} o_j)
            t = np.vstack(
                [o_u[k] - slabs[k].z_j @ d.lu_mass_j.solve(o_j[k]) for k in range(self.n_steps)]
            )
            w = self.solve_velocity(t.ravel()).reshape(self.n_steps, -1)
            o_a = o_a + np.vstack([slabs[k].y @ w[k] for k in range(self.n_steps)])
        return self._assemble(o_u, o_p, o_j, o_a)

    # -- single time-step counterpart ------------------------------------------

    def apply_single_step_inverse(self, k: int, r_slab: np.ndarray) -> np.ndarray:
        """Back-substitution of the single-step preconditioner at slab k."""
        d = self.disc
        vec = BlockVector(self.layout, 1, np.asarray(r_slab, dtype=float).copy())
        r_u, r_p = vec.field(0, "u"), vec.field(0, "p")
        r_j, r_a = vec.field(0, "j"), vec.field(0, "A")
        x_a = self.lu_c_a[k].solve(self.jac.slabs[k].f_a @ d.lu_mass_a.solve(r_a))
        x_j = d.lu_mass_j.solve(r_j - d.mixed_ja_bc @ x_a)
        r_hat = r_p.copy()
        r_hat[d.p_pin] = 0.0
        x_p = -d.lu_mass_p.solve(self.f_p[k] @ d.lu_stiff_p.solve(r_hat))
        x_p += (r_p[d.p_pin] - x_p @ d.p_mean_row) / d.p_mean_mass
        x_u = self.lu_f_u[k].solve(
            r_u - d.div_t_bc @ x_p - self.jac.slabs[k].z_j @ x_j - self.jac.slabs[k].z_a @ x_a
        )
        out = BlockVector(self.layout, 1)
        out.field(0, "u")[:] = x_u
        out.field(0, "p")[:] = x_p
        out.field(0, "j")[:] = x_j
        out.field(0, "A")[:] = x_a
        return out.data

    def apply_single_step(self, k: int, x_slab: np.ndarray) -> np.ndarray:
        """Forward application of the single-step preconditioner at slab k."""
        d = self.disc
        vec = BlockVector(self.layout, 1, np.asarray(x_slab, dtype=float).copy())
        x_u, x_p = vec.field(0, "u"), vec.field(0, "p")
        x_j, x_a = vec.field(0, "j"), vec.field(0, "A")
        o_u = (
            self.jac.slabs[k].f_u @ x_u
            + d.div_t_bc @ x_p
            + self.jac.slabs[k].z_j @ x_j
            + self.jac.slabs[k].z_a @ x_a
        )
        o_p = -(self.stiff_p_zrow @ self.lu_f_p[k].solve(d.mass_p @ x_p))
        o_p[d.p_pin] = d.p_mean_row @ x_p
        o_j = d.mass_j @ x_j + d.mixed_ja_bc @ x_a
        o_a = d.mass_a_bc @ self.lu_f_a(k).solve(self.c_a[k] @ x_a)
        out = BlockVector(self.layout, 1)
        out.field(0, "u")[:] = o_u
        out.field(0, "p")[:] = o_p
        out.field(0, "j")[:] = o_j
        out.field(0, "A")[:] = o_a
        return out.data
