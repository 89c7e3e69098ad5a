"""Lagrange finite elements and Galerkin assembly on structured triangle meshes.

Provides scalar/vector Pk spaces (k = 1..3), quadrature, the constant
operators (mass, stiffness, divergence, mixed current/potential stiffness),
the state-dependent advection and Lorentz-force blocks with their
linearizations, and Dirichlet/slip boundary-condition handling by symmetric
elimination.

Scalar degrees of freedom are the points of the refined ``(k*nx+1) x (k*ny+1)``
grid, so the DOF numbering is deterministic and the count is closed-form.
A vector DOF is ``component * n_nodes + node`` (component-major layout).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError
from .mesh import Mesh, Side

# Tensor Gauss rule collapsed onto the triangle with the Duffy map; n points
# per direction integrate every polynomial of total degree <= 2n-2 exactly.
# n=5 covers the degree-8 trilinear advection integrand of P3 velocity; the
# larger rule is used for non-polynomial load functions (equilibrium data).
MATRIX_RULE = 5
LOAD_RULE = 10


def triangle_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the reference triangle (0,0), (1,0), (0,1)."""
    x, w = leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wi, wj = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([xi.ravel(), (eta * (1.0 - xi)).ravel()])
    wts = (wi * wj * (1.0 - xi)).ravel()
    return pts, wts


def lattice(degree: int) -> list[tuple[int, int, int]]:
    """Barycentric index triples (a, b, c), a+b+c = degree, of the Pk nodes."""
    return [(degree - b - c, b, c) for c in range(degree + 1) for b in range(degree + 1 - c)]


def _monomials(degree: int) -> list[tuple[int, int]]:
    return [(p, q) for q in range(degree + 1) for p in range(degree + 1 - q)]


def _eval_monomials(exps, pts):
    x, y = pts[:, 0], pts[:, 1]
    cols_v, cols_x, cols_y = [], [], []
    for p, q in exps:
        cols_v.append(x**p * y**q)
        cols_x.append(p * x ** (p - 1) * y**q if p > 0 else np.zeros_like(x))
        cols_y.append(q * x**p * y ** (q - 1) if q > 0 else np.zeros_like(x))
    return np.column_stack(cols_v), np.column_stack(cols_x), np.column_stack(cols_y)


@lru_cache(maxsize=None)
def _basis_coefficients(degree: int) -> np.ndarray:
    nodes = np.array([(b / degree, c / degree) for (_, b, c) in lattice(degree)])
    exps = _monomials(degree)
    v, _, _ = _eval_monomials(exps, nodes)
    return np.linalg.inv(v)


def basis_tables(degree: int, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values (n_local, nq) and reference gradients (n_local, nq, 2) at pts."""
    coeff = _basis_coefficients(degree)
    mv, mx, my = _eval_monomials(_monomials(degree), pts)
    tab = (mv @ coeff).T
    gtab = np.stack([(mx @ coeff).T, (my @ coeff).T], axis=-1)
    return tab, gtab


class FESpace:
    """Scalar or 2-vector Pk Lagrange space on a structured triangle mesh."""

    def __init__(self, mesh: Mesh, degree: int, components: int = 1):
        if degree not in (1, 2, 3):
            raise ConfigurationError(f"unsupported polynomial degree {degree}")
        if components not in (1, 2):
            raise ConfigurationError(f"unsupported component count {components}")
        self.mesh = mesh
        self.degree = degree
        self.components = components

        k = degree
        self.grid_nx = k * mesh.nx
        self.grid_ny = k * mesh.ny
        self.n_nodes = (self.grid_nx + 1) * (self.grid_ny + 1)
        self.dof_count = components * self.n_nodes

        gi = np.arange(self.n_nodes) % (self.grid_nx + 1)
        gj = np.arange(self.n_nodes) // (self.grid_nx + 1)
        self.node_coords = np.column_stack(
            [mesh.x0 + gi * mesh.hx / k, mesh.y0 + gj * mesh.hy / k]
        )
        self.boundary_nodes = {
            Side.LEFT: np.flatnonzero(gi == 0),
            Side.RIGHT: np.flatnonzero(gi == self.grid_nx),
            Side.BOTTOM: np.flatnonzero(gj == 0),
            Side.TOP: np.flatnonzero(gj == self.grid_ny),
        }

        # element -> scalar node map via refined-grid coordinates
        vi, vj = mesh.vertex_grid_indices()
        tri = mesh.triangles
        vx = k * vi[tri]  # (ne, 3) refined-grid x of the three vertices
        vy = k * vj[tri]
        lat = np.array(lattice(k))  # (nloc, 3)
        nx_g = vx @ lat.T  # (ne, nloc) scaled by k
        ny_g = vy @ lat.T
        assert np.all(nx_g % k == 0) and np.all(ny_g % k == 0)
        self.elem_dofs = (ny_g // k) * (self.grid_nx + 1) + (nx_g // k)

        # affine geometry, identical treatment for both triangle orientations
        p = mesh.vertices[tri]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        self.detj = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        inv = np.empty((mesh.n_triangles, 2, 2))
        inv[:, 0, 0] = e2[:, 1]
        inv[:, 0, 1] = -e2[:, 0]
        inv[:, 1, 0] = -e1[:, 1]
        inv[:, 1, 1] = e1[:, 0]
        self.invj = inv / self.detj[:, None, None]
        self._jac = np.stack([e1, e2], axis=-1)  # (ne, 2, 2), columns e1|e2
        self._origin = p[:, 0]

        pts, wts = triangle_rule(MATRIX_RULE)
        self.qw = wts
        self.tab, gtab_ref = basis_tables(degree, pts)
        # physical gradients: grad[e, i, q, d] = sum_r gtab[i,q,r] * invj[e,r,d]
        self.grads = np.einsum("iqr,erd->eiqd", gtab_ref, self.invj)

        self._load_tables = None

    # -- helpers ---------------------------------------------------------

    def load_tables(self):
        """Tabulation at the high-order load rule (built on first use)."""
        if self._load_tables is None:
            pts, wts = triangle_rule(LOAD_RULE)
            tab, _ = basis_tables(self.degree, pts)
            xq = np.einsum("eds,qs->eqd", self._jac, pts) + self._origin[:, None, :]
            self._load_tables = (tab, wts, xq)
        return self._load_tables

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolation. Scalar spaces take fn(x, y); vector spaces a
        pair of component functions."""
        x, y = self.node_coords[:, 0], self.node_coords[:, 1]
        if self.components == 1:
            return np.asarray(fn(x, y), dtype=float) + np.zeros(self.n_nodes)
        fx, fy = fn
        out = np.empty(self.dof_count)
        out[: self.n_nodes] = np.asarray(fx(x, y), dtype=float) + np.zeros(self.n_nodes)
        out[self.n_nodes :] = np.asarray(fy(x, y), dtype=float) + np.zeros(self.n_nodes)
        return out

    def component(self, coef: np.ndarray, c: int) -> np.ndarray:
        return coef[c * self.n_nodes : (c + 1) * self.n_nodes]

    def eval_scalar(self, coef: np.ndarray):
        """Values (ne, nq) and gradients (ne, nq, 2) at the matrix rule."""
        ce = coef[self.elem_dofs]
        vals = np.einsum("ei,iq->eq", ce, self.tab)
        grads = np.einsum("ei,eiqd->eqd", ce, self.grads)
        return vals, grads

    def eval_vector(self, coef: np.ndarray):
        """Values (ne, nq, 2) and gradients (ne, nq, 2, 2); grads[..., d, c]
        is the derivative of component d along direction c."""
        vals = np.empty((self.mesh.n_triangles, len(self.qw), 2))
        grads = np.empty((self.mesh.n_triangles, len(self.qw), 2, 2))
        for d in range(2):
            ce = self.component(coef, d)[self.elem_dofs]
            vals[:, :, d] = np.einsum("ei,iq->eq", ce, self.tab)
            grads[:, :, d, :] = np.einsum("ei,eiqd->eqd", ce, self.grads)
        return vals, grads


def _scatter(space_rows: FESpace, space_cols: FESpace, rows, cols, vals) -> sp.csr_matrix:
    mat = sp.coo_matrix(
        (np.ravel(vals), (np.ravel(rows), np.ravel(cols))),
        shape=(space_rows.dof_count, space_cols.dof_count),
    )
    return mat.tocsr()


def _pairs(space_rows: FESpace, space_cols: FESpace, row_off=0, col_off=0):
    er = space_rows.elem_dofs + row_off
    ec = space_cols.elem_dofs + col_off
    rows = np.repeat(er[:, :, None], ec.shape[1], axis=2)
    cols = np.repeat(ec[:, None, :], er.shape[1], axis=1)
    return rows, cols


# -- constant operators ---------------------------------------------------


def assemble_mass(space: FESpace) -> sp.csr_matrix:
    """Galerkin mass matrix; block diagonal over components for vector spaces."""
    local = np.einsum("iq,jq,q->ij", space.tab, space.tab, space.qw)
    vals = local[None, :, :] * space.detj[:, None, None]
    rows, cols = _pairs(space, space)
    scalar = sp.coo_matrix(
        (np.ravel(np.broadcast_to(vals, rows.shape)), (rows.ravel(), cols.ravel())),
        shape=(space.n_nodes, space.n_nodes),
    ).tocsr()
    if space.components == 1:
        return scalar
    return sp.block_diag((scalar, scalar), format="csr")


def assemble_stiffness(space: FESpace) -> sp.csr_matrix:
    """Galerkin stiffness matrix (grad-grad); constants lie in its nullspace
    before boundary conditions."""
    vals = np.einsum("eiqd,ejqd,q->eij", space.grads, space.grads, space.qw)
    vals *= space.detj[:, None, None]
    rows, cols = _pairs(space, space)
    scalar = sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(space.n_nodes, space.n_nodes)
    ).tocsr()
    if space.components == 1:
        return scalar
    return sp.block_diag((scalar, scalar), format="csr")


def assemble_divergence(vel: FESpace, prs: FESpace) -> sp.csr_matrix:
    """Negative divergence operator, entries -int q_m (d_c phi_n)."""
    if vel.mesh is not prs.mesh:
        raise ConfigurationError("velocity and pressure spaces use different meshes")
    blocks = []
    for c in range(2):
        vals = -np.einsum("mq,enq,q->emn", prs.tab, space_grad_comp(vel, c), vel.qw)
        vals *= vel.detj[:, None, None]
        rows, cols = _pairs(prs, vel, col_off=c * vel.n_nodes)
        blocks.append((rows, cols, vals))
    rows = np.concatenate([np.ravel(b[0]) for b in blocks])
    cols = np.concatenate([np.ravel(b[1]) for b in blocks])
    vals = np.concatenate([np.ravel(b[2]) for b in blocks])
    return sp.coo_matrix((vals, (rows, cols)), shape=(prs.dof_count, vel.dof_count)).tocsr()


def space_grad_comp(space: FESpace, c: int) -> np.ndarray:
    """Physical derivative along direction c of every scalar basis function."""
    return space.grads[:, :, :, c]


def assemble_mixed_grad(row_space: FESpace, col_space: FESpace) -> sp.csr_matrix:
    """Mixed stiffness, entries int grad(col basis) . grad(row basis).

    With identical spaces this reduces to assemble_stiffness. Used for the
    current/vector-potential coupling.
    """
    if row_space.mesh is not col_space.mesh:
        raise ConfigurationError("mixed assembly across different meshes")
    vals = np.einsum("eiqd,ejqd,q->eij", row_space.grads, col_space.grads, row_space.qw)
    vals *= row_space.detj[:, None, None]
    rows, cols = _pairs(row_space, col_space)
    return _scatter(row_space, col_space, rows, cols, vals)


def assemble_load(space: FESpace, fn) -> np.ndarray:
    """Load vector int fn * basis using the high-order rule; fn is a scalar
    function or a pair of component functions for vector spaces."""
    tab, wts, xq = space.load_tables()
    out = np.zeros(space.dof_count)
    fns = (fn,) if space.components == 1 else tuple(fn)
    for c, f in enumerate(fns):
        fv = np.asarray(f(xq[:, :, 0], xq[:, :, 1]), dtype=float) + np.zeros(xq.shape[:2])
        loc = np.einsum("eq,iq,q->ei", fv, tab, wts) * space.detj[:, None]
        np.add.at(out, space.elem_dofs + c * space.n_nodes, loc)
    return out


def assemble_edge_load(space: FESpace, side: Side, fn) -> np.ndarray:
    """Boundary load int_side fn * basis ds for a scalar space.

    The trace of Pk on a straight side is 1D Pk Lagrange on the side's
    refined nodes, integrated segment by segment with 1D Gauss.
    """
    if space.components != 1:
        raise ConfigurationError("edge loads are implemented for scalar spaces")
    k = space.degree
    t, w = leggauss(k + 2)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    # 1D Lagrange basis on the unit-interval lattice, evaluated at t
    nodes = np.arange(k + 1) / k
    vand = np.vander(nodes, k + 1, increasing=True)
    coeff = np.linalg.inv(vand)
    tab = np.vander(t, k + 1, increasing=True) @ coeff  # (nq, k+1)

    horizontal = side in (Side.BOTTOM, Side.TOP)
    mesh = space.mesh
    length = mesh.hx if horizontal else mesh.hy
    out = np.zeros(space.dof_count)
    nodes_on_side = space.boundary_nodes[side]
    ordered = nodes_on_side[np.argsort(space.node_coords[nodes_on_side, 0 if horizontal else 1])]
    n_cells = mesh.nx if horizontal else mesh.ny
    for c in range(n_cells):
        seg = ordered[c * k : c * k + k + 1]
        x = space.node_coords[seg[0], 0] + (t * length if horizontal else 0.0)
        y = space.node_coords[seg[0], 1] + (0.0 if horizontal else t * length)
        fv = np.asarray(fn(x, y), dtype=float) + np.zeros(len(t))
        out[seg] += length * (tab.T @ (w * fv))
    return out


def domain_integral(space: FESpace, coef: np.ndarray) -> float:
    """Integral of a scalar FE field over the domain."""
    vals, _ = space.eval_scalar(coef)
    return float(np.einsum("eq,q,e->", vals, space.qw, space.detj))


def field_mean(space: FESpace, coef: np.ndarray) -> float:
    return domain_integral(space, coef) / space.mesh.area


def mean_gradient(space: FESpace, coef: np.ndarray) -> np.ndarray:
    """Domain average of the gradient of a scalar FE field."""
    _, grads = space.eval_scalar(coef)
    total = np.einsum("eqd,q,e->d", grads, space.qw, space.detj)
    return total / space.mesh.area


# -- state-dependent operators --------------------------------------------


def advection_u_parts(vel: FESpace, u_coef: np.ndarray):
    """Residual of (u.grad)u and its two Newton linearization parts.

    Returns (residual, transport, reaction): transport discretizes
    (u.grad)(*) and is block diagonal over components; reaction discretizes
    ((*).grad)u and couples the components.
    """
    uvals, ugrads = vel.eval_vector(u_coef)
    wq, det = vel.qw, vel.detj
    ne, nn = vel.mesh.n_triangles, vel.n_nodes

    conv = np.einsum("eqc,eqdc->eqd", uvals, ugrads)
    res = np.zeros(vel.dof_count)
    loc = np.einsum("eqd,iq,q->eid", conv, vel.tab, wq) * det[:, None, None]
    for d in range(2):
        np.add.at(res, vel.elem_dofs + d * nn, loc[:, :, d])

    # transport: same scalar local matrix on both diagonal component blocks
    udotg = np.einsum("eqc,ejqc->ejq", uvals, vel.grads)
    tvals = np.einsum("iq,ejq,q->eij", vel.tab, udotg, wq) * det[:, None, None]
    rows, cols = _pairs(vel, vel)
    r = np.concatenate([np.ravel(rows), np.ravel(rows + nn)])
    c = np.concatenate([np.ravel(cols), np.ravel(cols + nn)])
    v = np.concatenate([np.ravel(tvals), np.ravel(tvals)])
    transport = sp.coo_matrix((v, (r, c)), shape=(vel.dof_count, vel.dof_count)).tocsr()

    # reaction: (phi_n e_c . grad) u gives entry int phi_n (d_c u_d) phi_m
    rvals = np.einsum("iq,jq,eqdc,q->eijdc", vel.tab, vel.tab, ugrads, wq)
    rvals *= det[:, None, None, None, None]
    rs, cs, vs = [], [], []
    base_r, base_c = _pairs(vel, vel)
    for d in range(2):
        for cdir in range(2):
            rs.append(np.ravel(base_r + d * nn))
            cs.append(np.ravel(base_c + cdir * nn))
            vs.append(np.ravel(rvals[:, :, :, d, cdir]))
    reaction = sp.coo_matrix(
        (np.concatenate(vs), (np.concatenate(rs), np.concatenate(cs))),
        shape=(vel.dof_count, vel.dof_count),
    ).tocsr()
    return res, transport, reaction


def assemble_advection_u(vel: FESpace, u_coef: np.ndarray):
    """Residual of (u.grad)u and its full Newton linearization
    (transport plus reaction term)."""
    res, transport, reaction = advection_u_parts(vel, u_coef)
    return res, (transport + reaction).tocsr()


def assemble_lorentz_blocks(
    vel: FESpace, cur: FESpace, pot: FESpace, j_coef: np.ndarray, a_coef: np.ndarray
):
    """Lorentz force j*grad(A) tested against velocity, with linearizations.

    Returns (residual, block_j, block_a): block_j maps current perturbations
    (depends on A), block_a maps potential perturbations (depends on j); the
    form is bilinear, so block_j @ j == block_a @ A == residual.
    """
    jvals, _ = cur.eval_scalar(j_coef)
    _, agrads = pot.eval_scalar(a_coef)
    wq, det = vel.qw, vel.detj
    nn = vel.n_nodes

    loc = np.einsum("eq,eqd,iq,q->eid", jvals, agrads, vel.tab, wq) * det[:, None, None]
    res = np.zeros(vel.dof_count)
    for d in range(2):
        np.add.at(res, vel.elem_dofs + d * nn, loc[:, :, d])

    zj_vals = np.einsum("nq,eqd,iq,q->eind", cur.tab, agrads, vel.tab, wq)
    zj_vals *= det[:, None, None, None]
    za_vals = np.einsum("eq,enqd,iq,q->eind", jvals, pot.grads, vel.tab, wq)
    za_vals *= det[:, None, None, None]

    def build(vals, col_space):
        rs, cs, vs = [], [], []
        for d in range(2):
            rows, cols = _pairs(vel, col_space, row_off=d * nn)
            rs.append(np.ravel(rows))
            cs.append(np.ravel(cols))
            vs.append(np.ravel(vals[:, :, :, d]))
        return sp.coo_matrix(
            (np.concatenate(vs), (np.concatenate(rs), np.concatenate(cs))),
            shape=(vel.dof_count, col_space.dof_count),
        ).tocsr()

    return res, build(zj_vals, cur), build(za_vals, pot)


def assemble_advection_A(pot: FESpace, vel: FESpace, u_coef: np.ndarray, a_coef: np.ndarray):
    """Potential advection u.grad(A) tested against the potential space.

    Returns (residual, lin_a, lin_u): lin_a is the linearization in the
    potential (advection by u), lin_u the linearization in the velocity.
    """
    uvals, _ = vel.eval_vector(u_coef)
    _, agrads = pot.eval_scalar(a_coef)
    wq, det = pot.qw, pot.detj

    conv = np.einsum("eqc,eqc->eq", uvals, agrads)
    loc = np.einsum("eq,mq,q->em", conv, pot.tab, wq) * det[:, None]
    res = np.zeros(pot.dof_count)
    np.add.at(res, pot.elem_dofs, loc)

    udotg = np.einsum("eqc,enqc->enq", uvals, pot.grads)
    fa_vals = np.einsum("mq,enq,q->emn", pot.tab, udotg, wq) * det[:, None, None]
    rows, cols = _pairs(pot, pot)
    lin_a = _scatter(pot, pot, rows, cols, fa_vals)

    y_vals = np.einsum("mq,nq,eqc,q->emnc", pot.tab, vel.tab, agrads, wq)
    y_vals *= det[:, None, None, None]
    rs, cs, vs = [], [], []
    for c in range(2):
        rows, cols = _pairs(pot, vel, col_off=c * vel.n_nodes)
        rs.append(np.ravel(rows))
        cs.append(np.ravel(cols))
        vs.append(np.ravel(y_vals[:, :, :, c]))
    lin_u = sp.coo_matrix(
        (np.concatenate(vs), (np.concatenate(rs), np.concatenate(cs))),
        shape=(pot.dof_count, vel.dof_count),
    ).tocsr()
    return res, lin_a, lin_u


def assemble_pcd_advection(prs: FESpace, vel: FESpace, u_coef: np.ndarray) -> sp.csr_matrix:
    """Pressure-space advection int (u.grad q_n) q_m for the pressure
    convection-diffusion operator. No reaction analogue is added here."""
    uvals, _ = vel.eval_vector(u_coef)
    udotg = np.einsum("eqc,enqc->enq", uvals, prs.grads)
    vals = np.einsum("mq,enq,q->emn", prs.tab, udotg, prs.qw) * prs.detj[:, None, None]
    rows, cols = _pairs(prs, prs)
    return _scatter(prs, prs, rows, cols, vals)


# -- boundary conditions ---------------------------------------------------


class BCKind(Enum):
    DIRICHLET = "dirichlet"
    SLIP = "slip"
    NATURAL = "natural"


@dataclass(frozen=True)
class Condition:
    kind: BCKind
    value: Callable | None = None


def dirichlet(fn) -> Condition:
    return Condition(BCKind.DIRICHLET, fn)


def slip() -> Condition:
    return Condition(BCKind.SLIP)


def natural() -> Condition:
    return Condition(BCKind.NATURAL)


FIELDS = ("u", "p", "j", "A")

# axis-aligned sides constrain exactly one Cartesian velocity component
NORMAL_COMPONENT = {Side.LEFT: 0, Side.RIGHT: 0, Side.BOTTOM: 1, Side.TOP: 1}


@dataclass(frozen=True)
class BCSpec:
    """Per-field, per-side boundary conditions."""

    conditions: dict

    def for_field(self, field_name: str) -> dict:
        if field_name not in FIELDS:
            raise ConfigurationError(f"unknown field '{field_name}'")
        per_side = self.conditions.get(field_name)
        if per_side is None:
            raise ConfigurationError(f"no boundary conditions given for field '{field_name}'")
        for side in Side:
            if side not in per_side:
                raise ConfigurationError(f"field '{field_name}' missing condition on {side.value}")
        for side in per_side:
            if not isinstance(side, Side):
                raise ConfigurationError(f"unknown boundary tag {side!r}")
        return per_side


def constrained_dofs(space: FESpace, bcs: BCSpec, field_name: str):
    """Constrained DOF indices and their prescribed values.

    Slip constrains the normal velocity component of a side to zero and is a
    no-op for scalar fields (natural symmetry condition).
    """
    per_side = bcs.for_field(field_name)
    idx_parts, val_parts = [], []
    for side in Side:
        cond = per_side[side]
        nodes = space.boundary_nodes[side]
        if cond.kind == BCKind.NATURAL:
            continue
        if cond.kind == BCKind.SLIP:
            if space.components == 1:
                continue
            comp = NORMAL_COMPONENT[side]
            idx_parts.append(nodes + comp * space.n_nodes)
            val_parts.append(np.zeros(len(nodes)))
        elif cond.kind == BCKind.DIRICHLET:
            x = space.node_coords[nodes, 0]
            y = space.node_coords[nodes, 1]
            if space.components == 1:
                vals = np.asarray(cond.value(x, y), dtype=float) + np.zeros(len(nodes))
                idx_parts.append(nodes)
                val_parts.append(vals)
            else:
                fx, fy = cond.value
                for comp, f in enumerate((fx, fy)):
                    vals = np.asarray(f(x, y), dtype=float) + np.zeros(len(nodes))
                    idx_parts.append(nodes + comp * space.n_nodes)
                    val_parts.append(vals)
    if not idx_parts:
        return np.empty(0, dtype=np.int64), np.empty(0)
    idx = np.concatenate(idx_parts)
    vals = np.concatenate(val_parts)
    idx, first = np.unique(idx, return_index=True)
    return idx, vals[first]


def _free_mask_diag(n: int, idx: np.ndarray) -> sp.csr_matrix:
    mask = np.ones(n)
    mask[idx] = 0.0
    return sp.diags(mask).tocsr()


def eliminate(matrix: sp.csr_matrix, rhs: np.ndarray, idx: np.ndarray, values: np.ndarray):
    """Symmetric Dirichlet elimination with right-hand-side lift.

    Constrained rows and columns are zeroed, the diagonal set to one, and the
    lift ``A[:, idx] @ values`` moved to the right-hand side. Preserves
    symmetry and definiteness of the free block.
    """
    n = matrix.shape[0]
    z = _free_mask_diag(n, idx)
    g = np.zeros(n)
    g[idx] = values
    unit = sp.coo_matrix((np.ones(len(idx)), (idx, idx)), shape=(n, n)).tocsr()
    mat = (z @ matrix @ z + unit).tocsr()
    b = z @ (rhs - matrix @ g)
    b[idx] = values
    return mat, b


def bc_identity(matrix: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    """Zero constrained rows/columns and place ones on their diagonal."""
    n = matrix.shape[0]
    if len(idx) == 0:
        return matrix.tocsr()
    z = _free_mask_diag(n, idx)
    unit = sp.coo_matrix((np.ones(len(idx)), (idx, idx)), shape=(n, n)).tocsr()
    return (z @ matrix @ z + unit).tocsr()


def bc_zero(matrix: sp.csr_matrix, rows=None, cols=None) -> sp.csr_matrix:
    """Zero the given rows and/or columns of an off-diagonal coupling block."""
    out = matrix
    if rows is not None and len(rows):
        out = _free_mask_diag(out.shape[0], np.asarray(rows)) @ out
    if cols is not None and len(cols):
        out = out @ _free_mask_diag(out.shape[1], np.asarray(cols))
    return out.tocsr()


def apply_bcs(space: FESpace, bcs: BCSpec, field_name: str, matrix=None, rhs=None):
    """Apply the field's boundary conditions to a matrix and/or vector.

    With both arguments present performs full symmetric elimination with
    lift; a lone matrix gets identity rows/columns, a lone vector gets the
    prescribed values written into its constrained entries.
    """
    idx, vals = constrained_dofs(space, bcs, field_name)
    if matrix is not None and rhs is not None:
        return eliminate(matrix, rhs, idx, vals)
    if matrix is not None:
        return bc_identity(matrix, idx)
    if rhs is not None:
        out = rhs.copy()
        out[idx] = vals
        return out
    raise ConfigurationError("apply_bcs needs a matrix or a vector")
