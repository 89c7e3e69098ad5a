"""Independent dense assembly oracles based on exact symbolic integration.

Everything here is deliberately separate from the package's quadrature and
basis machinery: Lagrange bases are built with sympy rational arithmetic and
polynomials are integrated exactly over each triangle with the monomial
formula  int_T x^p y^q = p! q! / (p+q+2)!  on the reference element.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

X, Y = sp.symbols("x y")


def lattice(degree):
    return [(degree - b - c, b, c) for c in range(degree + 1) for b in range(degree + 1 - c)]


def monomials(degree):
    return [(p, q) for q in range(degree + 1) for p in range(degree + 1 - q)]


@lru_cache(maxsize=None)
def reference_basis(degree):
    """Sympy Lagrange basis on the reference triangle, lattice ordering."""
    pts = [(sp.Rational(b, degree), sp.Rational(c, degree)) for (_, b, c) in lattice(degree)]
    monos = [X**p * Y**q for (p, q) in monomials(degree)]
    vand = sp.Matrix([[m.subs({X: px, Y: py}) for m in monos] for (px, py) in pts])
    coeff = vand.inv()
    n = len(pts)
    return [
        sp.expand(sum(coeff[d, j] * monos[d] for d in range(n))) for j in range(n)
    ]


@lru_cache(maxsize=None)
def _monomial_integrals(max_degree):
    table = {}
    for p in range(max_degree + 1):
        for q in range(max_degree + 1 - p):
            table[(p, q)] = sp.Rational(
                sp.factorial(p) * sp.factorial(q), sp.factorial(p + q + 2)
            )
    return table


def integrate_reference(expr, max_degree=24):
    """Exact integral of a polynomial over the reference triangle."""
    poly = sp.Poly(sp.expand(expr), X, Y)
    table = _monomial_integrals(max_degree)
    total = sp.Integer(0)
    for (p, q), c in zip(poly.monoms(), poly.coeffs()):
        total += c * table[(p, q)]
    return total


class ElementMap:
    """Affine map of one triangle with exact rational geometry."""

    def __init__(self, verts):
        v = [[sp.nsimplify(c, rational=True) for c in row] for row in verts]
        self.v0 = sp.Matrix(v[0])
        self.jac = sp.Matrix([[v[1][0] - v[0][0], v[2][0] - v[0][0]],
                              [v[1][1] - v[0][1], v[2][1] - v[0][1]]])
        self.det = self.jac.det()
        self.jinv_t = self.jac.inv().T

    def grad(self, expr):
        ref = sp.Matrix([sp.diff(expr, X), sp.diff(expr, Y)])
        return self.jinv_t * ref

    def physical_point(self):
        return self.v0 + self.jac * sp.Matrix([X, Y])


def dense_divergence(mesh, vel_degree, prs_degree):
    """Entries -int q_m (div phi_n) dx, component-major velocity layout."""
    bv = reference_basis(vel_degree)
    bp = reference_basis(prs_degree)
    nv = (vel_degree * mesh.nx + 1) * (vel_degree * mesh.ny + 1)
    npr = (prs_degree * mesh.nx + 1) * (prs_degree * mesh.ny + 1)
    out = np.zeros((npr, 2 * nv))
    vdofs = element_dof_map(mesh, vel_degree)
    pdofs = element_dof_map(mesh, prs_degree)
    for e in range(mesh.n_triangles):
        emap = ElementMap(mesh.vertices[mesh.triangles[e]])
        for comp in range(2):
            for n, phi in enumerate(bv):
                dphi = emap.grad(phi)[comp]
                for m, q in enumerate(bp):
                    val = -integrate_reference(q * dphi) * emap.det
                    out[pdofs[e, m], comp * nv + vdofs[e, n]] += float(val)
    return out


def dense_mixed_grad(mesh, degree):
    """Entries int grad(chi_n) . grad(chi_m) dx for equal-degree spaces."""
    basis = reference_basis(degree)
    nn = (degree * mesh.nx + 1) * (degree * mesh.ny + 1)
    out = np.zeros((nn, nn))
    dofs = element_dof_map(mesh, degree)
    for e in range(mesh.n_triangles):
        emap = ElementMap(mesh.vertices[mesh.triangles[e]])
        grads = [emap.grad(b) for b in basis]
        for m in range(len(basis)):
            for n in range(len(basis)):
                val = integrate_reference(
                    grads[m][0] * grads[n][0] + grads[m][1] * grads[n][1]
                ) * emap.det
                out[dofs[e, m], dofs[e, n]] += float(val)
    return out


def dense_pcd_advection(mesh, prs_degree, vel_degree, u_coef):
    """Entries int (u . grad q_n) q_m dx with u a vector FE coefficient."""
    bp = reference_basis(prs_degree)
    bv = reference_basis(vel_degree)
    nv = (vel_degree * mesh.nx + 1) * (vel_degree * mesh.ny + 1)
    npr = (prs_degree * mesh.nx + 1) * (prs_degree * mesh.ny + 1)
    out = np.zeros((npr, npr))
    vdofs = element_dof_map(mesh, vel_degree)
    pdofs = element_dof_map(mesh, prs_degree)
    for e in range(mesh.n_triangles):
        emap = ElementMap(mesh.vertices[mesh.triangles[e]])
        ux = sum(sp.nsimplify(u_coef[vdofs[e, i]], rational=True) * bv[i]
                 for i in range(len(bv)))
        uy = sum(sp.nsimplify(u_coef[nv + vdofs[e, i]], rational=True) * bv[i]
                 for i in range(len(bv)))
        for n, qn in enumerate(bp):
            gq = emap.grad(qn)
            integrand_n = ux * gq[0] + uy * gq[1]
            for m, qm in enumerate(bp):
                val = integrate_reference(sp.expand(integrand_n * qm)) * emap.det
                out[pdofs[e, m], pdofs[e, n]] += float(val)
    return out


def element_dof_map(mesh, degree):
    """Same refined-grid DOF convention as the package, derived independently
    from barycentric lattice coordinates."""
    nxr = degree * mesh.nx + 1
    vi = mesh.triangles % (mesh.nx + 1)
    vj = mesh.triangles // (mesh.nx + 1)
    lat = np.array(lattice(degree))
    out = np.empty((mesh.n_triangles, len(lat)), dtype=int)
    for e in range(mesh.n_triangles):
        gx = degree * vi[e] @ lat.T // degree
        gy = degree * vj[e] @ lat.T // degree
        out[e] = gy * nxr + gx
    return out


def reference_p1_mass():
    basis = reference_basis(1)
    return np.array(
        [[float(integrate_reference(bi * bj)) for bj in basis] for bi in basis]
    )


def reference_p1_stiffness():
    basis = reference_basis(1)
    grads = [sp.Matrix([sp.diff(b, X), sp.diff(b, Y)]) for b in basis]
    return np.array(
        [
            [float(integrate_reference(gi.dot(gj))) for gj in grads]
            for gi in grads
        ]
    )
