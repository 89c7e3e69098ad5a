import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

import oracles
from stmhd import ConfigurationError, build_rect_mesh
from stmhd.fem import (
    FESpace,
    MATRIX_RULE,
    apply_bcs,
    assemble_advection_A,
    assemble_advection_u,
    advection_u_parts,
    assemble_divergence,
    assemble_edge_load,
    assemble_lorentz_blocks,
    assemble_mass,
    assemble_mixed_grad,
    assemble_pcd_advection,
    assemble_stiffness,
    basis_tables,
    bc_identity,
    constrained_dofs,
    dirichlet,
    natural,
    slip,
    triangle_rule,
)
from stmhd.mesh import Side
from stmhd.problems import by_name

RNG = np.random.default_rng(42)


def unit_square(dx=0.5):
    return build_rect_mesh(0, 1, 0, 1, dx)


# -- quadrature and local matrices ------------------------------------------


def test_rule_weights_sum_to_area():
    for n in (2, 5, 10):
        _, w = triangle_rule(n)
        assert abs(w.sum() - 0.5) < 1e-14


def test_rule_exactness_degree_eight():
    pts, w = triangle_rule(MATRIX_RULE)
    for p, q in [(8, 0), (4, 4), (0, 8), (5, 3)]:
        exact = float(oracles.integrate_reference(oracles.X**p * oracles.Y**q))
        approx = float(np.sum(w * pts[:, 0] ** p * pts[:, 1] ** q))
        assert abs(approx - exact) < 1e-15


def test_reference_p1_local_matrices():
    """Local P1 mass and stiffness on the reference triangle against both the
    closed forms and the exact symbolic oracle."""
    pts, w = triangle_rule(MATRIX_RULE)
    tab, gtab = basis_tables(1, pts)
    mass = np.einsum("iq,jq,q->ij", tab, tab, w)
    stiff = np.einsum("iqd,jqd,q->ij", gtab, gtab, w)
    assert np.allclose(mass, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0, atol=1e-15)
    assert np.allclose(stiff, np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]) / 2.0, atol=1e-14)
    assert np.allclose(mass, oracles.reference_p1_mass(), atol=1e-15)
    assert np.allclose(stiff, oracles.reference_p1_stiffness(), atol=1e-14)


def test_basis_partition_of_unity():
    pts, _ = triangle_rule(4)
    for degree in (1, 2, 3):
        tab, gtab = basis_tables(degree, pts)
        assert np.allclose(tab.sum(axis=0), 1.0, atol=1e-13)
        assert np.allclose(gtab.sum(axis=0), 0.0, atol=1e-12)


# -- constant operators -----------------------------------------------------


def test_space_dof_counts():
    mesh = build_rect_mesh(0, 3, 0, 0.5, 0.25)
    for degree in (1, 2, 3):
        space = FESpace(mesh, degree)
        assert space.dof_count == (degree * 12 + 1) * (degree * 2 + 1)
    assert FESpace(mesh, 3, components=2).dof_count == 2 * FESpace(mesh, 3).dof_count


@pytest.mark.parametrize("degree,components", [(1, 1), (2, 1), (3, 1), (3, 2)])
def test_mass_total_equals_area(degree, components):
    space = FESpace(unit_square(0.25), degree, components)
    m = assemble_mass(space)
    total = np.ones(space.dof_count) @ (m @ np.ones(space.dof_count))
    assert abs(total - components * space.mesh.area) < 1e-12


def test_mass_spd():
    space = FESpace(unit_square(0.5), 1)
    m = assemble_mass(space).toarray()
    scipy.linalg.cholesky(m)  # raises if not SPD
    assert np.allclose(m, m.T)


def test_stiffness_constant_nullspace_and_psd():
    space = FESpace(unit_square(0.25), 1)
    k = assemble_stiffness(space)
    assert np.linalg.norm(k @ np.ones(space.dof_count)) < 1e-13
    eigs = np.linalg.eigvalsh(k.toarray())
    assert eigs.min() > -1e-12


def test_divergence_of_constant_and_linear_solenoidal_fields():
    mesh = unit_square(0.25)
    vel = FESpace(mesh, 3, components=2)
    prs = FESpace(mesh, 2)
    b = assemble_divergence(vel, prs)
    const = vel.interpolate((lambda x, y: 1.3 + 0 * x, lambda x, y: -0.4 + 0 * x))
    assert np.linalg.norm(b @ const) < 1e-12
    linear = vel.interpolate((lambda x, y: x, lambda x, y: -y))
    assert np.linalg.norm(b @ linear) < 1e-12


def test_divergence_matches_dense_oracle():
    mesh = unit_square(0.5)
    vel = FESpace(mesh, 3, components=2)
    prs = FESpace(mesh, 2)
    b = assemble_divergence(vel, prs).toarray()
    assert b.shape == (prs.dof_count, vel.dof_count)
    b_exact = oracles.dense_divergence(mesh, 3, 2)
    assert np.max(np.abs(b - b_exact)) < 1e-12


def test_mixed_grad_same_space_equals_stiffness():
    space = FESpace(unit_square(0.25), 1)
    k = assemble_stiffness(space)
    kja = assemble_mixed_grad(space, space)
    assert abs(k - kja).max() < 1e-14
    assert np.linalg.norm(kja @ np.ones(space.dof_count)) < 1e-13


def test_mixed_grad_matches_dense_oracle():
    mesh = unit_square(0.5)
    space = FESpace(mesh, 1)
    kja = assemble_mixed_grad(space, space).toarray()
    assert np.max(np.abs(kja - oracles.dense_mixed_grad(mesh, 1))) < 1e-13


# -- state-dependent operators ----------------------------------------------


def test_advection_u_zero_and_constant_states():
    vel = FESpace(unit_square(0.5), 3, components=2)
    res, lin = assemble_advection_u(vel, np.zeros(vel.dof_count))
    assert np.linalg.norm(res) == 0
    assert abs(lin).max() == 0
    const = vel.interpolate((lambda x, y: 0.7 + 0 * x, lambda x, y: -0.2 + 0 * x))
    res, _ = assemble_advection_u(vel, const)
    assert np.linalg.norm(res) < 1e-13


@pytest.mark.parametrize("eps", [1e-4, 1e-6])
def test_advection_u_directional_derivative(eps):
    """The linearization is the exact derivative: quadratic residual makes the
    forward-difference error exactly O(eps)."""
    vel = FESpace(unit_square(0.25), 3, components=2)
    u = RNG.standard_normal(vel.dof_count)
    v = RNG.standard_normal(vel.dof_count)
    res0, lin = assemble_advection_u(vel, u)
    res1, _ = assemble_advection_u(vel, u + eps * v)
    err = np.linalg.norm(res1 - res0 - eps * (lin @ v)) / (eps * np.linalg.norm(lin @ v))
    assert err < 10 * eps


def test_advection_u_parts_sum():
    vel = FESpace(unit_square(0.5), 3, components=2)
    u = RNG.standard_normal(vel.dof_count)
    _, lin = assemble_advection_u(vel, u)
    _, transport, reaction = advection_u_parts(vel, u)
    assert abs(lin - (transport + reaction)).max() == 0.0


def test_lorentz_degenerate_states():
    mesh = unit_square(0.5)
    vel = FESpace(mesh, 3, components=2)
    cur = FESpace(mesh, 1)
    pot = FESpace(mesh, 1)
    a_const = pot.interpolate(lambda x, y: 2.0 + 0 * x)
    j = RNG.standard_normal(cur.dof_count)
    res, z_j, z_a = assemble_lorentz_blocks(vel, cur, pot, j, a_const)
    assert np.linalg.norm(res) < 1e-13
    assert abs(z_j).max() < 1e-14
    res, z_j, z_a = assemble_lorentz_blocks(
        vel, cur, pot, np.zeros(cur.dof_count), RNG.standard_normal(pot.dof_count)
    )
    assert np.linalg.norm(res) == 0
    assert abs(z_a).max() == 0


@pytest.mark.parametrize("n", [2, 4, 8])
def test_lorentz_bilinearity(n):
    mesh = unit_square(1.0 / n)
    vel = FESpace(mesh, 3, components=2)
    cur = FESpace(mesh, 1)
    pot = FESpace(mesh, 1)
    j = RNG.standard_normal(cur.dof_count)
    a = RNG.standard_normal(pot.dof_count)
    res, z_j, z_a = assemble_lorentz_blocks(vel, cur, pot, j, a)
    scale = np.linalg.norm(res)
    assert np.linalg.norm(z_j @ j - res) < 1e-12 * scale
    assert np.linalg.norm(z_a @ a - res) < 1e-12 * scale


@pytest.mark.parametrize("n", [2, 4, 8])
def test_advection_A_bilinearity_and_degenerate_states(n):
    mesh = unit_square(1.0 / n)
    vel = FESpace(mesh, 3, components=2)
    pot = FESpace(mesh, 1)
    u = RNG.standard_normal(vel.dof_count)
    a = RNG.standard_normal(pot.dof_count)
    res, lin_a, lin_u = assemble_advection_A(pot, vel, u, a)
    scale = np.linalg.norm(res)
    assert np.linalg.norm(lin_a @ a - res) < 1e-12 * scale
    assert np.linalg.norm(lin_u @ u - res) < 1e-12 * scale
    res0, lin_a0, _ = assemble_advection_A(pot, vel, np.zeros_like(u), a)
    assert np.linalg.norm(res0) == 0 and abs(lin_a0).max() == 0
    a_const = pot.interpolate(lambda x, y: 1.0 + 0 * x)
    res1, _, lin_u1 = assemble_advection_A(pot, vel, u, a_const)
    assert np.linalg.norm(res1) < 1e-13 and abs(lin_u1).max() < 1e-14


def test_pcd_advection_zero_velocity_and_oracle():
    mesh = unit_square(0.5)
    vel = FESpace(mesh, 3, components=2)
    prs = FESpace(mesh, 2)
    assert assemble_pcd_advection(prs, vel, np.zeros(vel.dof_count)).nnz == 0 or abs(
        assemble_pcd_advection(prs, vel, np.zeros(vel.dof_count))
    ).max() == 0
    u = RNG.standard_normal(vel.dof_count)
    w = assemble_pcd_advection(prs, vel, u).toarray()
    w_exact = oracles.dense_pcd_advection(mesh, 2, 3, u)
    assert np.max(np.abs(w - w_exact)) < 1e-12


def test_pcd_advection_skew_for_divergence_free_velocity():
    """u = curl(x^2 y^2) is divergence free and exactly representable in P3,
    so the symmetric part of the pressure advection vanishes on interior DOFs."""
    mesh = unit_square(0.25)
    vel = FESpace(mesh, 3, components=2)
    prs = FESpace(mesh, 2)
    u = vel.interpolate((lambda x, y: 2 * x**2 * y, lambda x, y: -2 * x * y**2))
    w = assemble_pcd_advection(prs, vel, u).toarray()
    sym = w + w.T
    boundary = np.unique(np.concatenate([prs.boundary_nodes[s] for s in Side]))
    interior = np.setdiff1d(np.arange(prs.dof_count), boundary)
    scale = np.abs(w).max()
    assert np.abs(sym[np.ix_(interior, interior)]).max() < 1e-12 * scale


def test_edge_load_total_and_value():
    mesh = build_rect_mesh(0, 3, 0, 0.5, 0.25)
    space = FESpace(mesh, 1)
    ones = assemble_edge_load(space, Side.TOP, lambda x, y: 1.0 + 0 * x)
    assert abs(ones.sum() - 3.0) < 1e-13
    g = assemble_edge_load(space, Side.TOP, lambda x, y: np.tanh(5 * y) + 0 * x)
    assert abs(g.sum() - 3.0 * np.tanh(2.5)) < 1e-12
    side_nodes = space.boundary_nodes[Side.TOP]
    assert np.all(np.flatnonzero(g) == np.sort(side_nodes))


# -- boundary conditions -----------------------------------------------------


def _all_sides(cond):
    return {s: cond for s in Side}


def test_apply_bcs_matches_dense_elimination():
    """Homogeneous Dirichlet Laplacian solve against the dense reduced system."""
    mesh = unit_square(0.25)
    space = FESpace(mesh, 1)
    k = assemble_stiffness(space)
    m = assemble_mass(space)
    rhs = m @ np.ones(space.dof_count)
    from stmhd.fem import BCSpec

    bcs = BCSpec(conditions={"A": _all_sides(dirichlet(lambda x, y: 0.0 * x))})
    k_bc, rhs_bc = apply_bcs(space, bcs, "A", matrix=k, rhs=rhs)
    x = np.linalg.solve(k_bc.toarray(), rhs_bc)

    idx, _ = constrained_dofs(space, bcs, "A")
    free = np.setdiff1d(np.arange(space.dof_count), idx)
    kd = k.toarray()
    x_free = np.linalg.solve(kd[np.ix_(free, free)], rhs[free])
    x_dense = np.zeros(space.dof_count)
    x_dense[free] = x_free
    assert np.linalg.norm(x - x_dense) < 1e-10 * np.linalg.norm(x_dense)


def test_slip_constrains_normal_component_only():
    mesh = unit_square(0.25)
    vel = FESpace(mesh, 3, components=2)
    from stmhd.fem import BCSpec

    bcs = BCSpec(conditions={"u": {**_all_sides(natural()), Side.TOP: slip()}})
    idx, vals = constrained_dofs(vel, bcs, "u")
    top = vel.boundary_nodes[Side.TOP]
    assert set(idx) == set(top + vel.n_nodes)  # y-components only
    assert np.all(vals == 0)
    k = assemble_stiffness(vel)
    rhs = RNG.standard_normal(vel.dof_count)
    k_bc, rhs_bc = apply_bcs(vel, bcs, "u", matrix=k, rhs=rhs)
    rows = k_bc[idx].toarray()
    expect = np.zeros((len(idx), vel.dof_count))
    expect[np.arange(len(idx)), idx] = 1.0
    assert np.array_equal(rows, expect)
    assert np.all(rhs_bc[idx] == 0)


def test_dirichlet_values_interpolate_boundary_data():
    prob = by_name("tearing_mode")
    mesh = build_rect_mesh(*prob.domain, 0.25)
    pot = FESpace(mesh, 1)
    idx, vals = constrained_dofs(pot, prob.bcs, "A")
    top = pot.boundary_nodes[Side.TOP]
    assert set(idx) == set(top)
    x = pot.node_coords[idx, 0]
    y = pot.node_coords[idx, 1]
    assert np.allclose(vals, prob.a_eq(x, y), atol=1e-15)


def test_bc_spec_validation_errors():
    from stmhd.fem import BCSpec

    mesh = unit_square(0.5)
    space = FESpace(mesh, 1)
    with pytest.raises(ConfigurationError):
        constrained_dofs(space, BCSpec(conditions={}), "A")
    missing = BCSpec(conditions={"A": {Side.TOP: natural()}})
    with pytest.raises(ConfigurationError):
        constrained_dofs(space, missing, "A")
    good = BCSpec(conditions={"A": _all_sides(natural())})
    with pytest.raises(ConfigurationError):
        constrained_dofs(space, good, "b_field")


def test_bc_identity_preserves_spd():
    mesh = unit_square(0.25)
    space = FESpace(mesh, 1)
    k = assemble_stiffness(space) + 0.1 * assemble_mass(space)
    fixed = bc_identity(k.tocsr(), space.boundary_nodes[Side.LEFT])
    scipy.linalg.cholesky(fixed.toarray())
