"""
Lagrange spaces, assembly, boundary conditions and error norms.
"""

# external
import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import spsolve

# internal
from flexfem._core import AssemblyError, MeshError
from flexfem._fem import (
    Constraints,
    apply_constraints,
    apply_dirichlet_to_vector,
    assemble_face_terms,
    assemble_system,
    build_space,
    dirichlet_constraints,
    error_norm,
    evaluate_at_points,
    find_closest_dof,
    gauss_quadrature,
    interpolate,
    mass_matrix,
    reinit_cell,
    reinit_face,
    stiffness_matrix)
from flexfem._mesh import face_tag, generate_box


def _poisson(space, exact, forcing, n_threads=1):
    quadrature = gauss_quadrature(space.dim, space.degree + 1)
    constraints = dirichlet_constraints(space, space.mesh.tags, exact)
    return assemble_system(
        space, quadrature,
        lambda values: (values.stiffness(), values.load(forcing(values.points))),
        constraints, n_threads=n_threads)


@pytest.mark.parametrize("dim, n", [(1, 5), (2, 3), (3, 2)])
def test_quadrature_weights_sum_to_one(dim, n):
    rule = gauss_quadrature(dim, n)
    assert len(rule) == n ** dim
    assert rule.weights.sum() == pytest.approx(1.0)


def test_quadrature_exactness():
    rule = gauss_quadrature(2, 3)
    # x^5 y^4 on the unit square
    integral = (rule.points[:, 0] ** 5 * rule.points[:, 1] ** 4) @ rule.weights
    assert integral == pytest.approx(1.0 / 30.0, rel=1e-12)
    with pytest.raises(ValueError):
        gauss_quadrature(1, 6)


@pytest.mark.parametrize("dim, degree, components, n_dofs", [
    (1, 1, 1, 5),
    (1, 2, 1, 9),
    (2, 2, 2, 2 * 81),
    (3, 1, 1, 125)])
def test_dof_counts(dim, degree, components, n_dofs):
    space = build_space(generate_box(dim, 0.0, 1.0, 4), degree, components)
    assert space.n_dofs == n_dofs
    assert space.dofs_per_cell == components * (degree + 1) ** dim


def test_partition_of_unity_and_cell_volume():
    space = build_space(generate_box(2, 0.0, 2.0, 3), 2)
    values = reinit_cell(space, 4, gauss_quadrature(2, 3))
    assert values.shape_values.sum(axis=1) == pytest.approx(np.ones(9))
    assert values.shape_gradients.sum(axis=1) == pytest.approx(np.zeros((9, 2)))
    assert values.JxW.sum() == pytest.approx((2.0 / 3.0) ** 2)


def test_global_mass_integrates_the_domain():
    space = build_space(generate_box(3, -1.0, 1.0, 2), 2)
    mass = mass_matrix(space)
    ones = np.ones(space.n_dofs)
    assert ones @ mass @ ones == pytest.approx(8.0)
    lumped = mass_matrix(space, lumped=True)
    assert lumped.diagonal().sum() == pytest.approx(8.0)
    stiffness = stiffness_matrix(space)
    assert np.abs(stiffness @ ones).max() < 1e-12
    assert abs(stiffness - stiffness.T).max() < 1e-12


@pytest.mark.parametrize("dim, degree", [(1, 1), (2, 1), (2, 2), (3, 1)])
def test_linear_solutions_are_reproduced(dim, degree):
    space = build_space(generate_box(dim, 0.0, 1.0, 3), degree)

    def exact(x):
        return 1.0 + x.sum(axis=1)

    matrix, rhs = _poisson(space, exact, lambda x: np.zeros(len(x)))
    u = spsolve(matrix.tocsc(), rhs)
    assert error_norm(space, u, exact, "Linf-nodal") < 1e-10


def test_quadratic_elements_reproduce_quadratics():
    space = build_space(generate_box(2, 0.0, 1.0, 2), 2)

    def exact(x):
        return x[:, 0] ** 2 + x[:, 1] ** 2

    matrix, rhs = _poisson(space, exact, lambda x: -4.0 * np.ones(len(x)))
    u = spsolve(matrix.tocsc(), rhs)
    assert error_norm(space, u, exact, "Linf-nodal") < 1e-10
    assert error_norm(space, u, exact, "L2") < 1e-10


def test_l2_rate_for_linear_elements():
    def exact(x):
        return np.prod(np.sin(np.pi * x), axis=1)

    errors = []
    for n in (8, 16):
        space = build_space(generate_box(2, 0.0, 1.0, n), 1)
        matrix, rhs = _poisson(space, exact, lambda x: 2.0 * np.pi ** 2 * exact(x))
        errors.append(error_norm(space, spsolve(matrix.tocsc(), rhs), exact, "L2"))
    assert np.log2(errors[0] / errors[1]) == pytest.approx(2.0, abs=0.15)


def test_reference_tables_are_shared_between_equal_rules():
    space = build_space(generate_box(2, 0.0, 1.0, 4), 1)
    u = interpolate(space, lambda x: x[:, 0])
    for _ in range(5):
        error_norm(space, u, lambda x: x[:, 0], "L2")
    assert len(space._cache) == 1
    mass_matrix(space)
    mass_matrix(space)
    assert len(space._cache) <= 2


def test_threaded_assembly_matches_serial():
    space = build_space(generate_box(2, 0.0, 1.0, 6), 2)

    def exact(x):
        return np.sin(x[:, 0]) * x[:, 1]

    serial, rhs_serial = _poisson(space, exact, exact)
    threaded, rhs_threaded = _poisson(space, exact, exact, n_threads=4)
    assert abs(serial - threaded).max() <= 1e-12 * abs(serial).max()
    assert rhs_threaded == pytest.approx(rhs_serial, rel=1e-12, abs=1e-14)


def test_constraints_are_applied_symmetrically():
    matrix = sparse.csr_matrix(np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]))
    constrained, rhs = apply_constraints(matrix, np.zeros(3), Constraints({0: 1.0, 2: 3.0}))
    assert constrained.toarray().tolist() == [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]
    assert rhs.tolist() == [1.0, 4.0, 3.0]


def test_constraint_sets():
    first = Constraints({0: 1.0, 1: 2.0})
    merged = first.merge(Constraints({1: 5.0, 3: 0.5}))
    assert merged.dofs.tolist() == [0, 1, 3]
    assert merged.values.tolist() == [1.0, 5.0, 0.5]
    assert first.shifted(10).dofs.tolist() == [10, 11]
    assert first.homogeneous().values.tolist() == [0.0, 0.0]
    vector = np.zeros(4)
    apply_dirichlet_to_vector(None, merged, vector)
    assert vector.tolist() == [1.0, 5.0, 0.0, 0.5]


def test_vector_dirichlet_constraints():
    space = build_space(generate_box(2, 0.0, 1.0, 2), 1, 2)
    constraints = dirichlet_constraints(space, face_tag(0, 0), lambda x: np.stack([x[:, 1], -x[:, 1]], axis=1))
    assert len(constraints) == 6
    assert constraints[space.n_components * 6] == 1.0
    assert constraints[space.n_components * 6 + 1] == -1.0
    single = dirichlet_constraints(space, face_tag(0, 0), lambda x: x[:, 1], component=1)
    assert single.dofs.tolist() == [1, 7, 13]
    with pytest.raises(MeshError):
        dirichlet_constraints(space, 7, lambda x: x[:, 0])


def test_neumann_face_terms():
    space = build_space(generate_box(2, 0.0, 2.0, 4), 1)
    face_rule = gauss_quadrature(1, 2)
    _, rhs = assemble_face_terms(space, face_rule, face_tag(0, 1), lambda values: (None, values.load(np.ones(2))))
    assert rhs.sum() == pytest.approx(2.0)
    assert np.count_nonzero(rhs) == 5
    values = reinit_face(space, 3, face_tag(0, 1), face_rule)
    assert values.normal.tolist() == [1.0, 0.0]
    assert values.points[:, 0] == pytest.approx([2.0, 2.0])


def test_robin_face_terms_reach_the_matrix():
    space = build_space(generate_box(1, 0.0, 1.0, 4), 1)
    point = gauss_quadrature(0, 1)
    matrix, _ = assemble_system(
        space, gauss_quadrature(1, 2), lambda values: (values.stiffness(), None),
        face_terms=[(face_tag(0, 1), point, lambda values: (3.0 * values.mass(), None))])
    plain = stiffness_matrix(space)
    difference = (matrix - plain).toarray()
    assert difference[-1, -1] == pytest.approx(3.0)
    assert np.abs(difference).sum() == pytest.approx(3.0)


def test_wrong_kernel_shapes():
    space = build_space(generate_box(1, 0.0, 1.0, 2), 1)
    with pytest.raises(AssemblyError):
        assemble_system(space, gauss_quadrature(1, 2), lambda values: (np.eye(3), None))
    with pytest.raises(AssemblyError):
        assemble_system(space, gauss_quadrature(1, 2), lambda values: (None, np.ones(3)))


def test_block_assembly_offsets_the_second_space():
    mesh = generate_box(2, 0.0, 1.0, 2)
    space_u, space_v = build_space(mesh, 1), build_space(mesh, 2)
    matrix, rhs = assemble_system(
        [space_u, space_v], gauss_quadrature(2, 3),
        lambda values: (None, np.concatenate([values[0].load(np.ones(9)), values[1].load(2.0 * np.ones(9))])))
    assert matrix.shape == (space_u.n_dofs + space_v.n_dofs,) * 2
    assert rhs[:space_u.n_dofs].sum() == pytest.approx(1.0)
    assert rhs[space_u.n_dofs:].sum() == pytest.approx(2.0)
    with pytest.raises(MeshError):
        assemble_system([space_u, build_space(generate_box(2, 0.0, 1.0, 3), 1)],
                        gauss_quadrature(2, 2), lambda values: (None, None))


def test_interpolation_and_point_evaluation():
    space = build_space(generate_box(2, 0.0, 1.0, 3), 2)

    def field(x):
        return x[:, 0] ** 2 - x[:, 0] * x[:, 1]

    u = interpolate(space, field)
    points = np.array([[0.1, 0.2], [0.77, 0.5], [1.0, 1.0]])
    assert evaluate_at_points(space, u, points) == pytest.approx(field(points), abs=1e-12)
    dof, distance = find_closest_dof(space, [0.34, 0.0])
    assert space.dof_coords[dof].tolist() == pytest.approx([1.0 / 3.0, 0.0])
    assert distance == pytest.approx(0.34 - 1.0 / 3.0)


def test_h1_error_needs_the_gradient():
    space = build_space(generate_box(1, 0.0, 1.0, 4), 1)
    u = interpolate(space, lambda x: x[:, 0])
    assert error_norm(space, u, lambda x: x[:, 0], "H1-semi", gradient=lambda x: np.ones_like(x)) < 1e-12
    with pytest.raises(ValueError):
        error_norm(space, u, lambda x: x[:, 0], "H1-semi")
    with pytest.raises(ValueError):
        error_norm(space, u, lambda x: x[:, 0], "H2")
