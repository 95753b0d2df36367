import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from poincare_homog.assembly import mass, stiffness
from poincare_homog.conductivity import _dirichlet_reduction, solve_homogenized
from poincare_homog.geometry import (INCLUSION, MATRIX, CellGeometry, build_cell_mesh,
                                     build_macro_mesh)
from poincare_homog.homogenization import homogenized_tensor, solve_cell_problems
from poincare_homog.unfolding import (TwoScaleField, cell_averages, corrector_expand, cutoff,
                                      integral, interpolate_q1, macro_inner, project,
                                      sample_periodic, triangle_cell_averages, two_scale_inner,
                                      unfold)

DISK = CellGeometry.disk(0.25)
LAM = CellGeometry.laminate(0.5)


@pytest.fixture(scope="module")
def mesh2():
    return build_macro_mesh(DISK, 2, 1 / 8, "dirichlet")


def q1_l2_norm(F, N):
    """Exact L2 norm of a Q1 field by 3x3 Gauss quadrature per cell."""
    g, w = np.polynomial.legendre.leggauss(3)
    g, w = (g + 1) / 2, w / 2
    W = np.outer(w, w).ravel() / N ** 2
    total = 0.0
    for i in range(N):
        for j in range(N):
            X, Y = np.meshgrid((i + g) / N, (j + g) / N, indexing="ij")
            total += np.sum(W * np.abs(F(np.column_stack([X.ravel(), Y.ravel()]))) ** 2)
    return np.sqrt(total)


def test_unfold_constant(mesh2):
    E = unfold(np.full(mesh2.n_nodes, 3.0), mesh2)
    assert E.micro_values.shape == (4, build_cell_mesh(DISK, 1 / 8).n_nodes)
    assert np.all(E.micro_values == 3.0)
    np.testing.assert_array_equal(E.macro_index, np.arange(4))


def test_unfold_linear_field_slope(mesh2):
    # on N = 2 the unfolded x1 is (i + y1) / 2
    x = mesh2.nodes[:, 0]
    E = unfold(x, mesh2)
    y = build_cell_mesh(DISK, 1 / 8).nodes[:, 0]
    for xi in range(4):
        i = xi % 2
        np.testing.assert_allclose(E.micro_values[xi], (i + y) / 2, atol=1e-14)


def test_integral_splits_over_cells(mesh2):
    rng = np.random.default_rng(0)
    u = rng.normal(size=mesh2.n_nodes)
    avg = cell_averages(u, mesh2)
    assert integral(u, mesh2) == pytest.approx(avg.sum() / 4, abs=1e-13)
    assert integral(np.ones(mesh2.n_nodes), mesh2) == pytest.approx(1.0, abs=1e-13)


def test_cell_averages_orientation(mesh2):
    avg = cell_averages(mesh2.nodes[:, 0], mesh2)
    # [i, j] indexing: the average of x1 depends on i only
    np.testing.assert_allclose(avg[:, 0], avg[:, 1], atol=1e-14)
    assert avg[1, 0] - avg[0, 0] == pytest.approx(0.5, abs=1e-12)
    tri = triangle_cell_averages(np.ones(len(mesh2.triangles)), mesh2)
    np.testing.assert_allclose(tri, 1.0)


def test_project_of_constant(mesh2):
    n_cell = build_cell_mesh(DISK, 1 / 8).n_nodes
    phi = TwoScaleField(np.full((4, n_cell), 2.5), 2, mesh2)
    np.testing.assert_allclose(project(phi), 2.5, atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_projection_is_adjoint(mesh2, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=mesh2.n_nodes) + 1j * rng.normal(size=mesh2.n_nodes)
    phi = TwoScaleField(rng.normal(size=mesh2.cell_map.shape), 2, mesh2)
    lhs = two_scale_inner(unfold(u, mesh2), phi)
    rhs = macro_inner(u, project(phi), mesh2)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_norm_is_preserved(mesh2):
    u = np.sin(3 * mesh2.nodes[:, 0]) * np.cos(mesh2.nodes[:, 1])
    E = unfold(u, mesh2)
    assert two_scale_inner(E, E) == pytest.approx(macro_inner(u, u, mesh2), rel=1e-13)


def test_two_scale_field_validation(mesh2):
    with pytest.raises(ValueError):
        TwoScaleField(np.zeros((3, 5)), 2, mesh2)
    bad = np.zeros(mesh2.cell_map.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        TwoScaleField(bad, 2, mesh2)
    with pytest.raises(ValueError):
        unfold(np.zeros(3), mesh2)
    with pytest.raises(ValueError):
        unfold(np.zeros(mesh2.n_nodes), mesh2, N=3)
    with pytest.raises(ValueError):
        unfold(np.zeros(10), build_cell_mesh(DISK, 1 / 8))


def test_q1_reproduces_constants_and_vertices():
    F = interpolate_q1(np.full((3, 3), 1.7), 3)
    pts = np.random.default_rng(1).uniform(size=(50, 2))
    np.testing.assert_allclose(F(pts), 1.7, atol=1e-15)
    avg = np.arange(9.0).reshape(3, 3)
    G = interpolate_q1(avg.ravel(order="F"), 3)
    np.testing.assert_allclose(G(np.array([[1 / 3, 2 / 3]])), avg[1, 2])
    Z = interpolate_q1(avg, 3, extension="zero")
    assert Z(np.array([[1.0, 1.0]]))[0] == 0.0 and G(np.array([[1.0, 1.0]]))[0] == avg[2, 2]
    with pytest.raises(ValueError):
        interpolate_q1(avg, 3, extension="linear")
    with pytest.raises(ValueError):
        interpolate_q1(np.zeros((2, 3)), 3)


def test_q1_affine_approximation_first_order():
    # vertex xi/N carries the average over cell xi, so an affine field is
    # reproduced up to a shift of half a cell
    errs = []
    for N in (4, 8, 16):
        c = (np.arange(N) + 0.5) / N
        avg = 2 * c[:, None] + 3 * c[None, :]
        F = interpolate_q1(avg, N)
        pts = np.random.default_rng(2).uniform(0, 1 - 1 / N, size=(200, 2))
        errs.append(np.abs(F(pts) - (2 * pts[:, 0] + 3 * pts[:, 1])).max())
    errs = np.array(errs)
    np.testing.assert_allclose(errs, 2.5 / np.array([4, 8, 16]), rtol=1e-10)


def test_q1_stability_constant():
    rng = np.random.default_rng(3)
    worst = 0.0
    for N in (2, 3, 4):
        mesh = build_macro_mesh(DISK, N, 1 / 4, "dirichlet")
        norm = lambda u: np.sqrt(macro_inner(u, u, mesh).real)  # noqa: E731
        for _ in range(10):
            u = rng.normal(size=mesh.n_nodes) + rng.normal() * 5
            F = interpolate_q1(cell_averages(u, mesh), N)
            worst = max(worst, q1_l2_norm(F, N) / norm(u))
        corner = np.zeros(mesh.n_nodes)
        corner[mesh.cell_map[N * N - 1]] = 1.0
        F = interpolate_q1(cell_averages(corner, mesh), N)
        worst = max(worst, q1_l2_norm(F, N) / norm(corner))
    assert worst <= 1.5


def test_cutoff_profile(mesh2):
    z = cutoff(mesh2, 0.25)
    assert np.all((z >= 0) & (z <= 1))
    assert np.all(z[mesh2.boundary_nodes] == 0)
    centre = np.argmin(np.hypot(*(mesh2.nodes - 0.5).T))
    assert z[centre] == 1.0


def test_sample_periodic_aligned(mesh2):
    ref = build_cell_mesh(DISK, 1 / 8)
    psi = np.cos(2 * np.pi * ref.nodes[:, 0]) + ref.nodes[:, 1] * (1 - ref.nodes[:, 1])
    vals = sample_periodic(psi, mesh2)
    np.testing.assert_array_equal(vals[mesh2.cell_map[3]], psi)
    unfolded = unfold(vals, mesh2).micro_values
    assert np.abs(unfolded - psi[None, :]).max() == 0.0


def test_sample_periodic_misaligned_warns(mesh2):
    other = build_cell_mesh(DISK, 1 / 16)
    smooth = np.cos(2 * np.pi * other.nodes[:, 0])
    with pytest.warns(RuntimeWarning):
        vals = sample_periodic(smooth, mesh2, other)
    exact = np.cos(2 * np.pi * 2 * mesh2.nodes[:, 0])
    assert np.abs(vals - exact).max() < 0.05
    with pytest.raises(ValueError):
        sample_periodic(np.zeros(7), mesh2)


def test_corrector_zero_chi_returns_u0(mesh2):
    u0 = np.sin(np.pi * mesh2.nodes[:, 0]) * np.sin(np.pi * mesh2.nodes[:, 1])
    n_cell = build_cell_mesh(DISK, 1 / 8).n_nodes
    out = corrector_expand(u0, (np.zeros(n_cell), np.zeros(n_cell)), mesh2)
    np.testing.assert_array_equal(out, u0)


def test_corrector_keeps_boundary_values(mesh2):
    u0 = mesh2.nodes[:, 0] * (1 - mesh2.nodes[:, 0]) + mesh2.nodes[:, 1]
    chi1, chi2, _ = solve_cell_problems(DISK, 2.0, 1 / 8)
    out = corrector_expand(u0, (chi1, chi2), mesh2)
    b = mesh2.boundary_nodes
    np.testing.assert_array_equal(out[b], u0[b])
    assert np.abs(out - u0).max() > 0


def _corrector_residuals(geom, a, N, h):
    mesh = build_macro_mesh(geom, N, h, "dirichlet")
    P = _dirichlet_reduction(mesh)
    K_a = P.T @ (a * stiffness(mesh, INCLUSION) + stiffness(mesh, MATRIX)) @ P
    K = (P.T @ stiffness(mesh) @ P).tocsc()
    f = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)  # noqa: E731
    F = P.T @ (mass(mesh) @ f(*mesh.nodes.T))
    u0 = solve_homogenized(homogenized_tensor(geom, a, h), f, h, mesh=mesh)
    chi = solve_cell_problems(geom, a, h)[:2]
    out = []
    for u in (u0, corrector_expand(u0, chi, mesh)):
        r = K_a @ (P.T @ u) - F
        out.append(float(np.sqrt(r @ spla.spsolve(K, r))))
    return out


def test_corrector_residual_decreases():
    plain, corrected = zip(*[_corrector_residuals(LAM, 2.0, N, 1 / 8) for N in (2, 4, 8)])
    assert corrected[0] > corrected[1] > corrected[2]
    assert corrected[2] < 0.6 * plain[2]
