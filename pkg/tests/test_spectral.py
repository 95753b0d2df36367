import csv

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from poincare_homog.assembly import ConstraintKind, FormPair, assemble_forms
from poincare_homog.errors import GeometryError, NumericalError, SingularFormError
from poincare_homog.geometry import CellGeometry, build_cell_mesh, build_macro_mesh
from poincare_homog.spectral import (boundary_energy_fraction, cell_spectrum, dense_eigh,
                                     finite_spectrum, free_cell_bounds, pack_spectrum,
                                     solve_gevp, write_spectrum_csv)

DISK = CellGeometry.disk(0.25)
# frozen: (1 -/+ sqrt(1/cosh(pi))) / 2
BETA = (0.353144000519169787, 0.646855999480830213)
# self-oracle: free-cell bounds of DISK recomputed at h = 1/128
BOUNDS_128 = (0.49630729806314, 0.6075603073770289)


def synthetic_pair(A, B):
    return FormPair(None, sp.csr_matrix(A), sp.csr_matrix(B), ConstraintKind.DIRICHLET_ZERO,
                    reduced=True)


def random_spd(rng, n):
    G = rng.normal(size=(n, n))
    return G @ G.T + n * np.eye(n)


def test_equal_forms_give_ones():
    B = random_spd(np.random.default_rng(0), 12)
    res = solve_gevp(synthetic_pair(B, B))
    np.testing.assert_allclose(res.eigenvalues, 1.0, atol=1e-12)
    assert res.trivial_multiplicities == {0: 0, 1: 12} and len(res.nontrivial) == 0


def test_zero_numerator_gives_zeros():
    B = random_spd(np.random.default_rng(1), 9)
    res = solve_gevp(synthetic_pair(np.zeros((9, 9)), B))
    assert np.all(res.eigenvalues == 0) and res.trivial_multiplicities[0] == 9


@given(st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_dense_eigh_normalization(n, seed):
    rng = np.random.default_rng(seed)
    B = random_spd(rng, n)
    G = rng.normal(size=(n, n))
    A = 0.5 * B + 0.1 * (G + G.T)
    w, X = dense_eigh(A, B)
    np.testing.assert_allclose(X.T @ B @ X, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(A @ X, B @ X * w, atol=1e-9)


def test_singular_denominator_rejected():
    B = np.diag([1.0, 1.0, 0.0])
    with pytest.raises(SingularFormError):
        solve_gevp(synthetic_pair(np.zeros((3, 3)), B))


def test_out_of_range_eigenvalue_rejected():
    with pytest.raises(NumericalError):
        solve_gevp(synthetic_pair(2 * np.eye(3), np.eye(3)))


def test_laminate_bloch_pair_fine_mesh():
    pair = assemble_forms(build_cell_mesh(CellGeometry.laminate(0.5), 1 / 32), (0.25, 0.5),
                          ConstraintKind.QUASI_PERIODIC)
    res = solve_gevp(pair, 1, 1, nontrivial_only=True)
    np.testing.assert_allclose(res.eigenvalues, BETA, atol=1e-3)
    assert res.residuals.max() < 1e-8


def test_laminate_cell_contains_matrix_fraction():
    res = cell_spectrum(CellGeometry.laminate(0.3), 1 / 10, None)
    assert np.min(np.abs(res.nontrivial - 0.7)) < 1e-8


def test_disk_cell_values_and_accumulation():
    res = cell_spectrum(DISK, 1 / 16, None)
    w = res.nontrivial
    assert np.all((w > 0) & (w < 1))
    assert res.trivial_multiplicities[0] >= 1
    near = [int(np.sum(np.abs(cell_spectrum(DISK, 1 / 16, k).eigenvalues - 0.5) < 0.05))
            for k in (5, 10, 20)]
    assert near[0] < near[1] < near[2]


def test_cell_refinement_converges():
    # the smallest nontrivial cell eigenvalue; successive changes shrink
    vals = [cell_spectrum(DISK, h, 1).eigenvalues[0] for h in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
    d = np.abs(np.diff(vals))
    assert d[0] > d[1] > d[2]
    assert d[2] < 1e-3


def test_cell_residuals_and_normalization():
    res = cell_spectrum(DISK, 1 / 8, 3)
    assert res.residuals.max() < 1e-8
    assert np.all(np.diff(res.eigenvalues) >= 0)
    pair = assemble_forms(build_cell_mesh(DISK, 1 / 8))
    X = res.reduced_vectors
    np.testing.assert_allclose(X.conj().T @ (pair.A_den @ X), np.eye(X.shape[1]), atol=1e-10)


def test_free_bounds_regression(disk_bounds_64):
    m, M = disk_bounds_64
    assert (m, M) == pytest.approx((0.49264762174808524, 0.6074660317994169), rel=1e-9)
    assert 0 < m < M < 1
    assert abs(m - BOUNDS_128[0]) < 5e-3 and abs(M - BOUNDS_128[1]) < 1e-3


def test_free_bounds_coarse_ordering():
    m, M = free_cell_bounds(DISK, 1 / 8)
    assert 0 < m < 0.5 < M < 1


def test_free_bounds_reject_laminate():
    with pytest.raises(GeometryError):
        free_cell_bounds(CellGeometry.laminate(0.5), 1 / 8)


def test_condensed_matches_dense():
    a = finite_spectrum(DISK, 2, 1 / 8, None)
    b = finite_spectrum(DISK, 2, 1 / 8, None, method="dense")
    assert a.trivial_multiplicities == b.trivial_multiplicities
    np.testing.assert_allclose(np.sort(a.nontrivial), np.sort(b.nontrivial), atol=1e-10)


def test_trivial_one_multiplicity_counts_interior_inclusion_nodes():
    res = finite_spectrum(DISK, 2, 1 / 8, 1)
    incl, mat = res.mesh.node_regions()
    interior = incl & ~mat
    interior[res.mesh.dirichlet_nodes] = False
    assert res.trivial_multiplicities[1] == int(interior.sum())


def test_pack_k1_matches_cell():
    a = pack_spectrum(DISK, 1, 1 / 8, None).nontrivial
    b = cell_spectrum(DISK, 1 / 8, None).nontrivial
    np.testing.assert_allclose(np.sort(a), np.sort(b), atol=1e-13)


def test_boundary_energy_fraction():
    mesh = build_macro_mesh(DISK, 2, 1 / 8, "dirichlet")
    x, y = mesh.nodes.T
    width = 0.25
    smooth = np.sin(np.pi * x) * np.sin(np.pi * y)
    assert 0 < boundary_energy_fraction(smooth, mesh, width) < 1
    dist = np.minimum.reduce([x, y, 1 - x, 1 - y])
    inner = (dist > 0.35).astype(float)
    assert boundary_energy_fraction(inner, mesh, width) == 0.0
    edge = np.zeros(mesh.n_nodes)
    edge[mesh.boundary_nodes] = 1.0
    assert boundary_energy_fraction(edge, mesh, width) == pytest.approx(1.0, abs=1e-15)
    assert boundary_energy_fraction(np.ones(mesh.n_nodes), mesh, width) == 0.0


def test_spectrum_csv(tmp_path):
    res = cell_spectrum(DISK, 1 / 8, 2)
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, [res])
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["operator", "eta1", "eta2", "index", "lambda", "residual"]
    assert len(rows) == len(res.eigenvalues)
    np.testing.assert_array_equal([float(r["lambda"]) for r in rows], res.eigenvalues)


def test_unknown_method():
    with pytest.raises(ValueError):
        cell_spectrum(DISK, 1 / 8, 1, method="lanczos")
