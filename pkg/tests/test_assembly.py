from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from poincare_homog.assembly import (ConstraintKind, FormPair, apply_constraints,
                                     assemble_forms, assemble_raw, dump_coo, load_coo,
                                     shifted_stiffness, stiffness)
from poincare_homog.errors import ConstraintError
from poincare_homog.geometry import (INCLUSION, MATRIX, CellGeometry, build_cell_mesh,
                                     build_macro_mesh, build_pack_mesh)
from poincare_homog.spectral import solve_gevp

DISK = CellGeometry.disk(0.25)
LAM = CellGeometry.laminate(0.5)
# frozen: (1 -/+ sqrt(1/cosh(pi))) / 2
BETA = (0.353144000519169787, 0.646855999480830213)


def dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def hermitian_error(m):
    m = dense(m)
    return np.abs(m - m.conj().T).max()


def test_region_additivity():
    mesh = build_cell_mesh(LAM, 1 / 8)
    pair = assemble_forms(mesh)
    P = pair.prolongation
    split = P.T @ (stiffness(mesh, INCLUSION) + stiffness(mesh, MATRIX)) @ P
    assert np.abs(dense(pair.A_den - split)).max() < 1e-12


def test_bloch_pair_hermitian_and_definite():
    pair = assemble_forms(build_cell_mesh(DISK, 1 / 4), (0.5, 0.5),
                          ConstraintKind.QUASI_PERIODIC)
    assert hermitian_error(pair.A_num) < 1e-12
    assert hermitian_error(pair.A_den) < 1e-12
    assert sla.eigvalsh(dense(pair.A_den)).min() > 1e-6


def test_constants_in_kernel():
    mesh = build_cell_mesh(DISK, 1 / 8)
    raw = assemble_raw(mesh)
    c = np.ones(mesh.n_nodes)
    assert abs(c @ raw.A_num @ c) < 1e-12 and abs(c @ raw.A_den @ c) < 1e-12
    pair = apply_constraints(raw)
    d = pair.deflation
    assert np.abs(pair.A_den @ d).max() < 1e-12
    # the constant spans the kernel: exactly one (near) zero eigenvalue
    w = sla.eigvalsh(dense(pair.A_den))
    assert np.sum(w < 1e-10) == 1 and w[1] > 1e-4


CASES = [
    (lambda: build_cell_mesh(DISK, 1 / 4), None, ConstraintKind.PERIODIC_QUOTIENT),
    (lambda: build_cell_mesh(DISK, 1 / 4), (0.3, 0.7), ConstraintKind.QUASI_PERIODIC),
    (lambda: build_cell_mesh(LAM, 1 / 8), (0.25, 0.0), ConstraintKind.QUASI_PERIODIC),
    (lambda: build_cell_mesh(DISK, 1 / 4), None, ConstraintKind.FREE_QUOTIENT),
    (lambda: build_macro_mesh(DISK, 2, 1 / 4), None, ConstraintKind.DIRICHLET_ZERO),
]


@pytest.mark.parametrize("make,eta,kind", CASES)
def test_hermitian_and_ordered(make, eta, kind):
    pair = assemble_forms(make(), eta, kind)
    assert hermitian_error(pair.A_num) < 1e-12 and hermitian_error(pair.A_den) < 1e-12
    w_mat = sla.eigvalsh(dense(pair.A_mat))
    w_num = sla.eigvalsh(dense(pair.A_num))
    scale = np.abs(dense(pair.A_den)).max()
    assert w_mat.min() > -1e-12 * scale and w_num.min() > -1e-12 * scale


@pytest.fixture(scope="module")
def rayleigh_pairs():
    return [assemble_forms(make(), eta, kind) for make, eta, kind in CASES]


@given(st.integers(0, len(CASES) - 1), st.integers(0, 2 ** 32 - 1))
def test_rayleigh_bounds(rayleigh_pairs, case, seed):
    pair = rayleigh_pairs[case]
    rng = np.random.default_rng(seed)
    v = rng.normal(size=pair.size) + 1j * rng.normal(size=pair.size)
    num = np.vdot(v, pair.A_num @ v)
    den = np.vdot(v, pair.A_den @ v)
    assert abs(num.imag) < 1e-10 * abs(den) and abs(den.imag) < 1e-10 * abs(den)
    assert -1e-12 * den.real <= num.real <= den.real * (1 + 1e-12)


def test_phase_factors():
    mesh = build_cell_mesh(LAM, 1 / 8)
    pair = assemble_forms(mesh, (0.25, 0.0), ConstraintKind.QUASI_PERIODIC)
    P = pair.prolongation.tocsr()
    pairs = mesh.periodic_pairs
    x_only = (pairs[:, 2] == 1) & (pairs[:, 3] == 0)
    for s, m in pairs[x_only, :2]:
        row = P[s]
        assert row.nnz == 1 and row.data[0] == pytest.approx(1j, abs=1e-15)
    # the corner reached by wrapping in both directions picks up e^{2 i pi (0.25 + 0)}
    corner = pairs[(pairs[:, 2] == 1) & (pairs[:, 3] == 1)]
    assert len(corner) == 1
    assert P[corner[0, 0]].data[0] == pytest.approx(np.exp(2j * np.pi * 0.25), abs=1e-15)
    # four wraps around the torus in x return to the identity
    assert (1j) ** 4 == 1


def test_pack_k1_reduction_matches_cell():
    a = assemble_forms(build_pack_mesh(DISK, 1, 1 / 8))
    b = assemble_forms(build_cell_mesh(DISK, 1 / 8))
    assert a.size == b.size
    assert np.abs(dense(a.A_den - b.A_den)).max() < 1e-14


def test_dirichlet_reduction_count():
    mesh = build_macro_mesh(DISK, 2, 1 / 8, "dirichlet")
    pair = assemble_forms(mesh, None, ConstraintKind.DIRICHLET_ZERO)
    assert mesh.n_nodes - pair.size == len(mesh.boundary_nodes) == len(mesh.dirichlet_nodes)


def test_permutation_invariance():
    mesh = build_cell_mesh(DISK, 1 / 8)
    perm = np.random.default_rng(3).permutation(len(mesh.triangles))
    shuffled = replace(mesh, triangles=mesh.triangles[perm], tags=mesh.tags[perm])
    for region in (INCLUSION, MATRIX, None):
        diff = stiffness(mesh, region) - stiffness(shuffled, region)
        assert np.abs(dense(diff)).max() < 1e-12


def test_coo_round_trip(tmp_path):
    pair = assemble_forms(build_cell_mesh(DISK, 1 / 4), (0.2, 0.6), ConstraintKind.QUASI_PERIODIC)
    path = tmp_path / "a.coo"
    dump_coo(pair.A_num, path)
    back = load_coo(path)
    assert back.shape == pair.A_num.shape
    assert np.abs(dense(back - pair.A_num)).max() == 0.0


def test_constraint_errors():
    cell = build_cell_mesh(DISK, 1 / 4)
    with pytest.raises(ConstraintError):
        assemble_forms(cell, (0.1, 0.2), ConstraintKind.PERIODIC_QUOTIENT)
    with pytest.raises(ConstraintError):
        assemble_forms(cell, None, ConstraintKind.QUASI_PERIODIC)
    with pytest.raises(ConstraintError):
        assemble_forms(cell, (0.0, 0.0), ConstraintKind.QUASI_PERIODIC)
    with pytest.raises(ConstraintError):
        assemble_forms(cell, None, ConstraintKind.DIRICHLET_ZERO)
    with pytest.raises(ConstraintError):
        assemble_forms(build_macro_mesh(DISK, 2, 1 / 4, "dirichlet"), None,
                       ConstraintKind.PERIODIC_QUOTIENT)


def test_unreduced_pair_rejected_by_solver():
    with pytest.raises(ValueError):
        solve_gevp(assemble_raw(build_cell_mesh(DISK, 1 / 4)))


def test_shifted_gradient_equivalence():
    """Quasi-periodic phases and the shifted-gradient form give the same Bloch spectrum."""
    eta = (0.25, 0.5)
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        mesh = build_cell_mesh(LAM, h)
        qp = solve_gevp(assemble_forms(mesh, eta, ConstraintKind.QUASI_PERIODIC), 1, 1,
                        nontrivial_only=True)
        P = assemble_forms(mesh).prolongation
        S_incl = P.T @ shifted_stiffness(mesh, eta, INCLUSION) @ P
        S_all = P.T @ shifted_stiffness(mesh, eta) @ P
        assert hermitian_error(S_all) < 1e-12
        shifted = FormPair(eta, S_incl, S_all, ConstraintKind.QUASI_PERIODIC,
                           prolongation=P, mesh=mesh, reduced=True)
        sh = solve_gevp(shifted, 1, 1, nontrivial_only=True)
        errs.append(np.abs(qp.eigenvalues - sh.eigenvalues).max())
        for res in (qp, sh):
            np.testing.assert_allclose(res.eigenvalues, BETA, atol=0.25 * h * h)
    assert errs[-1] < 1e-4
    assert errs[0] > errs[1] > errs[2]
