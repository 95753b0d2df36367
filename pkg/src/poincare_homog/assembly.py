"""P1 energy forms over mesh regions and their constrained reductions.

The unreduced forms are real symmetric stiffness matrices. Periodic,
quasi-periodic and Dirichlet constraints are applied through a sparse
prolongation ``P`` from reduced to nodal unknowns, ``A_red = P^H A P``, with
slave values ``u_slave = exp(2 i pi eta . offset) u_master``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConstraintError
from .geometry import INCLUSION, MATRIX, TriMesh


class ConstraintKind(str, Enum):
    PERIODIC_QUOTIENT = "PeriodicQuotient"
    QUASI_PERIODIC = "QuasiPeriodic"
    DIRICHLET_ZERO = "DirichletZero"
    FREE_QUOTIENT = "FreeQuotient"


@dataclass(frozen=True, eq=False)
class FormPair:
    """Numerator (inclusion) and denominator (whole domain) energy forms.

    When ``reduced`` is true the matrices act on constrained unknowns and
    ``prolongation`` maps them back to nodal values. ``deflation`` is the
    (reduced) constant vector removed by the quotient, if any.
    """

    eta: Optional[tuple[float, float]]
    A_num: sp.spmatrix
    A_den: sp.spmatrix
    constraint_kind: ConstraintKind
    deflation: Optional[np.ndarray] = None
    prolongation: Optional[sp.spmatrix] = None
    mesh: Optional[TriMesh] = None
    reduced: bool = False

    @property
    def A_mat(self) -> sp.spmatrix:
        return self.A_den - self.A_num

    @property
    def size(self) -> int:
        return self.A_den.shape[0]


def p1_gradients(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle basis gradients ``(m, 3, 2)`` and signed areas ``(m,)``."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    # gradient of barycentric coordinate k is rot90(opposite edge) / det
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    g = np.stack([e0, e1, e2], axis=1)
    grads = np.stack([-g[..., 1], g[..., 0]], axis=-1) / det[:, None, None]
    return grads, area


def _scatter(mesh: TriMesh, local: np.ndarray, mask: Optional[np.ndarray] = None) -> sp.csr_matrix:
    tris = mesh.triangles
    if mask is not None:
        tris, local = tris[mask], local[mask]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness(mesh: TriMesh, region: Optional[int] = None,
              tensor: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """Stiffness matrix ``int grad(phi_j) . (T grad(phi_i))`` over one region or all.

    ``tensor`` is an optional constant 2x2 coefficient (complex allowed).
    """
    grads, area = p1_gradients(mesh)
    if tensor is None:
        local = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    else:
        tg = np.einsum("de,tje->tjd", np.asarray(tensor), grads)
        local = np.einsum("tid,tjd->tij", grads, tg) * area[:, None, None]
    mask = None if region is None else mesh.tags == region
    return _scatter(mesh, local, mask)


def mass(mesh: TriMesh, region: Optional[int] = None) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    _, area = p1_gradients(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None]
    mask = None if region is None else mesh.tags == region
    return _scatter(mesh, local, mask)


def gradient_loads(mesh: TriMesh, region: Optional[int] = None) -> np.ndarray:
    """``b[i, v] = int_region d(phi_v)/dx_i``, shape ``(2, n_nodes)``."""
    grads, area = p1_gradients(mesh)
    mask = np.ones(len(area), bool) if region is None else mesh.tags == region
    out = np.zeros((2, mesh.n_nodes))
    for i in range(2):
        np.add.at(out[i], mesh.triangles[mask].ravel(), (grads[mask, :, i] * area[mask, None]).ravel())
    return out


def load_vector(mesh: TriMesh, values: np.ndarray) -> np.ndarray:
    """``int f phi_v`` for a nodal P1 source ``f`` (exact for P1 data)."""
    return mass(mesh) @ np.asarray(values)


def shifted_stiffness(mesh: TriMesh, eta, region: Optional[int] = None) -> sp.csr_matrix:
    """Unreduced form ``int (grad + 2 i pi eta) u . conj((grad + 2 i pi eta) v)``.

    Used with plain periodic reduction, this is the shifted-gradient
    realization of the Bloch operator, equivalent to quasi-periodic phases.
    """
    eta = np.asarray(eta, float)
    grads, area = p1_gradients(mesh)
    gg = np.einsum("tid,tjd->tij", grads, grads)
    eg = grads @ eta  # (t, 3): eta . grad(phi_k)
    # entry [i, j] pairs trial phi_j with test phi_i
    cross = 2j * np.pi * (eg[:, :, None] - eg[:, None, :]) / 3.0
    m = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = (gg + cross + 4 * np.pi ** 2 * (eta @ eta) * m[None]) * area[:, None, None]
    mask = None if region is None else mesh.tags == region
    return _scatter(mesh, local, mask)


def _prolongation(mesh: TriMesh, kind: ConstraintKind, eta) -> sp.csr_matrix:
    n = mesh.n_nodes
    if kind in (ConstraintKind.PERIODIC_QUOTIENT, ConstraintKind.QUASI_PERIODIC):
        pairs = mesh.periodic_pairs
        slave = np.zeros(n, bool)
        slave[pairs[:, 0]] = True
        free = np.flatnonzero(~slave)
        red = -np.ones(n, np.int64)
        red[free] = np.arange(len(free))
        rows = np.concatenate([free, pairs[:, 0]])
        cols = np.concatenate([red[free], red[pairs[:, 1]]])
        if kind is ConstraintKind.QUASI_PERIODIC:
            e = np.asarray(eta, float)
            phase = np.exp(2j * np.pi * mesh.length * (pairs[:, 2] * e[0] + pairs[:, 3] * e[1]))
            vals = np.concatenate([np.ones(len(free), complex), phase])
        else:
            vals = np.ones(len(rows))
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(free)))
    if kind is ConstraintKind.DIRICHLET_ZERO:
        fixed = np.zeros(n, bool)
        fixed[mesh.dirichlet_nodes] = True
        free = np.flatnonzero(~fixed)
        return sp.csr_matrix((np.ones(len(free)), (free, np.arange(len(free)))), shape=(n, len(free)))
    return sp.identity(n, format="csr")


def assemble_raw(mesh: TriMesh, eta=None,
                 constraint_kind: ConstraintKind | str = ConstraintKind.PERIODIC_QUOTIENT) -> FormPair:
    """Unreduced region forms, validated against the requested constraint."""
    kind = ConstraintKind(constraint_kind)
    if kind is ConstraintKind.QUASI_PERIODIC:
        if eta is None:
            raise ConstraintError("QuasiPeriodic requires a quasi-momentum eta")
        eta = (float(eta[0]) % 1.0, float(eta[1]) % 1.0)
        if eta == (0.0, 0.0):
            raise ConstraintError("eta = 0 must be passed as None with PeriodicQuotient")
    elif eta is not None:
        raise ConstraintError(f"eta is only meaningful for QuasiPeriodic, not {kind.value}")
    if kind in (ConstraintKind.PERIODIC_QUOTIENT, ConstraintKind.QUASI_PERIODIC) \
            and len(mesh.periodic_pairs) == 0:
        raise ConstraintError(f"{kind.value} needs a mesh with periodic pairs")
    if kind is ConstraintKind.DIRICHLET_ZERO and len(mesh.dirichlet_nodes) == 0:
        raise ConstraintError("DirichletZero needs a mesh with Dirichlet nodes")
    A_num = stiffness(mesh, INCLUSION)
    A_den = A_num + stiffness(mesh, MATRIX)
    return FormPair(eta=eta, A_num=A_num, A_den=A_den, constraint_kind=kind, mesh=mesh)


def apply_constraints(pair: FormPair) -> FormPair:
    """Eliminate slave / Dirichlet unknowns and attach the constant deflation."""
    if pair.reduced:
        return pair
    if pair.mesh is None:
        raise ConstraintError("an unreduced pair must carry its mesh")
    P = _prolongation(pair.mesh, pair.constraint_kind, pair.eta)
    PH = P.conj().T.tocsr()
    A_num = (PH @ pair.A_num @ P).tocsr()
    A_den = (PH @ pair.A_den @ P).tocsr()
    defl = None
    if pair.constraint_kind in (ConstraintKind.PERIODIC_QUOTIENT, ConstraintKind.FREE_QUOTIENT):
        defl = np.ones(P.shape[1])
    return replace(pair, A_num=A_num, A_den=A_den, deflation=defl, prolongation=P, reduced=True)


def assemble_forms(mesh: TriMesh, eta=None,
                   constraint_kind: ConstraintKind | str = ConstraintKind.PERIODIC_QUOTIENT) -> FormPair:
    """Assemble and reduce the Poincare form pair on ``mesh``."""
    return apply_constraints(assemble_raw(mesh, eta, constraint_kind))


def reduced_regions(pair: FormPair) -> tuple[np.ndarray, np.ndarray]:
    """Masks of reduced unknowns touching inclusion / matrix triangles."""
    incl, mat = pair.mesh.node_regions()
    pat = abs(pair.prolongation).T.tocsr()
    return (pat @ incl.astype(float)) > 0, (pat @ mat.astype(float)) > 0


def dump_coo(matrix: sp.spmatrix, path) -> None:
    """Write ``row col re im`` lines (0-based), one per stored entry."""
    m = sp.coo_matrix(matrix)
    vals = m.data.astype(complex)
    with open(path, "w") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row, m.col, vals):
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def load_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[1]), int(header[2]))
        data = np.loadtxt(fh, ndmin=2)
    if len(data) == 0:
        return sp.csr_matrix(shape)
    vals = data[:, 2] + 1j * data[:, 3]
    return sp.coo_matrix((vals, (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape).tocsr()
