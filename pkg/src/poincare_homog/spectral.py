"""Generalized eigenproblems of the Poincare form pair.

``solve_gevp`` is the dense reference solver: the denominator form is
Cholesky-factored and the Hermitian standard problem for
``L^-1 A_num L^-H`` is solved by ``eigh``.

The operator-level spectra use an exact algebraic reduction first. Unknowns
touching only inclusion triangles span the eigenvalue-1 space, unknowns
touching only matrix triangles span part of the eigenvalue-0 space, and
the rest of the spectrum is that of the interface Schur complements
``S_num x = lambda (S_num + S_mat) x``. Eigenvectors are lifted back by
discrete harmonic extension and their residuals are checked on the full
constrained system.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ConstraintKind, FormPair, assemble_forms, reduced_regions
from .errors import GeometryError, NumericalError, SingularFormError, SpectralSeparationError
from .geometry import CellGeometry, TriMesh, build_cell_mesh, build_macro_mesh, build_pack_mesh

TRIVIAL_TOL = 1e-6
CLAMP_TOL = 1e-8
RESIDUAL_TOL = 1e-8
_CHUNK = 256


@dataclass
class SpectrumResult:
    """Selected eigenvalues of one operator with residuals and eigenvectors.

    ``vectors[:, i]`` holds the nodal values on ``mesh`` of the eigenvector
    for ``eigenvalues[i]``, normalized by ``x^H A_den x = 1``. ``nontrivial``
    lists every nontrivial eigenvalue found (not only the selected ones).
    """

    operator_kind: str
    eigenvalues: np.ndarray
    residuals: np.ndarray
    vectors: Optional[np.ndarray]
    trivial_multiplicities: dict
    nontrivial: np.ndarray
    eta: Optional[tuple[float, float]] = None
    mesh: Optional[TriMesh] = None
    params: dict = field(default_factory=dict)
    reduced_vectors: Optional[np.ndarray] = None


def _householder_vector(c: np.ndarray) -> np.ndarray:
    """Unit ``u`` with ``(I - 2 u u^H) c`` parallel to the first basis vector.

    Columns 2.. of the reflection span the orthogonal complement of ``c``.
    """
    v = np.asarray(c) / np.linalg.norm(c)
    alpha = -np.exp(1j * np.angle(v[0])) if v[0] != 0 else -1.0
    if np.isrealobj(v):
        alpha = alpha.real
    u = v.astype(np.result_type(v.dtype, type(alpha)))
    u[0] -= alpha
    return u / np.linalg.norm(u)


def _reflect_both(A: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``H A H`` with ``H = I - 2 u u^H``, without forming ``H``."""
    Au = A @ u
    uA = u.conj() @ A
    uAu = u.conj() @ Au
    return (A - 2 * np.outer(u, uA) - 2 * np.outer(Au, u.conj())
            + 4 * uAu * np.outer(u, u.conj()))


def dense_eigh(A: np.ndarray, B: np.ndarray, deflation: Optional[np.ndarray] = None
               ) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of ``A x = lambda B x`` with ``B`` Cholesky-factored.

    With a deflation vector ``c`` the problem is restricted to the
    orthogonal complement of ``c``. Eigenvectors satisfy ``X^H B X = I``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    u = None
    if deflation is not None:
        u = _householder_vector(deflation)
        A = _reflect_both(A, u)[1:, 1:]
        B = _reflect_both(B, u)[1:, 1:]
    A = 0.5 * (A + A.conj().T)
    B = 0.5 * (B + B.conj().T)
    if A.shape[0] == 0:
        return np.zeros(0), np.zeros((len(deflation) if deflation is not None else 0, 0))
    try:
        L = sla.cholesky(B, lower=True)
    except sla.LinAlgError as exc:
        smallest = sla.eigvalsh(B, subset_by_index=[0, 0])[0]
        raise SingularFormError(
            f"denominator form is not positive definite (smallest Ritz value {smallest:.3e})"
        ) from exc
    C = sla.solve_triangular(L, A, lower=True)
    C = sla.solve_triangular(L, C.conj().T, lower=True).conj().T
    C = 0.5 * (C + C.conj().T)
    w, Y = sla.eigh(C)
    X = sla.solve_triangular(L.conj().T, Y, lower=False)
    if u is not None:
        X = np.vstack([np.zeros((1, X.shape[1]), X.dtype), X])
        X = X - 2 * np.outer(u, u.conj() @ X)
    return w, X


def _check_and_clamp(w: np.ndarray) -> np.ndarray:
    if len(w) and (w.min() < -CLAMP_TOL or w.max() > 1 + CLAMP_TOL):
        raise NumericalError(
            f"eigenvalues leave [0,1] beyond {CLAMP_TOL}: range [{w.min():.3e}, {w.max():.3e}]")
    return np.clip(w, 0.0, 1.0)


def _residuals(A_num, A_den, w, X) -> np.ndarray:
    if X.shape[1] == 0:
        return np.zeros(0)
    BX = A_den @ X
    R = A_num @ X - BX * w[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(BX, axis=0)


def _select(nvals: int, k_lo: Optional[int], k_hi: Optional[int]) -> np.ndarray:
    if k_lo is None and k_hi is None:
        return np.arange(nvals)
    lo = np.arange(min(k_lo or 0, nvals))
    hi = np.arange(max(nvals - (k_hi or 0), 0), nvals)
    return np.union1d(lo, hi)


def _trivial_masks(w: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    return w < tol, w > 1 - tol


def solve_gevp(pair: FormPair, k_lo: Optional[int] = None, k_hi: Optional[int] = None,
               nontrivial_only: bool = False, trivial_tol: float = TRIVIAL_TOL,
               operator_kind: str = "Pair") -> SpectrumResult:
    """Dense generalized eigensolve of a reduced pair.

    Returns the ``k_lo`` smallest and ``k_hi`` largest eigenvalues (all of
    them when both are None), restricted to nontrivial ones if requested.
    """
    if not pair.reduced:
        raise ValueError("solve_gevp expects a reduced pair; call apply_constraints first")
    A = pair.A_num.toarray() if sp.issparse(pair.A_num) else np.asarray(pair.A_num)
    B = pair.A_den.toarray() if sp.issparse(pair.A_den) else np.asarray(pair.A_den)
    w, X = dense_eigh(A, B, pair.deflation)
    w = _check_and_clamp(w)
    zero, one = _trivial_masks(w, trivial_tol)
    mult = {0: int(zero.sum()), 1: int(one.sum())}
    nt = ~(zero | one)
    pool = np.flatnonzero(nt) if nontrivial_only else np.arange(len(w))
    sel = pool[_select(len(pool), k_lo, k_hi)]
    Xs = X[:, sel]
    res = _residuals(pair.A_num, pair.A_den, w[sel], Xs)
    if len(res) and res.max() > RESIDUAL_TOL:
        raise NumericalError(f"eigenpair residual {res.max():.2e} exceeds {RESIDUAL_TOL}")
    vecs = pair.prolongation @ Xs if pair.prolongation is not None else Xs
    return SpectrumResult(operator_kind, w[sel], res, vecs, mult, w[nt], eta=pair.eta,
                          mesh=pair.mesh, reduced_vectors=Xs)


def _lu_solve(lu, b: np.ndarray) -> np.ndarray:
    # a real factorization applied to complex data, one part at a time
    if np.iscomplexobj(b) and lu.L.dtype.kind != "c":
        return lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    return lu.solve(b)


class Condensed:
    """Interface reduction of a constrained pair.

    ``S_num`` and ``S_den`` act on the interface unknowns ``G``; ``lift``
    performs the discrete harmonic extension into the inclusion-only
    unknowns ``I`` and matrix-only unknowns ``E``.
    """

    def __init__(self, pair: FormPair):
        if not pair.reduced:
            raise ValueError("condensation expects a reduced pair")
        self.pair = pair
        incl, mat = reduced_regions(pair)
        self.I = np.flatnonzero(incl & ~mat)
        self.E = np.flatnonzero(mat & ~incl)
        self.G = np.flatnonzero(incl & mat)
        An = pair.A_num.tocsr()
        Am = (pair.A_den - pair.A_num).tocsr()
        self._An = An
        self._Am = Am
        self.lu_I = spla.splu(An[self.I][:, self.I].tocsc()) if len(self.I) else None
        self.lu_E = spla.splu(Am[self.E][:, self.E].tocsc()) if len(self.E) else None
        self.C_IG = An[self.I][:, self.G].tocsc()
        self.C_EG = Am[self.E][:, self.G].tocsc()
        S_num = An[self.G][:, self.G].toarray()
        S_mat = Am[self.G][:, self.G].toarray()
        S_num -= self._schur(self.lu_I, self.C_IG)
        S_mat -= self._schur(self.lu_E, self.C_EG)
        self.S_num = 0.5 * (S_num + S_num.conj().T)
        self.S_mat = 0.5 * (S_mat + S_mat.conj().T)
        self.S_den = self.S_num + self.S_mat
        self.deflation = None if pair.deflation is None else pair.deflation[self.G]

    @staticmethod
    def _schur(lu, C) -> np.ndarray:
        m = C.shape[1]
        dtype = np.result_type(C.dtype, np.float64)
        out = np.zeros((m, m), dtype=complex if np.iscomplexobj(C.data) else float)
        if lu is None or m == 0:
            return out
        CH = C.conj().T.tocsr()
        for s in range(0, m, _CHUNK):
            cols = C[:, s:s + _CHUNK].toarray().astype(dtype)
            out[:, s:s + _CHUNK] = CH @ lu.solve(cols)
        return out

    def lift(self, xG: np.ndarray) -> np.ndarray:
        """Reduced-space vectors whose interface values are ``xG``."""
        xG = np.asarray(xG)
        squeeze = xG.ndim == 1
        if squeeze:
            xG = xG[:, None]
        n = self.pair.size
        dtype = np.result_type(xG.dtype, self._An.dtype)
        x = np.zeros((n, xG.shape[1]), dtype=dtype)
        x[self.G] = xG
        if self.lu_I is not None:
            x[self.I] = -_lu_solve(self.lu_I, np.asarray(self.C_IG @ xG, dtype=dtype))
        if self.lu_E is not None:
            x[self.E] = -_lu_solve(self.lu_E, np.asarray(self.C_EG @ xG, dtype=dtype))
        return x[:, 0] if squeeze else x

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """All interface eigenpairs, clamped, with ``X^H S_den X = I``."""
        w, X = dense_eigh(self.S_num, self.S_den, self.deflation)
        return _check_and_clamp(w), X


def spectrum_of_pair(pair: FormPair, k_lo: Optional[int], k_hi: Optional[int],
                     operator_kind: str, method: str = "condensed",
                     trivial_tol: float = TRIVIAL_TOL, params: Optional[dict] = None
                     ) -> SpectrumResult:
    """Nontrivial extreme eigenvalues of a reduced pair."""
    if method == "dense":
        res = solve_gevp(pair, k_lo, k_hi, nontrivial_only=True, trivial_tol=trivial_tol,
                         operator_kind=operator_kind)
        res.params = params or {}
        return res
    if method != "condensed":
        raise ValueError(f"unknown method {method!r}")
    cond = Condensed(pair)
    if len(cond.G) == 0 or (cond.deflation is not None and len(cond.G) == 1):
        w = np.zeros(0)
        XG = np.zeros((len(cond.G), 0))
    else:
        w, XG = cond.eigh()
    zero, one = _trivial_masks(w, trivial_tol)
    mult = {0: int(zero.sum()) + len(cond.E), 1: int(one.sum()) + len(cond.I)}
    nt = np.flatnonzero(~(zero | one))
    sel = nt[_select(len(nt), k_lo, k_hi)]
    X = cond.lift(XG[:, sel])
    res = _residuals(pair.A_num, pair.A_den, w[sel], X)
    if len(res) and res.max() > RESIDUAL_TOL:
        raise NumericalError(f"eigenpair residual {res.max():.2e} exceeds {RESIDUAL_TOL}")
    vecs = pair.prolongation @ X
    return SpectrumResult(operator_kind, w[sel], res, vecs, mult, w[nt], eta=pair.eta,
                          mesh=pair.mesh, params=params or {}, reduced_vectors=X)


def cell_spectrum(geom: CellGeometry, h: float, k: Optional[int] = 6,
                  method: str = "condensed") -> SpectrumResult:
    """Periodic cell operator (quotient by constants)."""
    pair = assemble_forms(build_cell_mesh(geom, h), None, ConstraintKind.PERIODIC_QUOTIENT)
    return spectrum_of_pair(pair, k, k, "Cell", method, params={"h": h})


def free_cell_bounds(geom: CellGeometry, h: float, method: str = "condensed"
                     ) -> tuple[float, float]:
    """Smallest and largest nontrivial eigenvalues of the free-cell operator.

    The cell carries natural boundary conditions (no periodic
    identification) and the quotient by constants.
    """
    if geom.kind == "laminate":
        raise GeometryError("free-cell bounds require an inclusion strictly inside the cell")
    pair = assemble_forms(build_cell_mesh(geom, h), None, ConstraintKind.FREE_QUOTIENT)
    res = spectrum_of_pair(pair, 1, 1, "FreeCell", method, params={"h": h})
    if len(res.eigenvalues) == 0:
        raise SpectralSeparationError("no nontrivial free-cell eigenvalue found; refine h")
    m, M = float(res.eigenvalues[0]), float(res.eigenvalues[-1])
    if m < 10 * TRIVIAL_TOL or M > 1 - 10 * TRIVIAL_TOL:
        raise SpectralSeparationError(
            f"bounds ({m:.3e}, {M:.3e}) too close to the trivial values; refine h")
    return m, M


def finite_spectrum(geom: CellGeometry, N: int, h: float, k: Optional[int] = 6,
                    bc: str = "dirichlet", method: str = "condensed") -> SpectrumResult:
    """Operator on ``(0,1)^2`` with ``N^2`` inclusions of size ``1/N``.

    ``bc="dirichlet"`` gives homogeneous Dirichlet conditions on the outer
    boundary, ``bc="periodic"`` the periodic quotient.
    """
    mesh = build_macro_mesh(geom, N, h, bc)
    kind = ConstraintKind.DIRICHLET_ZERO if bc.lower() == "dirichlet" \
        else ConstraintKind.PERIODIC_QUOTIENT
    pair = assemble_forms(mesh, None, kind)
    return spectrum_of_pair(pair, k, k, "Finite", method,
                            params={"N": N, "h": h, "bc": bc.lower()})


def pack_spectrum(geom: CellGeometry, K: int, h: float, k: Optional[int] = 6,
                  method: str = "condensed") -> SpectrumResult:
    """Periodic operator on a pack of ``K x K`` cells."""
    pair = assemble_forms(build_pack_mesh(geom, K, h), None, ConstraintKind.PERIODIC_QUOTIENT)
    return spectrum_of_pair(pair, k, k, "Pack", method, params={"K": K, "h": h})


def boundary_energy_fraction(vec: np.ndarray, mesh: TriMesh, width: float) -> float:
    """Share of the Dirichlet energy of a nodal field near the outer boundary.

    Triangles count as near the boundary when their centroid lies within
    ``width`` of it.
    """
    from .assembly import p1_gradients

    grads, area = p1_gradients(mesh)
    u = np.asarray(vec)[mesh.triangles]
    g = np.einsum("tk,tkd->td", u, grads)
    e = area * np.sum(np.abs(g) ** 2, axis=1)
    total = e.sum()
    # roundoff-level energy (a constant field) counts as zero
    if total <= 1e-24 * len(e) * np.abs(u).max(initial=0.0) ** 2:
        return 0.0
    cen = mesh.nodes[mesh.triangles].mean(axis=1)
    L = mesh.length
    dist = np.minimum.reduce([cen[:, 0], cen[:, 1], L - cen[:, 0], L - cen[:, 1]])
    return float(e[dist < width].sum() / total)


def write_spectrum_csv(path, results, extra: Optional[dict] = None) -> None:
    """Write ``operator,eta1,eta2,index,lambda,residual`` rows.

    ``extra`` maps additional column names to per-result value lists.
    """
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["operator", "eta1", "eta2", "index", "lambda", "residual", *extra])
        for r_i, res in enumerate(results):
            eta = res.eta or (0.0, 0.0)
            for i, (lam, rr) in enumerate(zip(res.eigenvalues, res.residuals)):
                row = [res.operator_kind, eta[0], eta[1], i, repr(float(lam)), f"{rr:.3e}"]
                row += [extra[c][r_i][i] for c in extra]
                w.writerow(row)
