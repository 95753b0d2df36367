"""Cell problems, the homogenized tensor and its definiteness.

For a conductivity ``a`` inside the inclusion and 1 outside, the corrector
``chi_i`` is the mean-zero periodic solution of
``int A(y) (e_i + grad chi_i) . grad v = 0`` and
``A*_ij = int A(y) (e_i + grad chi_i) . (e_j + grad chi_j)``.
The bilinear forms are used without conjugation, so for complex ``a`` the
system and the tensor are complex symmetric.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .assembly import ConstraintKind, assemble_forms, gradient_loads, mass, reduced_regions
from .errors import CellProblemError, GeometryError
from .geometry import INCLUSION, MATRIX, CellGeometry, build_cell_mesh
from .spectral import TRIVIAL_TOL, cell_spectrum

RESIDUAL_TOL = 1e-8
DEGENERATE_TOL = 1e-8
COMPLEX_TOL = 1e-10
# corrector energies beyond this bound signal a numerically singular system
_BLOWUP = 1e10
# image of the accumulation point 1/2 of the cell spectrum under a = 1 - 1/lambda
ESSENTIAL_IMAGE = -1.0


@dataclass
class HomogenizedTensor:
    a: complex
    entries: np.ndarray
    definiteness: str
    residuals: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the real part, ascending."""
        return np.linalg.eigvalsh(np.real(0.5 * (self.entries + self.entries.T)))

    def to_dict(self) -> dict:
        A = np.asarray(self.entries, complex)
        return {
            "a_re": float(np.real(self.a)),
            "a_im": float(np.imag(self.a)),
            "A": A.real.tolist(),
            "A_im": A.imag.tolist(),
            "definiteness": self.definiteness,
            "residuals": [float(r) for r in self.residuals],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


@dataclass(frozen=True, eq=False)
class _CellSystem:
    P: sp.csr_matrix
    K_incl: sp.csr_matrix
    K_mat: sp.csr_matrix
    b_incl: np.ndarray
    b_mat: np.ndarray
    mean: np.ndarray
    mat_mask: np.ndarray
    mesh: object


@lru_cache(maxsize=16)
def _cell_system(geom: CellGeometry, h: float) -> _CellSystem:
    mesh = build_cell_mesh(geom, h)
    pair = assemble_forms(mesh, None, ConstraintKind.PERIODIC_QUOTIENT)
    P = pair.prolongation
    PT = P.T.tocsr()
    b_incl = (PT @ gradient_loads(mesh, INCLUSION).T).T
    b_mat = (PT @ gradient_loads(mesh, MATRIX).T).T
    mean = PT @ (mass(mesh) @ np.ones(mesh.n_nodes))
    _, mat_mask = reduced_regions(pair)
    return _CellSystem(P, pair.A_num.tocsr(), pair.A_mat.tocsr(), b_incl, b_mat, mean,
                       mat_mask, mesh)


def _bordered_solve(K: sp.spmatrix, c: np.ndarray, rhs: np.ndarray):
    """Solve ``K x = rhs`` with ``c . x = 0`` through a bordered system."""
    n = K.shape[0]
    B = sp.bmat([[K, sp.csr_matrix(c.reshape(-1, 1))],
                 [sp.csr_matrix(c.reshape(1, -1)), None]], format="csc")
    if np.iscomplexobj(rhs) or np.iscomplexobj(B.data):
        B = B.astype(complex)
    full = np.vstack([rhs, np.zeros((1, rhs.shape[1]))]).astype(B.dtype)
    with np.errstate(all="ignore"):
        sol = spla.splu(B).solve(full)
    return sol[:n], sol[n]


def nearest_exceptional(geom: CellGeometry, h: float, a: complex) -> tuple[float, float]:
    """Distance from ``a`` to the discrete exceptional set and its nearest value."""
    sigma = exceptional_set(geom, h, None)
    if len(sigma) == 0:
        return float("inf"), float("nan")
    d = np.abs(sigma - a)
    i = int(np.argmin(d))
    return float(d[i]), float(sigma[i])


def solve_cell_problems(geom: CellGeometry, a: complex, h: float
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean-zero periodic correctors ``chi_1``, ``chi_2`` as nodal values.

    Returns ``(chi_1, chi_2, residuals)``, where the residuals are the
    relative discrete variational residuals of the two solves. A system
    that is numerically singular for the given right-hand sides raises
    :class:`CellProblemError` with the distance to the nearest discrete
    exceptional conductivity.
    """
    a = complex(a)
    if a == 0:
        raise ValueError("conductivity a must be nonzero")
    s = _cell_system(geom, h)
    a_val = a.real if a.imag == 0 else a
    K = (a_val * s.K_incl + s.K_mat).tocsr()
    rhs = -(a_val * s.b_incl + s.b_mat).T
    X, _ = _bordered_solve(K, s.mean, rhs)
    bnorm = np.maximum(np.linalg.norm(rhs, axis=0), 1.0)
    with np.errstate(all="ignore"):
        resid = np.linalg.norm(K @ X - rhs, axis=0) / bnorm
        energy = np.abs(np.einsum("ni,ni->i", np.conj(X), (s.K_incl + s.K_mat) @ X))
    if not np.all(np.isfinite(X)) or np.any(~(resid < RESIDUAL_TOL)) \
            or np.any(energy > _BLOWUP):
        dist, near = nearest_exceptional(geom, h, a)
        raise CellProblemError(
            f"cell problem is singular at a={a} (nearest exceptional value {near:.6g}, "
            f"distance {dist:.3e})", a, dist, near)
    chi = s.P @ X
    if a.imag == 0 and not np.iscomplexobj(chi):
        chi = chi.astype(float)
    return chi[:, 0], chi[:, 1], resid


def classify(A: np.ndarray, tol: float = DEGENERATE_TOL) -> str:
    """Definiteness class of a 2x2 tensor from the eigenvalues of its real part."""
    A = np.asarray(A)
    nrm = np.linalg.norm(A, 2)
    if nrm == 0:
        return "Degenerate"
    if np.abs(np.imag(A)).max() > COMPLEX_TOL * nrm:
        return "Complex"
    w = np.linalg.eigvalsh(np.real(0.5 * (A + A.T)))
    if np.min(np.abs(w)) < tol * nrm:
        return "Degenerate"
    if np.all(w > 0):
        return "PositiveDefinite"
    if np.all(w < 0):
        return "NegativeDefinite"
    return "Indefinite"


def homogenized_tensor(geom: CellGeometry, a: complex, h: float) -> HomogenizedTensor:
    """Homogenized tensor from the energy form of the correctors."""
    a = complex(a)
    chi1, chi2, resid = solve_cell_problems(geom, a, h)
    s = _cell_system(geom, h)
    mesh = s.mesh
    chi = np.column_stack([chi1, chi2])
    area = mesh.areas
    A = np.zeros((2, 2), complex)
    from .assembly import stiffness
    for region, coeff in ((INCLUSION, a), (MATRIX, 1.0)):
        vol = area[mesh.tags == region].sum()
        b = gradient_loads(mesh, region)
        K = stiffness(mesh, region)
        A += coeff * (vol * np.eye(2) + b @ chi + (b @ chi).T + chi.T @ (K @ chi))
    if a.imag == 0:
        A = A.real
    return HomogenizedTensor(a, A, classify(A), resid, params={"h": h, **geom.to_dict()})


def exceptional_set(geom: CellGeometry, h: float, k: Optional[int] = 6) -> np.ndarray:
    """Sorted conductivities ``a = 1 - 1/lambda`` over nontrivial cell eigenvalues.

    ``k`` extreme eigenvalues are taken from each end of the spectrum
    (``None`` for all). Eigenvalues in ``(0, 1)`` map to negative ``a``; the
    accumulation point ``1/2`` corresponds to :data:`ESSENTIAL_IMAGE`, which
    is not part of the returned discrete list.
    """
    res = cell_spectrum(geom, h, k)
    lam = res.eigenvalues if k is not None else res.nontrivial
    lam = lam[(lam > TRIVIAL_TOL) & (lam < 1 - TRIVIAL_TOL)]
    return np.sort(1.0 - 1.0 / lam)


def ellipticity_form(geom: CellGeometry, h: float) -> np.ndarray:
    """Matrix ``Q`` with ``Q xi . xi = int_{Y \\ omega} |grad w(xi) + xi|^2``.

    ``w(xi)`` is the periodic flux-free solution on the matrix region,
    obtained from a Neumann solve with the inclusion removed.
    """
    if geom.kind == "laminate":
        raise GeometryError("the matrix region of a laminate does not surround the inclusion")
    s = _cell_system(geom, h)
    E = np.flatnonzero(s.mat_mask)
    K = s.K_mat[E][:, E].tocsr()
    ncomp, _ = connected_components(K, directed=False)
    if ncomp != 1:
        raise GeometryError(f"matrix region has {ncomp} components; it must be connected")
    mesh = s.mesh
    Pm = s.P.T.tocsr()
    cm = (Pm @ (mass(mesh, MATRIX) @ np.ones(mesh.n_nodes)))[E]
    rhs = -s.b_mat[:, E].T
    W, _ = _bordered_solve(K, cm, rhs)
    vol = mesh.areas[mesh.tags == MATRIX].sum()
    bW = s.b_mat[:, E] @ W
    Q = vol * np.eye(2) + bW + bW.T + W.T @ (K @ W)
    return np.real(0.5 * (Q + Q.T))


def ellipticity_lower_bound(geom: CellGeometry, h: float, directions: int = 64) -> float:
    """Minimum of the matrix-region energy over ``directions`` unit vectors."""
    if directions < 1:
        raise ValueError("need at least one direction")
    if geom.kind == "empty":
        return 1.0
    Q = ellipticity_form(geom, h)
    t = np.pi * np.arange(directions) / directions
    xi = np.column_stack([np.cos(t), np.sin(t)])
    beta = float(np.min(np.einsum("ki,ij,kj->k", xi, Q, xi)))
    if beta <= 1e-8:
        raise GeometryError(f"ellipticity bound {beta:.3e} vanishes; matrix region disconnected")
    return beta


@dataclass
class ScanRow:
    a: float
    lambda1: float
    lambda2: float
    cls: str


def definiteness_scan(geom: CellGeometry, a_values, h: float, jobs: int = 1) -> list[ScanRow]:
    """Classification of the homogenized tensor over real conductivities.

    Conductivities where the cell problem is singular are marked
    ``Skipped`` with NaN eigenvalues.
    """
    def one(a):
        a = float(a)
        try:
            T = homogenized_tensor(geom, a, h)
        except CellProblemError:
            return ScanRow(a, float("nan"), float("nan"), "Skipped")
        w = T.eigenvalues
        return ScanRow(a, float(w[0]), float(w[1]), T.definiteness)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, a_values))
    return [one(a) for a in a_values]


def write_scan_csv(path, rows: list[ScanRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "lambda1", "lambda2", "class"])
        for r in rows:
            w.writerow([repr(r.a), repr(r.lambda1), repr(r.lambda2), r.cls])
