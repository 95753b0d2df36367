"""Conductivity problems ``-div(A_eps grad u) = f`` with ``u = 0`` on the boundary.

``A_eps`` equals ``a`` (possibly negative or complex) in the inclusions and
1 elsewhere. Writing ``g`` for the Dirichlet Riesz representative of ``f``,
the problem is the resolvent equation ``(lambda I - T) u = lambda g`` with
``lambda = 1 / (1 - a)`` and ``T`` the Poincare operator of the inclusions.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ConstraintKind, FormPair, assemble_forms, mass, stiffness
from .errors import NearResonanceError, NumericalError
from .geometry import MATRIX, CellGeometry, TriMesh, build_macro_mesh
from .homogenization import HomogenizedTensor, classify, homogenized_tensor
from .spectral import Condensed

RESONANCE_TOL = 1e-6
RESIDUAL_TOL = 1e-8

Source = Union[float, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass
class SolveReport:
    a: complex
    lam: complex
    field: np.ndarray
    energy_norm: float
    residual: float
    near_resonance: float
    mesh: Optional[TriMesh] = None
    params: dict = field(default_factory=dict)


def source_values(f: Source, mesh: TriMesh) -> np.ndarray:
    """Nodal values of a source given as a constant, an array or ``f(x, y)``."""
    if callable(f):
        return np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1])) * np.ones(mesh.n_nodes)
    f = np.asarray(f)
    if f.ndim == 0:
        return np.full(mesh.n_nodes, f[()])
    if f.shape != (mesh.n_nodes,):
        raise ValueError("source array does not match the mesh")
    return f


def _pair(geom: CellGeometry, N: int, h: float, bc: str) -> FormPair:
    mesh = build_macro_mesh(geom, N, h, bc)
    kind = ConstraintKind.DIRICHLET_ZERO if bc.lower() == "dirichlet" \
        else ConstraintKind.PERIODIC_QUOTIENT
    return assemble_forms(mesh, None, kind)


def _load(pair: FormPair, f: Source, source: str) -> np.ndarray:
    """Reduced right-hand side ``int grad g . grad v`` for every reduced test ``v``."""
    mesh = pair.mesh
    vals = source_values(f, mesh)
    PH = pair.prolongation.conj().T
    if source == "density":
        F = PH @ (mass(mesh) @ vals)
    elif source == "riesz":
        F = PH @ (stiffness(mesh) @ vals)
    else:
        raise ValueError(f"source must be 'density' or 'riesz', got {source!r}")
    if pair.deflation is not None:
        # periodic problems need a compatible (mean-free) load
        F = F - pair.deflation * (pair.deflation @ F) / (pair.deflation @ pair.deflation)
    return F


def spectral_distance(pair: FormPair, lam: complex) -> float:
    """Distance from ``lam`` to the spectrum of the reduced pair.

    Uses that the spectrum lies in ``[0, 1]`` and contains both endpoints,
    and a shift-invert Lanczos step for interior real parts.
    """
    if not np.isfinite(lam):
        return math.inf
    x = lam.real
    if x <= 0.0:
        return abs(lam)
    if x >= 1.0:
        return abs(lam - 1.0)
    if pair.deflation is not None:
        w = full_spectrum(pair)[0]
        return float(np.min(np.abs(w - lam)))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mu = spla.eigsh(pair.A_num.tocsc(), k=1, M=pair.A_den.tocsc(), sigma=x,
                            which="LM", return_eigenvectors=False)
    except (RuntimeError, spla.ArpackError):
        return abs(lam.imag)
    dist = float(np.min(np.abs(mu - lam)))
    return min(dist, abs(lam), abs(lam - 1.0))


def full_spectrum(pair: FormPair) -> tuple[np.ndarray, np.ndarray, Condensed]:
    """Every interface eigenpair of the condensed pair (trivial ones included)."""
    cond = Condensed(pair)
    w, XG = cond.eigh()
    return w, XG, cond


def spectral_resolvent(pair: FormPair, g: np.ndarray, lam: complex) -> np.ndarray:
    """``lam (lam I - T)^-1 g`` from the complete eigendecomposition of ``T``.

    The reduced space splits, orthogonally for the denominator form, into
    inclusion-only unknowns (eigenvalue 1), matrix-only unknowns
    (eigenvalue 0) and discrete harmonic extensions of interface values,
    which are expanded in the interface eigenvectors.
    """
    if pair.deflation is not None:
        raise ValueError("the spectral resolvent is implemented for Dirichlet pairs")
    w, XG, cond = full_spectrum(pair)
    gG = g[cond.G]
    rest = g - cond.lift(gG)
    coef = XG.conj().T @ (cond.S_den @ gG)
    uG = XG @ (lam / (lam - w) * coef)
    u = cond.lift(uG).astype(complex)
    u[cond.I] += lam / (lam - 1.0) * rest[cond.I]
    u[cond.E] += rest[cond.E]
    return u


def solve_source(geom: CellGeometry, N: int, a: complex, f: Source, h: float,
                 bc: str = "dirichlet", source: str = "density",
                 check_resonance: bool = True, cross_check: bool = False) -> SolveReport:
    """Direct solve of the conductivity problem on the ``N x N`` inclusion array.

    ``source="density"`` reads ``f`` as an ``L^2`` density and
    ``source="riesz"`` as the representative ``g`` itself. With
    ``cross_check`` the solution is compared with the spectral resolvent
    and the relative energy-norm difference is stored in ``params``.
    """
    a = complex(a)
    if a == 0:
        raise ValueError("conductivity a must be nonzero")
    pair = _pair(geom, N, h, bc)
    lam = complex(math.inf) if a == 1 else 1.0 / (1.0 - a)
    dist = spectral_distance(pair, lam) if check_resonance else math.nan
    if check_resonance and dist < RESONANCE_TOL:
        raise NearResonanceError(
            f"lambda={lam:.6g} lies {dist:.2e} from the spectrum (a={a})", lam, dist)
    F = _load(pair, f, source)
    a_val = a.real if a.imag == 0 else a
    K = (a_val * pair.A_num + pair.A_mat).tocsc()
    if pair.deflation is not None:
        c = pair.deflation.reshape(-1, 1)
        K = sp.bmat([[K, sp.csc_matrix(c)], [sp.csc_matrix(c.T), None]], format="csc")
        F_full = np.append(F, 0.0)
    else:
        F_full = F
    if np.iscomplexobj(K.data) or np.iscomplexobj(F_full):
        K = K.astype(complex)
    try:
        sol = spla.splu(K).solve(np.asarray(F_full, dtype=K.dtype))
    except RuntimeError as exc:
        raise NearResonanceError(f"singular system at a={a}: {exc}", lam, 0.0) from exc
    u = sol[:pair.size]
    Kr = a_val * pair.A_num + pair.A_mat
    fn = np.linalg.norm(F)
    residual = float(np.linalg.norm(Kr @ u - F) / fn) if fn > 0 else float(np.linalg.norm(Kr @ u))
    if not residual < RESIDUAL_TOL:
        raise NumericalError(f"solve residual {residual:.2e} exceeds {RESIDUAL_TOL}")
    energy = math.sqrt(max(np.real(np.vdot(u, pair.A_den @ u)), 0.0))
    params = {"N": N, "h": h, "bc": bc}
    if cross_check:
        g = spla.spsolve(pair.A_den.tocsc(), F)
        us = spectral_resolvent(pair, g, lam)
        d = us - u
        params["resolvent_difference"] = math.sqrt(max(np.real(np.vdot(d, pair.A_den @ d)), 0)) \
            / max(energy, np.finfo(float).tiny)
    field_vals = pair.prolongation @ u
    if a.imag == 0 and not np.iscomplexobj(F):
        field_vals = np.real(field_vals)
    return SolveReport(a, lam, field_vals, energy, residual, dist, pair.mesh, params)


def _dirichlet_reduction(mesh: TriMesh) -> sp.csr_matrix:
    fixed = np.zeros(mesh.n_nodes, bool)
    fixed[mesh.dirichlet_nodes] = True
    free = np.flatnonzero(~fixed)
    return sp.csr_matrix((np.ones(len(free)), (free, np.arange(len(free)))),
                         shape=(mesh.n_nodes, len(free)))


def solve_homogenized(tensor: HomogenizedTensor | np.ndarray, f: Source, h: float,
                      mesh: Optional[TriMesh] = None) -> np.ndarray:
    """P1 Dirichlet solve of ``-div(A* grad u) = f`` on ``(0,1)^2``.

    ``mesh`` defaults to a uniform grid of size ``h``. Indefinite tensors
    are attempted with a warning; degenerate ones are refused.
    """
    if isinstance(tensor, HomogenizedTensor):
        A, cls = tensor.entries, tensor.definiteness
    else:
        A = np.asarray(tensor)
        cls = classify(A)
    if cls == "Degenerate":
        raise NumericalError("homogenized tensor is degenerate")
    if cls == "Indefinite":
        warnings.warn("indefinite homogenized tensor; the direct solve may fail",
                      RuntimeWarning, stacklevel=2)
    if mesh is None:
        mesh = build_macro_mesh(CellGeometry.empty(), 1, h, "dirichlet")
    P = _dirichlet_reduction(mesh)
    K = (P.T @ stiffness(mesh, tensor=A) @ P).tocsc()
    F = P.T @ (mass(mesh) @ source_values(f, mesh))
    if np.iscomplexobj(K.data):
        F = F.astype(complex)
    try:
        u = spla.splu(K).solve(F)
    except RuntimeError as exc:
        raise NumericalError(f"homogenized solve failed: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise NumericalError("homogenized solve produced non-finite values")
    return P @ u


def infinite_prolongation(mesh: TriMesh) -> sp.csr_matrix:
    """Map from reduced unknowns to nodal values, one constant per inclusion.

    Components touching the Dirichlet boundary are fixed at 0.
    """
    n = mesh.n_nodes
    col = -np.ones(n, np.int64)
    fixed = np.zeros(n, bool)
    fixed[mesh.dirichlet_nodes] = True
    ncols = 0
    for comp in mesh.inclusion_components():
        if fixed[comp].any():
            fixed[comp] = True
            continue
        col[comp] = ncols
        ncols += 1
    rest = np.flatnonzero((col < 0) & ~fixed)
    col[rest] = ncols + np.arange(len(rest))
    ncols += len(rest)
    rows = np.flatnonzero(col >= 0)
    return sp.csr_matrix((np.ones(len(rows)), (rows, col[rows])), shape=(n, ncols))


def solve_infinite(geom: CellGeometry, N: int, f: Source, h: float,
                   source: str = "density") -> np.ndarray:
    """Infinite-conductivity limit: the projection of ``g`` onto the kernel of ``T``."""
    mesh = build_macro_mesh(geom, N, h, "dirichlet")
    return infinite_solve_on(mesh, f, source)


def infinite_solve_on(mesh: TriMesh, f: Source, source: str = "density") -> np.ndarray:
    Q = infinite_prolongation(mesh)
    vals = source_values(f, mesh)
    if source == "density":
        F = Q.T @ (mass(mesh) @ vals)
    elif source == "riesz":
        F = Q.T @ (stiffness(mesh) @ vals)
    else:
        raise ValueError(f"source must be 'density' or 'riesz', got {source!r}")
    K = (Q.T @ stiffness(mesh, MATRIX) @ Q).tocsc()
    return Q @ spla.splu(K).solve(F)


def h1_norm(u: np.ndarray, mesh: TriMesh) -> float:
    """Full ``H^1`` norm of a nodal field."""
    K = stiffness(mesh) + mass(mesh)
    return math.sqrt(max(np.real(np.vdot(u, K @ u)), 0.0))


def l2_norm(u: np.ndarray, mesh: TriMesh) -> float:
    return math.sqrt(max(np.real(np.vdot(u, mass(mesh) @ u)), 0.0))


@dataclass
class RateResult:
    slope: float
    a_values: np.ndarray
    errors: np.ndarray
    degenerate: bool


def high_contrast_rate(geom: CellGeometry, N: int, f: Source, a_list: Sequence[complex],
                       h: float) -> RateResult:
    """Slope of ``log ||u^a - u^inf||_H1`` against ``log |a|``."""
    a_arr = np.asarray(a_list)
    if np.any(np.abs(a_arr) < 1e2):
        raise ValueError("high-contrast rates need |a| >= 100")
    mesh = build_macro_mesh(geom, N, h, "dirichlet")
    u_inf = infinite_solve_on(mesh, f)
    errs = np.array([h1_norm(solve_source(geom, N, a, f, h).field - u_inf, mesh)
                     for a in a_arr])
    if np.all(errs == 0) or not np.all(errs > 0):
        return RateResult(math.nan, a_arr, errs, True)
    slope = float(np.polyfit(np.log(np.abs(a_arr)), np.log(errs), 1)[0])
    return RateResult(slope, a_arr, errs, False)


@dataclass
class ErrorRow:
    N: int
    a: complex
    error_L2: float
    error_H1: float
    energy: float
    flagged: bool = False


def homogenization_error(geom: CellGeometry, f: Source, a: complex, N_list: Sequence[int],
                         h: float, tensor_h: Optional[float] = None) -> list[ErrorRow]:
    """Distance between ``u_eps^a`` and the homogenized solution for each ``N``.

    Both fields live on the same macro mesh. ``N`` values hitting a
    resonance are returned with ``flagged=True`` and NaN errors.
    """
    T = homogenized_tensor(geom, a, tensor_h or h)
    rows = []
    for N in N_list:
        try:
            rep = solve_source(geom, N, a, f, h)
        except NearResonanceError:
            rows.append(ErrorRow(N, complex(a), math.nan, math.nan, math.nan, True))
            continue
        u_star = solve_homogenized(T, f, h, mesh=rep.mesh)
        e = rep.field - u_star
        rows.append(ErrorRow(N, complex(a), l2_norm(e, rep.mesh), h1_norm(e, rep.mesh),
                             rep.energy_norm))
    return rows


def write_experiment_csv(path, rows: Sequence[ErrorRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "a_re", "a_im", "error_L2", "error_H1", "energy"])
        for r in rows:
            w.writerow([r.N, repr(r.a.real), repr(r.a.imag), repr(r.error_L2),
                        repr(r.error_H1), repr(r.energy)])


def resonance_sweep(geom: CellGeometry, N: int, f: Source, h: float, lam_star: float,
                    exponents: Sequence[int] = (1, 2, 3, 4)) -> list[SolveReport]:
    """Solves at ``a* + 10^-k i`` approaching ``a* = 1 - 1/lam_star``."""
    a_star = 1.0 - 1.0 / lam_star
    return [solve_source(geom, N, a_star + 1j * 10.0 ** (-k), f, h) for k in exponents]
