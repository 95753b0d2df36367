"""Closed-form spectral data for rank-1 laminates ``omega = {0 < y1 < theta}``.

These formulas serve as exact references for the finite-element pipeline:
the Bloch discriminant, the spectrum of the N-periodic operator, the
homogenized tensor and the set of conductivities where the cell problem
breaks down. A discrete Bloch decomposition on uniform grids is included.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError


@dataclass(frozen=True)
class LaminateSpec:
    theta: float
    N: int = 1
    n_max: int = 0

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise GeometryError("theta must lie in (0,1)")
        if self.N < 1 or self.n_max < 0:
            raise GeometryError("need N >= 1 and n_max >= 0")


def _log_sinh(y: float) -> float:
    # log(sinh(y)) for y > 0 without overflow
    if y > 20.0:
        return y - math.log(2.0) + math.log1p(-math.exp(-2.0 * y))
    return math.log(math.sinh(y))


def laminate_delta(theta: float, eta, n: int) -> float:
    """Discriminant of the transverse sector ``n`` at quasi-momentum ``eta``.

    Uses ``cosh x - cos c = 2 (sinh^2(x/2) + sin^2(c/2))`` and a log-space
    ratio of hyperbolic sines, so it is accurate near ``x = 0`` and does not
    overflow for large ``n``.
    """
    eta1, eta2 = float(eta[0]), float(eta[1])
    k = n + eta2
    if k == 0:
        raise ValueError("degenerate sector n + eta2 = 0 has no discriminant")
    x = 2 * math.pi * abs(k)
    s = abs(2 * theta - 1)
    sc = math.sin(math.pi * eta1) ** 2
    lb = 2 * _log_sinh(x / 2)
    ratio_a = 0.0 if s == 0 else math.exp(2 * _log_sinh(x * s / 2) - lb)
    ratio_s = sc * math.exp(-lb) if sc > 0 else 0.0
    return (ratio_a + ratio_s) / (1.0 + ratio_s)


def laminate_bloch_pair(theta: float, eta, n: int) -> tuple[float, float]:
    """The two eigenvalues ``(1 -/+ sqrt(Delta)) / 2`` of a nondegenerate sector."""
    r = 0.5 * math.sqrt(laminate_delta(theta, eta, n))
    return 0.5 - r, 0.5 + r


def degenerate_sector(theta: float, eta1: float) -> tuple[float, ...]:
    """Eigenvalues of the sector ``n + eta2 = 0``."""
    if eta1 % 1.0 == 0.0:
        return (0.0, 1.0 - theta, 1.0)
    return (0.0, 1.0)


def transverse_indices(eta2: float, n_max: int) -> range:
    """Integers ``n`` whose wavenumbers ``|n + eta2|`` are the lowest ones.

    Both signs are kept, so that each wavenumber appears with the
    multiplicity it has in a finite-element discretization.
    """
    if eta2 == 0:
        return range(-n_max, n_max + 1)
    return range(-n_max - 1, n_max + 1)


def laminate_bloch_values(theta: float, eta, n_max: int) -> np.ndarray:
    """Sorted nontrivial eigenvalues of the Bloch operator at ``eta``.

    Includes ``1 - theta`` when ``eta = 0``; excludes the trivial 0 and 1.
    """
    eta1, eta2 = float(eta[0]), float(eta[1])
    vals = []
    for n in transverse_indices(eta2, n_max):
        if n + eta2 == 0:
            vals += [v for v in degenerate_sector(theta, eta1) if 0 < v < 1]
        else:
            vals += list(laminate_bloch_pair(theta, (eta1, eta2), n))
    return np.sort(np.array(vals))


def laminate_spectrum(spec: LaminateSpec) -> np.ndarray:
    """Sorted multiset of eigenvalues of the N-periodic laminate operator.

    The trivial values 0 and 1 and the value ``1 - theta`` appear once each;
    every nondegenerate sector ``(j/N, n)`` contributes its pair.
    """
    vals = [0.0, 1.0 - spec.theta, 1.0]
    for j2 in range(spec.N):
        for j1 in range(spec.N):
            eta = (j1 / spec.N, j2 / spec.N)
            for n in transverse_indices(eta[1], spec.n_max):
                if n + eta[1] != 0:
                    vals += list(laminate_bloch_pair(spec.theta, eta, n))
    return np.sort(np.array(vals))


def nontrivial(values: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    values = np.asarray(values)
    return values[(values > tol) & (values < 1 - tol)]


def transmission_determinant(theta: float, eta, n: int, beta: complex) -> complex:
    """Scaled 4x4 determinant whose zeros are the sector eigenvalues.

    Rows are the continuity and flux-transmission conditions for the
    exponential solution ``A e^{r1 z} + B e^{r2 z}`` on each layer. Each row
    is divided by its largest entry so the value is scale free.
    """
    eta1, eta2 = eta
    k = n + eta2
    r1 = -2j * math.pi * eta1 - 2 * math.pi * k
    r2 = -2j * math.pi * eta1 + 2 * math.pi * k
    s1 = r1 + 2j * math.pi * eta1
    s2 = r2 + 2j * math.pi * eta1
    e1, e2 = np.exp(r1), np.exp(r2)
    t1, t2 = np.exp(r1 * theta), np.exp(r2 * theta)
    b = beta
    M = np.array([
        [1, 1, -e1, -e2],
        [t1, t2, -t1, -t2],
        [(b - 1) * s1, (b - 1) * s2, -b * s1 * e1, -b * s2 * e2],
        [(b - 1) * s1 * t1, (b - 1) * s2 * t2, -b * s1 * t1, -b * s2 * t2],
    ], dtype=complex)
    # column scaling keeps the exponentials comparable, row scaling normalizes
    M = M / np.abs(M).max(axis=0, keepdims=True)
    M = M / np.abs(M).max(axis=1, keepdims=True)
    return complex(np.linalg.det(M))


@dataclass(frozen=True)
class LaminateTensor:
    lam_minus: float
    lam_plus: float
    degenerate: bool
    definiteness: str


def _classify(values, tol=1e-12) -> str:
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(np.abs(v) < tol):
        return "Degenerate"
    if np.all(v > 0):
        return "PositiveDefinite"
    if np.all(v < 0):
        return "NegativeDefinite"
    return "Indefinite"


def laminate_tensor(theta: float, a: float, tol: float = 1e-12) -> LaminateTensor:
    """Eigenvalues of the homogenized tensor across and along the layers.

    ``lam_minus`` is the harmonic mean (flux across the layers) and
    ``lam_plus`` the arithmetic mean.
    """
    if a == 0:
        raise ValueError("conductivity a must be nonzero")
    denom = theta / a + 1 - theta
    lam_plus = a * theta + 1 - theta
    if abs(denom) < tol:
        return LaminateTensor(math.inf, lam_plus, True, "Degenerate")
    lam_minus = 1.0 / denom
    return LaminateTensor(lam_minus, lam_plus, False, _classify([lam_minus, lam_plus]))


def laminate_regime(theta: float, a: float) -> str:
    """Definiteness regime of the tensor predicted from interval bounds alone."""
    lo = -theta / (1 - theta)
    hi = -(1 - theta) / theta
    if a > 0:
        return "PositiveDefinite"
    if theta < 0.5:
        if lo < a < 0:
            return "Indefinite"
        if hi < a < lo:
            return "PositiveDefinite"
        if a < hi:
            return "Indefinite"
    elif theta > 0.5:
        if hi < a < 0:
            return "Indefinite"
        if lo < a < hi:
            return "NegativeDefinite"
        if a < lo:
            return "Indefinite"
    else:
        if a != -1:
            return "Indefinite"
    return "Degenerate"


def laminate_exceptional(theta: float, n_max: int) -> np.ndarray:
    """Conductivities where the laminate cell problem is not well posed."""
    vals = [-theta / (1 - theta), 0.0]
    s = 2 * theta - 1
    for n in range(1, n_max + 1):
        x = math.pi * n
        ch, chs = math.cosh(2 * x), math.cosh(2 * x * s)
        cross = 2 * math.sinh(x) * math.sinh(x * s)
        for sign in (1.0, -1.0):
            num = 2 * (1 + sign * cross) - chs - ch
            vals.append(num / (ch - chs))
    return np.array(vals)


def write_oracle_csv(path, theta: float, etas, n_values) -> None:
    """Write ``theta,eta1,eta2,n,beta_minus,beta_plus`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "eta1", "eta2", "n", "beta_minus", "beta_plus"])
        for eta in etas:
            for n in n_values:
                if n + eta[1] == 0:
                    continue
                bm, bp = laminate_bloch_pair(theta, eta, n)
                w.writerow([theta, eta[0], eta[1], n, repr(bm), repr(bp)])


def bloch_decompose(values: np.ndarray, N: int) -> np.ndarray:
    """Bloch coefficients of samples on a uniform periodic grid of (0,1)^2.

    ``values[p, q]`` is the sample at ``x = (p/M1, q/M2)``. Returns
    ``coef[j1, j2, a, b]``, the coefficient ``u_j`` at the cell point
    ``y = (a N/M1, b N/M2)``, with
    ``u_j(y) = N^-2 sum_{j'} u((y+j')/N) exp(-2 i pi j.(y+j')/N)``.
    """
    values = np.asarray(values)
    M1, M2 = values.shape
    if M1 % N or M2 % N:
        raise ValueError(f"grid {values.shape} is not divisible by N={N}")
    m1, m2 = M1 // N, M2 // N
    # sample (a + m1*j1', b + m2*j2') sits at (y + j')/N
    blocks = values.reshape(N, m1, N, m2).transpose(0, 2, 1, 3)  # [j1', j2', a, b]
    x1 = np.arange(M1).reshape(N, m1) / M1
    x2 = np.arange(M2).reshape(N, m2) / M2
    j = np.arange(N)
    ph1 = np.exp(-2j * np.pi * j[:, None, None] * x1[None])  # [j1, j1', a]
    ph2 = np.exp(-2j * np.pi * j[:, None, None] * x2[None])  # [j2, j2', b]
    return np.einsum("xpa,yqb,pqab->xyab", ph1, ph2, blocks) / N ** 2


def bloch_reconstruct(coef: np.ndarray) -> np.ndarray:
    """Inverse of :func:`bloch_decompose`: ``u(x) = sum_j u_j(N x) e^{2 i pi j.x}``."""
    N, _, m1, m2 = coef.shape
    M1, M2 = N * m1, N * m2
    x1 = np.arange(M1).reshape(N, m1) / M1
    x2 = np.arange(M2).reshape(N, m2) / M2
    j = np.arange(N)
    ph1 = np.exp(2j * np.pi * j[:, None, None] * x1[None])
    ph2 = np.exp(2j * np.pi * j[:, None, None] * x2[None])
    blocks = np.einsum("xpa,yqb,xyab->pqab", ph1, ph2, coef)
    return blocks.transpose(0, 2, 1, 3).reshape(M1, M2)


def bloch_inner(coef_u: np.ndarray, coef_v: np.ndarray) -> complex:
    """Grid quadrature of ``sum_j int_Y u_j conj(v_j) dy``."""
    m1, m2 = coef_u.shape[2:]
    return complex(np.sum(coef_u * np.conj(coef_v)) / (m1 * m2))
