"""Discrete periodic unfolding, local averaging, Q1 interpolation and correctors.

Fields are P1 nodal vectors on a macro mesh built by tiling one reference
cell mesh ``N x N`` times. Cell ``xi`` (row-major, ``xi = i + N j``) owns
the nodes ``mesh.cell_map[xi]``, so restriction to a cell is exact. The
two-scale inner product is ``N^-2 sum_xi u_xi^H M_Y v_xi`` with the
consistent mass matrix ``M_Y`` of the reference cell.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from .assembly import mass, p1_gradients
from .geometry import TriMesh, build_cell_mesh


@dataclass
class TwoScaleField:
    """Per-cell nodal values on the reference cell mesh.

    ``micro_values[xi]`` are the values on the cell mesh nodes for macro
    cell ``xi``; ``macro_mesh`` is the tiled mesh the field came from.
    """

    micro_values: np.ndarray
    N: int
    macro_mesh: TriMesh

    def __post_init__(self):
        vals = np.asarray(self.micro_values)
        if vals.shape != self.macro_mesh.cell_map.shape:
            raise ValueError(f"micro values of shape {vals.shape} do not match the cell map "
                             f"{self.macro_mesh.cell_map.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("two-scale field has non-finite values")
        self.micro_values = vals

    @property
    def macro_index(self) -> np.ndarray:
        return np.arange(self.N ** 2)


def _check_tiled(mesh: TriMesh, N: Optional[int]) -> int:
    if mesh.cell_map is None:
        raise ValueError("mesh carries no cell map; build it with build_macro_mesh")
    if N is not None and N != mesh.cells_per_side:
        raise ValueError(f"mesh has {mesh.cells_per_side} cells per side, not {N}")
    return mesh.cells_per_side


@lru_cache(maxsize=16)
def _reference_cell(mesh: TriMesh) -> TriMesh:
    return build_cell_mesh(mesh.geometry, mesh.h)


def _cell_mass(mesh: TriMesh) -> sp.csr_matrix:
    return mass(_reference_cell(mesh))


def unfold(field: np.ndarray, mesh: TriMesh, N: Optional[int] = None) -> TwoScaleField:
    """``E u (xi, y) = u(eps xi + eps y)`` restricted to every cell."""
    N = _check_tiled(mesh, N)
    field = np.asarray(field)
    if field.shape != (mesh.n_nodes,):
        raise ValueError("field does not match the macro mesh")
    return TwoScaleField(field[mesh.cell_map], N, mesh)


@lru_cache(maxsize=16)
def _macro_mass_lu(mesh: TriMesh):
    return spla.splu(mass(mesh).tocsc())


def project(tsf: TwoScaleField) -> np.ndarray:
    """Local averaging ``P = M_Omega^-1 sum_xi N^-2 S_xi^T M_Y phi_xi``.

    ``P`` is the adjoint of :func:`unfold` for the two-scale and the
    ``L^2(Omega)`` inner products.
    """
    mesh = tsf.macro_mesh
    MY = _cell_mass(mesh)
    w = (MY @ tsf.micro_values.T).T / tsf.N ** 2
    rhs = np.zeros(mesh.n_nodes, dtype=w.dtype)
    np.add.at(rhs, mesh.cell_map.ravel(), w.ravel())
    lu = _macro_mass_lu(mesh)
    if np.iscomplexobj(rhs):
        return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    return lu.solve(rhs)


def two_scale_inner(u: TwoScaleField, v: TwoScaleField) -> complex:
    MY = _cell_mass(u.macro_mesh)
    return complex(np.sum(np.conj(v.micro_values) * (MY @ u.micro_values.T).T) / u.N ** 2)


def macro_inner(u: np.ndarray, v: np.ndarray, mesh: TriMesh) -> complex:
    return complex(np.conj(v) @ (mass(mesh) @ u))


def integral(u: np.ndarray, mesh: TriMesh) -> complex:
    """``int_Omega u`` for a P1 field."""
    return complex(np.ones(mesh.n_nodes) @ (mass(mesh) @ u))


def cell_averages(field: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Mean of a nodal field over each cell, shape ``(N, N)`` indexed ``[i, j]``."""
    N = _check_tiled(mesh, None)
    MY = _cell_mass(mesh)
    ones = np.ones(MY.shape[0])
    tot = (MY @ np.asarray(field)[mesh.cell_map].T).T @ ones
    return (tot / (ones @ (MY @ ones))).reshape(N, N, order="F")


def triangle_cell_averages(values: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Area-weighted means of per-triangle values over each cell, ``[i, j]``."""
    N = _check_tiled(mesh, None)
    area = mesh.areas
    ct = mesh.cell_triangles
    avg = (values[ct] * area[ct]).sum(axis=1) / area[ct].sum(axis=1)
    return avg.reshape(N, N, order="F")


@dataclass
class Q1Field:
    """Bilinear interpolant on the ``N x N`` cell grid of ``(0,1)^2``.

    ``vertex_values[i, j]`` is the value at ``(i/N, j/N)``.
    """

    vertex_values: np.ndarray

    @property
    def N(self) -> int:
        return self.vertex_values.shape[0] - 1

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        N = self.N
        s = np.clip(pts * N, 0, N)
        i = np.minimum(np.floor(s[:, 0]).astype(int), N - 1)
        j = np.minimum(np.floor(s[:, 1]).astype(int), N - 1)
        t1 = s[:, 0] - i
        t2 = s[:, 1] - j
        V = self.vertex_values
        return ((1 - t1) * (1 - t2) * V[i, j] + t1 * (1 - t2) * V[i + 1, j]
                + (1 - t1) * t2 * V[i, j + 1] + t1 * t2 * V[i + 1, j + 1])


def interpolate_q1(averages: np.ndarray, N: int, extension: str = "nearest") -> Q1Field:
    """Q1 interpolation whose vertex ``xi/N`` carries the average over cell ``xi``.

    Vertices on the top and right edges have no cell of their own; they take
    the value of the nearest cell (``extension="nearest"``) or zero
    (``extension="zero"``).
    """
    avg = np.asarray(averages)
    if avg.shape == (N * N,):
        avg = avg.reshape(N, N, order="F")
    if avg.shape != (N, N):
        raise ValueError(f"expected {N}x{N} cell averages, got shape {avg.shape}")
    if extension == "nearest":
        V = np.pad(avg, ((0, 1), (0, 1)), mode="edge")
    elif extension == "zero":
        V = np.pad(avg, ((0, 1), (0, 1)))
    else:
        raise ValueError(f"unknown extension {extension!r}")
    return Q1Field(V)


def cutoff(mesh: TriMesh, width: float) -> np.ndarray:
    """Nodal values of ``min(1, dist(x, boundary) / width)`` on ``(0, L)^2``."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    L = mesh.length
    d = np.minimum.reduce([x, y, L - x, L - y])
    return np.minimum(1.0, np.maximum(d, 0.0) / width)


def sample_periodic(chi: np.ndarray, mesh: TriMesh, chi_mesh: Optional[TriMesh] = None
                    ) -> np.ndarray:
    """Values of a cell function ``chi(x / eps)`` at the macro mesh nodes.

    When ``chi`` lives on the reference cell mesh of ``mesh`` the values are
    copied through the cell map. Otherwise ``chi`` is interpolated from
    ``chi_mesh`` at the fractional node coordinates, with a warning.
    """
    chi = np.asarray(chi)
    ref = _reference_cell(mesh)
    aligned = chi.shape == (ref.n_nodes,) and (
        chi_mesh is None or (chi_mesh.n_nodes == ref.n_nodes
                             and np.array_equal(chi_mesh.nodes, ref.nodes)))
    if aligned:
        out = np.zeros(mesh.n_nodes, dtype=chi.dtype)
        out[mesh.cell_map] = chi[None, :]
        return out
    if chi_mesh is None or chi.shape != (chi_mesh.n_nodes,):
        raise ValueError("chi matches neither the reference cell mesh nor chi_mesh")
    warnings.warn("cell function mesh differs from the macro cell mesh; interpolating",
                  RuntimeWarning, stacklevel=2)
    N = mesh.cells_per_side
    y = mesh.nodes * N
    y = y - np.floor(y)
    lin = LinearNDInterpolator(chi_mesh.nodes, chi)(y)
    bad = np.isnan(lin)
    if np.any(bad):
        lin[bad] = NearestNDInterpolator(chi_mesh.nodes, chi)(y[bad])
    return lin


def corrector_expand(u0: np.ndarray, chi: Sequence[np.ndarray], mesh: TriMesh,
                     N: Optional[int] = None, cutoff_width: Optional[float] = None,
                     chi_mesh: Optional[TriMesh] = None) -> np.ndarray:
    """``u0 + eps zeta sum_i I(du0/dx_i) chi_i(x/eps)`` at the macro nodes.

    ``I`` is :func:`interpolate_q1` applied to the cell averages of the
    gradient and ``zeta`` the distance ramp of width ``cutoff_width``
    (default ``eps = 1/N``).
    """
    N = _check_tiled(mesh, N)
    eps = 1.0 / N
    width = eps if cutoff_width is None else cutoff_width
    u0 = np.asarray(u0)
    grads, _ = p1_gradients(mesh)
    g = np.einsum("tk,tkd->td", u0[mesh.triangles], grads)
    zeta = cutoff(mesh, width)
    out = u0.astype(np.result_type(u0.dtype, *[np.asarray(c).dtype for c in chi]))
    for i, chi_i in enumerate(chi):
        Ig = interpolate_q1(triangle_cell_averages(g[:, i], mesh), N)(mesh.nodes)
        out = out + eps * zeta * Ig * sample_periodic(chi_i, mesh, chi_mesh)
    return out
