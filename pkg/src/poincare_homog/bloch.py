"""Bloch operators over a quasi-momentum grid and band diagnostics."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import ConstraintKind, assemble_forms
from .geometry import CellGeometry, build_cell_mesh
from .spectral import SpectrumResult, spectrum_of_pair

DEFAULT_BANDS = 6


def bloch_spectrum_at(geom: CellGeometry, eta, h: float, k: Optional[int] = DEFAULT_BANDS,
                      method: str = "condensed") -> SpectrumResult:
    """Spectrum of the Bloch operator at quasi-momentum ``eta``.

    ``eta = 0`` uses the periodic quotient by constants.
    """
    eta = (float(eta[0]) % 1.0, float(eta[1]) % 1.0)
    mesh = build_cell_mesh(geom, h)
    if eta == (0.0, 0.0):
        pair = assemble_forms(mesh, None, ConstraintKind.PERIODIC_QUOTIENT)
    else:
        pair = assemble_forms(mesh, eta, ConstraintKind.QUASI_PERIODIC)
    res = spectrum_of_pair(pair, k, k, "Bloch", method, params={"h": h})
    res.eta = eta
    return res


@dataclass
class BandStructure:
    """Lowest and highest band functions on a uniform ``g x g`` grid.

    ``bands_low[p, j]`` is the ``j``-th smallest nontrivial eigenvalue at
    ``eta_grid[p]`` and ``bands_high[p, j]`` the ``j``-th largest; missing
    values (fewer nontrivial eigenvalues than ``J``) are NaN.
    """

    eta_grid: np.ndarray
    grid_res: int
    bands_low: np.ndarray
    bands_high: np.ndarray

    @property
    def J(self) -> int:
        return self.bands_low.shape[1]

    def intervals(self) -> list[dict]:
        out = []
        for side, B in (("low", self.bands_low), ("high", self.bands_high)):
            for j in range(self.J):
                col = B[:, j]
                if np.all(np.isnan(col)):
                    continue
                out.append({"j": j + 1, "side": side, "min": float(np.nanmin(col)),
                            "max": float(np.nanmax(col))})
        return out

    def band(self, j: int, side: str = "low") -> np.ndarray:
        """Band ``j`` (1-based) reshaped to the grid, ``[i1, i2]``."""
        B = self.bands_low if side == "low" else self.bands_high
        return B[:, j - 1].reshape(self.grid_res, self.grid_res)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eta1", "eta2", "side", "j", "lambda"])
            for p, eta in enumerate(self.eta_grid):
                for side, B in (("low", self.bands_low), ("high", self.bands_high)):
                    for j in range(self.J):
                        if not np.isnan(B[p, j]):
                            w.writerow([eta[0], eta[1], side, j + 1, repr(float(B[p, j]))])

    def write_intervals(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.intervals(), fh, indent=1)


def eta_grid(grid_res: int) -> np.ndarray:
    """Points ``(i1/g, i2/g)`` in row-major order over ``i1`` then ``i2``."""
    i1, i2 = np.meshgrid(np.arange(grid_res), np.arange(grid_res), indexing="ij")
    return np.column_stack([i1.ravel(), i2.ravel()]) / grid_res


def bands_from_values(values: list[np.ndarray], J: int) -> tuple[np.ndarray, np.ndarray]:
    low = np.full((len(values), J), np.nan)
    high = np.full((len(values), J), np.nan)
    for p, v in enumerate(values):
        v = np.sort(np.asarray(v))
        m = min(J, len(v))
        low[p, :m] = v[:m]
        high[p, :m] = v[::-1][:m]
    return low, high


def band_structure(geom: CellGeometry, grid_res: int, h: float, J: int = DEFAULT_BANDS,
                   jobs: int = 1, method: str = "condensed") -> BandStructure:
    """Band functions over the uniform quasi-momentum grid, including eta = 0."""
    if grid_res < 2:
        raise ValueError("grid_res must be at least 2")
    grid = eta_grid(grid_res)

    def one(eta):
        return bloch_spectrum_at(geom, tuple(eta), h, J, method).nontrivial

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            values = list(ex.map(one, grid))
    else:
        values = [one(eta) for eta in grid]
    low, high = bands_from_values(values, J)
    return BandStructure(grid, grid_res, low, high)


def lipschitz_modulus(band: BandStructure, j: int, side: str = "low") -> float:
    """Largest difference quotient of band ``j`` between grid neighbors.

    Neighbors wrap around the torus, since band functions are 1-periodic in
    each component of ``eta``.
    """
    if band.grid_res < 3:
        raise ValueError("grid_res must be at least 3")
    B = band.band(j, side)
    step = 1.0 / band.grid_res
    d1 = np.abs(np.roll(B, -1, axis=0) - B)
    d2 = np.abs(np.roll(B, -1, axis=1) - B)
    return float(max(np.nanmax(d1), np.nanmax(d2)) / step)
