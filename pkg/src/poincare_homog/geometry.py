"""Cell geometries and boundary-fitted structured triangular meshes.

Meshes start from a structured grid of squares split along the ``/``
diagonal. For curved inclusions, grid nodes lying very close to the
interface are projected onto it, and the remaining triangles crossed by the
interface are cut at the exact edge/interface intersection points, so every
triangle lies in a single region and every interface node lies on the
boundary of the inclusion. Pack and macroscopic meshes are tilings of the
cell mesh, which keeps the cell-level discretization identical everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GeometryError, MeshResolutionError

MARGIN = 0.05
MIN_INTERFACE_EDGES = 8
INCLUSION = 1
MATRIX = 0


@dataclass(frozen=True)
class CellGeometry:
    """Inclusion ``omega`` inside the unit cell ``Y = (0,1)^2``.

    Use the constructors :meth:`disk`, :meth:`smoothed_square`,
    :meth:`laminate` and :meth:`empty` rather than the raw fields.
    """

    kind: str
    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.0
    half_width: float = 0.0
    corner_radius: float = 0.0
    lam_theta: float = 0.0

    @classmethod
    def disk(cls, radius: float = 0.25, center=(0.5, 0.5)) -> "CellGeometry":
        return cls("disk", center=(float(center[0]), float(center[1])), radius=float(radius))

    @classmethod
    def smoothed_square(cls, half_width: float = 0.25, corner_radius: float = 0.05,
                        center=(0.5, 0.5)) -> "CellGeometry":
        return cls("smoothed_square", center=(float(center[0]), float(center[1])),
                   half_width=float(half_width), corner_radius=float(corner_radius))

    @classmethod
    def laminate(cls, theta: float) -> "CellGeometry":
        return cls("laminate", lam_theta=float(theta))

    @classmethod
    def empty(cls) -> "CellGeometry":
        return cls("empty")

    @property
    def theta(self) -> float:
        """Analytic volume fraction of the inclusion."""
        if self.kind == "disk":
            return math.pi * self.radius ** 2
        if self.kind == "smoothed_square":
            w, rc = self.half_width, self.corner_radius
            return (2 * w) ** 2 - (4 - math.pi) * rc ** 2
        if self.kind == "laminate":
            return self.lam_theta
        return 0.0

    def validate(self) -> None:
        if self.kind == "laminate":
            if not 0.0 < self.lam_theta < 1.0:
                raise GeometryError(f"laminate fraction must lie in (0,1), got {self.lam_theta}")
            return
        if self.kind == "empty":
            return
        if self.kind == "disk":
            if self.radius <= 0:
                raise GeometryError("disk radius must be positive")
            extent = self.radius
        elif self.kind == "smoothed_square":
            if self.half_width <= 0 or not 0 <= self.corner_radius <= self.half_width:
                raise GeometryError("need half_width > 0 and 0 <= corner_radius <= half_width")
            extent = self.half_width
        else:
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        cx, cy = self.center
        gap = min(cx - extent, cy - extent, 1 - cx - extent, 1 - cy - extent)
        if gap < MARGIN - 1e-12:
            raise GeometryError(
                f"inclusion must stay {MARGIN} away from the cell boundary (gap {gap:.4g})")

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance to the inclusion boundary (negative inside)."""
        pts = np.atleast_2d(pts)
        if self.kind == "disk":
            return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius
        if self.kind == "smoothed_square":
            inner = self.half_width - self.corner_radius
            q = np.abs(pts - np.asarray(self.center)) - inner
            outside = np.hypot(np.maximum(q[:, 0], 0), np.maximum(q[:, 1], 0))
            return outside + np.minimum(np.maximum(q[:, 0], q[:, 1]), 0) - self.corner_radius
        if self.kind == "laminate":
            return pts[:, 0] - self.lam_theta
        return np.ones(len(pts))

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Closest point on the inclusion boundary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c = np.asarray(self.center)
        if self.kind == "disk":
            d = pts - c
            r = np.hypot(d[:, 0], d[:, 1])
            return c + self.radius * d / r[:, None]
        if self.kind == "smoothed_square":
            inner = self.half_width - self.corner_radius
            d = pts - c
            s = np.sign(d)
            s[s == 0] = 1
            q = np.abs(d) - inner
            out = pts.copy()
            for k in range(len(pts)):
                if q[k, 0] > 0 and q[k, 1] > 0:
                    corner = c + s[k] * inner
                    v = pts[k] - corner
                    out[k] = corner + self.corner_radius * v / np.hypot(*v)
                elif q[k, 0] >= q[k, 1]:
                    out[k, 0] = c[0] + s[k, 0] * self.half_width
                else:
                    out[k, 1] = c[1] + s[k, 1] * self.half_width
            return out
        if self.kind == "laminate":
            out = pts.copy()
            out[:, 0] = self.lam_theta
            return out
        raise GeometryError("empty geometry has no boundary")

    def to_dict(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "center": list(self.center), "radius": self.radius}
        if self.kind == "smoothed_square":
            return {"kind": "smoothed_square", "center": list(self.center),
                    "half_width": self.half_width, "corner_radius": self.corner_radius}
        if self.kind == "laminate":
            return {"kind": "laminate", "theta": self.lam_theta}
        return {"kind": "empty"}

    @classmethod
    def from_dict(cls, d: dict) -> "CellGeometry":
        kind = d.get("kind")
        if kind == "disk":
            return cls.disk(d.get("radius", 0.25), d.get("center", (0.5, 0.5)))
        if kind == "smoothed_square":
            return cls.smoothed_square(d.get("half_width", 0.25), d.get("corner_radius", 0.05),
                                       d.get("center", (0.5, 0.5)))
        if kind == "laminate":
            return cls.laminate(d["theta"])
        if kind == "empty":
            return cls.empty()
        raise GeometryError(f"unknown geometry kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TriMesh:
    """P1 triangular mesh of a square domain ``(0, L)^2``.

    ``periodic_pairs`` rows are ``(slave, master, kx, ky)``: the slave node
    sits at ``master + L*(kx, ky)``. Masters are never slaves. ``cell_map``
    (tiled meshes only) gives, for each cell ``xi`` in row-major order
    ``xi = i + N*j``, the global index of every node of the reference cell
    mesh.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    periodic_pairs: np.ndarray
    dirichlet_nodes: np.ndarray
    h: float
    length: float = 1.0
    cells_per_side: int = 1
    cell_map: Optional[np.ndarray] = None
    cell_triangles: Optional[np.ndarray] = None
    geometry: Optional[CellGeometry] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("nodes", "triangles", "tags", "periodic_pairs", "dirichlet_nodes",
                     "cell_map", "cell_triangles"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def boundary_nodes(self) -> np.ndarray:
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        tol = 1e-12 * max(self.length, 1.0)
        on = (x < tol) | (y < tol) | (x > self.length - tol) | (y > self.length - tol)
        return np.flatnonzero(on)

    def node_regions(self) -> tuple[np.ndarray, np.ndarray]:
        """Boolean masks of nodes touching inclusion / matrix triangles."""
        incl = np.zeros(self.n_nodes, bool)
        mat = np.zeros(self.n_nodes, bool)
        incl[self.triangles[self.tags == INCLUSION].ravel()] = True
        mat[self.triangles[self.tags == MATRIX].ravel()] = True
        return incl, mat

    def inclusion_components(self) -> list[np.ndarray]:
        """Node index sets of the connected inclusion components.

        Components are connected through shared nodes of the mesh itself,
        so inclusions reaching the domain boundary are not merged across
        periodic faces.
        """
        tris = self.triangles[self.tags == INCLUSION]
        if len(tris) == 0:
            return []
        rows = tris.ravel()
        cols = tris[:, [1, 2, 0]].ravel()
        g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes,) * 2)
        _, labels = connected_components(g, directed=False)
        used = np.unique(tris)
        comps = {}
        for n in used:
            comps.setdefault(labels[n], []).append(n)
        return [np.array(v) for _, v in sorted(comps.items(), key=lambda kv: min(kv[1]))]

    def interface_edge_count(self) -> int:
        edges = {}
        for t, tag in zip(self.triangles, self.tags):
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                key = (min(a, b), max(a, b))
                edges.setdefault(key, set()).add(int(tag))
        return sum(1 for s in edges.values() if len(s) == 2)

    def to_dict(self) -> dict:
        d = {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "tags": self.tags.tolist(),
            "periodic_pairs": self.periodic_pairs.tolist(),
            "dirichlet_nodes": self.dirichlet_nodes.tolist(),
            "h": self.h,
            "length": self.length,
            "cells_per_side": self.cells_per_side,
        }
        if self.cell_map is not None:
            d["cell_map"] = self.cell_map.tolist()
            d["cell_triangles"] = self.cell_triangles.tolist()
        if self.geometry is not None:
            d["geometry"] = self.geometry.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TriMesh":
        cm = d.get("cell_map")
        ct = d.get("cell_triangles")
        geom = d.get("geometry")
        return cls(
            nodes=np.asarray(d["nodes"], float).reshape(-1, 2),
            triangles=np.asarray(d["triangles"], np.int64).reshape(-1, 3),
            tags=np.asarray(d["tags"], np.int64),
            periodic_pairs=np.asarray(d["periodic_pairs"], np.int64).reshape(-1, 4),
            dirichlet_nodes=np.asarray(d["dirichlet_nodes"], np.int64),
            h=float(d["h"]),
            length=float(d.get("length", 1.0)),
            cells_per_side=int(d.get("cells_per_side", 1)),
            cell_map=None if cm is None else np.asarray(cm, np.int64),
            cell_triangles=None if ct is None else np.asarray(ct, np.int64),
            geometry=None if geom is None else CellGeometry.from_dict(geom),
        )


def dump_mesh(mesh: TriMesh, path) -> None:
    """Write the mesh as JSON (see :meth:`TriMesh.to_dict` for the keys)."""
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh)


def load_mesh(path) -> TriMesh:
    with open(path) as fh:
        return TriMesh.from_dict(json.load(fh))


def _grid_lines(geom: CellGeometry, h: float) -> tuple[np.ndarray, np.ndarray]:
    if geom.kind == "laminate":
        t = geom.lam_theta
        n1 = max(1, math.ceil(t / h - 1e-9))
        n2 = max(1, math.ceil((1 - t) / h - 1e-9))
        xs = np.concatenate([np.linspace(0, t, n1 + 1), np.linspace(t, 1, n2 + 1)[1:]])
        xs[n1] = t
    else:
        xs = np.linspace(0, 1, math.ceil(1 / h - 1e-9) + 1)
    ys = np.linspace(0, 1, math.ceil(1 / h - 1e-9) + 1)
    return xs, ys


def _structured(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nx, ny = len(xs), len(ys)
    X, Yg = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Yg.ravel()])
    idx = np.arange(nx * ny).reshape(ny, nx)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return nodes, tris


def _ray_hit(geom: CellGeometry, direction: np.ndarray, reach: float) -> float:
    """Distance from the center to the interface along ``direction`` (unit)."""
    if geom.kind == "disk":
        return geom.radius
    c = np.asarray(geom.center)
    return brentq(lambda t: geom.sdf((c + t * direction)[None])[0], 0.0, reach, xtol=1e-15)


def _graded(length: float, first: float, m: int) -> np.ndarray:
    """``m+1`` positions on ``[0, length]`` growing geometrically from step ``first``."""
    if abs(length / m - first) < 1e-12 * length:
        return np.linspace(0.0, length, m + 1)
    f = lambda q: length * (q - 1) / (q ** m - 1) - first
    q = brentq(f, 1e-6, 1.0 - 1e-12) if length / m < first else brentq(f, 1.0 + 1e-12, 1e3)
    s = length * (q ** np.arange(m + 1) - 1) / (q ** m - 1)
    s[-1] = length
    return s


def _quad_tris(idx: np.ndarray, flip: np.ndarray) -> np.ndarray:
    """Split the quads of a node-index grid ``idx[k, j]`` into triangles.

    ``flip[k, j]`` selects the diagonal ``(k+1, j)-(k, j+1)`` instead of
    ``(k, j)-(k+1, j+1)``.
    """
    a, b = idx[:-1, :-1], idx[1:, :-1]
    c, d = idx[1:, 1:], idx[:-1, 1:]
    t1 = np.where(flip[..., None], np.stack([a, b, d], -1), np.stack([a, b, c], -1))
    t2 = np.where(flip[..., None], np.stack([b, c, d], -1), np.stack([a, c, d], -1))
    return np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)])


def _block_mesh(geom: CellGeometry, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Five-block structured mesh fitted to a star-shaped inclusion.

    A core quadrilateral inside the inclusion is surrounded by four inner
    blocks reaching the interface and four outer blocks reaching the cell
    faces. Tangential nodes are shared across the interface and the first
    layers on both sides have the same thickness with mirrored diagonals, so
    the mesh is locally symmetric about the interface. Diagonals are also
    mirrored about each block's middle, giving the full square symmetry for
    centered shapes.
    """
    n = max(4, 2 * math.ceil(0.5 / h - 1e-9))
    c = np.asarray(geom.center)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    t = np.arange(n + 1) / n
    side_pts, hit_pts = [], []
    for i in range(4):
        S = corners[i] + t[:, None] * (corners[(i + 1) % 4] - corners[i])
        d = S - c
        reach = np.linalg.norm(d, axis=1)
        u = d / reach[:, None]
        rho = np.array([_ray_hit(geom, u[k], reach[k]) for k in range(n + 1)])
        side_pts.append(S)
        hit_pts.append(c + rho[:, None] * u)
    corner_rho = []
    for i in range(4):
        corner_rho.append(np.linalg.norm(hit_pts[i][0] - c) / np.linalg.norm(corners[i] - c))
    kappa = 0.45 * min(corner_rho)
    Q = c + kappa * (corners - c)
    core_pts = [Q[i] + t[:, None] * (Q[(i + 1) % 4] - Q[i]) for i in range(4)]

    perimeter = sum(np.linalg.norm(np.diff(P, axis=0), axis=1).sum() for P in hit_pts)
    delta = perimeter / (4 * n)
    core_h = np.linalg.norm(Q[1] - Q[0]) / n
    L_out = [np.linalg.norm(side_pts[i] - hit_pts[i], axis=1) for i in range(4)]
    L_in = [np.linalg.norm(core_pts[i] - hit_pts[i], axis=1) for i in range(4)]
    m_out = max(2, math.ceil(2 * max(l.max() for l in L_out) / (delta + 1.0 / n)))
    m_in = max(2, math.ceil(2 * max(l.max() for l in L_in) / (delta + core_h)))

    chunks, tri_chunks, tag_chunks = [], [], []
    count = 0
    k_half = (np.arange(n) >= n // 2)[:, None]
    for i in range(4):
        for far, L, m, tag in ((side_pts[i], L_out[i], m_out, MATRIX),
                               (core_pts[i], L_in[i], m_in, INCLUSION)):
            P = hit_pts[i]
            pts = np.empty((n + 1, m + 1, 2))
            for k in range(n + 1):
                s = _graded(L[k], delta, m) / L[k]
                pts[k] = P[k] + s[:, None] * (far[k] - P[k])
            idx = count + np.arange((n + 1) * (m + 1)).reshape(n + 1, m + 1)
            flip = np.broadcast_to(k_half, (n, m))
            chunks.append(pts.reshape(-1, 2))
            tri_chunks.append(_quad_tris(idx, flip))
            tag_chunks.append(np.full(2 * n * m, tag))
            count += (n + 1) * (m + 1)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    core = ((1 - uu) * (1 - vv))[..., None] * Q[0] + (uu * (1 - vv))[..., None] * Q[1] \
        + (uu * vv)[..., None] * Q[2] + ((1 - uu) * vv)[..., None] * Q[3]
    idx = count + np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    half = np.arange(n) >= n // 2
    flip = half[:, None] != half[None, :]
    chunks.append(core.reshape(-1, 2))
    tri_chunks.append(_quad_tris(idx, flip))
    tag_chunks.append(np.full(2 * n * n, INCLUSION))

    allpts = np.concatenate(chunks)
    keys = np.round(allpts * 2 ** 32).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    glob = rank[inverse]
    nodes = np.empty((len(first), 2))
    nodes[glob] = allpts
    tris = glob[np.concatenate(tri_chunks)]
    p = nodes[tris]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return nodes, tris, np.concatenate(tag_chunks)


def _periodic_pairs(nodes: np.ndarray, length: float) -> np.ndarray:
    tol = 1e-9 * length
    x, y = nodes[:, 0], nodes[:, 1]

    def key(v):
        return int(round(v / tol))

    master_of: dict[int, tuple[int, int, int]] = {}
    for axis in (0, 1):
        other = 1 - axis
        lo = np.flatnonzero(np.abs(nodes[:, axis]) < tol)
        hi = np.flatnonzero(np.abs(nodes[:, axis] - length) < tol)
        lookup = {key(nodes[i, other]): i for i in lo}
        if len(lo) != len(hi):
            raise GeometryError("opposite faces carry different node counts")
        for s in hi:
            m = lookup.get(key(nodes[s, other]))
            if m is None:
                raise GeometryError("no periodic partner for a boundary node")
            off = (1, 0) if axis == 0 else (0, 1)
            master_of[s] = (m, *off)
    pairs = []
    for s in sorted(master_of):
        m, kx, ky = master_of[s]
        while m in master_of:
            m2, kx2, ky2 = master_of[m]
            m, kx, ky = m2, kx + kx2, ky + ky2
        pairs.append((s, m, kx, ky))
    del x, y
    return np.array(pairs, dtype=np.int64).reshape(-1, 4)


def _check_mesh(nodes: np.ndarray, tris: np.ndarray) -> None:
    p = nodes[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(area <= 0):
        raise GeometryError("mesh construction produced a non-positive triangle")


@lru_cache(maxsize=64)
def build_cell_mesh(geom: CellGeometry, h: float) -> TriMesh:
    """Boundary-fitted mesh of the unit cell with periodic pairs on all faces."""
    if not 0 < h <= 0.5:
        raise GeometryError(f"h must lie in (0, 0.5], got {h}")
    geom.validate()
    if geom.kind in ("disk", "smoothed_square"):
        nodes, tris, tags = _block_mesh(geom, h)
    else:
        xs, ys = _grid_lines(geom, h)
        nodes, tris = _structured(xs, ys)
        cen = nodes[tris].mean(axis=1)
        if geom.kind == "laminate":
            tags = np.where(cen[:, 0] < geom.lam_theta, INCLUSION, MATRIX)
        else:
            tags = np.full(len(tris), MATRIX)
    _check_mesh(nodes, tris)
    mesh = TriMesh(nodes=nodes, triangles=tris, tags=tags.astype(np.int64),
                   periodic_pairs=_periodic_pairs(nodes, 1.0),
                   dirichlet_nodes=np.zeros(0, np.int64), h=float(h), geometry=geom)
    if geom.kind in ("disk", "smoothed_square") and mesh.interface_edge_count() < MIN_INTERFACE_EDGES:
        raise MeshResolutionError(
            f"h={h} resolves the interface with fewer than {MIN_INTERFACE_EDGES} edges")
    return mesh


def _tile(cell: TriMesh, K: int, scale: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    nc = cell.n_nodes
    nt = len(cell.triangles)
    offs = np.array([(i, j) for j in range(K) for i in range(K)], float)
    allpts = ((cell.nodes[None, :, :] + offs[:, None, :]) * scale).reshape(-1, 2)
    keys = np.round(allpts * (2 ** 30 / (K * scale))).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    # renumber in order of first appearance so cell 0 keeps its numbering
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    glob = rank[inverse]
    nodes = np.empty((len(first), 2))
    nodes[glob] = allpts
    cell_map = glob.reshape(K * K, nc)
    tris = np.concatenate([cell_map[c][cell.triangles] for c in range(K * K)])
    tags = np.tile(cell.tags, K * K)
    cell_tris = np.arange(K * K * nt).reshape(K * K, nt)
    return nodes, tris, tags, cell_map, cell_tris


@lru_cache(maxsize=32)
def build_pack_mesh(geom: CellGeometry, K: int, h: float) -> TriMesh:
    """Mesh of ``(0, K)^2`` made of ``K^2`` translated cells, periodic on its faces."""
    if K < 1:
        raise GeometryError("K must be a positive integer")
    cell = build_cell_mesh(geom, h)
    if K == 1:
        return cell
    nodes, tris, tags, cmap, ctris = _tile(cell, K, 1.0)
    return TriMesh(nodes=nodes, triangles=tris, tags=tags,
                   periodic_pairs=_periodic_pairs(nodes, float(K)),
                   dirichlet_nodes=np.zeros(0, np.int64), h=float(h), length=float(K),
                   cells_per_side=K, cell_map=cmap, cell_triangles=ctris, geometry=geom)


@lru_cache(maxsize=32)
def build_macro_mesh(geom: CellGeometry, N: int, h: float, bc: str = "dirichlet") -> TriMesh:
    """Mesh of ``(0,1)^2`` tiled by ``N^2`` cells of side ``1/N``.

    ``h`` is measured in cell-side units. ``bc`` is ``"dirichlet"`` (boundary
    nodes listed in ``dirichlet_nodes``) or ``"periodic"``.
    """
    bc = bc.lower()
    if bc not in ("dirichlet", "periodic"):
        raise GeometryError(f"bc must be 'dirichlet' or 'periodic', got {bc!r}")
    if N < 1:
        raise GeometryError("N must be a positive integer")
    cell = build_cell_mesh(geom, h)
    nodes, tris, tags, cmap, ctris = _tile(cell, N, 1.0 / N)
    if bc == "periodic":
        pairs = _periodic_pairs(nodes, 1.0)
        dn = np.zeros(0, np.int64)
    else:
        pairs = np.zeros((0, 4), np.int64)
        tol = 1e-12
        x, y = nodes[:, 0], nodes[:, 1]
        dn = np.flatnonzero((x < tol) | (y < tol) | (x > 1 - tol) | (y > 1 - tol))
    return TriMesh(nodes=nodes, triangles=tris, tags=tags, periodic_pairs=pairs,
                   dirichlet_nodes=dn.astype(np.int64), h=float(h), length=1.0,
                   cells_per_side=N, cell_map=cmap, cell_triangles=ctris, geometry=geom)


def volume_fraction(mesh: TriMesh) -> float:
    """Inclusion area divided by total mesh area."""
    a = mesh.areas
    return float(a[mesh.tags == INCLUSION].sum() / a.sum())
