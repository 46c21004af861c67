"""Structured polar triangulations of disk and annulus-like domains.

Two constructions, both shape-regular under refinement with uniformly spaced
vertices on the outer circle (which the boundary Fourier projection relies on):

* disk fan: ring i carries 6i vertices, consecutive rings are zipped by an
  angular two-pointer sweep;
* star annulus: the region between a star-shaped curve r = rho(theta) and the
  outer circle, mapped layer by layer at fixed angles.

Vertex tags: 0 interior, 1 obstacle boundary, 2 truncation (outer) boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree


INTERIOR, OBSTACLE_BOUNDARY, TRUNCATION_BOUNDARY = 0, 1, 2


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class MeshSizeError(Exception):
    """Requested resolution would exceed the configured vertex budget."""


@dataclass
class Mesh:
    vertices: np.ndarray        # (N, 2)
    triangles: np.ndarray       # (M, 3) CCW
    vertex_tags: np.ndarray     # (N,)
    h_fem: float                # max circumdiameter
    shape_regularity: float     # max circumradius / inradius
    boundary_indices: np.ndarray = None   # outer-circle vertices in angular order
    boundary_thetas: np.ndarray = None
    _tree: Optional[cKDTree] = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * np.abs(_cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))

    def total_area(self):
        return float(np.sum(self.areas()))

    # -- point location -----------------------------------------------------

    def _centroid_tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.vertices[self.triangles].mean(axis=1))
        return self._tree

    def locate(self, points, k_search=24):
        """Triangle index and barycentric coordinates for each query point.

        Points outside the triangulated polygon (boundary-snap mismatches) are
        clamped to the nearest candidate triangle.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._centroid_tree()
        k = min(k_search, self.n_triangles)
        _, cand = tree.query(points, k=k)
        cand = np.atleast_2d(cand)
        tri_idx = np.empty(len(points), dtype=int)
        bary = np.empty((len(points), 3))
        verts = self.vertices
        tris = self.triangles
        for i, (pt, cands) in enumerate(zip(points, cand)):
            best, best_bary, best_def = -1, None, np.inf
            for t in cands:
                a, b, c = verts[tris[t]]
                M = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
                try:
                    lam = np.linalg.solve(M, pt - a)
                except np.linalg.LinAlgError:
                    continue
                w = np.array([1.0 - lam[0] - lam[1], lam[0], lam[1]])
                deficiency = -min(w.min(), 0.0)
                if deficiency < best_def:
                    best, best_bary, best_def = t, w, deficiency
                if deficiency <= 1e-12:
                    break
            tri_idx[i] = best
            bary[i] = best_bary
        return tri_idx, bary

    def interpolate(self, vertex_values, points):
        """Evaluate the P1 interpolant of nodal data at arbitrary points."""
        tri_idx, bary = self.locate(points)
        vals = np.asarray(vertex_values)[self.triangles[tri_idx]]
        return np.einsum("pj,pj->p", bary, vals) if vals.ndim == 2 else \
            np.einsum("pj,pj...->p...", bary, vals)


# ---------------------------------------------------------------------------
# construction helpers


def _zip_rings(idx_a, idx_b):
    """Triangulate the band between two uniform concentric vertex rings.

    Both rings start at angle zero with equal spacing; the sweep compares the
    next corner angles as exact integer fractions (i+1)/ma vs (j+1)/mb, so the
    pattern inherits every common discrete rotational symmetry of the counts
    instead of depending on floating-point ties.
    """
    ma, mb = len(idx_a), len(idx_b)
    tris = []
    i = j = 0
    while i < ma or j < mb:
        va = idx_a[i % ma]
        vb = idx_b[j % mb]
        if i < ma and (j >= mb or (i + 1) * mb <= (j + 1) * ma):
            tris.append((va, vb, idx_a[(i + 1) % ma]))
            i += 1
        else:
            tris.append((va, vb, idx_b[(j + 1) % mb]))
            j += 1
    return tris


def _orient_ccw(vertices, triangles):
    p = vertices[triangles]
    signed = _cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = signed < 0.0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    signed = np.abs(signed)
    if np.any(signed <= 0.0):
        raise ValueError("degenerate triangle produced")
    return triangles


def _quality(vertices, triangles):
    p = vertices[triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    K = 0.5 * np.abs(_cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))
    circum = a * b * c / (4.0 * K)
    inr = 2.0 * K / (a + b + c)
    return float(np.max(2.0 * circum)), float(np.max(circum / inr))


def _disk_fan(R, n_r):
    verts = [(0.0, 0.0)]
    rings = [(np.array([0]), np.array([0.0]))]
    tags = [INTERIOR]
    for i in range(1, n_r + 1):
        m = 6 * i
        th = 2.0 * np.pi * np.arange(m) / m
        r = R * i / n_r
        start = len(verts)
        verts.extend(zip(r * np.cos(th), r * np.sin(th)))
        tags.extend([TRUNCATION_BOUNDARY if i == n_r else INTERIOR] * m)
        rings.append((np.arange(start, start + m), th))
    tris = []
    # center fan
    inner_idx, _ = rings[1]
    for j in range(6):
        tris.append((0, inner_idx[j], inner_idx[(j + 1) % 6]))
    for i in range(1, n_r):
        ia, _ = rings[i]
        ib, _ = rings[i + 1]
        tris.extend(_zip_rings(ia, ib))
    vertices = np.array(verts)
    triangles = _orient_ccw(vertices, np.array(tris, dtype=int))
    return vertices, triangles, np.array(tags), rings[-1]


def _star_annulus(obstacle, R_out, n_layers, n_theta, inner_tag):
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rho = obstacle.rho(th)
    verts = []
    tags = []
    for j in range(n_layers + 1):
        t = j / n_layers
        r = rho + t * (R_out - rho)
        verts.extend(zip(r * np.cos(th), r * np.sin(th)))
        tag = inner_tag if j == 0 else (TRUNCATION_BOUNDARY if j == n_layers else INTERIOR)
        tags.extend([tag] * n_theta)
    vertices = np.array(verts)
    tris = []
    for j in range(n_layers):
        base_a = j * n_theta
        base_b = (j + 1) * n_theta
        for i in range(n_theta):
            i1 = (i + 1) % n_theta
            a0, a1 = base_a + i, base_a + i1
            b0, b1 = base_b + i, base_b + i1
            # split the quad along its shorter diagonal
            if (np.sum((vertices[a0] - vertices[b1]) ** 2)
                    <= np.sum((vertices[a1] - vertices[b0]) ** 2)):
                tris.append((a0, b0, b1))
                tris.append((a0, b1, a1))
            else:
                tris.append((a0, b0, a1))
                tris.append((a1, b0, b1))
    triangles = _orient_ccw(vertices, np.array(tris, dtype=int))
    outer = np.arange(n_layers * n_theta, (n_layers + 1) * n_theta)
    return vertices, triangles, np.array(tags), (outer, th)


def generate_mesh(obstacle, geom, h_target, outer_radius=None,
                  max_vertices=2_500_000):
    """Shape-regular structured triangulation of B(0, R) minus the obstacle.

    The mesh width (max circumdiameter) is driven at or below ``h_target``;
    obstacle and outer-circle vertices sit exactly on their curves.
    """
    if h_target <= 0:
        raise ValueError("h_target must be positive")
    R_out = float(outer_radius if outer_radius is not None else geom.R)
    empty = obstacle is None or obstacle.empty
    delta = h_target / 1.55
    est = (np.pi * R_out**2) / (0.5 * delta**2)
    if est > max_vertices:
        raise MeshSizeError(
            f"~{est:.0f} vertices needed for h_target={h_target:g}, "
            f"budget is {max_vertices}")

    for _ in range(4):
        if empty:
            n_r = max(2, int(np.ceil(R_out / delta)))
            vertices, triangles, tags, (outer, th) = _disk_fan(R_out, n_r)
        else:
            if not obstacle.centered:
                raise ValueError("structured meshing needs an origin-centered obstacle")
            rho_min = obstacle.min_radius
            if rho_min >= R_out:
                raise ValueError("obstacle is not inside the domain")
            n_theta = max(12, int(np.ceil(2.0 * np.pi * R_out / delta)))
            n_layers = max(2, int(np.ceil((R_out - rho_min) / delta)))
            vertices, triangles, tags, (outer, th) = _star_annulus(
                obstacle, R_out, n_layers, n_theta, OBSTACLE_BOUNDARY)
        h_fem, shape_reg = _quality(vertices, triangles)
        if h_fem <= h_target:
            break
        delta *= 0.98 * h_target / h_fem
    else:
        raise RuntimeError("mesh width target not reached")

    return Mesh(vertices=vertices, triangles=triangles, vertex_tags=tags,
                h_fem=h_fem, shape_regularity=shape_reg,
                boundary_indices=outer, boundary_thetas=th)


# ---------------------------------------------------------------------------
# plain-text exchange format


def write_mesh(path, mesh: Mesh):
    """Sections: $vertices (count then x y lines), $triangles, $tags."""
    with open(path, "w") as fh:
        fh.write(f"$vertices\n{mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"$triangles\n{mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{int(a)} {int(b)} {int(c)}\n")
        fh.write(f"$tags\n{mesh.n_vertices}\n")
        for t in mesh.vertex_tags:
            fh.write(f"{int(t)}\n")


def read_mesh(path):
    with open(path) as fh:
        tok = fh.read().split()
    pos = 0

    def expect(name):
        nonlocal pos
        if tok[pos] != name:
            raise ValueError(f"expected {name}, found {tok[pos]}")
        pos += 1

    expect("$vertices")
    n = int(tok[pos]); pos += 1
    vertices = np.array(tok[pos:pos + 2 * n], dtype=float).reshape(n, 2)
    pos += 2 * n
    expect("$triangles")
    m = int(tok[pos]); pos += 1
    triangles = np.array(tok[pos:pos + 3 * m], dtype=int).reshape(m, 3)
    pos += 3 * m
    expect("$tags")
    nt = int(tok[pos]); pos += 1
    tags = np.array(tok[pos:pos + nt], dtype=int)

    h_fem, shape_reg = _quality(vertices, triangles)
    outer = np.nonzero(tags == TRUNCATION_BOUNDARY)[0]
    th = np.arctan2(vertices[outer, 1], vertices[outer, 0]) % (2.0 * np.pi)
    order = np.argsort(th)
    return Mesh(vertices=vertices, triangles=triangles, vertex_tags=tags,
                h_fem=h_fem, shape_regularity=shape_reg,
                boundary_indices=outer[order], boundary_thetas=th[order])
