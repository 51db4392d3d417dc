"""Catalog of model spaces: meshes plus analytic metrics."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations, product
from typing import Optional, Sequence

import numpy as np

from .complex import MetricError, MetricField, MetricModel, SimplicialComplex, refine

KINDS = ("euclidean_box", "euclidean_ball", "round_sphere", "poincare_ball", "sol_box",
         "annulus", "flat_torus")


class PoincareModel(MetricModel):
    """Flat coordinates with conformal factor 2 / (1 - |x|^2)."""

    name = "poincare"

    def tensor(self, x, frame):
        g, _ = super().tensor(x, frame)
        r2 = np.sum(x**2, axis=-1)
        if np.any(r2 >= 1.0):
            raise MetricError("Poincare factor evaluated outside the unit ball")
        return g, 2.0 / (1.0 - r2)


class SolModel(MetricModel):
    """Left-invariant SOL metric e^{-2z} dx^2 + e^{2z} dy^2 + dz^2."""

    name = "sol"

    def tensor(self, x, frame):
        z = x[..., 2]
        G = np.zeros(x.shape[:-1] + (3, 3))
        G[..., 0, 0] = np.exp(-2.0 * z)
        G[..., 1, 1] = np.exp(2.0 * z)
        G[..., 2, 2] = 1.0
        g = np.einsum("...ai,...ab,...bj->...ij", frame, G, frame)
        return g, np.ones(x.shape[:-1])


class RoundSphereModel(MetricModel):
    """Round metric pulled back through radial projection of a polyhedral surface."""

    name = "round_sphere"

    def __init__(self, radius: float = 1.0):
        self.radius = radius

    def tensor(self, x, frame):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        u = x / r
        d = x.shape[-1]
        P = (np.eye(d) - u[..., :, None] * u[..., None, :]) * (self.radius / r)[..., None]
        dp = P @ frame
        g = np.einsum("...ai,...aj->...ij", dp, dp)
        return g, np.ones(x.shape[:-1])

    def snap(self, points):
        return self.radius * points / np.linalg.norm(points, axis=1, keepdims=True)


@dataclass(frozen=True)
class ModelSpaceSpec:
    """Parameters of a catalog model space.

    ``resolution`` means cells per unit side for boxes and tori, angular cells
    per quarter turn (n = 2) or per cube-face edge (n = 3) for balls and
    annuli, and the number of octahedral refinement levels plus one for spheres.
    """

    kind: str
    n: int = 2
    resolution: int = 1
    radius: float = 1.0
    inner_radius: Optional[float] = None
    extents: Optional[Sequence[float]] = None
    layers: Optional[int] = None
    radii: Optional[Sequence[float]] = None
    axes: Optional[Sequence[Sequence[float]]] = None
    order: int = 2


# --- mesh generators ------------------------------------------------------

def grid_mesh(axes: Sequence[np.ndarray], periodic: bool = False):
    """Freudenthal (Kuhn) triangulation of a tensor grid.

    Every cell is split into n! simplices along its main diagonal, which gives
    a conforming mesh.  With ``periodic`` the last grid line is identified with
    the first; unwrapped per-simplex coordinates are returned as ``cells``.
    """
    axes = [np.asarray(a, float) for a in axes]
    n = len(axes)
    shape = tuple(len(a) for a in axes)
    ncell = tuple(s - 1 for s in shape)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    corner = np.stack(np.meshgrid(*[np.arange(c) for c in ncell], indexing="ij"), -1).reshape(-1, n)
    tops, cells = [], []
    for perm in permutations(range(n)):
        path = [corner.copy()]
        cur = corner.copy()
        for ax in perm:
            cur = cur.copy()
            cur[:, ax] += 1
            path.append(cur)
        idx = np.stack(path, axis=1)  # (ncells, n+1, n) integer grid coords
        coords = np.stack([axes[a][idx[..., a]] for a in range(n)], axis=-1)
        if periodic:
            wrapped = idx % np.array(ncell)
            flat = np.ravel_multi_index(tuple(wrapped[..., a] for a in range(n)), ncell)
        else:
            flat = np.ravel_multi_index(tuple(idx[..., a] for a in range(n)), shape)
        tops.append(flat)
        cells.append(coords)
    tops = np.concatenate(tops)
    cells = np.concatenate(cells)
    if periodic:
        pts = np.stack(np.meshgrid(*[a[:-1] for a in axes], indexing="ij"), -1).reshape(-1, n)
        return pts, tops, cells
    return grid, tops, None


def sphere_surface(n: int, resolution: int):
    """Triangulated unit sphere S^{n-1} (n = 2: polygon, n = 3: projected cube surface)."""
    if n == 2:
        M = 4 * resolution
        t = 2 * np.pi * np.arange(M) / M
        pts = np.column_stack([np.cos(t), np.sin(t)])
        segs = np.column_stack([np.arange(M), (np.arange(M) + 1) % M])
        return pts, segs
    if n == 3:
        N = resolution
        lattice = np.array(list(product(range(N + 1), repeat=3)))
        on_surface = np.any((lattice == 0) | (lattice == N), axis=1)
        lat = lattice[on_surface]
        index = {tuple(p): i for i, p in enumerate(lat)}
        tris = []
        for axis in range(3):
            a, b = [i for i in range(3) if i != axis]
            for side in (0, N):
                for i in range(N):
                    for j in range(N):
                        quad = []
                        for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                            p = [0, 0, 0]
                            p[axis], p[a], p[b] = side, i + di, j + dj
                            quad.append(index[tuple(p)])
                        # split along the diagonal through the smallest label
                        k = int(np.argmin(quad))
                        q = quad[k:] + quad[:k]
                        tris.append((q[0], q[1], q[2]))
                        tris.append((q[0], q[2], q[3]))
        pts = lat * (2.0 / N) - 1.0
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        return pts, np.array(tris)
    raise NotImplementedError("sphere surfaces implemented for n = 2, 3")


def layered_mesh(n: int, resolution: int, radii: Sequence[float]):
    """Spherical shells at the given radii, prisms split into simplices.

    A leading radius of 0 adds a central vertex and a cone over the innermost
    shell.  Prisms use the rule "lower label at the bottom to higher label at
    the top" for their diagonals, which keeps the mesh conforming.
    """
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    surf, faces = sphere_surface(n, resolution)
    faces = np.sort(faces, axis=1)
    core = radii[0] == 0.0
    shells = radii[1:] if core else radii
    Ns = len(surf)
    offset = 1 if core else 0
    pts = [np.zeros((1, n))] if core else []
    for r in shells:
        pts.append(r * surf)
    pts = np.vstack(pts)
    tops = []
    if core:
        tops.append(np.column_stack([np.zeros(len(faces), int), faces + offset]))
    for j in range(len(shells) - 1):
        lo = faces + offset + j * Ns
        hi = lo + Ns
        if n == 2:
            a, b = lo[:, 0], lo[:, 1]
            A, B = hi[:, 0], hi[:, 1]
            tops += [np.column_stack([a, b, B]), np.column_stack([a, A, B])]
        else:
            a, b, c = lo.T
            A, B, C = hi.T
            tops += [np.column_stack([a, b, c, C]), np.column_stack([a, b, B, C]),
                     np.column_stack([a, A, B, C])]
    return pts, np.vstack(tops)


def cross_polytope_sphere(n: int):
    """Boundary of the (n+1)-dimensional cross-polytope: a closed S^n (octahedron for n = 2)."""
    d = n + 1
    pts = np.vstack([np.eye(d), -np.eye(d)])
    tops = []
    for signs in product((0, 1), repeat=d):
        tops.append([i + d * s for i, s in enumerate(signs)])
    return pts, np.array(tops)


def geometric_radii(r_in: float, r_out: float, layers: int) -> np.ndarray:
    return r_in * (r_out / r_in) ** (np.arange(layers + 1) / layers)


def _default_layers(n: int, resolution: int, r_in: float, r_out: float) -> int:
    dtheta = (np.pi / 2) / resolution
    return max(1, int(np.ceil(np.log(r_out / r_in) / dtheta)))


def _ball_radii(spec: ModelSpaceSpec) -> np.ndarray:
    if spec.radii is not None:
        return np.asarray(spec.radii, float)
    R = spec.radius
    core = spec.inner_radius if spec.inner_radius is not None else R / 4.0
    # core shell radius, then geometric layers out to R
    layers = spec.layers or _default_layers(spec.n, spec.resolution, core, R)
    return np.concatenate([[0.0], geometric_radii(core, R, layers)])


def build_model_space(spec: ModelSpaceSpec):
    """Build (complex, metric) for a catalog model space."""
    kind, n = spec.kind, spec.n
    if kind not in KINDS:
        raise ValueError(f"unknown model space kind {kind!r}")
    if spec.resolution < 1:
        raise ValueError("resolution must be >= 1")
    if spec.radius <= 0 or (spec.inner_radius is not None and spec.inner_radius <= 0):
        raise ValueError("radii must be positive")
    model: MetricModel = MetricModel()
    cells = None
    if kind == "euclidean_box":
        ext = np.broadcast_to(np.asarray(spec.extents if spec.extents is not None else 1.0, float), (n,))
        if spec.axes is not None:
            axes = spec.axes
        else:
            axes = [np.linspace(0.0, e, int(round(spec.resolution * e)) + 1) for e in ext]
        pts, tops, _ = grid_mesh(axes)
    elif kind == "flat_torus":
        ext = np.broadcast_to(np.asarray(spec.extents if spec.extents is not None else 1.0, float), (n,))
        N = max(3, spec.resolution)
        axes = [np.linspace(0.0, e, N + 1) for e in ext]
        pts, tops, cells = grid_mesh(axes, periodic=True)
    elif kind == "sol_box":
        if n != 3:
            raise ValueError("sol_box requires n = 3")
        model = SolModel()
        if spec.axes is not None:
            axes = spec.axes
        else:
            ext = np.broadcast_to(np.asarray(spec.extents if spec.extents is not None else 1.0, float), (3,))
            axes = [np.linspace(-e, e, 2 * spec.resolution + 1) for e in ext]
        pts, tops, _ = grid_mesh(axes)
    elif kind == "round_sphere":
        model = RoundSphereModel(spec.radius)
        pts, tops = cross_polytope_sphere(n)
        cx = SimplicialComplex.from_simplices(spec.radius * pts, tops)
        metric = MetricField.from_model(cx, model, spec.order)
        for _ in range(spec.resolution - 1):
            cx, metric = refine(cx, metric)
        return cx, metric
    elif kind in ("euclidean_ball", "poincare_ball"):
        if kind == "poincare_ball":
            model = PoincareModel()
            if spec.radius >= 1.0:
                raise ValueError("poincare_ball radius must be < 1")
        pts, tops = layered_mesh(n, spec.resolution, _ball_radii(spec))
    elif kind == "annulus":
        if spec.radii is not None:
            radii = np.asarray(spec.radii, float)
        else:
            r_in = spec.inner_radius if spec.inner_radius is not None else spec.radius / 2.0
            if r_in >= spec.radius:
                raise ValueError("inner radius must be below the outer radius")
            layers = spec.layers or _default_layers(n, spec.resolution, r_in, spec.radius)
            radii = geometric_radii(r_in, spec.radius, layers)
        pts, tops = layered_mesh(n, spec.resolution, radii)
    cx = SimplicialComplex.from_simplices(pts, tops, cell_points=cells)
    metric = MetricField.from_model(cx, model, spec.order)
    return cx, metric


def list_catalog() -> list[str]:
    return list(KINDS)
