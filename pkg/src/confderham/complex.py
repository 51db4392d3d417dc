"""Oriented simplicial complexes carrying a per-quadrature-node metric."""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exterior import compound
from .quadrature import simplex_rule

__all__ = [
    "SimplicialComplex",
    "MetricField",
    "MetricModel",
    "gram_on_forms",
    "form_gram",
    "refine",
    "save_mesh",
    "load_mesh",
]


class MetricError(ValueError):
    """Raised when a metric tensor fails to be symmetric positive definite."""


def _local_faces(n: int, k: int) -> list[tuple[int, ...]]:
    return list(combinations(range(n + 1), k + 1))


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """A pure oriented simplicial complex.

    Simplices of every degree are stored with increasing vertex labels; that
    ordering fixes their orientation.  ``orientation[t]`` is +1 when the
    increasing ordering of top simplex ``t`` agrees with the orientation of the
    underlying manifold.
    """

    points: np.ndarray
    simplices: tuple
    incidence: tuple
    boundary: tuple
    orientation: np.ndarray
    face_index: tuple
    cell_points: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.simplices[-1].shape[1] - 1

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    def count(self, k: int) -> int:
        return len(self.simplices[k])

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.simplices)

    def euler_characteristic(self) -> int:
        return int(sum((-1) ** k * c for k, c in enumerate(self.counts)))

    def cell_coordinates(self) -> np.ndarray:
        """Vertex coordinates of every top simplex, shape (m, n + 1, d)."""
        if self.cell_points is not None:
            return self.cell_points
        return self.points[self.simplices[-1]]

    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary[0])

    def interior(self, k: int) -> np.ndarray:
        """Indices of k-simplices not contained in the boundary."""
        return np.flatnonzero(~self.boundary[k])

    def coboundary_matrix(self, k: int) -> sp.csr_matrix:
        """Matrix of the coboundary C^k -> C^{k+1} (transpose of the boundary operator)."""
        if k >= self.n:
            raise ValueError(f"no coboundary out of top degree {self.n}")
        return self.incidence[k + 1].T.tocsr()

    @classmethod
    def from_simplices(cls, points, tops, cell_points=None, orientation=None) -> "SimplicialComplex":
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        tops = np.asarray(tops, dtype=np.int64)
        m, n1 = tops.shape
        n = n1 - 1
        order = np.argsort(tops, axis=1, kind="stable")
        sorted_tops = np.take_along_axis(tops, order, axis=1)
        parity = np.array([_parity(row) for row in order]) if n > 0 else np.ones(m)
        if cell_points is not None:
            cell_points = np.take_along_axis(np.asarray(cell_points, float), order[:, :, None], axis=1)
        if len(np.unique(sorted_tops, axis=0)) != m:
            raise ValueError("duplicate top simplices")
        if np.any(sorted_tops[:, 1:] == sorted_tops[:, :-1]):
            raise ValueError("degenerate simplex with repeated vertex")

        simplices, face_index = [], []
        for k in range(n + 1):
            local = _local_faces(n, k)
            cand = sorted_tops[:, local].reshape(-1, k + 1)
            if k == n:
                uniq, inv = sorted_tops, np.arange(m)
            else:
                uniq, inv = np.unique(cand, axis=0, return_inverse=True)
            simplices.append(uniq)
            face_index.append(np.asarray(inv).reshape(m, len(local)))

        incidence = [None]
        for k in range(1, n + 1):
            local = _local_faces(n, k)
            lower = {s: i for i, s in enumerate(_local_faces(n, k - 1))}
            rows, cols, vals = [], [], []
            for a, S in enumerate(local):
                for pos in range(k + 1):
                    Sp = S[:pos] + S[pos + 1:]
                    rows.append(face_index[k - 1][:, lower[Sp]])
                    cols.append(face_index[k][:, a])
                    vals.append(np.full(m, (-1) ** pos, dtype=np.int64))
            rows, cols, vals = map(np.concatenate, (rows, cols, vals))
            key = cols * len(simplices[k - 1]) + rows
            _, first = np.unique(key, return_index=True)
            mat = sp.csr_matrix(
                (vals[first], (rows[first], cols[first])),
                shape=(len(simplices[k - 1]), len(simplices[k])),
                dtype=np.int64,
            )
            incidence.append(mat)

        boundary = [np.zeros(len(s), dtype=bool) for s in simplices]
        if n >= 1:
            cofaces = np.asarray(abs(incidence[n]).sum(axis=1)).ravel()
            boundary[n - 1] = cofaces == 1
            for k in range(n - 2, -1, -1):
                hits = abs(incidence[k + 1]) @ boundary[k + 1].astype(np.int64)
                boundary[k] = np.asarray(hits).ravel() > 0

        cx = cls(points, tuple(simplices), tuple(incidence), tuple(boundary),
                 np.ones(m), tuple(face_index), cell_points)
        if orientation is None:
            orient = _geometric_orientation(cx)
        else:
            orient = np.asarray(orientation, dtype=float) * parity
        return replace(cx, orientation=orient)


def _parity(perm) -> float:
    perm = list(perm)
    sign = 1.0
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _edge_matrix(cells: np.ndarray) -> np.ndarray:
    # (m, d, n): columns v_j - v_0
    return np.transpose(cells[:, 1:, :] - cells[:, :1, :], (0, 2, 1))


def _geometric_orientation(cx: SimplicialComplex) -> np.ndarray:
    cells = cx.cell_coordinates()
    E = _edge_matrix(cells)
    n, d = cx.n, cx.ambient_dim
    if n == 0:
        return np.ones(len(cells))
    if d == n:
        return np.sign(np.linalg.det(E))
    if d == n + 1:
        normal = cells.mean(axis=1)
        return np.sign(np.linalg.det(np.concatenate([normal[:, :, None], E], axis=2)))
    return np.ones(len(cells))


class MetricModel:
    """Analytic metric: evaluates (g, lambda) at ambient points.

    ``frame`` maps chart vectors to ambient vectors; for flat charts it is the
    identity and ``g`` is the metric tensor in ambient coordinates.
    """

    name = "flat"

    def tensor(self, x: np.ndarray, frame: np.ndarray):
        g = np.einsum("...ai,...aj->...ij", frame, frame)
        return g, np.ones(x.shape[:-1])

    def snap(self, points: np.ndarray) -> np.ndarray:
        return points


class ConformalRescale(MetricModel):
    """Multiplies the conformal factor of a base model by ``factor(x)`` or a constant."""

    def __init__(self, base: MetricModel, factor):
        self.base = base
        self.factor = factor
        self.name = f"{base.name}*rescaled"

    def tensor(self, x, frame):
        g, lam = self.base.tensor(x, frame)
        f = self.factor(x) if callable(self.factor) else self.factor
        return g, lam * f

    def snap(self, points):
        return self.base.snap(points)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Metric data at the quadrature nodes of every top simplex.

    The effective metric is ``lam**2 * g``.  Chart coordinates are ambient
    coordinates for flat meshes (ambient dim == n) and reference-simplex
    coordinates otherwise; ``jac`` maps reference to chart coordinates.
    """

    bary: np.ndarray
    ref_weights: np.ndarray
    jac: np.ndarray
    weights: np.ndarray
    x: np.ndarray
    g: np.ndarray
    lam: np.ndarray
    dbary: np.ndarray
    order: int = 2
    model: Optional[MetricModel] = None

    @property
    def n(self) -> int:
        return self.g.shape[-1]

    @property
    def vol_density(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g)) * self.lam ** self.n

    @property
    def measure(self) -> np.ndarray:
        """Weight times volume density at every node, shape (m, q)."""
        return self.weights * self.vol_density

    def total_volume(self) -> float:
        return float(self.measure.sum())

    def inverse_metric(self) -> np.ndarray:
        """Inverse of the effective metric lam^2 g, acting on covectors."""
        return np.linalg.inv(self.g) / (self.lam**2)[..., None, None]

    def rescaled(self, factor) -> "MetricField":
        """Conformal change g -> factor^2 g (constant, callable of x, or per-node array)."""
        if callable(factor):
            f = factor(self.x)
        else:
            f = np.broadcast_to(np.asarray(factor, dtype=float), self.lam.shape)
        if np.any(f <= 0):
            raise MetricError("conformal factor must be positive")
        model = None
        if self.model is not None and (callable(factor) or np.ndim(factor) == 0):
            model = ConformalRescale(self.model, factor)
        return replace(self, lam=self.lam * f, model=model)

    def validate(self) -> None:
        if not np.allclose(self.g, np.swapaxes(self.g, -1, -2), rtol=1e-12, atol=1e-14):
            raise MetricError("metric tensor is not symmetric")
        if np.any(np.linalg.eigvalsh(self.g)[..., 0] <= 0):
            raise MetricError("metric tensor is not positive definite")
        if np.any(self.lam <= 0):
            raise MetricError("conformal factor must be positive")

    @classmethod
    def from_model(cls, cx: SimplicialComplex, model: Optional[MetricModel] = None,
                   order: int = 2) -> "MetricField":
        model = model or MetricModel()
        geo = _chart_geometry(cx, order)
        g, lam = model.tensor(geo["x"], geo["frame"])
        mf = cls(geo["bary"], geo["ref_weights"], geo["jac"], geo["weights"], geo["x"],
                 np.asarray(g, float), np.asarray(lam, float) * np.ones(geo["weights"].shape),
                 geo["dbary"], order, model)
        mf.validate()
        return mf

    @classmethod
    def from_arrays(cls, cx: SimplicialComplex, g, lam=None, order: int = 2) -> "MetricField":
        geo = _chart_geometry(cx, order)
        shape = geo["weights"].shape
        g = np.broadcast_to(np.asarray(g, float), shape + (cx.n, cx.n)).copy()
        lam = np.ones(shape) if lam is None else np.broadcast_to(np.asarray(lam, float), shape).copy()
        mf = cls(geo["bary"], geo["ref_weights"], geo["jac"], geo["weights"], geo["x"],
                 g, lam, geo["dbary"], order, None)
        mf.validate()
        return mf


def _chart_geometry(cx: SimplicialComplex, order: int) -> dict:
    n, d = cx.n, cx.ambient_dim
    bary, ref_w = simplex_rule(n, order)
    cells = cx.cell_coordinates()
    m = len(cells)
    E = _edge_matrix(cells)
    x = np.einsum("qa,mad->mqd", bary, cells)
    if d == n:
        jac = E
        frame = np.broadcast_to(np.eye(n), (m, len(bary), n, n))
    else:
        jac = np.broadcast_to(np.eye(n), (m, n, n)).copy()
        frame = np.broadcast_to(E[:, None], (m, len(bary), d, n))
    det = np.linalg.det(jac)
    if np.any(np.abs(det) < 1e-300):
        raise ValueError("degenerate simplex in chart")
    inv = np.linalg.inv(jac)
    dbary = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
    weights = ref_w[None, :] * np.abs(det)[:, None]
    return dict(bary=bary, ref_weights=ref_w, jac=jac, weights=weights, x=x,
                frame=frame, dbary=dbary)


def form_gram(metric: MetricField, k: int) -> np.ndarray:
    """Gram matrices of the induced inner product on k-covectors at every node.

    Entry (I, J) is det of the inverse-metric block G^{-1}[I, J]; shape (m, q, C, C).
    """
    return compound(metric.inverse_metric(), k)


def gram_on_forms(metric: MetricField, node, k: int) -> np.ndarray:
    """Gram matrix on the standard basis dx^I of Lambda^k at one node ``(simplex, q)``."""
    if not 0 <= k <= metric.n:
        raise ValueError(f"form degree {k} outside [0, {metric.n}]")
    t, q = node
    Ginv = np.linalg.inv(metric.g[t, q]) / metric.lam[t, q] ** 2
    ev = np.linalg.eigvalsh(metric.g[t, q])
    if ev[0] <= 0:
        raise MetricError("metric tensor is not positive definite")
    return compound(Ginv, k)


# --- refinement -----------------------------------------------------------

def _children_template(n: int):
    V = lambda i: ("v", i)
    M = lambda i, j: ("e", min(i, j), max(i, j))
    if n == 1:
        return [[V(0), M(0, 1)], [M(0, 1), V(1)]]
    if n == 2:
        return [[V(0), M(0, 1), M(0, 2)], [M(0, 1), V(1), M(1, 2)],
                [M(0, 2), M(1, 2), V(2)], [M(0, 1), M(1, 2), M(0, 2)]]
    if n == 3:
        x0, x1, x2, x3 = V(0), V(1), V(2), V(3)
        x01, x02, x03, x12, x13, x23 = M(0, 1), M(0, 2), M(0, 3), M(1, 2), M(1, 3), M(2, 3)
        return [[x0, x01, x02, x03], [x01, x1, x12, x13], [x02, x12, x2, x23],
                [x03, x13, x23, x3], [x01, x02, x03, x13], [x01, x02, x12, x13],
                [x02, x03, x13, x23], [x02, x12, x13, x23]]
    raise NotImplementedError("uniform refinement implemented for n <= 3")


def refine(cx: SimplicialComplex, metric: MetricField):
    """Uniform (red) subdivision: 2^n children per top simplex.

    Analytic metrics are re-evaluated at the new nodes; sampled metrics are
    carried over through a per-parent affine fit of ``g`` and ``lam``.
    """
    n = cx.n
    tmpl = _children_template(n)
    tops = cx.simplices[n]
    m = len(tops)
    edge_pos = {s: i for i, s in enumerate(_local_faces(n, 1))}
    N0 = cx.count(0)
    mid = N0 + cx.face_index[1]
    cells = cx.cell_coordinates()
    new_tops, child_cells, child_bary = [], [], []
    for child in tmpl:
        ids, bary = [], []
        for lab in child:
            b = np.zeros(n + 1)
            if lab[0] == "v":
                ids.append(tops[:, lab[1]])
                b[lab[1]] = 1.0
            else:
                ids.append(mid[:, edge_pos[(lab[1], lab[2])]])
                b[[lab[1], lab[2]]] = 0.5
            bary.append(b)
        bary = np.array(bary)
        new_tops.append(np.stack(ids, axis=1))
        child_cells.append(np.einsum("va,mad->mvd", bary, cells))
        child_bary.append(bary)
    new_tops = np.stack(new_tops, axis=1).reshape(-1, n + 1)
    child_cells = np.stack(child_cells, axis=1).reshape(-1, n + 1, cx.ambient_dim)
    e = cx.simplices[1]
    mids = 0.5 * (cx.points[e[:, 0]] + cx.points[e[:, 1]])
    points = np.vstack([cx.points, mids])
    model = metric.model
    if model is not None:
        points = model.snap(points)
    use_cells = cx.cell_points is not None
    if model is not None and not use_cells:
        child_cells = None
    parent_orient = np.repeat(cx.orientation, len(tmpl))
    new_cx = SimplicialComplex.from_simplices(points, new_tops,
                                              cell_points=child_cells if use_cells else None)
    if cx.ambient_dim == n + 1:
        # keep the parent's orientation convention on embedded surfaces
        cells_new = new_cx.cell_coordinates()
        normal = cells_new.mean(axis=1)
        E = _edge_matrix(cells_new)
        s = np.sign(np.linalg.det(np.concatenate([normal[:, :, None], E], axis=2)))
        new_cx = replace(new_cx, orientation=s)
    elif cx.ambient_dim != n:
        new_cx = replace(new_cx, orientation=parent_orient)
    if model is None and cx.ambient_dim != n:
        # embedded mesh without an analytic model: piecewise-flat induced metric
        model = MetricModel()
    if model is not None:
        return new_cx, MetricField.from_model(new_cx, model, metric.order)

    # sampled metric on a flat chart: affine fit per parent in barycentric coordinates
    bq = metric.bary
    nch = len(tmpl)
    geo = _chart_geometry(new_cx, metric.order)
    coef_g = _affine_fit(bq, metric.g.reshape(m, len(bq), -1))
    coef_l = _affine_fit(bq, metric.lam[..., None])
    raw = new_tops.reshape(m, nch, n + 1)
    perm = np.argsort(raw, axis=2, kind="stable")
    cb = np.stack(child_bary)  # (nch, n+1 child vertices, n+1 parent bary)
    cb_sorted = np.take_along_axis(np.broadcast_to(cb, (m,) + cb.shape), perm[..., None], axis=2)
    nodes = np.einsum("qa,mcab->mcqb", bq, cb_sorted)
    g = np.einsum("mcqb,mbx->mcqx", nodes, coef_g).reshape(-1, len(bq), n, n)
    lam = np.einsum("mcqb,mbx->mcqx", nodes, coef_l)[..., 0].reshape(-1, len(bq))
    mf = MetricField(geo["bary"], geo["ref_weights"], geo["jac"], geo["weights"], geo["x"],
                     g, lam, geo["dbary"], metric.order, None)
    mf.validate()
    return new_cx, mf


def _affine_fit(bary: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Least-squares affine (in barycentrics) fit; returns vertex values (m, n+1, c)."""
    if len(bary) < bary.shape[1]:
        return np.repeat(values.mean(axis=1, keepdims=True), bary.shape[1], axis=1)
    pinv = np.linalg.pinv(bary)
    return np.einsum("aq,mqc->mac", pinv, values)


# --- plain-text mesh format ---------------------------------------------------

def save_mesh(path, cx: SimplicialComplex, metric: Optional[MetricField] = None) -> None:
    """Write the complex (and optional node metric) in the plain-text mesh format."""
    n, d = cx.n, cx.ambient_dim
    lines = ["confderham-mesh 1", f"dimension {n} {d}",
             "counts " + " ".join(str(c) for c in cx.counts), "points"]
    lines += [" ".join(repr(float(v)) for v in p) for p in cx.points]
    for k in range(1, n + 1):
        lines.append(f"simplices {k}")
        lines += [" ".join(str(int(v)) for v in s) for s in cx.simplices[k]]
    lines.append("orientation")
    lines += [str(int(o)) for o in cx.orientation]
    if cx.cell_points is not None:
        lines.append("cells")
        lines += [" ".join(repr(float(v)) for v in c.ravel()) for c in cx.cell_points]
    if metric is not None:
        q = len(metric.bary)
        lines.append(f"metric {metric.order} {q}")
        for t in range(metric.g.shape[0]):
            for j in range(q):
                vals = list(metric.g[t, j].ravel()) + [metric.lam[t, j]]
                lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path):
    """Read a mesh written by :func:`save_mesh`; returns (complex, metric or None)."""
    it = iter(Path(path).read_text(encoding="utf-8").splitlines())
    if next(it).split()[0] != "confderham-mesh":
        raise ValueError("not a confderham mesh file")
    _, n, d = next(it).split()
    n, d = int(n), int(d)
    counts = [int(c) for c in next(it).split()[1:]]
    assert next(it) == "points"
    points = np.array([[float(v) for v in next(it).split()] for _ in range(counts[0])]).reshape(-1, d)
    simplices = {}
    for k in range(1, n + 1):
        head = next(it).split()
        assert head == ["simplices", str(k)]
        simplices[k] = np.array([[int(v) for v in next(it).split()] for _ in range(counts[k])])
    assert next(it) == "orientation"
    orient = np.array([float(next(it)) for _ in range(counts[n])])
    cells = None
    metric_head = None
    rest = list(it)
    pos = 0
    if pos < len(rest) and rest[pos] == "cells":
        cells = np.array([[float(v) for v in rest[pos + 1 + i].split()] for i in range(counts[n])])
        cells = cells.reshape(counts[n], n + 1, d)
        pos += 1 + counts[n]
    if pos < len(rest) and rest[pos].startswith("metric"):
        metric_head = rest[pos].split()
        pos += 1
    cx = SimplicialComplex.from_simplices(points, simplices[n], cell_points=cells, orientation=orient)
    for k in range(1, n):
        if not np.array_equal(cx.simplices[k], simplices[k]):
            raise ValueError(f"{k}-simplices inconsistent with top simplices")
    metric = None
    if metric_head is not None:
        order, q = int(metric_head[1]), int(metric_head[2])
        vals = np.array([[float(v) for v in rest[pos + i].split()] for i in range(counts[n] * q)])
        g = vals[:, : n * n].reshape(counts[n], q, n, n)
        lam = vals[:, n * n].reshape(counts[n], q)
        metric = MetricField.from_arrays(cx, g, lam, order)
    return cx, metric
