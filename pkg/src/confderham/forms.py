"""Cochains, sampled differential forms, and the conformal graph norm."""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from itertools import combinations
from math import factorial
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .complex import MetricField, SimplicialComplex, form_gram
from .exterior import (from_components, index_sets, to_components, wedge_components,
                       wedge_covectors)
from .quadrature import simplex_rule

__all__ = [
    "Cochain",
    "SampledForm",
    "AnalyticForm",
    "ConfNormReport",
    "coboundary",
    "whitney_lift",
    "whitney_values",
    "de_rham_project",
    "lp_form_norm",
    "pointwise_norm",
    "conformal_norm",
    "sampled_conformal_norm",
    "wedge",
    "sample_form",
    "unit_form",
    "save_cochain",
    "load_cochain",
]


class DegreeError(ValueError):
    """Operation would leave the range of form degrees 0..n."""


@dataclass(frozen=True)
class Cochain:
    degree: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __add__(self, other: "Cochain") -> "Cochain":
        if other.degree != self.degree:
            raise DegreeError("cannot add cochains of different degree")
        return Cochain(self.degree, self.values + other.values)

    def __sub__(self, other: "Cochain") -> "Cochain":
        return self + (-1.0) * other

    def __rmul__(self, scalar: float) -> "Cochain":
        return Cochain(self.degree, scalar * self.values)

    def check(self, cx: SimplicialComplex) -> None:
        if len(self.values) != cx.count(self.degree):
            raise ValueError(f"{self.degree}-cochain has {len(self.values)} values, "
                             f"complex has {cx.count(self.degree)} simplices")


@dataclass(frozen=True)
class SampledForm:
    """A k-form sampled at the quadrature nodes of every top simplex.

    ``coeffs`` has shape (m, q) + (n,) * k and is antisymmetric in the trailing
    axes.  ``dcoeffs`` holds samples of the exterior derivative when known.
    ``field`` optionally evaluates components at arbitrary chart points, which
    lets :func:`de_rham_project` integrate over faces instead of fitting.
    """

    degree: int
    coeffs: np.ndarray
    dcoeffs: Optional[np.ndarray] = None
    field: Optional[Callable] = None

    @property
    def n(self) -> int:
        return self.coeffs.shape[-1] if self.degree else None

    def components(self, n: int) -> np.ndarray:
        return to_components(self.coeffs, n, self.degree)

    def d_components(self, n: int) -> np.ndarray:
        if self.dcoeffs is None:
            raise ValueError("form carries no derivative samples")
        return to_components(self.dcoeffs, n, self.degree + 1)

    @classmethod
    def from_components(cls, comps, n: int, k: int, dcomps=None, field=None) -> "SampledForm":
        d = None if dcomps is None else from_components(np.asarray(dcomps, float), n, k + 1)
        return cls(k, from_components(np.asarray(comps, float), n, k), d, field)


@dataclass(frozen=True)
class AnalyticForm:
    """A form given by formulas for its components and those of its exterior derivative."""

    degree: int
    n: int
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class ConfNormReport:
    lp_part: float
    dlp_part: float

    @property
    def total(self) -> float:
        return self.lp_part + self.dlp_part


# --- coboundary and Whitney forms --------------------------------------------

def coboundary(c: Cochain, cx: SimplicialComplex) -> Cochain:
    if c.degree >= cx.n:
        raise DegreeError(f"no coboundary of a degree-{c.degree} cochain on an {cx.n}-complex")
    c.check(cx)
    return Cochain(c.degree + 1, cx.incidence[c.degree + 1].T @ c.values)


def _face_wedges(metric: MetricField, k: int):
    """For every local k-face S of a top simplex: wedges of dλ over S and over S minus one vertex."""
    n = metric.n
    out = []
    for S in combinations(range(n + 1), k + 1):
        full = wedge_covectors(metric.dbary[:, list(S), :]) if k + 1 <= n else None
        parts = []
        for i in range(k + 1):
            rest = [s for j, s in enumerate(S) if j != i]
            w = wedge_covectors(metric.dbary[:, rest, :]) if rest else np.ones((len(metric.dbary), 1))
            parts.append((S[i], (-1) ** i, w))
        out.append((S, full, parts))
    return out


def whitney_values(c: Cochain, cx: SimplicialComplex, metric: MetricField, bary: np.ndarray,
                   derivative: bool = False):
    """Components of the Whitney form of ``c`` at barycentric points ``bary`` (Q, n+1).

    Returns (m, Q, C(n, k)) and, with ``derivative``, the analytic exterior
    derivative (m, C(n, k+1)), constant on each top simplex.
    """
    c.check(cx)
    k, n = c.degree, cx.n
    fk = float(factorial(k))
    m = cx.count(n)
    val = np.zeros((m, len(bary), len(index_sets(n, k))))
    dval = np.zeros((m, len(index_sets(n, k + 1)))) if derivative and k < n else None
    for a, (S, full, parts) in enumerate(_face_wedges(metric, k)):
        cf = c.values[cx.face_index[k][:, a]]
        for vert, sign, w in parts:
            val += (fk * sign * cf)[:, None, None] * bary[None, :, vert, None] * w[:, None, :]
        if dval is not None:
            dval += (factorial(k + 1) * cf)[:, None] * full
    return (val, dval) if derivative else val


def whitney_lift(c: Cochain, cx: SimplicialComplex, metric: MetricField) -> SampledForm:
    """Sample the Whitney form of ``c`` and its exact derivative at the quadrature nodes."""
    n = cx.n
    val, dval = whitney_values(c, cx, metric, metric.bary, derivative=True)
    dcoeffs = None
    if dval is not None:
        q = len(metric.bary)
        dcoeffs = from_components(np.repeat(dval[:, None, :], q, axis=1), n, c.degree + 1)
    return SampledForm(c.degree, from_components(val, n, c.degree), dcoeffs)


def whitney_matrix(cx: SimplicialComplex, metric: MetricField, k: int):
    """Sparse matrix of the lift: cochain values -> stacked node components (m*q*C, N_k)."""
    import scipy.sparse as sp

    n = cx.n
    fk = float(factorial(k))
    m, q = metric.weights.shape
    C = len(index_sets(n, k))
    rows, cols, vals = [], [], []
    base = (np.arange(m)[:, None, None] * q + np.arange(q)[None, :, None]) * C + np.arange(C)
    for a, (S, full, parts) in enumerate(_face_wedges(metric, k)):
        block = np.zeros((m, q, C))
        for vert, sign, w in parts:
            block += fk * sign * metric.bary[None, :, vert, None] * w[:, None, :]
        rows.append(base.ravel())
        cols.append(np.repeat(cx.face_index[k][:, a], q * C))
        vals.append(block.ravel())
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    return sp.csr_matrix((vals, (rows, cols)), shape=(m * q * C, cx.count(k)))


def block_diagonal(blocks: np.ndarray):
    """Sparse block-diagonal matrix from stacked square blocks (..., C, C)."""
    import scipy.sparse as sp

    C = blocks.shape[-1]
    blocks = blocks.reshape(-1, C, C)
    base = np.arange(len(blocks))[:, None, None] * C
    rr = np.broadcast_to(base + np.arange(C)[None, :, None], blocks.shape).ravel()
    cc = np.broadcast_to(base + np.arange(C)[None, None, :], blocks.shape).ravel()
    size = len(blocks) * C
    return sp.csr_matrix((blocks.ravel(), (rr, cc)), shape=(size, size))


def whitney_mass_matrix(cx: SimplicialComplex, metric: MetricField, k: int):
    """L^2 Gram matrix of the Whitney k-forms under the node quadrature."""
    W = whitney_matrix(cx, metric, k)
    G = _gram(metric, k) * metric.measure[..., None, None]
    return (W.T @ block_diagonal(G) @ W).tocsr()


# --- de Rham map --------------------------------------------------------------

def _chart_vertices(cx: SimplicialComplex, metric: MetricField) -> np.ndarray:
    # vertex chart coordinates of each top simplex: v0 + jac @ e_j
    n = cx.n
    if cx.ambient_dim == n:
        return cx.cell_coordinates()
    m = cx.count(n)
    ref = np.vstack([np.zeros(n), np.eye(n)])
    return np.broadcast_to(ref, (m, n + 1, n))


def de_rham_project(s: SampledForm, cx: SimplicialComplex, metric: MetricField,
                    face_order: int = 8) -> Cochain:
    """Integrate a sampled k-form over every k-simplex.

    Forms with a pointwise ``field`` are integrated by a degree-``face_order``
    rule on each face.  Otherwise each top simplex's node samples are fitted by
    an affine form (exact for Whitney forms and any piecewise-affine form) and
    the face integrals are averaged over the top simplices sharing the face.
    """
    k, n = s.degree, cx.n
    verts = _chart_vertices(cx, metric)
    local = list(combinations(range(n + 1), k + 1))
    N = cx.count(k)
    if s.field is not None and cx.ambient_dim == n:
        first_t = np.full(N, -1)
        first_a = np.zeros(N, dtype=int)
        for a in range(len(local)):
            idx = cx.face_index[k][:, a]
            fresh = first_t[idx] < 0
            first_t[idx[fresh]] = np.flatnonzero(fresh)
            first_a[idx[fresh]] = a
            # later duplicates are ignored; any containing top simplex gives the same face
        out = np.zeros(N)
        bk, wk = simplex_rule(k, face_order) if k > 0 else (np.ones((1, 1)), np.ones(1))
        for a, S in enumerate(local):
            sel = np.flatnonzero(first_a == a)
            if len(sel) == 0:
                continue
            fv = verts[first_t[sel]][:, list(S), :]  # (f, k+1, n)
            pts = np.einsum("qa,fad->fqd", bk, fv)
            vals = s.field(pts)  # (f, Q, C)
            if k == 0:
                out[sel] = vals[:, 0, 0]
                continue
            E = fv[:, 1:, :] - fv[:, :1, :]
            minors = wedge_covectors(E)  # (f, C)
            out[sel] = np.einsum("q,fqc,fc->f", wk, vals, minors)
        return Cochain(k, out)

    comps = s.components(n) if k else s.coeffs[..., None]
    bary = metric.bary
    if len(bary) >= n + 1:
        vertex_vals = np.einsum("aq,mqc->mac", np.linalg.pinv(bary), comps)
    else:
        vertex_vals = np.repeat(comps.mean(axis=1, keepdims=True), n + 1, axis=1)
    acc = np.zeros(N)
    cnt = np.zeros(N)
    for a, S in enumerate(local):
        centroid = vertex_vals[:, list(S), :].mean(axis=1)
        fv = verts[:, list(S), :]
        if k == 0:
            integral = centroid[:, 0]
        else:
            minors = wedge_covectors(fv[:, 1:, :] - fv[:, :1, :])
            integral = np.einsum("mc,mc->m", centroid, minors) / factorial(k)
        idx = cx.face_index[k][:, a]
        np.add.at(acc, idx, integral)
        np.add.at(cnt, idx, 1.0)
    return Cochain(k, acc / cnt)


# --- norms --------------------------------------------------------------------

_GRAM_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _gram(metric: MetricField, k: int) -> np.ndarray:
    per = _GRAM_CACHE.setdefault(metric, {})
    if k not in per:
        per[k] = form_gram(metric, k)
    return per[k]


def pointwise_norm_components(comps: np.ndarray, metric: MetricField, k: int) -> np.ndarray:
    if k == 0:
        return np.abs(comps[..., 0])
    G = _gram(metric, k)
    sq = np.einsum("mqi,mqij,mqj->mq", comps, G, comps)
    return np.sqrt(np.maximum(sq, 0.0))


def pointwise_norm(s: SampledForm, metric: MetricField) -> np.ndarray:
    """|s|_g at every node, shape (m, q)."""
    n = metric.n
    comps = s.components(n) if s.degree else s.coeffs[..., None]
    return pointwise_norm_components(comps, metric, s.degree)


def _lp(values: np.ndarray, p: float, metric: MetricField) -> float:
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    if np.isinf(p):
        return float(values.max()) if values.size else 0.0
    return float(np.sum(metric.measure * values**p) ** (1.0 / p))


def lp_form_norm(s: SampledForm, p: float, metric: MetricField) -> float:
    """(sum over nodes of weight * vol_density * |s|_g^p)^(1/p)."""
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    return _lp(pointwise_norm(s, metric), p, metric)


def conformal_norm(c: Cochain, cx: SimplicialComplex, metric: MetricField) -> ConfNormReport:
    """Graph norm ||c||_{L^{n/k}} + ||dc||_{L^{n/(k+1)}} of the Whitney lift.

    Degree 0 uses the sup norm (nodes and vertices); top degree has no
    derivative part.
    """
    k, n = c.degree, cx.n
    lift = whitney_lift(c, cx, metric)
    if k == 0:
        lp = max(float(np.max(np.abs(lift.coeffs))), float(np.max(np.abs(c.values))))
    else:
        lp = lp_form_norm(lift, n / k, metric)
    if k == n:
        return ConfNormReport(lp, 0.0)
    dlift = whitney_lift(coboundary(c, cx), cx, metric)
    return ConfNormReport(lp, lp_form_norm(dlift, n / (k + 1), metric))


def sampled_conformal_norm(s: SampledForm, metric: MetricField) -> ConfNormReport:
    """Graph norm of a sampled form from its own derivative samples (sup at nodes in degree 0)."""
    k, n = s.degree, metric.n
    lp = float(np.max(np.abs(s.coeffs))) if k == 0 else lp_form_norm(s, n / k, metric)
    if k == n or s.dcoeffs is None and k + 1 > n:
        return ConfNormReport(lp, 0.0)
    ds = SampledForm(k + 1, s.dcoeffs)
    return ConfNormReport(lp, lp_form_norm(ds, n / (k + 1), metric))


# --- products -----------------------------------------------------------------

def _comps(coeffs: np.ndarray, n: int, k: int) -> np.ndarray:
    return to_components(coeffs, n, k) if k else coeffs[..., None]


def _full(comps: np.ndarray, n: int, k: int) -> np.ndarray:
    return from_components(comps, n, k) if k else comps[..., 0]


def wedge(a: SampledForm, b: SampledForm, n: Optional[int] = None) -> SampledForm:
    """Node-wise exterior product; derivative samples follow the Leibniz rule."""
    k, l = a.degree, b.degree
    if n is None:
        n = a.n or b.n
        if n is None:
            raise ValueError("pass n for products of two 0-forms")
    if k + l > n:
        raise DegreeError(f"degree overflow: {k} + {l} > {n}")
    ca, cb = _comps(a.coeffs, n, k), _comps(b.coeffs, n, l)
    prod = wedge_components(ca, cb, n, k, l)
    dprod = None
    if k + l + 1 <= n:
        if a.dcoeffs is None or b.dcoeffs is None:
            raise ValueError("wedge operands must carry derivative samples")
        da, db = _comps(a.dcoeffs, n, k + 1), _comps(b.dcoeffs, n, l + 1)
        sign = -1.0 if k % 2 else 1.0
        dprod = _full(wedge_components(da, cb, n, k + 1, l)
                      + sign * wedge_components(ca, db, n, k, l + 1), n, k + l + 1)
    field = None
    if a.field is not None and b.field is not None:
        fa, fb = a.field, b.field
        field = lambda x: wedge_components(fa(x), fb(x), n, k, l)
    return SampledForm(k + l, _full(prod, n, k + l), dprod, field)


# --- constructors -------------------------------------------------------------

def sample_form(form: AnalyticForm, metric: MetricField) -> SampledForm:
    """Sample an analytic form (and its derivative) at the quadrature nodes."""
    n, k = form.n, form.degree
    x = metric.x
    comps = np.asarray(form.value(x), float)
    dcoeffs = None
    if form.derivative is not None and k < n:
        dcoeffs = _full(np.asarray(form.derivative(x), float), n, k + 1)
    return SampledForm(k, _full(comps, n, k), dcoeffs, form.value)


def unit_form(metric: MetricField) -> SampledForm:
    """The constant function 1 with zero differential."""
    n = metric.n
    shape = metric.weights.shape
    return SampledForm(0, np.ones(shape), np.zeros(shape + (n,)),
                       lambda x: np.ones(x.shape[:-1] + (1,)))


def constant_form(n: int, k: int, comps) -> AnalyticForm:
    """Constant-coefficient k-form; closed."""
    comps = np.asarray(comps, float)
    zero = np.zeros(len(index_sets(n, k + 1))) if k < n else None
    return AnalyticForm(
        k, n,
        lambda x: np.broadcast_to(comps, x.shape[:-1] + comps.shape).copy(),
        (lambda x: np.broadcast_to(zero, x.shape[:-1] + zero.shape).copy()) if zero is not None else None,
    )


# --- text IO ------------------------------------------------------------------

def save_cochain(path, c: Cochain) -> None:
    lines = [f"cochain {c.degree} {len(c.values)}"]
    lines += [f"{i} {v!r}" for i, v in enumerate(c.values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cochain(path) -> Cochain:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split()
    if head[0] != "cochain":
        raise ValueError("not a cochain file")
    k, N = int(head[1]), int(head[2])
    vals = np.zeros(N)
    for line in lines[1:1 + N]:
        i, v = line.split()
        vals[int(i)] = float(v)
    return Cochain(k, vals)
