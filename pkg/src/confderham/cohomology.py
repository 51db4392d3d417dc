"""Cohomology ranks, minimal-norm primitives and the Sobolev-constant diagnostics."""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad
from scipy.sparse.csgraph import breadth_first_order

from .capacity import sphere_area
from .catalog import geometric_radii, layered_mesh
from .complex import MetricField, SimplicialComplex
from .exterior import index_sets
from .forms import (AnalyticForm, Cochain, _gram, block_diagonal, coboundary, de_rham_project,
                    lp_form_norm, whitney_lift, whitney_mass_matrix, whitney_matrix)

__all__ = [
    "CohomologyReport",
    "PrimitiveResult",
    "SobolevConstantSeries",
    "TorsionSeries",
    "KNRReport",
    "NotExactError",
    "PrimitiveConvergenceError",
    "rank_mod_p",
    "cohomology_ranks",
    "minimal_primitive",
    "sobolev_constant",
    "torsion_probe_degree1",
    "integrate_top",
    "transport_primitive",
    "knr_probe_parabolic",
    "knr_probe_hyperbolic",
]

PRIME = 2_147_483_647  # 2^31 - 1


class NotExactError(ValueError):
    """The form is not a coboundary (in the requested mode)."""


class PrimitiveConvergenceError(RuntimeError):
    def __init__(self, msg: str, best: "PrimitiveResult"):
        super().__init__(msg)
        self.best = best


# --- exact ranks ----------------------------------------------------------------

def rank_mod_p(M, p: int = PRIME) -> int:
    """Rank of an integer sparse matrix over GF(p) by sparse Gaussian elimination.

    Pivots follow a Markowitz-style rule (shortest row, then sparsest column) to
    limit fill-in.  For incidence matrices with entries +-1 and p = 2^31 - 1 the
    result equals the rational rank unless torsion of order p exists, which
    cannot happen at these sizes.
    """
    M = sp.coo_matrix(M)
    if M.nnz == 0:
        return 0
    data = np.rint(M.data).astype(np.int64) % p
    rows: list = [dict() for _ in range(M.shape[0])]
    cols = defaultdict(set)
    for r, c, v in zip(M.row.tolist(), M.col.tolist(), data.tolist()):
        if v:
            rows[r][c] = (rows[r].get(c, 0) + v) % p
    for r, row in enumerate(rows):
        for c in [c for c, v in row.items() if v == 0]:
            del row[c]
        for c in row:
            cols[c].add(r)
    heap = [(len(row), r) for r, row in enumerate(rows) if row]
    heapq.heapify(heap)
    alive = [bool(row) for row in rows]
    rank = 0
    while heap:
        length, r = heapq.heappop(heap)
        if not alive[r]:
            continue
        row = rows[r]
        if length != len(row):
            heapq.heappush(heap, (len(row), r))
            continue
        if not row:
            alive[r] = False
            continue
        c = min(row, key=lambda j: len(cols[j]))
        inv = pow(row[c], p - 2, p)
        for s in list(cols[c]):
            if s == r:
                continue
            target = rows[s]
            f = target[c] * inv % p
            for j, v in row.items():
                nv = (target.get(j, 0) - f * v) % p
                if nv:
                    if j not in target:
                        cols[j].add(s)
                    target[j] = nv
                elif j in target:
                    del target[j]
                    cols[j].discard(s)
            if target:
                heapq.heappush(heap, (len(target), s))
            else:
                alive[s] = False
        for j in row:
            cols[j].discard(r)
        alive[r] = False
        rows[r] = {}
        rank += 1
    return rank


def _restricted(cx: SimplicialComplex, k: int, mode: str):
    """Coboundary C^k -> C^{k+1} restricted to the chosen mode, with the kept index sets."""
    d = cx.coboundary_matrix(k)
    if mode == "absolute":
        return d, np.arange(cx.count(k)), np.arange(cx.count(k + 1))
    if mode == "compact":
        rk, rk1 = cx.interior(k), cx.interior(k + 1)
        return d[rk1][:, rk], rk, rk1
    raise ValueError(f"unknown cohomology mode {mode!r}")


def _kept(cx: SimplicialComplex, k: int, mode: str) -> np.ndarray:
    return np.arange(cx.count(k)) if mode == "absolute" else cx.interior(k)


@dataclass(frozen=True)
class CohomologyReport:
    cocycles: tuple
    coboundaries: tuple
    betti: tuple
    mode: str


def cohomology_ranks(cx: SimplicialComplex, mode: str = "absolute") -> CohomologyReport:
    """dim Z^k, dim B^k and Betti numbers from exact ranks of the coboundary maps.

    ``mode="compact"`` keeps only interior simplices, i.e. cochains vanishing on
    the boundary, which computes cohomology with compact support.
    """
    n = cx.n
    ranks = []
    for k in range(n):
        d, _, _ = _restricted(cx, k, mode)
        ranks.append(rank_mod_p(d))
    ranks.append(0)
    dims = [len(_kept(cx, k, mode)) for k in range(n + 1)]
    Z = tuple(dims[k] - ranks[k] for k in range(n + 1))
    B = tuple([0] + ranks[:n])
    return CohomologyReport(Z, B, tuple(z - b for z, b in zip(Z, B)), mode)


# --- integration ------------------------------------------------------------------

def integrate_top(omega: Cochain, cx: SimplicialComplex) -> float:
    """Sum of top-degree values weighted by the orientation of each simplex."""
    if omega.degree != cx.n:
        raise ValueError("integration needs a top-degree cochain")
    omega.check(cx)
    return float(np.dot(cx.orientation, omega.values))


# --- minimal primitives ------------------------------------------------------------

@dataclass
class PrimitiveResult:
    theta: Cochain
    norm: float
    omega_norm: float
    iterations: int
    converged: bool
    p: float

    @property
    def ratio(self) -> float:
        return self.norm / self.omega_norm if self.omega_norm > 0 else 0.0


class _PrimitiveProblem:
    """Reusable data for minimal primitives of degree-k forms on one (complex, metric) pair."""

    def __init__(self, cx: SimplicialComplex, metric: MetricField, k: int, mode: str = "absolute"):
        if not 1 <= k <= cx.n:
            raise ValueError(f"primitives need 1 <= k <= n, got k={k}")
        self.cx, self.metric, self.k, self.mode = cx, metric, k, mode
        n = cx.n
        self.p = np.inf if k == 1 else n / (k - 1)
        self.d, self.cols, self.rows = _restricted(cx, k - 1, mode)
        self.dcsc = self.d.tocsc()
        self.Nfull = cx.count(k - 1)
        if k >= 2:
            g, _, _ = _restricted(cx, k - 2, mode)
            self.gauge = g.tocsr()
            C = len(index_sets(n, k - 1))
            W = whitney_matrix(cx, metric, k - 1)[:, self.cols]
            # per-node Cholesky factor of the Gram matrix turns |v|_G into a Euclidean length
            G = _gram(metric, k - 1)
            L = np.linalg.cholesky(G)  # G = L L^T
            self.S = (block_diagonal(np.swapaxes(L, -1, -2)) @ W).tocsr()
            self.J = (self.S @ self.gauge).tocsr()
            self.mu = metric.measure.ravel()
            self.C = C
            self.harmonic = self._harmonic_basis()

    def _harmonic_basis(self):
        # cocycles not reached by the gauge, only needed when H^{k-1} != 0
        nullity = self.d.shape[1] - rank_mod_p(self.d)
        extra = nullity - rank_mod_p(self.gauge)
        if extra <= 0:
            return None
        if self.d.shape[1] > 6000:
            raise NotImplementedError("harmonic directions need a dense null space; mesh too large")
        A = self.d.toarray()
        _, s, vt = np.linalg.svd(A)
        ker = vt[np.sum(s > 1e-10 * s.max()):].T
        Bg = self.gauge.toarray()
        proj = ker - Bg @ np.linalg.lstsq(Bg, ker, rcond=None)[0]
        u, s2, _ = np.linalg.svd(proj, full_matrices=False)
        return sp.csr_matrix(u[:, :extra])

    def particular(self, omega: Cochain) -> np.ndarray:
        if omega.degree != self.k:
            raise ValueError("degree mismatch")
        if self.mode == "compact":
            outside = np.setdiff1d(np.arange(len(omega.values)), self.rows)
            if np.any(np.abs(omega.values[outside]) > 1e-12 * max(1.0, np.abs(omega.values).max())):
                raise NotExactError("form does not vanish on the boundary")
        b = omega.values[self.rows]
        x = np.zeros(self.d.shape[1])
        scale = max(np.linalg.norm(b), 1e-300)
        for _ in range(4):
            r = b - self.d @ x
            if np.linalg.norm(r) <= 1e-13 * scale:
                break
            x += spla.lsqr(self.d, r, atol=1e-15, btol=1e-15, iter_lim=20 * len(x) + 100)[0]
        if np.linalg.norm(b - self.d @ x) > 1e-9 * scale:
            raise NotExactError("form is not a coboundary")
        return x

    def embed(self, x: np.ndarray) -> Cochain:
        full = np.zeros(self.Nfull)
        full[self.cols] = x
        return Cochain(self.k - 1, full)

    def norm(self, x: np.ndarray) -> float:
        th = self.embed(x)
        if self.k == 1:
            lift = whitney_lift(th, self.cx, self.metric)
            return max(float(np.max(np.abs(lift.coeffs))), float(np.max(np.abs(th.values))))
        z = (self.S @ x).reshape(-1, self.C)
        return float(np.sum(self.mu * np.sum(z * z, axis=1) ** (self.p / 2)) ** (1 / self.p))


def _sup_shift(problem: _PrimitiveProblem, x: np.ndarray) -> np.ndarray:
    # kernel of d on 0-cochains: constants per connected component
    cx = problem.cx
    if problem.mode == "compact" or len(x) == 0:
        return x
    edges = cx.simplices[1]
    A = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(cx.count(0),) * 2)
    ncomp, labels = sp.csgraph.connected_components(A, directed=False)
    out = x.copy()
    for c in range(ncomp):
        sel = labels == c
        out[sel] -= 0.5 * (x[sel].max() + x[sel].min())
    return out


def minimal_primitive(omega: Cochain, cx: SimplicialComplex, metric: MetricField,
                      mode: str = "absolute", p: Optional[float] = None,
                      delta_stages: Sequence[float] = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10),
                      max_iter: int = 60, rtol: float = 1e-12,
                      _problem: Optional[_PrimitiveProblem] = None) -> PrimitiveResult:
    """Primitive theta with coboundary(theta) = omega of least L^p norm, p = n / (k - 1).

    theta is parametrized as theta_0 + gauge(phi) (+ harmonic directions), so
    the constraint holds to rounding whatever the optimizer does.  The smoothed
    objective sum mu (|z|^2 + delta)^{p/2} is minimized by reweighted least
    squares with the curvature correction (a Newton step) and an Armijo line
    search, continuing delta towards 0.  Degree 1 minimizes the sup norm by
    shifting with the midrange.
    """
    prob = _problem or _PrimitiveProblem(cx, metric, omega.degree, mode)
    n, k = cx.n, omega.degree
    omega_norm = lp_form_norm(whitney_lift(omega, cx, metric), n / k, metric)
    x0 = prob.particular(omega)
    if k == 1:
        x = _sup_shift(prob, x0)
        return PrimitiveResult(prob.embed(x), prob.norm(x), omega_norm, 0, True, np.inf)
    if p is not None and p != prob.p:
        prob.p = p
    pexp = prob.p
    if not np.any(x0):
        return PrimitiveResult(prob.embed(x0), 0.0, omega_norm, 0, True, pexp)
    J = prob.J
    if prob.harmonic is not None:
        J = sp.hstack([J, prob.S @ prob.harmonic]).tocsr()
        basis = sp.hstack([prob.gauge, prob.harmonic]).tocsr()
    else:
        basis = prob.gauge
    C = prob.C
    z0 = prob.S @ x0
    mu = prob.mu
    nvar = J.shape[1]
    JT = J.T.tocsr()

    def pieces(y):
        z = (z0 + J @ y).reshape(-1, C)
        return z, np.sum(z * z, axis=1)

    def objective(y, delta):
        _, s = pieces(y)
        return float(np.sum(mu * (s + delta) ** (pexp / 2)))

    # least-squares start (the p = 2 problem)
    tik = 1e-12
    y = np.zeros(nvar)
    H2 = (JT @ sp.diags(np.repeat(mu, C)) @ J).tocsc()
    reg = tik * (H2.diagonal().mean() or 1.0)
    y = spla.spsolve(H2 + reg * sp.identity(nvar, format="csc"), -(JT @ (np.repeat(mu, C) * z0)))
    y = np.atleast_1d(y)
    iterations = 0
    converged = True
    if pexp != 2:
        _, s0 = pieces(y)
        floor = 1e-12 * (float(np.mean(s0)) or 1.0)
        for rel in delta_stages:
            delta = rel * (s0 + floor)
            f = objective(y, delta)
            stage_ok = False
            for _ in range(max_iter):
                z, s = pieces(y)
                w = mu * pexp * (s + delta) ** (pexp / 2 - 1)
                grad = JT @ (w[:, None] * z).ravel()
                # Hessian blocks w (I + (p - 2) z z^T / (s + delta)); PSD for p >= 1
                c = w * (pexp - 2) / (s + delta)
                blocks = w[:, None, None] * np.eye(C) + c[:, None, None] * z[:, :, None] * z[:, None, :]
                H = (JT @ block_diagonal(blocks) @ J).tocsc()
                reg = tik * (H.diagonal().mean() or 1.0)
                step = spla.spsolve(H + reg * sp.identity(nvar, format="csc"), -grad)
                step = np.atleast_1d(step)
                dec = -float(grad @ step)
                if not np.isfinite(dec) or dec < 0:
                    step, dec = -grad, float(grad @ grad)
                if dec <= rtol * f:
                    stage_ok = True
                    break
                t = 1.0
                while True:
                    trial = y + t * step
                    ft = objective(trial, delta)
                    if ft <= f - 1e-4 * t * dec or t < 1e-12 or not np.isfinite(ft):
                        break
                    t *= 0.5
                iterations += 1
                if not ft <= f:
                    stage_ok = True
                    break
                y, f = trial, ft
            converged &= stage_ok
    x = x0 + basis @ y
    res = PrimitiveResult(prob.embed(x), prob.norm(x), omega_norm, iterations, converged, pexp)
    if not converged:
        raise PrimitiveConvergenceError("reweighted least squares did not converge", res)
    return res


# --- Sobolev-constant series ---------------------------------------------------------

@dataclass
class SobolevConstantSeries:
    degree: int
    labels: list
    values: np.ndarray
    argmax: list
    ratios: list
    probe_ids: list
    seed: int
    mode: str

    @property
    def growth(self) -> float:
        return float(self.values[-1] / self.values[0])


def _bump_probes(cx: SimplicialComplex, k: int, mode: str, anchors: np.ndarray) -> list:
    """Coboundaries of single (k-1)-simplex indicators at the simplices nearest to each anchor point."""
    keep = _kept(cx, k - 1, mode)
    centers = cx.points[cx.simplices[k - 1][keep]].mean(axis=1)
    lo, hi = cx.points.min(axis=0), cx.points.max(axis=0)
    probes = []
    for a in anchors:
        target = lo + (hi - lo) * a
        d2 = np.sum((centers - target) ** 2, axis=1)
        # nearest simplex, ties broken by index for reproducibility
        idx = keep[int(np.argmin(d2))]
        th = np.zeros(cx.count(k - 1))
        th[idx] = 1.0
        probes.append(th)
    return probes


def extremal_probes(cx: SimplicialComplex, metric: MetricField, k: int, mode: str = "absolute",
                    count: int = 6) -> list:
    """Coboundaries of the lowest co-closed modes of the (k-1)-form Hodge pencil.

    Uses Whitney mass matrices of the base metric g (the conformal factor is
    dropped), so scaled copies of a mesh produce the same probes.  Gradient
    modes, whose coboundary vanishes, are discarded.
    """
    from dataclasses import replace

    if k < 2:
        return []
    base = replace(metric, lam=np.ones_like(metric.lam))
    d, cols, rows = _restricted(cx, k - 1, mode)
    G, gcols, _ = _restricted(cx, k - 2, mode)
    M1 = whitney_mass_matrix(cx, base, k - 1)[cols][:, cols]
    M2 = whitney_mass_matrix(cx, base, k)[rows][:, rows]
    M0 = whitney_mass_matrix(cx, base, k - 2)[gcols][:, gcols]
    lumped = sp.diags(1.0 / np.asarray(M0.sum(axis=1)).ravel())
    MG = M1 @ G
    K = (d.T @ M2 @ d + MG @ lumped @ MG.T).tocsc()
    count = min(count, len(cols) - 2)
    _, vecs = spla.eigsh(K, k=count, M=M1.tocsc(), sigma=0, which="LM", v0=np.ones(len(cols)))
    out = []
    for v in vecs.T:
        th = np.zeros(cx.count(k - 1))
        th[cols] = v / np.abs(v).max()
        if np.linalg.norm(d @ th[cols]) > 1e-8 * np.linalg.norm(th):
            out.append(th)
    return out


DEFAULT_ANCHORS = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 0.8], [0.5, 0.5, 0.2], [0.8, 0.5, 0.5],
                            [0.5, 0.8, 0.5], [0.2, 0.2, 0.8], [0.8, 0.8, 0.2], [0.3, 0.6, 0.7]])


def sobolev_constant(stages: Sequence, k: int, probes: int = 8, seed: int = 0,
                     mode: str = "absolute", anchors: Optional[np.ndarray] = None,
                     labels: Optional[Sequence] = None, extremal: int = 6) -> SobolevConstantSeries:
    """Per stage, the largest ratio ||minimal primitive|| / ||omega|| over probe forms.

    ``stages`` is a sequence of (complex, metric) pairs.  Probes are ``probes``
    random exact forms (standard normal (k-1)-cochains from a generator seeded
    by ``seed``, the same stream at every stage) plus coboundaries of single
    (k-1)-simplex indicators at the ``anchors`` (fractions of the bounding box)
    plus up to ``extremal`` spectral probes from :func:`extremal_probes`.
    The series is reported raw.
    """
    if len(stages) < 3:
        raise ValueError("a Sobolev series needs at least 3 stages")
    values, argmax, all_ratios, all_ids = [], [], [], []
    for cx, metric in stages:
        n = cx.n
        if anchors is None:
            anc = DEFAULT_ANCHORS[:, :cx.ambient_dim]
        else:
            anc = np.asarray(anchors, float)
        rng = np.random.default_rng(seed)
        keep = _kept(cx, k - 1, mode)
        thetas = []
        for _ in range(probes):
            th = np.zeros(cx.count(k - 1))
            th[keep] = rng.standard_normal(len(keep))
            thetas.append(th)
        thetas += _bump_probes(cx, k, mode, anc)
        spectral = extremal_probes(cx, metric, k, mode, extremal) if extremal else []
        thetas += spectral
        ids = ([f"random{i}" for i in range(probes)] + [f"bump{i}" for i in range(len(anc))]
               + [f"extremal{i}" for i in range(len(spectral))])
        prob = _PrimitiveProblem(cx, metric, k, mode)
        ratios = []
        for th in thetas:
            omega = coboundary(Cochain(k - 1, th), cx)
            if not np.any(omega.values):
                ratios.append(0.0)
                continue
            nrm = lp_form_norm(whitney_lift(omega, cx, metric), n / k, metric)
            omega = (1.0 / nrm) * omega
            try:
                res = minimal_primitive(omega, cx, metric, mode, _problem=prob)
            except PrimitiveConvergenceError as err:
                res = err.best
            ratios.append(res.ratio)
        ratios = np.array(ratios)
        all_ratios.append(ratios)
        all_ids.append(ids)
        values.append(float(ratios.max()))
        argmax.append(ids[int(np.argmax(ratios))])
    labels = list(labels) if labels is not None else [str(i) for i in range(len(stages))]
    return SobolevConstantSeries(k, labels, np.array(values), argmax, all_ratios, all_ids, seed, mode)


# --- degree-1 torsion probe -------------------------------------------------------------

@dataclass
class TorsionSeries:
    eps: np.ndarray
    oscillation: np.ndarray
    gradient_norm: np.ndarray
    ratio: np.ndarray
    oracle_ratio: np.ndarray


def torsion_oracle(n: int, eps: float, r0: float) -> tuple:
    """Exact oscillation and ||du||_n of u = min(log log(1/|x|), log log(1/eps)) on B_r0, by radial quadrature."""
    osc = np.log(np.log(1 / eps)) - np.log(np.log(1 / r0))
    integrand = lambda r: (1.0 / (r * np.log(1 / r))) ** n * r ** (n - 1)
    # split the radial integral at decades so quad resolves the log scale
    edges = np.unique(np.concatenate([[eps, r0], np.logspace(np.log10(eps), np.log10(r0), 30)]))
    total = sum(quad(integrand, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    return osc, (sphere_area(n) * total) ** (1 / n)


def torsion_probe_degree1(n: int = 2, eps: Sequence[float] = (1e-2, 1e-4, 1e-8), r0: float = 0.5,
                          resolution: int = 8, u=None) -> TorsionSeries:
    """Ratio osc(u_eps) / ||du_eps||_n for the truncated log-log function on B_r0.

    The ball mesh is graded geometrically towards the origin and contains every
    eps as a shell radius.  Passing ``u`` (callable of the points) replaces the
    log-log family by a fixed function, which must not be constant.
    """
    eps = np.asarray(eps, float)
    step = (np.pi / 2) / resolution
    layers = max(1, int(np.ceil(np.log(r0 / eps.min()) / step)))
    radii = np.union1d(geometric_radii(eps.min(), r0, layers), eps)
    radii = np.concatenate([[0.0, eps.min() / 2], radii])
    pts, tops = layered_mesh(n, resolution, radii)
    cx = SimplicialComplex.from_simplices(pts, tops)
    metric = MetricField.from_model(cx)
    r = np.linalg.norm(cx.points, axis=1)
    osc, gnorm, oracle = [], [], []
    for e in eps:
        if u is None:
            vals = np.log(np.log(1.0 / np.maximum(r, e)))
        else:
            vals = np.asarray(u(cx.points), float)
        if np.ptp(vals) == 0:
            raise ValueError("torsion probe needs a non-constant function")
        c = Cochain(0, vals)
        osc.append(float(np.ptp(vals)))
        gnorm.append(lp_form_norm(whitney_lift(coboundary(c, cx), cx, metric), n, metric))
        o, g = torsion_oracle(n, e, r0)
        oracle.append(o / g)
    osc, gnorm = np.array(osc), np.array(gnorm)
    return TorsionSeries(eps, osc, gnorm, osc / gnorm, np.array(oracle))


# --- Kelvin-Nevanlinna-Royden probes ---------------------------------------------------

def _dual_path(cx: SimplicialComplex, start: int, stop: int):
    n = cx.n
    fi = cx.face_index[n - 1]
    m = cx.count(n)
    nf = cx.count(n - 1)
    inc = sp.csr_matrix((np.ones(fi.size), (np.repeat(np.arange(m), fi.shape[1]), fi.ravel())), shape=(m, nf))
    adj = (inc @ inc.T).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    _, pred = breadth_first_order(adj, start, directed=False, return_predecessors=True)
    path = [stop]
    while path[-1] != start:
        if pred[path[-1]] < 0:
            raise ValueError("top simplices are not connected through faces")
        path.append(int(pred[path[-1]]))
    return path[::-1]


def transport_primitive(cx: SimplicialComplex, source: int, sink: int) -> Cochain:
    """(n-1)-cochain whose coboundary carries unit integral from ``sink`` to ``source``.

    The primitive is supported on the faces crossed by a shortest dual path, so
    coboundary(theta) has integral +1 on ``source``, -1 on ``sink`` and 0 elsewhere.
    """
    n = cx.n
    path = _dual_path(cx, source, sink)
    inc = cx.incidence[n].tocsc()
    theta = np.zeros(cx.count(n - 1))
    faces_of = lambda t: set(cx.face_index[n - 1][t].tolist())
    sign = lambda t, f: float(inc[f, t])
    # flux out of path[i] through the shared face must make (d theta)(path[i]) = target
    carried = 0.0
    for i, (a, b) in enumerate(zip(path[:-1], path[1:])):
        f = (faces_of(a) & faces_of(b)).pop()
        want = cx.orientation[a] * (1.0 if i == 0 else 0.0)
        theta[f] = (want - carried) / sign(a, f)
        carried = sign(b, f) * theta[f]
    return Cochain(n - 1, theta)


@dataclass
class KNRReport:
    label: str
    sizes: np.ndarray
    primitive_norms: np.ndarray
    integrals: np.ndarray
    oracle: np.ndarray


def _disc_stage(n: int, R: float, resolution: int, core: float = 1.0):
    step = (np.pi / 2) / resolution
    layers = max(1, int(np.ceil(np.log(R / core) / step)))
    inner = max(1, int(np.ceil(np.log(core / (core / 4)) / step)))
    radii = np.concatenate([[0.0], geometric_radii(core / 4, core, inner), geometric_radii(core, R, layers)[1:]])
    pts, tops = layered_mesh(n, resolution, radii)
    cx = SimplicialComplex.from_simplices(pts, tops)
    return cx, MetricField.from_model(cx)


def _nearest_top(cx: SimplicialComplex, point) -> int:
    c = cx.cell_coordinates().mean(axis=1)
    return int(np.argmin(np.sum((c - np.asarray(point)) ** 2, axis=1)))


def knr_probe_parabolic(sizes: Sequence[float], n: int = 2, resolution: int = 6,
                        separation: float = 0.5) -> tuple:
    """Balls B_R of R^n (absolute mode): minimal primitives of top-degree bumps.

    Returns (mean-zero pair report, unit-integral report).  The pair report's
    oracle is the norm of the explicit transport primitive, an upper bound for
    the minimal one.
    """
    pair, unit, oracle, ints_pair, ints_unit = [], [], [], [], []
    for R in sizes:
        cx, metric = _disc_stage(n, R, resolution)
        a = _nearest_top(cx, [separation] + [0.0] * (n - 1))
        b = _nearest_top(cx, [-separation] + [0.0] * (n - 1))
        q = n / (n - 1)
        tr = transport_primitive(cx, a, b)
        omega = coboundary(tr, cx)
        res = minimal_primitive(omega, cx, metric)
        pair.append(res.norm)
        ints_pair.append(integrate_top(omega, cx))
        oracle.append(lp_form_norm(whitney_lift(tr, cx, metric), q, metric))
        bump = np.zeros(cx.count(n))
        bump[a] = cx.orientation[a]
        single = Cochain(n, bump)
        unit.append(minimal_primitive(single, cx, metric).norm)
        ints_unit.append(integrate_top(single, cx))
    sizes = np.asarray(sizes, float)
    return (KNRReport("mean-zero pair", sizes, np.array(pair), np.array(ints_pair), np.array(oracle)),
            KNRReport("unit bump", sizes, np.array(unit), np.array(ints_unit),
                      np.sqrt(np.log(sizes) / sphere_area(n)) if n == 2 else np.full(len(sizes), np.nan)))


def radial_primitive(n: int) -> AnalyticForm:
    """theta = c * (interior product of x with the Euclidean volume), c chosen so that d theta integrates to r^n over B_r."""
    from math import gamma, pi
    ball_volume = pi ** (n / 2) / gamma(n / 2 + 1)
    c = 1.0 / (n * ball_volume)
    sets = index_sets(n, n - 1)

    def value(x):
        out = np.zeros(x.shape[:-1] + (len(sets),))
        for a, I in enumerate(sets):
            missing = [i for i in range(n) if i not in I][0]
            out[..., a] = c * (-1) ** missing * x[..., missing]
        return out

    def derivative(x):
        return np.full(x.shape[:-1] + (1,), n * c)

    return AnalyticForm(n - 1, n, value, derivative)


def radial_primitive_norm(n: int, r: float) -> float:
    """Euclidean L^{n/(n-1)} norm of the radial primitive on B_r by 1-D quadrature."""
    from math import gamma, pi
    c = 1.0 / (n * pi ** (n / 2) / gamma(n / 2 + 1))
    q = n / (n - 1)
    val = quad(lambda rho: (c * rho) ** q * sphere_area(n) * rho ** (n - 1), 0.0, r)[0]
    return val ** (1 / q)


def knr_probe_hyperbolic(radii: Sequence[float], n: int = 2, resolution: int = 6) -> KNRReport:
    """Poincare-ball stages B_r: the radial primitive has bounded norm while its coboundary integrates to r^n."""
    from .catalog import ModelSpaceSpec, build_model_space
    from .forms import sample_form

    norms, ints, oracle = [], [], []
    theta_form = radial_primitive(n)
    for r in radii:
        cx, metric = build_model_space(ModelSpaceSpec("poincare_ball", n=n, radius=r,
                                                      resolution=resolution, inner_radius=r / 4))
        theta = de_rham_project(sample_form(theta_form, metric), cx, metric)
        norms.append(lp_form_norm(whitney_lift(theta, cx, metric), n / (n - 1), metric))
        ints.append(integrate_top(coboundary(theta, cx), cx))
        oracle.append(radial_primitive_norm(n, r))
    return KNRReport("Poincare radial", np.asarray(radii, float), np.array(norms), np.array(ints),
                     np.array(oracle))
