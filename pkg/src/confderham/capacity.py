"""Conformal capacity of condensers by constrained n-Dirichlet energy minimization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import ellipk, gamma

from .catalog import ModelSpaceSpec, PoincareModel, build_model_space, geometric_radii, layered_mesh
from .complex import MetricField, SimplicialComplex
from .forms import Cochain

__all__ = [
    "Condenser",
    "CapacityResult",
    "SolverOptions",
    "ExhaustionSpec",
    "Classification",
    "ProbeSeries",
    "CondenserError",
    "ConvergenceError",
    "ClassificationError",
    "p_dirichlet_energy",
    "solve_condenser",
    "classify_type",
    "polar_probe",
    "point_probe",
    "segment_probe",
    "radial_capacity",
    "sphere_area",
    "grotzsch_capacity",
    "euclidean_exhaustion",
    "poincare_exhaustion",
    "sol_exhaustion",
]


class CondenserError(ValueError):
    """The plate and the zero set are not disjoint, or the vertex sets are malformed."""


class ConvergenceError(RuntimeError):
    """Newton iteration did not converge; ``best`` holds the best iterate found."""

    def __init__(self, msg: str, best: "CapacityResult"):
        super().__init__(msg)
        self.best = best


class ClassificationError(RuntimeError):
    """Capacity series is not monotone, so no decay fit is trustworthy."""


# --- closed forms -------------------------------------------------------------

def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return float(2.0 * np.pi ** (n / 2) / gamma(n / 2))


def radial_capacity(n: int, r: float, R: float) -> float:
    """Capacity of the spherical condenser B_r in B_R: area(S^{n-1}) * log(R/r)^{1-n}."""
    return sphere_area(n) * np.log(R / r) ** (1 - n)


def grotzsch_capacity(a: float) -> float:
    """Conformal capacity of the segment [-a, a] in the unit disc.

    Squaring z doubles the slit disc onto the Grotzsch ring D minus [0, a^2],
    whose capacity is 2 pi / mu(a^2) with mu(r) = (pi / 2) K(sqrt(1 - r^2)) / K(r).
    """
    r = a * a
    mu = 0.5 * np.pi * ellipk(1.0 - r * r) / ellipk(r * r)
    return float(4.0 * np.pi / mu)


# --- data types ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Condenser:
    """Pair (F, U) on a metrized complex.

    ``plate`` lists the vertices of F; ``domain`` optionally restricts U to a
    subset of top simplices (default: everything); ``dirichlet_zero`` defaults
    to the boundary vertices of U outside F.  With ``neighbourhood="star"`` the
    plate is enlarged to the closed star of F before solving.
    """

    complex: SimplicialComplex
    metric: MetricField
    plate: np.ndarray
    dirichlet_zero: Optional[np.ndarray] = None
    domain: Optional[np.ndarray] = None
    p: Optional[float] = None
    neighbourhood: str = "vertices"

    @property
    def exponent(self) -> float:
        return float(self.complex.n if self.p is None else self.p)

    def tops(self) -> np.ndarray:
        m = self.complex.count(self.complex.n)
        return np.arange(m) if self.domain is None else np.asarray(self.domain, dtype=int)

    def plate_vertices(self) -> np.ndarray:
        F = np.unique(np.asarray(self.plate, dtype=int))
        if self.neighbourhood == "star" and len(F):
            tri = self.complex.simplices[-1][self.tops()]
            touch = np.isin(tri, F).any(axis=1)
            F = np.unique(tri[touch])
        elif self.neighbourhood not in ("vertices", "star"):
            raise CondenserError(f"unknown neighbourhood rule {self.neighbourhood!r}")
        return F

    def zero_vertices(self) -> np.ndarray:
        F = self.plate_vertices()
        if self.dirichlet_zero is not None:
            Z = np.unique(np.asarray(self.dirichlet_zero, dtype=int))
            if np.intersect1d(Z, F).size:
                raise CondenserError("plate F meets the Dirichlet zero set")
            return Z
        cx = self.complex
        tops = self.tops()
        if self.domain is None:
            bnd = cx.boundary_vertices()
        else:
            # faces of U with exactly one coface inside U
            fi = cx.face_index[cx.n - 1][tops]
            counts = np.bincount(fi.ravel(), minlength=cx.count(cx.n - 1))
            bfaces = np.flatnonzero(counts == 1)
            bnd = np.unique(cx.simplices[cx.n - 1][bfaces])
            outside = np.setdiff1d(np.arange(cx.count(0)), np.unique(cx.simplices[-1][tops]))
            bnd = np.union1d(bnd, outside)
        return np.setdiff1d(bnd, F)


@dataclass
class CapacityResult:
    value: float
    minimizer: Cochain
    iterations: int
    energy_history: list = field(default_factory=list)
    epsilon_final: float = 0.0
    stage_ends: list = field(default_factory=list)


@dataclass(frozen=True)
class SolverOptions:
    """Newton/continuation controls.

    ``eps_stages`` are relative: each node's regularization is the stage value
    times that node's squared gradient in the initial guess (plus a tiny floor),
    so that strongly graded meshes are regularized evenly.
    """

    eps_stages: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    max_newton: int = 80
    rtol: float = 1e-12
    armijo: float = 1e-4


# --- energy -------------------------------------------------------------------

def _gradients(u: np.ndarray, cx: SimplicialComplex, metric: MetricField) -> np.ndarray:
    return np.einsum("mvd,mv->md", metric.dbary, u[cx.simplices[-1]])


def p_dirichlet_energy(u: Cochain, p: float, cx: SimplicialComplex, metric: MetricField,
                       domain: Optional[np.ndarray] = None) -> float:
    """Sum over nodes of weight * vol_density * |du|_g^p."""
    if p < 1:
        raise ValueError(f"energy exponent must be >= 1, got {p}")
    if u.degree != 0:
        raise ValueError("Dirichlet energy needs a 0-cochain")
    grad = _gradients(u.values, cx, metric)
    sq = np.einsum("md,mqde,me->mq", grad, metric.inverse_metric(), grad)
    dens = metric.measure * np.maximum(sq, 0.0) ** (p / 2)
    if domain is not None:
        dens = dens[np.asarray(domain, dtype=int)]
    return float(dens.sum())


class _Energy:
    """Regularized energy sum A (s + eps)^{p/2}, s = grad^T g^{-1} grad in base units."""

    def __init__(self, cx: SimplicialComplex, metric: MetricField, tops: np.ndarray, p: float):
        self.p = p
        self.tri = cx.simplices[-1][tops]
        D = metric.dbary[tops]
        ginv = np.linalg.inv(metric.g[tops])
        n = metric.n
        # lam^{n-p} is exactly 1 when p = n, which keeps conformal invariance bitwise
        self.A = metric.weights[tops] * np.sqrt(np.linalg.det(metric.g[tops])) * metric.lam[tops] ** (n - p)
        self.B = np.einsum("mvd,mqde,mwe->mqvw", D, ginv, D)  # (m, q, n+1, n+1)
        self.N = cx.count(0)
        nv = self.tri.shape[1]
        self.rows = np.repeat(self.tri, nv, axis=1).ravel()
        self.cols = np.tile(self.tri, (1, nv)).ravel()

    def squares(self, u):
        uT = u[self.tri]
        return np.maximum(np.einsum("mv,mqvw,mw->mq", uT, self.B, uT), 0.0)

    def value(self, u, eps):
        return float(np.sum(self.A * (self.squares(u) + eps) ** (self.p / 2)))

    def derivatives(self, u, eps):
        uT = u[self.tri]
        b = np.einsum("mqvw,mw->mqv", self.B, uT)
        s = np.maximum(np.einsum("mv,mqv->mq", uT, b), 0.0) + eps
        half = self.p / 2
        c1 = self.A * half * s ** (half - 1)
        c2 = self.A * half * (half - 1) * s ** (half - 2) if half != 1 else np.zeros_like(s)
        gT = np.einsum("mq,mqv->mv", 2 * c1, b)
        HT = np.einsum("mq,mqvw->mvw", 2 * c1, self.B) + np.einsum("mq,mqv,mqw->mvw", 4 * c2, b, b)
        grad = np.bincount(self.tri.ravel(), weights=gT.ravel(), minlength=self.N)
        H = sp.csr_matrix((HT.ravel(), (self.rows, self.cols)), shape=(self.N, self.N))
        return grad, H


def _solve(H, rhs):
    return spla.spsolve(H.tocsc(), rhs)


def solve_condenser(c: Condenser, options: SolverOptions = SolverOptions()) -> CapacityResult:
    """Minimize the regularized n-energy with u = 1 on F and u = 0 on the zero set.

    The regularization eps is continued geometrically to ~0; the minimizer is
    clamped to [0, 1] and the reported value is the unregularized energy of the
    clamped minimizer.
    """
    cx, metric = c.complex, c.metric
    N = cx.count(0)
    p = c.exponent
    F = c.plate_vertices()
    if len(F) == 0:
        return CapacityResult(0.0, Cochain(0, np.zeros(N)), 0, [0.0], 0.0, [0])
    if np.any((F < 0) | (F >= N)):
        raise CondenserError("plate vertex index out of range")
    Z = c.zero_vertices()
    if len(Z) == 0:
        raise CondenserError("condenser has no Dirichlet zero set")
    tops = c.tops()
    fixed = np.zeros(N, dtype=bool)
    fixed[F] = True
    fixed[Z] = True
    used = np.zeros(N, dtype=bool)
    used[cx.simplices[-1][tops].ravel()] = True
    free = np.flatnonzero(~fixed & used)
    u = np.zeros(N)
    u[F] = 1.0

    en = _Energy(cx, metric, tops, p)
    history: list = []
    ends: list = []
    # initial guess: the quadratic (p = 2) problem with the same weights
    quad = _Energy(cx, metric, tops, 2.0)
    quad.A = en.A
    g0, H0 = quad.derivatives(u, 0.0)
    if len(free):
        Hff = H0[free][:, free]
        u[free] = np.clip(_solve(Hff, -g0[free]), 0.0, 1.0)
    s0 = en.squares(u)
    scale = s0 + 1e-12 * (float(np.mean(s0)) or 1.0)
    iterations = 0
    eps_report = 0.0
    for rel in options.eps_stages:
        eps = rel * scale
        eps_report = rel * float(np.mean(scale))
        E = en.value(u, eps)
        history.append(E)
        converged = len(free) == 0
        for _ in range(options.max_newton):
            if converged:
                break
            grad, H = en.derivatives(u, eps)
            gf = grad[free]
            step = _solve(H[free][:, free], -gf)
            dec = -float(gf @ step)
            if not np.isfinite(dec) or dec < 0:
                step, dec = -gf, float(gf @ gf)
            if dec <= options.rtol * max(E, 1e-300):
                converged = True
                break
            t = 1.0
            while True:
                trial = u.copy()
                trial[free] += t * step
                Et = en.value(trial, eps)
                if Et <= E - options.armijo * t * dec or t < 1e-12 or not np.isfinite(Et):
                    break
                t *= 0.5
            iterations += 1
            if not Et <= E:
                converged = True  # no descent possible at machine precision
                break
            u, E = trial, Et
            history.append(E)
        ends.append(len(history) - 1)
        if not converged:
            best = CapacityResult(p_dirichlet_energy(Cochain(0, np.clip(u, 0, 1)), p, cx, metric, tops),
                                  Cochain(0, np.clip(u, 0, 1)), iterations, history, eps_report, ends)
            raise ConvergenceError(f"Newton did not converge at eps={eps_report:.3g}", best)
    u = np.clip(u, 0.0, 1.0)
    u[F] = 1.0
    u[Z] = 0.0
    sol = Cochain(0, u)
    return CapacityResult(p_dirichlet_energy(sol, p, cx, metric, tops), sol, iterations,
                          history, eps_report, ends)


# --- exhaustions and classification -------------------------------------------

@dataclass(frozen=True)
class ExhaustionSpec:
    """Condensers (F, U_R) for increasing sizes R with a fixed plate F.

    ``build`` maps a size to a condenser; ``scale`` maps a size to the radius
    entering the decay fit (e.g. the hyperbolic radius for Poincare stages).
    """

    build: Callable[[float], Condenser]
    sizes: Sequence[float]
    n: int
    label: str = ""
    scale: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if np.any(np.diff(np.asarray(self.sizes, float)) <= 0):
            raise ValueError("exhaustion sizes must be strictly increasing")

    def radii(self) -> np.ndarray:
        f = self.scale or (lambda R: R)
        return np.array([f(R) for R in self.sizes], float)


@dataclass
class Classification:
    verdict: str
    series: np.ndarray
    radii: np.ndarray
    residual_parabolic: float
    residual_hyperbolic: float
    slope: float
    results: list = field(default_factory=list)


def _fit(series: np.ndarray, radii: np.ndarray, n: int):
    y = np.log(series)
    t = np.log(np.log(radii))
    # parabolic signature: log cap = a + (1 - n) log log R; hyperbolic: log cap = a
    rp = y - (1 - n) * t
    res_p = float(np.sum((rp - rp.mean()) ** 2))
    res_h = float(np.sum((y - y.mean()) ** 2))
    slope = float(np.polyfit(t, y, 1)[0])
    return res_p, res_h, slope


def classify_type(spec: ExhaustionSpec, threshold: float = 1e-3, monotone_rtol: float = 1e-3,
                  options: SolverOptions = SolverOptions()) -> Classification:
    """Parabolic if the capacity series follows the (log R)^{1-n} decay, Hyperbolic if it levels off.

    Both one-parameter models are fitted to log cap by least squares and the
    smaller residual wins; a Hyperbolic verdict also needs the last value above
    ``threshold``.  The free-slope fit of log cap against log log R is reported.
    """
    if len(spec.sizes) < 3:
        raise ValueError("classification needs at least 3 stages")
    results = [solve_condenser(spec.build(R), options) for R in spec.sizes]
    series = np.array([r.value for r in results])
    if np.any(series <= 0):
        raise ClassificationError("capacity series contains non-positive values")
    if np.any(series[1:] > series[:-1] * (1 + monotone_rtol)):
        raise ClassificationError(f"capacity series is not monotone: {series}")
    radii = spec.radii()
    res_p, res_h, slope = _fit(series, radii, spec.n)
    verdict = "Hyperbolic" if res_h < res_p and series[-1] >= threshold else "Parabolic"
    return Classification(verdict, series, radii, res_p, res_h, slope, results)


def _ball_condenser(n: int, radii: np.ndarray, resolution: int, plate_radius: float,
                    model=None) -> Condenser:
    pts, tops = layered_mesh(n, resolution, radii)
    cx = SimplicialComplex.from_simplices(pts, tops)
    metric = MetricField.from_model(cx, model)
    r = np.linalg.norm(cx.points, axis=1)
    return Condenser(cx, metric, np.flatnonzero(r <= plate_radius * (1 + 1e-12)))


def _shells(r_in: float, r_out: float, step: float) -> np.ndarray:
    layers = max(1, int(np.ceil(np.log(r_out / r_in) / step)))
    return geometric_radii(r_in, r_out, layers)


def euclidean_exhaustion(n: int, sizes: Sequence[float], resolution: int = 8,
                         core: float = 1.0) -> ExhaustionSpec:
    """Balls B_R of R^n around the plate B_core; mesh layers graded in log r."""
    step = (np.pi / 2) / resolution

    def build(R):
        radii = np.concatenate([[0.0, core / 2], _shells(core, R, step)])
        return _ball_condenser(n, radii, resolution, core)

    return ExhaustionSpec(build, tuple(sizes), n, f"R^{n} balls")


def poincare_exhaustion(n: int, sizes: Sequence[float], resolution: int = 8,
                        core: float = 0.25) -> ExhaustionSpec:
    """Euclidean radii r < 1 of the Poincare ball; the fit uses the hyperbolic radius."""
    step = (np.pi / 2) / resolution

    def build(r):
        radii = np.concatenate([[0.0, core / 2], _shells(core, r, step)])
        return _ball_condenser(n, radii, resolution, core, PoincareModel())

    return ExhaustionSpec(build, tuple(sizes), n, f"Poincare B^{n}",
                          scale=lambda r: np.log((1 + r) / (1 - r)))


def graded_axis(core: float, L: float, h: float, growth: float = 1.3) -> np.ndarray:
    """Symmetric axis: spacing h on [-core, core], then geometric growth out to L."""
    inner = np.linspace(0.0, core, int(round(core / h)) + 1)
    outer = [core]
    step = h
    while outer[-1] < L - 1e-12:
        step *= growth
        outer.append(min(L, outer[-1] + step))
    if len(outer) > 2 and outer[-1] - outer[-2] < 0.5 * (outer[-2] - outer[-3]):
        outer.pop(-2)
    half = np.concatenate([inner, outer[1:]])
    return np.concatenate([-half[:0:-1], half])


def sol_exhaustion(sizes: Sequence[float], h: float = 0.5, growth: float = 1.5,
                   core: float = 1.0) -> ExhaustionSpec:
    """SOL boxes [-e^L, e^L]^2 x [-L, L] around the plate [-core, core]^3.

    Coordinate cubes are metrically thin: the point (L, 0, 0) is only about
    2 log L away from the origin.  Stretching x and y exponentially makes each
    box comparable to a metric ball of radius about L, which is the radius used
    in the decay fit.
    """

    def build(L):
        lateral = graded_axis(core, max(np.exp(L), core + h), h, growth)
        vertical = graded_axis(core, max(L, core + h), h, growth)
        cx, metric = build_model_space(ModelSpaceSpec("sol_box", n=3, axes=[lateral, lateral, vertical]))
        inside = np.all(np.abs(cx.points) <= core + 1e-12, axis=1)
        return Condenser(cx, metric, np.flatnonzero(inside))

    return ExhaustionSpec(build, tuple(sizes), 3, "SOL boxes")


# --- polar probes ---------------------------------------------------------------

@dataclass
class ProbeSeries:
    parameters: np.ndarray
    values: np.ndarray
    oracle: np.ndarray
    label: str = ""


def polar_probe(condensers: Sequence[Condenser], parameters: Sequence[float],
                oracle: Optional[Callable[[float], float]] = None, label: str = "",
                options: SolverOptions = SolverOptions()) -> ProbeSeries:
    """Capacity series for a family of condensers with shrinking plates."""
    values = np.array([solve_condenser(c, options).value for c in condensers])
    params = np.asarray(parameters, float)
    ref = np.array([oracle(e) for e in params]) if oracle else np.full(len(params), np.nan)
    return ProbeSeries(params, values, ref, label)


def point_probe(n: int, eps: Sequence[float], resolution: int = 6,
                options: SolverOptions = SolverOptions()) -> ProbeSeries:
    """Balls B_eps shrinking to the origin inside B_1; oracle area * log(1/eps)^{1-n}."""
    eps = np.asarray(eps, float)
    step = (np.pi / 2) / resolution
    radii = _shells(eps.min(), 1.0, step)
    radii = np.unique(np.concatenate([radii, eps]))
    radii = radii[np.concatenate([[True], np.diff(np.log(radii)) > 0.25 * step])]
    radii = np.union1d(radii, eps)
    radii = np.concatenate([[0.0, eps.min() / 2], radii])
    pts, tops = layered_mesh(n, resolution, radii)
    cx = SimplicialComplex.from_simplices(pts, tops)
    metric = MetricField.from_model(cx)
    r = np.linalg.norm(cx.points, axis=1)
    conds = [Condenser(cx, metric, np.flatnonzero(r <= e * (1 + 1e-9))) for e in eps]
    return polar_probe(conds, eps, lambda e: radial_capacity(n, e, 1.0), f"point n={n}", options)


def segment_probe(a: float = 0.5, resolutions: Sequence[int] = (4, 8, 16),
                  options: SolverOptions = SolverOptions()) -> ProbeSeries:
    """Segment [-a, a] x {0} in the unit disc under refinement; oracle is the exact slit-disc capacity.

    Piecewise-linear trial functions are admissible for the continuum problem,
    so every discrete value lies above the exact capacity, which is the floor.
    """
    conds = []
    for res in resolutions:
        step = (np.pi / 2) / res
        radii = np.concatenate([[0.0], _shells(a / 64, a, step), _shells(a, 1.0, step)[1:]])
        pts, tops = layered_mesh(2, res, radii)
        cx = SimplicialComplex.from_simplices(pts, tops)
        metric = MetricField.from_model(cx)
        x, y = cx.points.T
        conds.append(Condenser(cx, metric, np.flatnonzero((np.abs(y) < 1e-12) & (np.abs(x) <= a * (1 + 1e-12)))))
    return polar_probe(conds, resolutions, lambda _: grotzsch_capacity(a), f"segment a={a}", options)
