"""Sampled quasiconformal maps: pullbacks, distortion, chain rule and change of variables."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .capacity import Condenser, solve_condenser
from .complex import MetricField, SimplicialComplex
from .exterior import compound, from_components, index_sets
from .forms import (AnalyticForm, SampledForm, coboundary, de_rham_project, lp_form_norm,
                    sample_form, whitney_lift)

__all__ = [
    "CatalogMap",
    "SampledMap",
    "DistortionReport",
    "DegenerateMapError",
    "OutOfRangeError",
    "identity_map",
    "mobius_map",
    "radial_stretch",
    "affine_map",
    "compose",
    "catalog_map",
    "sample_map",
    "distortion_coefficient",
    "pullback_form",
    "pullback_analytic",
    "chain_rule_residual",
    "change_of_variables_check",
    "pushforward_mesh",
    "capacity_sandwich",
    "norm_bound_check",
    "observed_order",
]


class DegenerateMapError(ValueError):
    """The differential is singular at some node."""


class OutOfRangeError(ValueError):
    """An image point falls outside the domain of the sampled target form."""


@dataclass(frozen=True)
class CatalogMap:
    """A map R^n -> R^n given by formulas for its values and its differential."""

    name: str
    n: int
    value: Callable[[np.ndarray], np.ndarray]
    differential: Callable[[np.ndarray], np.ndarray]
    params: tuple = ()

    def __call__(self, x):
        return self.value(x)


def identity_map(n: int) -> CatalogMap:
    return CatalogMap("identity", n, lambda x: np.array(x, float),
                      lambda x: np.broadcast_to(np.eye(n), x.shape + (n,)).copy())


def mobius_map(a: complex = 0.5) -> CatalogMap:
    """Disc automorphism z -> (z - a) / (1 - conj(a) z) of the plane."""
    a = complex(a)
    if abs(a) >= 1:
        raise ValueError("Mobius parameter must lie in the open unit disc")

    def value(x):
        z = x[..., 0] + 1j * x[..., 1]
        w = (z - a) / (1 - np.conj(a) * z)
        return np.stack([w.real, w.imag], axis=-1)

    def differential(x):
        z = x[..., 0] + 1j * x[..., 1]
        d = (1 - abs(a) ** 2) / (1 - np.conj(a) * z) ** 2
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0], out[..., 0, 1] = d.real, -d.imag
        out[..., 1, 0], out[..., 1, 1] = d.imag, d.real
        return out

    return CatalogMap("mobius", 2, value, differential, (a,))


def radial_stretch(a: float = 2.0, n: int = 2) -> CatalogMap:
    """x -> |x|^{a-1} x; singular values a|x|^{a-1} (radial) and |x|^{a-1} (tangential)."""

    def value(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return r ** (a - 1) * x

    def differential(x):
        r = np.linalg.norm(x, axis=-1)
        u = x / r[..., None]
        outer = u[..., :, None] * u[..., None, :]
        return (r ** (a - 1))[..., None, None] * (np.eye(n) + (a - 1) * outer)

    return CatalogMap("radial_stretch", n, value, differential, (a,))


def affine_map(A, b=None) -> CatalogMap:
    A = np.asarray(A, float)
    n = A.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, float)
    return CatalogMap("affine", n, lambda x: x @ A.T + b,
                      lambda x: np.broadcast_to(A, x.shape + (n,)).copy(), (A, b))


def compose(g: CatalogMap, f: CatalogMap) -> CatalogMap:
    """g after f, with the chain rule for the differential."""
    if f.n != g.n:
        raise ValueError("dimension mismatch in composition")
    return CatalogMap(f"{g.name}*{f.name}", f.n, lambda x: g.value(f.value(x)),
                      lambda x: g.differential(f.value(x)) @ f.differential(x), (g, f))


def catalog_map(name: str, n: int = 2, **params) -> CatalogMap:
    """Look up a catalog map by name: identity, mobius (a), radial_stretch (a), affine (A, b)."""
    if name == "identity":
        return identity_map(n)
    if name == "mobius":
        if n != 2:
            raise ValueError("mobius maps are planar")
        return mobius_map(params.get("a", 0.5))
    if name == "radial_stretch":
        return radial_stretch(params.get("a", 2.0), n)
    if name == "affine":
        return affine_map(params.get("A", np.eye(n)), params.get("b"))
    raise ValueError(f"unknown catalog map {name!r}")


@dataclass(frozen=True, eq=False)
class SampledMap:
    """A map sampled at the quadrature nodes of a flat source mesh."""

    source: SimplicialComplex
    metric: MetricField
    image: np.ndarray
    df: np.ndarray
    J: np.ndarray
    analytic: Optional[CatalogMap] = None

    @property
    def n(self) -> int:
        return self.source.n


def sample_map(f: CatalogMap, cx: SimplicialComplex, metric: MetricField) -> SampledMap:
    if cx.ambient_dim != cx.n or f.n != cx.n:
        raise ValueError("maps are sampled on flat n-dimensional meshes")
    x = metric.x
    df = np.asarray(f.differential(x), float)
    return SampledMap(cx, metric, np.asarray(f.value(x), float), df, np.linalg.det(df), f)


# --- distortion -------------------------------------------------------------------

@dataclass(frozen=True)
class DistortionReport:
    K_estimate: float
    H_estimate: float
    node_K: np.ndarray
    histogram: tuple

    def __post_init__(self):
        if self.K_estimate < 1 - 1e-12 or self.H_estimate < 1 - 1e-12:
            raise ValueError("distortion estimates below 1")


def distortion_coefficient(f: SampledMap, bins: int = 10) -> DistortionReport:
    """K = max sigma_max(df)^n / |det df| and H = max sigma_max / sigma_min over nodes.

    Source and target carry Euclidean charts here; conformal factors on either
    side cancel in both ratios.
    """
    n = f.n
    s = np.linalg.svd(f.df, compute_uv=False)
    absJ = np.abs(f.J)
    if np.any(absJ <= 1e-300) or np.any(s[..., -1] <= 0):
        raise DegenerateMapError("differential is singular at some node")
    node_K = s[..., 0] ** n / absJ
    H = float(np.max(s[..., 0] / s[..., -1]))
    K = float(node_K.max())
    # rounding can put a conformal node a hair below 1
    K, H = max(K, 1.0), max(H, 1.0)
    lo, hi = float(node_K.min()), float(node_K.max())
    hist = np.histogram(node_K.ravel(), bins=bins, range=(lo, max(hi, lo * (1 + 1e-9) + 1e-12)))
    return DistortionReport(K, H, node_K, (hist[0], hist[1]))


# --- pullbacks --------------------------------------------------------------------

def _pull_components(beta_vals: np.ndarray, df: np.ndarray, n: int, k: int) -> np.ndarray:
    # (f*beta)_I = sum_J beta_J(f x) det(df[J, I])
    if k == 0:
        return beta_vals
    return np.einsum("...j,...ji->...i", beta_vals, compound(df, k))


def pullback_analytic(f: CatalogMap, beta: AnalyticForm) -> AnalyticForm:
    """f*beta as an analytic form, with f*(d beta) as its derivative."""
    n, k = beta.n, beta.degree

    def value(x):
        return _pull_components(np.asarray(beta.value(f.value(x)), float), f.differential(x), n, k)

    def deriv(x):
        return _pull_components(np.asarray(beta.derivative(f.value(x)), float), f.differential(x), n, k + 1)

    domain = None
    if beta.domain is not None:
        domain = lambda x: beta.domain(f.value(x))
    has_d = beta.derivative is not None and k < n
    return AnalyticForm(k, n, value, deriv if has_d else None, domain)


def pullback_form(f: SampledMap, beta: AnalyticForm) -> SampledForm:
    """Sample f*beta at the source nodes: beta at the image points composed with the k-th power of df."""
    n, k = f.n, beta.degree
    if beta.domain is not None and not np.all(beta.domain(f.image)):
        raise OutOfRangeError("image point outside the domain of the target form")
    vals = _pull_components(np.asarray(beta.value(f.image), float), f.df, n, k)
    dvals = None
    if beta.derivative is not None and k < n:
        dvals = _pull_components(np.asarray(beta.derivative(f.image), float), f.df, n, k + 1)
    field = pullback_analytic(f.analytic, beta).value if f.analytic is not None else None
    coeffs = from_components(vals, n, k) if k else vals[..., 0]
    dcoeffs = None
    if dvals is not None:
        dcoeffs = from_components(dvals, n, k + 1)
    return SampledForm(k, coeffs, dcoeffs, field)


def chain_rule_residual(f: SampledMap, beta: AnalyticForm, face_order: int = 12) -> float:
    """L^{n/(k+1)} norm of d(f*beta) - f*(d beta).

    d(f*beta) is computed discretely: project f*beta to a cochain, take the
    coboundary and lift it back.  f*(d beta) is sampled exactly.
    """
    n, k = f.n, beta.degree
    if beta.derivative is None or k >= n:
        raise ValueError("chain rule check needs d(beta) and k < n")
    cx, metric = f.source, f.metric
    pulled = pullback_form(f, beta)
    cochain = de_rham_project(pulled, cx, metric, face_order)
    discrete = whitney_lift(coboundary(cochain, cx), cx, metric)
    diff = SampledForm(k + 1, discrete.coeffs - pulled.dcoeffs)
    return lp_form_norm(diff, n / (k + 1), metric)


def change_of_variables_check(f: SampledMap, v: Callable[[np.ndarray], np.ndarray],
                              target: tuple) -> tuple:
    """(integral over the source of (v o f)|J|, integral of v over the target mesh)."""
    left = float(np.sum(f.metric.weights * np.asarray(v(f.image), float) * np.abs(f.J)))
    tcx, tmetric = target
    right = float(np.sum(tmetric.measure * np.asarray(v(tmetric.x), float)))
    return left, right


# --- quasi-invariance checks ---------------------------------------------------------

def pushforward_mesh(f: CatalogMap, cx: SimplicialComplex, order: int = 2):
    """The source complex with every vertex moved by f (flat Euclidean metric)."""
    pts = np.asarray(f.value(cx.points), float)
    out = SimplicialComplex.from_simplices(pts, cx.simplices[-1])
    return out, MetricField.from_model(out, order=order)


@dataclass
class SandwichReport:
    K: float
    source_value: float
    image_value: float
    lower: float
    upper: float
    tau: float

    @property
    def holds(self) -> bool:
        return self.lower - self.tau <= self.image_value <= self.upper + self.tau


def capacity_sandwich(f: CatalogMap, condenser: Condenser, tau_rel: float = 0.1) -> SandwichReport:
    """Check cap(F, U) / K - tau <= cap(fF, fU) <= K cap(F, U) + tau on the pushed-forward mesh."""
    cx = condenser.complex
    K = distortion_coefficient(sample_map(f, cx, condenser.metric)).K_estimate
    src = solve_condenser(condenser).value
    icx, imetric = pushforward_mesh(f, cx, condenser.metric.order)
    image = replace(condenser, complex=icx, metric=imetric)
    img = solve_condenser(image).value
    return SandwichReport(K, src, img, src / K, K * src, tau_rel * src)


@dataclass
class NormBoundReport:
    K: float
    ratios: np.ndarray
    h: float
    c_fit: float
    c_max: float

    @property
    def holds(self) -> bool:
        return self.c_fit <= self.c_max


def random_closed_forms(n: int, k: int, count: int, seed: int = 0) -> list:
    """Seeded random closed k-forms: constant forms plus d of random quadratic (k-1)-forms."""
    rng = np.random.default_rng(seed)
    C = len(index_sets(n, k))
    forms = []
    for i in range(count):
        if i % 2 == 0 or k == 0:
            c = rng.standard_normal(C)
            zero = np.zeros(len(index_sets(n, k + 1))) if k < n else None
            forms.append(AnalyticForm(k, n, lambda x, c=c: np.broadcast_to(c, x.shape[:-1] + (C,)).copy(),
                                      (lambda x, z=zero: np.broadcast_to(z, x.shape[:-1] + z.shape).copy())
                                      if zero is not None else None))
        else:
            forms.append(_exact_quadratic(n, k, rng))
    return forms


def _exact_quadratic(n: int, k: int, rng) -> AnalyticForm:
    # d of eta = sum_J q_J(x) dx^J with quadratic coefficients q_J = x^T A_J x + b_J . x
    from .exterior import exterior_derivative_components

    Cs = len(index_sets(n, k - 1))
    A = rng.standard_normal((Cs, n, n))
    A = A + np.swapaxes(A, -1, -2)
    b = rng.standard_normal((Cs, n))

    def value(x):
        grad = 2 * np.einsum("jab,...b->...ja", A, x) + b
        return exterior_derivative_components(grad, n, k - 1)

    zero = np.zeros(len(index_sets(n, k + 1))) if k < n else None
    deriv = (lambda x: np.broadcast_to(zero, x.shape[:-1] + zero.shape).copy()) if zero is not None else None
    return AnalyticForm(k, n, value, deriv)


def norm_bound_check(f: CatalogMap, cx: SimplicialComplex, metric: MetricField, k: int,
                     probes: int = 100, seed: int = 0, c_max: float = 1.0) -> NormBoundReport:
    """||f* theta||_{n/k} <= K^{k/n} ||theta||_{n/k} (1 + c h) for seeded random closed forms.

    The target norm is computed on the pushed-forward mesh with its own
    quadrature; c_fit is the smallest c making every probe satisfy the bound.
    """
    n = cx.n
    sm = sample_map(f, cx, metric)
    K = distortion_coefficient(sm).K_estimate
    tcx, tmetric = pushforward_mesh(f, cx, metric.order)
    h = float(np.max(np.linalg.norm(cx.points[cx.simplices[1][:, 0]] - cx.points[cx.simplices[1][:, 1]], axis=1)))
    p = n / k
    ratios = []
    for theta in random_closed_forms(n, k, probes, seed):
        left = lp_form_norm(pullback_form(sm, theta), p, metric)
        right = lp_form_norm(sample_form(theta, tmetric), p, tmetric)
        ratios.append(left / (K ** (k / n) * right))
    ratios = np.array(ratios)
    c_fit = float(max(0.0, (ratios.max() - 1.0) / h))
    return NormBoundReport(K, ratios, h, c_fit, c_max)


def observed_order(h: Sequence[float], err: Sequence[float]) -> np.ndarray:
    """Convergence orders log(e_i / e_{i+1}) / log(h_i / h_{i+1}) between consecutive levels."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])
