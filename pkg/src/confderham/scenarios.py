"""Scenario configs and the experiments they run.

A config is an INI file with one section per scenario.  Every section needs an
``experiment`` key; the remaining keys and their defaults are listed in
:data:`EXPERIMENTS`.  Lists are comma separated.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .capacity import (ClassificationError, Condenser, ConvergenceError, SolverOptions,
                       classify_type, euclidean_exhaustion, point_probe, poincare_exhaustion,
                       radial_capacity, segment_probe, sol_exhaustion, solve_condenser)
from .catalog import KINDS, ModelSpaceSpec, build_model_space
from .cohomology import (cohomology_ranks, integrate_top, knr_probe_hyperbolic,
                         knr_probe_parabolic, sobolev_constant, torsion_probe_degree1)
from .complex import MetricField, SimplicialComplex, refine
from .exterior import exterior_derivative_components, index_sets, to_components
from .forms import (AnalyticForm, Cochain, coboundary, conformal_norm, lp_form_norm, wedge,
                    whitney_lift, whitney_values)
from .pullback import (capacity_sandwich, catalog_map, chain_rule_residual, distortion_coefficient,
                       norm_bound_check, observed_order, sample_map)
from .report import ScenarioResult


class ConfigError(ValueError):
    """Invalid scenario config; the message names the file, line and field."""


# --- value parsers ------------------------------------------------------------

def _floats(s: str) -> tuple:
    vals = tuple(float(v) for v in s.split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _ints(s: str) -> tuple:
    vals = tuple(int(v) for v in s.split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s
    parse.__name__ = "one of " + "|".join(options)
    return parse


def _optional(parse):
    def inner(s: str):
        return None if s.strip().lower() in ("", "none") else parse(s)
    inner.__name__ = getattr(parse, "__name__", "value")
    return inner


_space = _choice(*KINDS)
_mode = _choice("absolute", "compact")

SPACE_KEYS = {
    "space": (_space, "euclidean_box"),
    "n": (int, 2),
    "resolution": (int, 2),
    "radius": (float, 1.0),
    "inner_radius": (_optional(float), None),
    "extents": (_optional(_floats), None),
    "layers": (_optional(int), None),
    "order": (int, 2),
    "levels": (_ints, (0,)),
}

SOLVER_KEYS = {
    "eps_stages": (_floats, SolverOptions().eps_stages),
    "max_newton": (int, SolverOptions().max_newton),
}

# experiment -> {key: (parser, default)}; these are the documented defaults
EXPERIMENTS = {
    "norms": {**SPACE_KEYS, "probes": (int, 3), "factors": (_floats, (0.5, 2.0)),
              "random_factor": (_bool, True), "tol": (float, 1e-10)},
    "algebra_axioms": {**SPACE_KEYS, "samples": (int, 100), "tol": (float, 1e-12)},
    "capacity_table": {**SOLVER_KEYS, "n": (int, 2), "inner": (float, 1.0), "outer": (_floats, (math.e,)),
                       "resolution": (int, 16), "layers": (_optional(int), None),
                       "factors": (_floats, (0.5, 2.0)), "tol_rel": (float, 0.05),
                       "invariance_tol": (float, 1e-10)},
    "classify": {**SOLVER_KEYS, "family": (_choice("euclidean", "poincare", "sol"), "euclidean"),
                 "n": (int, 2), "sizes": (_floats, tuple(math.exp(v) for v in (2, 4, 8, 16))),
                 "resolution": (int, 8), "core": (_optional(float), None), "h": (float, 0.5),
                 "growth": (float, 1.5), "threshold": (float, 1e-3), "monotone_rtol": (float, 1e-3),
                 "expect": (_optional(_choice("Parabolic", "Hyperbolic")), None),
                 "slope_tol": (float, 0.25)},
    "polar": {**SOLVER_KEYS, "probe": (_choice("point", "segment", "torsion"), "point"), "n": (int, 2),
              "eps": (_floats, (1e-2, 1e-4, 1e-8)), "resolution": (int, 6),
              "resolutions": (_ints, (4, 8, 16)), "a": (float, 0.5), "r0": (float, 0.5),
              "oracle_tol": (float, 0.25)},
    "pullback": {**SPACE_KEYS, "map": (_choice("identity", "mobius", "radial_stretch", "affine"), "radial_stretch"),
                 "a": (float, 2.0), "mobius_a": (float, 0.5), "matrix": (_optional(_floats), None),
                 "offset": (_optional(_floats), None), "degree": (int, 1), "probes": (int, 100),
                 "c_max": (float, 1.0), "expect_k": (_optional(float), None), "k_tol": (float, 0.1),
                 "chain_levels": (int, 2), "order_min": (float, 1.0),
                 "sandwich_inner": (float, 0.5), "sandwich_resolution": (int, 8), "tau_rel": (float, 0.1)},
    "cohomology": {**SPACE_KEYS, "mode": (_mode, "absolute"), "expect": (_optional(_ints), None)},
    "sobolev_series": {"family": (_choice("h3", "sol", "euclidean"), "h3"), "degree": (int, 2),
                       "sizes": (_floats, (0.9, 0.99, 0.999, 0.9999)), "resolution": (int, 2),
                       "probes": (int, 4), "extremal": (int, 6), "mode": (_mode, "compact"),
                       "expect": (_optional(_choice("bounded", "growing")), None),
                       "bound_max": (float, 2.0), "growth_min": (float, 4.0)},
    "knr": {"family": (_choice("parabolic", "hyperbolic"), "parabolic"), "n": (int, 2),
            "sizes": (_floats, tuple(math.exp(v) for v in (1, 2, 4, 8))), "resolution": (int, 6),
            "bound_max": (float, 2.0), "integral_min": (float, 0.5), "oracle_tol": (_optional(float), None),
            "stokes_probes": (int, 20), "stokes_tol": (float, 1e-12)},
    "sol_vs_h3": {"degree": (int, 2), "h3_sizes": (_floats, (0.9, 0.99, 0.999, 0.9999)),
                  "h3_resolution": (int, 2), "sol_sizes": (_floats, (1.0, 2.0, 3.0, 4.0)),
                  "sol_resolution": (int, 3), "probes": (int, 4), "extremal": (int, 6),
                  "h3_bound_max": (float, 2.0), "sol_growth_min": (float, 4.0)},
}

COMMON_KEYS = {"experiment", "seed", "output", "description"}


@dataclass
class Scenario:
    name: str
    experiment: str
    params: dict
    seed: int = 0
    output: Optional[str] = None
    source: str = ""

    @property
    def basename(self) -> str:
        return self.output or self.name


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section is not None and s and s[0] not in "#;":
            m = re.match(r"([^=:]+?)\s*[=:]", s)
            if m:
                lines[(section, m.group(1).strip().lower())] = i
    return lines


def parse_config(path, seed: Optional[int] = None) -> list:
    """Read and validate every scenario in an INI config.

    ``seed`` overrides the per-scenario seeds.  Raises :class:`ConfigError`.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config ({err.strerror})") from None
    return parse_config_text(text, str(path), seed)


def parse_config_text(text: str, source: str = "<config>", seed: Optional[int] = None) -> list:
    parser = configparser.ConfigParser(interpolation=None, default_section="defaults")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(str(err).replace("\n", " ")) from None
    lines = _key_lines(text)

    def where(section, key=None):
        line = lines.get((section, key)) if key else None
        loc = f"{source}:{line}" if line else source
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    scenarios = []
    for section in parser.sections():
        sec = parser[section]
        if "experiment" not in sec:
            raise ConfigError(f"{where(section)}: missing required key 'experiment'")
        exp = sec["experiment"].strip()
        if exp not in EXPERIMENTS:
            raise ConfigError(f"{where(section, 'experiment')}: unknown experiment {exp!r} "
                              f"(known: {', '.join(EXPERIMENTS)})")
        schema = EXPERIMENTS[exp]
        params = {k: d for k, (_, d) in schema.items()}
        for key in sec:
            if key in COMMON_KEYS:
                continue
            if key not in schema:
                if key in parser.defaults():
                    continue
                raise ConfigError(f"{where(section, key)}: unknown key for experiment {exp!r}")
            parse = schema[key][0]
            try:
                params[key] = parse(sec[key])
            except ValueError as err:
                raise ConfigError(f"{where(section, key)}: invalid value {sec[key]!r} ({err})") from None
        try:
            sc_seed = int(sec.get("seed", "0")) if seed is None else int(seed)
        except ValueError:
            raise ConfigError(f"{where(section, 'seed')}: seed must be an integer") from None
        _validate(exp, params, lambda key: where(section, key))
        out = sec.get("output")
        if out is not None and not re.fullmatch(r"[A-Za-z0-9_.-]+", out):
            raise ConfigError(f"{where(section, 'output')}: output must be a plain file stem")
        scenarios.append(Scenario(section, exp, params, sc_seed, out, source))
    if not scenarios:
        raise ConfigError(f"{source}: no scenario sections")
    return scenarios


def _validate(exp: str, p: dict, where: Callable) -> None:
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(f"{where(key)}: {msg}")

    if "levels" in p:
        need(min(p["levels"]) >= 0, "levels", "refinement levels must be >= 0")
    if "n" in p:
        need(p["n"] in (2, 3), "n", "dimension must be 2 or 3")
    for key in ("sizes", "outer", "h3_sizes", "sol_sizes"):
        if key in p:
            need(all(np.diff(p[key]) > 0), key, "schedule must be strictly increasing")
    if "eps" in p:
        need(all(np.diff(p["eps"]) < 0) and min(p["eps"]) > 0, "eps", "eps must be positive and strictly decreasing")
    if exp in ("classify", "sobolev_series", "sol_vs_h3"):
        for key in ("sizes", "h3_sizes", "sol_sizes"):
            if key in p:
                need(len(p[key]) >= 3, key, "schedule needs at least 3 stages")
    if exp == "sobolev_series":
        need(p["family"] != "h3" or max(p["sizes"]) < 1, "sizes", "Poincare radii must be < 1")
    if exp == "sol_vs_h3":
        need(max(p["h3_sizes"]) < 1, "h3_sizes", "Poincare radii must be < 1")
    if exp == "classify" and p["family"] == "poincare":
        need(max(p["sizes"]) < 1, "sizes", "Poincare radii must be < 1")
    if exp == "polar":
        need(max(p["eps"]) < min(1.0, p["r0"] if p["probe"] == "torsion" else 1.0), "eps",
             "eps must lie inside the outer ball")
    if exp == "capacity_table":
        need(min(p["outer"]) > p["inner"], "outer", "outer radii must exceed the inner radius")
    if exp == "pullback" and p["map"] == "affine":
        need(p["matrix"] is not None and len(p["matrix"]) == p["n"] ** 2, "matrix",
             "affine map needs an n*n row-major matrix")
    if "space" in p and exp != "capacity_table":
        try:
            _space_spec(p)
        except ValueError as err:
            raise ConfigError(f"{where('space')}: {err}") from None


# --- shared helpers -------------------------------------------------------------

def _space_spec(p: dict) -> ModelSpaceSpec:
    spec = ModelSpaceSpec(p["space"], n=p["n"], resolution=p["resolution"], radius=p["radius"],
                          inner_radius=p["inner_radius"], extents=p["extents"], layers=p["layers"],
                          order=p["order"])
    if spec.kind == "sol_box" and spec.n != 3:
        raise ValueError("sol_box requires n = 3")
    if spec.kind == "poincare_ball" and spec.radius >= 1:
        raise ValueError("poincare_ball radius must be < 1")
    return spec


def build_stage(p: dict, level: int):
    """Catalog space from the config keys, refined ``level`` times."""
    cx, metric = build_model_space(_space_spec(p))
    for _ in range(level):
        cx, metric = refine(cx, metric)
    return cx, metric


def _solver(p: dict) -> SolverOptions:
    return SolverOptions(eps_stages=tuple(p["eps_stages"]), max_newton=p["max_newton"])


def _stage_guard(result: ScenarioResult, stage, fn):
    """Run one stage; solver failures are recorded and the run continues."""
    try:
        return fn()
    except (ConvergenceError, ClassificationError, np.linalg.LinAlgError, RuntimeError, ValueError) as err:
        result.errors.append(f"stage {stage}: {type(err).__name__}: {err}")
        return None


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


# --- algebra identities ---------------------------------------------------------

def _degree_pairs(n: int) -> list:
    return [(k, l) for k, l in product(range(n + 1), repeat=2) if k + l <= n]


def _chart_gradient(c: Cochain, d: Cochain, cx: SimplicialComplex, metric: MetricField, n: int) -> np.ndarray:
    """Chart gradient of the components of whitney(c) ^ whitney(d) at the nodes.

    The product is quadratic in the barycentric coordinates, so a central
    difference with unit step along each barycentric axis is exact; the chain
    rule through d(lambda) then gives the chart gradient.
    """
    k, l = c.degree, d.degree
    base = metric.bary
    nv = base.shape[1]
    grads = []
    for v in range(nv):
        e = np.zeros(nv)
        e[v] = 1.0
        vals = []
        for s in (1.0, -1.0):
            b = base + s * e
            prod_ = _wedge_lift(whitney_values(c, cx, metric, b), whitney_values(d, cx, metric, b), n, k, l)
            vals.append(prod_)
        grads.append(0.5 * (vals[0] - vals[1]))
    gb = np.stack(grads, axis=-1)  # (m, q, C, n+1)
    return np.einsum("mqcv,mvj->mqcj", gb, metric.dbary)


def _wedge_lift(a: np.ndarray, b: np.ndarray, n: int, k: int, l: int) -> np.ndarray:
    from .exterior import wedge_components
    return wedge_components(a, b, n, k, l)


def axiom_residuals(cx: SimplicialComplex, metric: MetricField, samples: int, seed: int = 0) -> dict:
    """Worst residuals of the exact discrete identities over seeded random cochains.

    Returns relative residuals of d d = 0 and boundary-of-boundary = 0, graded
    commutativity and Leibniz for Whitney-lift products, and the largest
    Hölder ratio ||a ^ b|| / (||a|| ||b||) (at most 1 when the identity holds).
    """
    rng = np.random.default_rng(seed)
    n = cx.n
    out = {"dd": 0.0, "boundary_boundary": 0.0, "graded_commutativity": 0.0, "leibniz": 0.0,
           "holder": 0.0}
    for k in range(1, n):
        bb = cx.incidence[k] @ cx.incidence[k + 1]
        out["boundary_boundary"] = max(out["boundary_boundary"], float(abs(bb).max()) if bb.nnz else 0.0)
    pairs = _degree_pairs(n)
    lifts = {}

    def lift(c):
        key = id(c)
        if key not in lifts:
            lifts[key] = whitney_lift(c, cx, metric)
        return lifts[key]

    p_of = lambda k: np.inf if k == 0 else n / k
    for i in range(samples):
        k, l = pairs[i % len(pairs)]
        a = Cochain(k, rng.standard_normal(cx.count(k)))
        b = Cochain(l, rng.standard_normal(cx.count(l)))
        if k + 2 <= n:
            dd = coboundary(coboundary(a, cx), cx).values
            out["dd"] = max(out["dd"], float(np.abs(dd).max() / np.abs(a.values).max()))
        la, lb = whitney_lift(a, cx, metric), whitney_lift(b, cx, metric)
        ab, ba = wedge(la, lb, n), wedge(lb, la, n)
        s = -1.0 if (k * l) % 2 else 1.0
        scale = max(float(np.abs(ab.coeffs).max()), 1e-300)
        out["graded_commutativity"] = max(out["graded_commutativity"],
                                          float(np.abs(ab.coeffs - s * ba.coeffs).max()) / scale)
        if k + l + 1 <= n:
            grad = _chart_gradient(a, b, cx, metric, n)
            direct = exterior_derivative_components(grad, n, k + l)
            leib = to_components(ab.dcoeffs, n, k + l + 1)
            dscale = max(float(np.abs(direct).max()), float(np.abs(leib).max()), 1e-300)
            out["leibniz"] = max(out["leibniz"], float(np.abs(direct - leib).max()) / dscale)
        norm_ab = lp_form_norm(ab, p_of(k + l), metric)
        norm_a = lp_form_norm(la, p_of(k), metric) if k else float(np.abs(la.coeffs).max())
        norm_b = lp_form_norm(lb, p_of(l), metric) if l else float(np.abs(lb.coeffs).max())
        if norm_a * norm_b > 0:
            out["holder"] = max(out["holder"], norm_ab / (norm_a * norm_b))
    return out


# --- experiments ----------------------------------------------------------------

def run_norms(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    tab = res.table("main", ["degree", "probe", "factor", "lp_part", "dlp_part", "total", "rel_change"])
    worst = 0.0
    for level in p["levels"]:
        stage = _stage_guard(res, level, lambda: build_stage(p, level))
        if stage is None:
            continue
        cx, metric = stage
        rng = np.random.default_rng(s.seed)
        factors = [(repr(f), f) for f in p["factors"]]
        if p["random_factor"]:
            factors.append(("random", np.exp(rng.uniform(-1.0, 1.0, metric.lam.shape))))
        for k in range(cx.n + 1):
            for i in range(p["probes"]):
                c = Cochain(k, rng.standard_normal(cx.count(k)))
                ref = conformal_norm(c, cx, metric)
                tab.add(s.name, s.seed, level, k, i, "1", ref.lp_part, ref.dlp_part, ref.total, 0.0)
                for label, f in factors:
                    rep = conformal_norm(c, cx, metric.rescaled(f))
                    change = max(_rel(rep.lp_part, ref.lp_part),
                                 _rel(rep.dlp_part, ref.dlp_part) if ref.dlp_part else abs(rep.dlp_part))
                    worst = max(worst, change)
                    tab.add(s.name, s.seed, level, k, i, label, rep.lp_part, rep.dlp_part, rep.total, change)
    res.check("conformal invariance of graph norms", worst <= p["tol"], f"max rel change {worst:.3e} (tol {p['tol']:g})")


def run_algebra_axioms(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    tab = res.table("main", ["identity", "samples", "worst"])
    worst = {}
    for level in p["levels"]:
        def stage():
            cx, metric = build_stage(p, level)
            return axiom_residuals(cx, metric, p["samples"], s.seed)
        r = _stage_guard(res, level, stage)
        if r is None:
            continue
        for name, v in r.items():
            tab.add(s.name, s.seed, level, name, p["samples"], v)
            worst[name] = max(worst.get(name, 0.0), v)
    tol = p["tol"]
    for name in ("dd", "boundary_boundary", "graded_commutativity", "leibniz"):
        if name in worst:
            res.check(name, worst[name] <= tol, f"worst relative residual {worst[name]:.3e} (tol {tol:g})")
    if "holder" in worst:
        res.check("holder", worst["holder"] <= 1 + tol, f"worst ratio {worst['holder']:.15f} (bound 1 + {tol:g})")


def annulus_condenser(n: int, inner: float, outer: float, resolution: int, layers=None) -> Condenser:
    """Annulus mesh with the plate on the inner sphere and zero on the outer one."""
    cx, metric = build_model_space(ModelSpaceSpec("annulus", n=n, resolution=resolution, radius=outer,
                                                  inner_radius=inner, layers=layers))
    r = np.linalg.norm(cx.points, axis=1)
    return Condenser(cx, metric, np.flatnonzero(r <= inner * (1 + 1e-9)))


def run_capacity_table(s: Scenario, res: ScenarioResult) -> None:
    from dataclasses import replace

    p = s.params
    opts = _solver(p)
    tab = res.table("main", ["R", "value", "iterations", "epsilon_final", "oracle", "rel_error"])
    inv = res.table("invariance", ["R", "factor", "value", "rel_change"])
    worst_err, worst_inv, done = 0.0, 0.0, 0
    for stage, R in enumerate(p["outer"]):
        def run():
            c = annulus_condenser(p["n"], p["inner"], R, p["resolution"], p["layers"])
            return c, solve_condenser(c, opts)
        out = _stage_guard(res, stage, run)
        if out is None:
            continue
        c, r = out
        oracle = radial_capacity(p["n"], p["inner"], R)
        err = _rel(r.value, oracle)
        worst_err = max(worst_err, err)
        done += 1
        tab.add(s.name, s.seed, stage, R, r.value, r.iterations, r.epsilon_final, oracle, err)
        for f in p["factors"]:
            v = _stage_guard(res, stage, lambda: solve_condenser(replace(c, metric=c.metric.rescaled(f)), opts).value)
            if v is None:
                continue
            ch = _rel(v, r.value)
            worst_inv = max(worst_inv, ch)
            inv.add(s.name, s.seed, stage, R, f, v, ch)
    if done:
        res.check("capacity vs radial oracle", worst_err <= p["tol_rel"],
                  f"worst rel error {worst_err:.3e} (tol {p['tol_rel']:g})")
        res.check("conformal invariance of capacity", worst_inv <= p["invariance_tol"],
                  f"worst rel change {worst_inv:.3e} (tol {p['invariance_tol']:g})")


def _exhaustion(p: dict):
    fam, sizes = p["family"], p["sizes"]
    if fam == "euclidean":
        return euclidean_exhaustion(p["n"], sizes, p["resolution"], p["core"] or 1.0)
    if fam == "poincare":
        return poincare_exhaustion(p["n"], sizes, p["resolution"], p["core"] or 0.25)
    return sol_exhaustion(sizes, p["h"], p["growth"], p["core"] or 1.0)


def run_classify(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    tab = res.table("main", ["size", "radius", "value", "iterations", "epsilon_final"])
    spec = _exhaustion(p)
    cls = _stage_guard(res, "all", lambda: classify_type(spec, p["threshold"], p["monotone_rtol"], _solver(p)))
    if cls is None:
        return
    for i, (R, rad, r) in enumerate(zip(spec.sizes, cls.radii, cls.results)):
        tab.add(s.name, s.seed, i, R, rad, r.value, r.iterations, r.epsilon_final)
    fit = res.table("fit", ["verdict", "residual_parabolic", "residual_hyperbolic", "slope"])
    fit.add(s.name, s.seed, "all", cls.verdict, cls.residual_parabolic, cls.residual_hyperbolic, cls.slope)
    if p["expect"]:
        res.check("verdict", cls.verdict == p["expect"], f"{cls.verdict} (expected {p['expect']})")
    if p["expect"] == "Parabolic":
        target = 1 - p["n"]
        err = abs(cls.slope - target) / abs(target)
        res.check("decay exponent", err <= p["slope_tol"],
                  f"slope {cls.slope:.4f} vs {target} (rel {err:.3e}, tol {p['slope_tol']:g})")


def run_polar(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    opts = _solver(p)
    tab = res.table("main", ["parameter", "value", "oracle", "rel_error"])
    if p["probe"] == "point":
        ser = _stage_guard(res, "all", lambda: point_probe(p["n"], p["eps"], p["resolution"], opts))
    elif p["probe"] == "segment":
        ser = _stage_guard(res, "all", lambda: segment_probe(p["a"], p["resolutions"], opts))
    else:
        tor = _stage_guard(res, "all", lambda: torsion_probe_degree1(p["n"], p["eps"], p["r0"], p["resolution"]))
        if tor is None:
            return
        for i, (e, r, o) in enumerate(zip(tor.eps, tor.ratio, tor.oracle_ratio)):
            tab.add(s.name, s.seed, i, e, r, o, _rel(r, o))
        errs = np.abs(tor.ratio / tor.oracle_ratio - 1)
        res.check("ratio strictly increasing", bool(np.all(np.diff(tor.ratio) > 0)), str(tor.ratio))
        res.check("ratio vs oracle", float(errs.max()) <= p["oracle_tol"],
                  f"worst rel error {errs.max():.3e} (tol {p['oracle_tol']:g})")
        return
    if ser is None:
        return
    for i, (e, v, o) in enumerate(zip(ser.parameters, ser.values, ser.oracle)):
        tab.add(s.name, s.seed, i, e, v, o, _rel(v, o))
    if p["probe"] == "point":
        errs = np.abs(ser.values / ser.oracle - 1)
        res.check("series decreasing", bool(np.all(np.diff(ser.values) < 0)), str(ser.values))
        res.check("series vs (log 1/eps)^(1-n) oracle", float(errs.max()) <= p["oracle_tol"],
                  f"worst rel error {errs.max():.3e} (tol {p['oracle_tol']:g})")
    else:
        floor = float(ser.oracle[0])
        res.check("segment series above floor", bool(np.all(ser.values >= floor)),
                  f"min {ser.values.min():.4f} vs floor {floor:.4f}")


def _catalog_map(p: dict):
    name, n = p["map"], p["n"]
    if name == "radial_stretch":
        return catalog_map(name, n, a=p["a"])
    if name == "mobius":
        return catalog_map(name, n, a=p["mobius_a"])
    if name == "affine":
        A = np.asarray(p["matrix"], float).reshape(n, n)
        return catalog_map(name, n, A=A, b=p["offset"])
    return catalog_map(name, n)


def x_dy_form(n: int) -> AnalyticForm:
    """The 1-form x_0 dx_1 and its derivative dx_0 ^ dx_1."""
    sets1, sets2 = index_sets(n, 1), index_sets(n, 2)
    i1, i2 = sets1.index((1,)), sets2.index((0, 1))

    def value(x):
        out = np.zeros(x.shape[:-1] + (len(sets1),))
        out[..., i1] = x[..., 0]
        return out

    def derivative(x):
        out = np.zeros(x.shape[:-1] + (len(sets2),))
        out[..., i2] = 1.0
        return out

    return AnalyticForm(1, n, value, derivative)


def _mesh_size(cx: SimplicialComplex) -> float:
    e = cx.simplices[1]
    return float(np.max(np.linalg.norm(cx.points[e[:, 0]] - cx.points[e[:, 1]], axis=1)))


def run_pullback(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    f = _catalog_map(p)
    n = p["n"]
    dist = res.table("main", ["K", "H", "expected_K"])
    cx, metric = build_stage(p, p["levels"][0])
    rep = _stage_guard(res, 0, lambda: distortion_coefficient(sample_map(f, cx, metric)))
    if rep is not None:
        dist.add(s.name, s.seed, 0, rep.K_estimate, rep.H_estimate, p["expect_k"] if p["expect_k"] else "")
        if p["expect_k"]:
            err = _rel(rep.K_estimate, p["expect_k"])
            res.check("distortion K", err <= p["k_tol"], f"K {rep.K_estimate:.6f} vs {p['expect_k']} (rel {err:.3e})")

    nb = _stage_guard(res, 0, lambda: norm_bound_check(f, cx, metric, p["degree"], p["probes"], s.seed, p["c_max"]))
    if nb is not None:
        tab = res.table("norm_bound", ["probe", "ratio", "K", "h", "c_fit"])
        for i, r in enumerate(nb.ratios):
            tab.add(s.name, s.seed, 0, i, r, nb.K, nb.h, nb.c_fit)
        res.check("norm bound", nb.holds, f"max ratio {nb.ratios.max():.4f}, c_fit {nb.c_fit:.3e} (c_max {p['c_max']:g})")

    beta = x_dy_form(n)
    tab = res.table("chain_rule", ["h", "residual", "order"])
    hs, errs = [], []
    ccx, cmetric = cx, metric
    for level in range(p["chain_levels"] + 1):
        if level:
            ccx, cmetric = refine(ccx, cmetric)
        r = _stage_guard(res, level, lambda: chain_rule_residual(sample_map(f, ccx, cmetric), beta))
        if r is None:
            break
        hs.append(_mesh_size(ccx))
        errs.append(r)
    orders = observed_order(hs, errs) if len(errs) > 1 else np.array([])
    for i, (h, e) in enumerate(zip(hs, errs)):
        tab.add(s.name, s.seed, i, h, e, orders[i - 1] if i else "")
    if len(errs) > 1:
        if max(errs) < 1e-10:
            res.check("chain rule", True, f"residual at rounding level ({max(errs):.2e})")
        else:
            overall = float(observed_order([hs[0], hs[-1]], [errs[0], errs[-1]])[0])
            res.check("chain rule order", overall >= p["order_min"],
                      f"overall order {overall:.4f} (min {p['order_min']:g}), steps {np.round(orders, 4).tolist()}")

    c = annulus_condenser(n, p["sandwich_inner"], 1.0, p["sandwich_resolution"])
    sw = _stage_guard(res, 0, lambda: capacity_sandwich(f, c, p["tau_rel"]))
    if sw is not None:
        tab = res.table("sandwich", ["K", "source", "image", "lower", "upper", "tau"])
        tab.add(s.name, s.seed, 0, sw.K, sw.source_value, sw.image_value, sw.lower, sw.upper, sw.tau)
        res.check("capacity sandwich", sw.holds,
                  f"{sw.lower:.4f} - {sw.tau:.4f} <= {sw.image_value:.4f} <= {sw.upper:.4f} + {sw.tau:.4f}")


def run_cohomology(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    tab = res.table("main", ["mode", "degree", "cocycles", "coboundaries", "betti"])
    seen = []
    for level in p["levels"]:
        rep = _stage_guard(res, level, lambda: cohomology_ranks(build_stage(p, level)[0], p["mode"]))
        if rep is None:
            continue
        for k, (z, b, h) in enumerate(zip(rep.cocycles, rep.coboundaries, rep.betti)):
            tab.add(s.name, s.seed, level, p["mode"], k, z, b, h)
        seen.append(tuple(int(v) for v in rep.betti))
        if p["expect"] is not None:
            res.check(f"betti numbers at level {level}", seen[-1] == tuple(p["expect"]),
                      f"{seen[-1]} (expected {tuple(p['expect'])})")
    if len(seen) > 1:
        res.check("refinement invariance", len(set(seen)) == 1, str(seen))


def sobolev_stages(family: str, sizes, resolution: int):
    """Stage meshes for the Sobolev series: Poincare balls, SOL cubes, or Euclidean balls."""
    if family == "h3":
        specs = [ModelSpaceSpec("poincare_ball", n=3, radius=r, resolution=resolution, inner_radius=r / 4)
                 for r in sizes]
    elif family == "sol":
        specs = [ModelSpaceSpec("sol_box", n=3, extents=(L, L, L), resolution=resolution) for L in sizes]
    else:
        specs = [ModelSpaceSpec("euclidean_ball", n=3, radius=R, resolution=resolution, inner_radius=R / 4)
                 for R in sizes]
    return [build_model_space(sp) for sp in specs]


def _sobolev_tables(res: ScenarioResult, key: str):
    return (res.table(key, ["size", "degree", "C_stage", "probe_id"]),
            res.table(key + "_probes", ["size", "degree", "probe_id", "ratio"]))


def _sobolev_rows(s: Scenario, res: ScenarioResult, key: str, ser, sizes) -> None:
    tab, probes = _sobolev_tables(res, key)
    for i, (R, v, a) in enumerate(zip(sizes, ser.values, ser.argmax)):
        tab.add(s.name, s.seed, i, R, ser.degree, v, a)
    for i, (R, ids, ratios) in enumerate(zip(sizes, ser.probe_ids, ser.ratios)):
        for pid, r in zip(ids, ratios):
            probes.add(s.name, s.seed, i, R, ser.degree, pid, r)


def run_sobolev_series(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    _sobolev_tables(res, "main")
    ser = _stage_guard(res, "all", lambda: sobolev_constant(
        sobolev_stages(p["family"], p["sizes"], p["resolution"]), p["degree"], p["probes"], s.seed,
        p["mode"], labels=[repr(v) for v in p["sizes"]], extremal=p["extremal"]))
    if ser is None:
        return
    _sobolev_rows(s, res, "main", ser, p["sizes"])
    if p["expect"] == "bounded":
        res.check("evidence: bounded series", ser.growth <= p["bound_max"],
                  f"last/first {ser.growth:.4f} (max {p['bound_max']:g})")
    elif p["expect"] == "growing":
        res.check("evidence: growing series", ser.growth >= p["growth_min"],
                  f"last/first {ser.growth:.4f} (min {p['growth_min']:g})")


def run_sol_vs_h3(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    series = {}
    for fam, sizes, reso in (("h3", p["h3_sizes"], p["h3_resolution"]), ("sol", p["sol_sizes"], p["sol_resolution"])):
        _sobolev_tables(res, fam)
        ser = _stage_guard(res, fam, lambda: sobolev_constant(
            sobolev_stages(fam, sizes, reso), p["degree"], p["probes"], s.seed, "compact",
            labels=[repr(v) for v in sizes], extremal=p["extremal"]))
        if ser is not None:
            _sobolev_rows(s, res, fam, ser, sizes)
            series[fam] = ser
    if len(series) < 2:
        return
    gh, gs = series["h3"].growth, series["sol"].growth
    res.check("evidence: H3 series bounded", gh <= p["h3_bound_max"], f"last/first {gh:.4f} (max {p['h3_bound_max']:g})")
    res.check("evidence: SOL series grows", gs >= p["sol_growth_min"], f"last/first {gs:.4f} (min {p['sol_growth_min']:g})")
    res.check("SOL growth exceeds H3 growth", gs > gh, f"{gs:.4f} > {gh:.4f}")


def stokes_residual(cx: SimplicialComplex, probes: int, seed: int = 0, mode: str = "compact") -> float:
    """Largest |integral of d theta| / ||theta||_1 over random interior-supported (n-1)-cochains."""
    rng = np.random.default_rng(seed)
    n = cx.n
    keep = cx.interior(n - 1)
    worst = 0.0
    for _ in range(probes):
        th = np.zeros(cx.count(n - 1))
        th[keep] = rng.standard_normal(len(keep))
        worst = max(worst, abs(integrate_top(coboundary(Cochain(n - 1, th), cx), cx)) / np.abs(th).sum())
    return worst


def run_knr(s: Scenario, res: ScenarioResult) -> None:
    p = s.params
    tab = res.table("main", ["size", "series", "primitive_norm", "integral", "oracle"])
    if p["family"] == "parabolic":
        out = _stage_guard(res, "all", lambda: knr_probe_parabolic(p["sizes"], p["n"], p["resolution"]))
        if out is None:
            return
        pair, unit = out
        for rep in (pair, unit):
            for i, (R, v, I, o) in enumerate(zip(rep.sizes, rep.primitive_norms, rep.integrals, rep.oracle)):
                tab.add(s.name, s.seed, i, R, rep.label, v, I, o)
        g = pair.primitive_norms.max() / pair.primitive_norms.min()
        res.check("mean-zero pair: bounded primitive norms", g <= p["bound_max"],
                  f"max/min {g:.4f} (max {p['bound_max']:g})")
        res.check("mean-zero pair: below transport oracle", bool(np.all(pair.primitive_norms <= pair.oracle * (1 + 1e-9))),
                  f"{np.round(pair.primitive_norms, 4).tolist()} vs {np.round(pair.oracle, 4).tolist()}")
        res.check("mean-zero pair: zero integral", bool(np.all(np.abs(pair.integrals) <= p["stokes_tol"])),
                  str(pair.integrals.tolist()))
        res.check("unit bump: primitive norms increasing", bool(np.all(np.diff(unit.primitive_norms) > 0)),
                  str(np.round(unit.primitive_norms, 4).tolist()))
        stages = [(R, knr_stage(p["n"], R, p["resolution"])) for R in p["sizes"]]
    else:
        rep = _stage_guard(res, "all", lambda: knr_probe_hyperbolic(p["sizes"], p["n"], p["resolution"]))
        if rep is None:
            return
        for i, (R, v, I, o) in enumerate(zip(rep.sizes, rep.primitive_norms, rep.integrals, rep.oracle)):
            tab.add(s.name, s.seed, i, R, rep.label, v, I, o)
        g = rep.primitive_norms.max() / rep.primitive_norms.min()
        res.check("radial primitive: bounded norms", g <= p["bound_max"], f"max/min {g:.4f} (max {p['bound_max']:g})")
        res.check("radial primitive: integral away from 0", bool(rep.integrals.min() >= p["integral_min"]),
                  f"min {rep.integrals.min():.4f} (min {p['integral_min']:g})")
        if p["oracle_tol"] is not None:
            err = float(np.max(np.abs(rep.primitive_norms / rep.oracle - 1)))
            res.check("radial primitive vs 1-D oracle", err <= p["oracle_tol"],
                      f"worst rel error {err:.3e} (tol {p['oracle_tol']:g})")
        stages = [(r, build_model_space(ModelSpaceSpec("poincare_ball", n=p["n"], radius=r, resolution=p["resolution"],
                                                       inner_radius=r / 4))[0]) for r in p["sizes"]]
    stokes = res.table("stokes", ["size", "probes", "worst"])
    worst = 0.0
    for i, (R, cx) in enumerate(stages):
        w = stokes_residual(cx, p["stokes_probes"], s.seed)
        worst = max(worst, w)
        stokes.add(s.name, s.seed, i, R, p["stokes_probes"], w)
    res.check("integration vanishes on interior coboundaries", worst <= p["stokes_tol"],
              f"worst {worst:.3e} (tol {p['stokes_tol']:g})")


def knr_stage(n: int, R: float, resolution: int) -> SimplicialComplex:
    from .cohomology import _disc_stage
    return _disc_stage(n, R, resolution)[0]


RUNNERS = {
    "norms": run_norms,
    "algebra_axioms": run_algebra_axioms,
    "capacity_table": run_capacity_table,
    "classify": run_classify,
    "polar": run_polar,
    "pullback": run_pullback,
    "cohomology": run_cohomology,
    "sobolev_series": run_sobolev_series,
    "knr": run_knr,
    "sol_vs_h3": run_sol_vs_h3,
}


def run_scenario(s: Scenario) -> ScenarioResult:
    """Run one scenario; stage failures are recorded in ``errors``."""
    res = ScenarioResult(s.basename, s.experiment, s.seed)
    RUNNERS[s.experiment](s, res)
    return res
