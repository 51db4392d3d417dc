"""Acceptance criteria 1-10, one PASS/FAIL line each (see the terminal summary)."""
import math
from dataclasses import replace

import numpy as np
import pytest

from confderham.capacity import (classify_type, euclidean_exhaustion, grotzsch_capacity, point_probe,
                                 poincare_exhaustion, radial_capacity, segment_probe, sol_exhaustion,
                                 solve_condenser)
from confderham.cohomology import (cohomology_ranks, knr_probe_hyperbolic, knr_probe_parabolic,
                                   sobolev_constant, torsion_probe_degree1)
from confderham.complex import refine
from confderham.forms import Cochain, conformal_norm, lp_form_norm, whitney_lift
from confderham.pullback import (capacity_sandwich, chain_rule_residual, distortion_coefficient, mobius_map,
                                 norm_bound_check, observed_order, radial_stretch, sample_map)
from confderham.scenarios import (annulus_condenser, axiom_residuals, sobolev_stages, stokes_residual,
                                  x_dy_form)
from conftest import space

pytestmark = pytest.mark.acceptance

CATALOG = {
    "euclidean_box": dict(n=2, resolution=2),
    "euclidean_ball": dict(n=2, resolution=2),
    "round_sphere": dict(n=2, resolution=2),
    "poincare_ball": dict(n=2, resolution=2, radius=0.9),
    "sol_box": dict(n=3, resolution=1),
    "annulus": dict(n=2, resolution=2, inner_radius=0.5),
    "flat_torus": dict(n=2, resolution=3),
}


def rel(a, b):
    return abs(a - b) / abs(b)


def test_criterion_01_exactness(criterion):
    rec = criterion(1, "exactness suite on every catalog mesh")
    tol = 1e-12
    for kind, kw in sorted(CATALOG.items()):
        cx, metric = space(kind, **kw)
        r = axiom_residuals(cx, metric, 1000, seed=2024)
        exact = max(r["dd"], r["boundary_boundary"], r["graded_commutativity"], r["leibniz"])
        rec.check(exact <= tol and r["holder"] <= 1 + tol,
                  f"{kind}: dd {r['dd']:.1e}, bb {r['boundary_boundary']:.1e}, "
                  f"comm {r['graded_commutativity']:.1e}, leibniz {r['leibniz']:.1e}, "
                  f"holder ratio {r['holder']:.15f}")
    rec.finish(60)


def test_criterion_02_conformal_invariance(criterion):
    rec = criterion(2, "conformal invariance of norms and capacities")
    tol = 1e-10
    rng = np.random.default_rng(99)
    for kind, kw in sorted(CATALOG.items()):
        cx, metric = space(kind, **kw)
        factors = {"0.5": 0.5, "2": 2.0, "random": np.exp(rng.uniform(-1, 1, metric.lam.shape))}
        worst = 0.0
        for k in range(cx.n + 1):
            c = Cochain(k, rng.standard_normal(cx.count(k)))
            lift = whitney_lift(c, cx, metric)
            ref = conformal_norm(c, cx, metric)
            ref_lp = lp_form_norm(lift, cx.n / k, metric) if k else None
            for f in factors.values():
                m2 = metric.rescaled(f)
                rep = conformal_norm(c, cx, m2)
                worst = max(worst, rel(rep.lp_part, ref.lp_part))
                if ref.dlp_part:
                    worst = max(worst, rel(rep.dlp_part, ref.dlp_part))
                if k:
                    worst = max(worst, rel(lp_form_norm(whitney_lift(c, cx, m2), cx.n / k, m2), ref_lp))
        rec.check(worst <= tol, f"{kind}: worst rel change of norms {worst:.2e}")
    for n, res in ((2, 6), (3, 3)):
        c = annulus_condenser(n, 1.0, math.e, res)
        base = solve_condenser(c).value
        lam = np.exp(np.sin(3 * c.metric.x[..., 0]))
        worst = max(rel(solve_condenser(replace(c, metric=c.metric.rescaled(f))).value, base)
                    for f in (0.5, 2.0, lam))
        rec.check(worst <= tol, f"annulus n={n}: worst rel change of capacity {worst:.2e}")
    rec.finish(60)


def test_criterion_03_capacity_oracle(criterion):
    rec = criterion(3, "annulus and shell capacities against the radial oracle")
    v2 = solve_condenser(annulus_condenser(2, 1.0, math.e, 16, layers=64)).value
    o2 = radial_capacity(2, 1.0, math.e)
    rec.check(rel(v2, o2) <= 0.05, f"n=2 res16/64 layers: {v2:.6f} vs 2 pi = {o2:.6f} (rel {rel(v2, o2):.2e})")
    v3 = solve_condenser(annulus_condenser(3, 1.0, math.e, 6, layers=12)).value
    o3 = radial_capacity(3, 1.0, math.e)
    rec.check(rel(v3, o3) <= 0.08, f"n=3 res6/12 layers: {v3:.6f} vs 4 pi = {o3:.6f} (rel {rel(v3, o3):.2e})")
    rec.finish(300)


def test_criterion_04_classification(criterion):
    rec = criterion(4, "parabolic / hyperbolic classification")
    plane = classify_type(euclidean_exhaustion(2, [math.exp(v) for v in (2, 4, 8, 16)], resolution=8))
    rec.check(plane.verdict == "Parabolic" and rel(plane.slope, -1.0) <= 0.25,
              f"R^2: {plane.verdict}, slope {plane.slope:.4f} vs -1")
    radii = [0.9, 0.99, 0.999, 0.9999]
    for n, res in ((2, 6), (3, 3)):
        cls = classify_type(poincare_exhaustion(n, radii, resolution=res))
        rec.check(cls.verdict == "Hyperbolic",
                  f"Poincare n={n}: {cls.verdict}, series {np.round(cls.series, 4).tolist()}")
    sol = classify_type(sol_exhaustion([3, 4, 5, 6]))
    rec.check(sol.verdict == "Hyperbolic",
              f"SOL: {sol.verdict}, series {np.round(sol.series, 3).tolist()}, "
              f"residuals parabolic {sol.residual_parabolic:.3f} hyperbolic {sol.residual_hyperbolic:.3f}")
    rec.finish(900)


def test_criterion_05_polar(criterion):
    rec = criterion(5, "polar probes")
    eps = [1e-2, 1e-4, 1e-8]
    for n, res in ((2, 6), (3, 3)):
        ser = point_probe(n, eps, resolution=res)
        err = np.abs(ser.values / ser.oracle - 1)
        rec.check(bool(np.all(np.diff(ser.values) < 0) and np.all(err <= 0.25)),
                  f"point n={n}: {np.round(ser.values, 5).tolist()} vs {np.round(ser.oracle, 5).tolist()}, "
                  f"worst rel {err.max():.3f}")
    seg = segment_probe(0.5, (4, 8, 16))
    floor = grotzsch_capacity(0.5)
    rec.check(bool(np.all(seg.values >= floor)),
              f"segment: {np.round(seg.values, 5).tolist()} >= floor {floor:.6f}")
    rec.finish(600)


def test_criterion_06_pullback(criterion):
    rec = criterion(6, "pullback distortion, norm bound, sandwich and chain rule")
    for n, res in ((2, 6), (3, 3)):
        cx, metric = space("annulus", n, resolution=res, inner_radius=0.5)
        K = distortion_coefficient(sample_map(radial_stretch(2.0, n), cx, metric)).K_estimate
        rec.check(rel(K, 2.0 ** (n - 1)) <= 0.1, f"stretch n={n}: K {K:.6f} vs {2 ** (n - 1)}")
    cx, metric = space("euclidean_ball", 2, resolution=4, radius=0.9)
    nb = norm_bound_check(radial_stretch(2.0, 2), cx, metric, 1, probes=100, seed=11)
    rec.check(nb.holds and len(nb.ratios) == 100,
              f"norm bound n=2 k=1: max ratio {nb.ratios.max():.4f}, c_fit {nb.c_fit:.3e} <= 1")
    cx3, metric3 = space("annulus", 3, resolution=2, inner_radius=0.5)
    for k in (1, 2):
        nb3 = norm_bound_check(radial_stretch(2.0, 3), cx3, metric3, k, probes=100, seed=11)
        rec.check(nb3.holds, f"norm bound n=3 k={k}: max ratio {nb3.ratios.max():.4f}, c_fit {nb3.c_fit:.3e} <= 1")
    for n, res in ((2, 8), (3, 3)):
        sw = capacity_sandwich(radial_stretch(2.0, n), annulus_condenser(n, 0.5, 1.0, res), 0.1)
        rec.check(sw.holds, f"sandwich n={n}: {sw.lower:.4f} - {sw.tau:.4f} <= {sw.image_value:.4f} "
                            f"<= {sw.upper:.4f} + {sw.tau:.4f}")
    cx, metric = space("euclidean_ball", 2, resolution=8, radius=0.9)
    f = mobius_map(0.5)
    hs, errs = [], []
    for level in range(3):
        if level:
            cx, metric = refine(cx, metric)
        errs.append(chain_rule_residual(sample_map(f, cx, metric), x_dy_form(2)))
        e = cx.simplices[1]
        hs.append(float(np.max(np.linalg.norm(cx.points[e[:, 1]] - cx.points[e[:, 0]], axis=1))))
    order = float(observed_order([hs[0], hs[-1]], [errs[0], errs[-1]])[0])
    rec.check(order >= 1.0, f"Mobius chain rule: residuals {[f'{v:.3e}' for v in errs]}, "
                            f"steps {np.round(observed_order(hs, errs), 4).tolist()}, overall order {order:.4f}")
    rec.finish(600)


def test_criterion_07_cohomology(criterion):
    rec = criterion(7, "cohomology ranks")
    cases = [("round_sphere", dict(resolution=2), (1, 0, 1)),
             ("flat_torus", dict(resolution=3), (1, 2, 1)),
             ("euclidean_ball", dict(resolution=3), (1, 0, 0))]
    for kind, kw, expect in cases:
        cx, metric = space(kind, 2, **kw)
        seen = []
        for _ in range(3):
            seen.append(cohomology_ranks(cx).betti)
            cx, metric = refine(cx, metric)
        rec.check(all(b == expect for b in seen), f"{kind}: {seen} (expected {expect})")
    rec.finish(60)


def test_criterion_08_sobolev_separation(criterion):
    rec = criterion(8, "degree-2 Sobolev series: H^3 bounded, SOL growing")
    h3_sizes = [0.9, 0.99, 0.999, 0.9999]
    # compact-support mode: box and ball truncation must not create spurious classes
    h3 = sobolev_constant(sobolev_stages("h3", h3_sizes, 2), 2, probes=4, seed=0, mode="compact", extremal=6)
    rec.check(h3.growth <= 2, f"H^3 radii {h3_sizes}: {np.round(h3.values, 4).tolist()}, last/first {h3.growth:.3f} <= 2")
    sol_sizes = [1, 2, 3, 4]
    sol = sobolev_constant(sobolev_stages("sol", sol_sizes, 3), 2, probes=4, seed=0, mode="compact", extremal=6)
    rec.check(sol.growth >= 4, f"SOL L {sol_sizes}: {np.round(sol.values, 4).tolist()}, last/first {sol.growth:.3f} >= 4")
    rec.finish(1800)


def test_criterion_09_integration(criterion):
    rec = criterion(9, "integration operator and KNR probes")
    worst = 0.0
    for kind, kw in sorted(CATALOG.items()):
        cx, _ = space(kind, **kw)
        worst = max(worst, stokes_residual(cx, 50, seed=5))
    rec.check(worst <= 1e-12, f"integral of d(theta), interior theta: worst {worst:.2e}")
    sizes = [math.exp(v) for v in (1, 2, 4, 8)]
    pair, unit = knr_probe_parabolic(sizes, 2, resolution=6)
    g = pair.primitive_norms.max() / pair.primitive_norms.min()
    rec.check(g <= 2 and np.all(pair.primitive_norms <= pair.oracle * (1 + 1e-9)),
              f"R^2 mean-zero pair: {np.round(pair.primitive_norms, 4).tolist()} (max/min {g:.3f}), "
              f"transport oracle {np.round(pair.oracle, 4).tolist()}")
    rec.check(bool(np.all(np.diff(unit.primitive_norms) > 0)),
              f"R^2 unit bump: {np.round(unit.primitive_norms, 4).tolist()} increasing")
    radii = [0.9, 0.99, 0.999, 0.9999]
    for n, res in ((2, 6), (3, 2)):
        rep = knr_probe_hyperbolic(radii, n, resolution=res)
        g = rep.primitive_norms.max() / rep.primitive_norms.min()
        rec.check(g <= 2 and rep.integrals.min() >= 0.5,
                  f"Poincare n={n}: norms {np.round(rep.primitive_norms, 4).tolist()} (max/min {g:.3f}), "
                  f"integrals {np.round(rep.integrals, 4).tolist()}")
    rec.finish(600)


def test_criterion_10_torsion(criterion):
    rec = criterion(10, "degree-1 torsion probe")
    ser = torsion_probe_degree1(2, eps=(1e-2, 1e-4, 1e-8), r0=0.5, resolution=8)
    err = np.abs(ser.ratio / ser.oracle_ratio - 1)
    rec.check(bool(np.all(np.diff(ser.ratio) > 0)), f"ratios {np.round(ser.ratio, 5).tolist()} strictly increasing")
    rec.check(bool(np.all(err <= 0.1)), f"oracle {np.round(ser.oracle_ratio, 5).tolist()}, worst rel {err.max():.2e}")
    rec.finish(120)
