import math

import numpy as np
import pytest
import scipy.sparse as sp

from confderham.cohomology import (NotExactError, cohomology_ranks, integrate_top, knr_probe_hyperbolic,
                                   knr_probe_parabolic, minimal_primitive, radial_primitive_norm,
                                   rank_mod_p, sobolev_constant, torsion_oracle, torsion_probe_degree1,
                                   transport_primitive)
from confderham.complex import refine
from confderham.forms import (Cochain, coboundary, constant_form, de_rham_project, lp_form_norm,
                              sample_form, whitney_lift, whitney_mass_matrix)
from confderham.scenarios import stokes_residual
from conftest import space


@pytest.mark.parametrize("kind, kw, expect", [
    ("round_sphere", dict(resolution=2), (1, 0, 1)),
    ("flat_torus", dict(resolution=3), (1, 2, 1)),
    ("euclidean_ball", dict(resolution=3), (1, 0, 0)),
    ("annulus", dict(resolution=3, inner_radius=0.5), (1, 1, 0)),
])
def test_betti_numbers(kind, kw, expect):
    cx, metric = space(kind, 2, **kw)
    assert cohomology_ranks(cx).betti == expect
    assert cohomology_ranks(refine(cx, metric)[0]).betti == expect


def test_compact_support_cohomology_of_disc():
    cx, _ = space("euclidean_ball", 2, resolution=3)
    assert cohomology_ranks(cx, "compact").betti == (0, 0, 1)


def test_sol_box_is_acyclic():
    cx, _ = space("sol_box", 3, resolution=1)
    assert cohomology_ranks(cx).betti == (1, 0, 0, 0)


def test_rank_nullity(square4):
    cx, _ = square4
    rep = cohomology_ranks(cx)
    for k in range(cx.n + 1):
        rank_d = cx.count(k) - rep.cocycles[k]
        assert rank_d == (rep.coboundaries[k + 1] if k < cx.n else 0)
    assert sum((-1) ** k * b for k, b in enumerate(rep.betti)) == cx.euler_characteristic()


def test_rank_mod_p_matches_numpy(rng):
    for _ in range(20):
        m, n = rng.integers(1, 12, 2)
        A = rng.integers(-2, 3, (m, n)) * (rng.random((m, n)) < 0.4)
        assert rank_mod_p(sp.csr_matrix(A)) == np.linalg.matrix_rank(A)
    assert rank_mod_p(sp.csr_matrix((3, 4))) == 0


def test_integrate_top_examples(square4, rng):
    cx, metric = square4
    assert stokes_residual(cx, 10, seed=1) <= 1e-12
    vol = de_rham_project(sample_form(constant_form(2, 2, [1.0]), metric), cx, metric)
    assert integrate_top(vol, cx) == pytest.approx(1.0, abs=1e-14)
    bump = np.zeros(cx.count(2))
    bump[5] = 3.0 * cx.orientation[5]
    assert integrate_top(Cochain(2, bump), cx) == 3.0
    with pytest.raises(ValueError):
        integrate_top(Cochain(1, np.zeros(cx.count(1))), cx)


def test_transport_primitive_moves_unit_mass():
    cx, _ = space("euclidean_ball", 2, resolution=4)
    th = transport_primitive(cx, 3, 40)
    d = coboundary(th, cx).values * cx.orientation
    expect = np.zeros(cx.count(2))
    expect[3], expect[40] = 1.0, -1.0
    assert np.allclose(d, expect, atol=1e-14)


def test_minimal_primitive_of_zero(square4):
    cx, metric = square4
    res = minimal_primitive(Cochain(2, np.zeros(cx.count(2))), cx, metric)
    assert res.norm == 0.0 and not res.theta.values.any()


def test_minimal_primitive_p2_matches_kkt(rng):
    # [DERIVED] dense KKT system for min theta^T M theta subject to d theta = omega
    cx, metric = space("euclidean_ball", 2, resolution=3)
    omega = coboundary(Cochain(1, rng.standard_normal(cx.count(1))), cx)
    res = minimal_primitive(omega, cx, metric)
    assert res.p == 2
    M = whitney_mass_matrix(cx, metric, 1).toarray()
    D = cx.incidence[2].T.toarray().astype(float)
    N, m = M.shape[0], D.shape[0]
    kkt = np.block([[2 * M, D.T], [D, np.zeros((m, m))]])
    sol = np.linalg.lstsq(kkt, np.concatenate([np.zeros(N), omega.values]), rcond=None)[0]
    theta = sol[:N]
    oracle = math.sqrt(theta @ M @ theta)
    assert res.norm == pytest.approx(oracle, rel=1e-8)
    assert np.allclose(coboundary(res.theta, cx).values, omega.values, atol=1e-12)


def test_minimal_primitive_is_optimal_in_3d(rng):
    cx, metric = space("euclidean_box", 3, resolution=2)
    th0 = Cochain(1, rng.standard_normal(cx.count(1)))
    omega = coboundary(th0, cx)
    res = minimal_primitive(omega, cx, metric)
    assert res.converged and res.p == 3
    assert np.max(np.abs(coboundary(res.theta, cx).values - omega.values)) <= 1e-10
    q = lambda c: lp_form_norm(whitney_lift(c, cx, metric), 3, metric)
    assert res.norm == pytest.approx(q(res.theta), rel=1e-10)
    assert res.norm <= q(th0)
    # gauge perturbations do not lower the norm
    for _ in range(5):
        phi = coboundary(Cochain(0, 1e-3 * rng.standard_normal(cx.count(0))), cx)
        assert q(res.theta + phi) >= res.norm * (1 - 1e-9)


def test_degree_one_primitive_is_midrange(square4, rng):
    cx, metric = square4
    u = rng.standard_normal(cx.count(0))
    res = minimal_primitive(coboundary(Cochain(0, u), cx), cx, metric)
    assert res.norm == pytest.approx(0.5 * np.ptp(u), rel=1e-12)


def test_not_exact_on_sphere():
    cx, metric = space("round_sphere", 2, resolution=2)
    bump = np.zeros(cx.count(2))
    bump[0] = 1.0
    with pytest.raises(NotExactError):
        minimal_primitive(Cochain(2, bump), cx, metric)


def test_torsion_series():
    ser = torsion_probe_degree1(2, resolution=6)
    assert np.all(np.diff(ser.ratio) > 0)
    assert np.all(np.abs(ser.ratio / ser.oracle_ratio - 1) <= 0.1)
    osc, g = torsion_oracle(2, 1e-4, 0.5)
    assert osc == pytest.approx(math.log(math.log(1e4)) - math.log(math.log(2)), rel=1e-14)
    # [DERIVED] ||du||_2^2 = 2 pi (1 / log(1/r0) - 1 / log(1/eps))
    assert g == pytest.approx(math.sqrt(2 * math.pi * (1 / math.log(2) - 1 / math.log(1e4))), rel=1e-8)


def test_torsion_rejects_constant_and_bounds_smooth():
    with pytest.raises(ValueError):
        torsion_probe_degree1(2, resolution=4, u=lambda x: np.ones(len(x)))
    ser = torsion_probe_degree1(2, resolution=4, u=lambda x: x[:, 0])
    assert np.ptp(ser.ratio) == 0


def test_sobolev_series_needs_three_stages(square4):
    with pytest.raises(ValueError):
        sobolev_constant([square4, square4], 2)


def test_sobolev_constant_scale_invariant():
    stages = [space("euclidean_ball", 3, resolution=1, radius=R, inner_radius=R / 4) for R in (1.0, 2.0, 4.0)]
    ser = sobolev_constant(stages, 2, probes=2, extremal=2)
    assert np.allclose(ser.values, ser.values[0], rtol=1e-6)


def test_knr_parabolic_small():
    pair, unit = knr_probe_parabolic([math.e, math.e ** 2, math.e ** 4], 2, resolution=4)
    assert np.allclose(pair.integrals, 0.0, atol=1e-12)
    assert np.allclose(unit.integrals, 1.0, rtol=1e-12)
    assert pair.primitive_norms.max() / pair.primitive_norms.min() <= 2
    assert np.all(pair.primitive_norms <= pair.oracle * (1 + 1e-9))
    assert np.all(np.diff(unit.primitive_norms) > 0)


def test_knr_hyperbolic_small():
    rep = knr_probe_hyperbolic([0.9, 0.99, 0.999], 2, resolution=4)
    assert rep.primitive_norms.max() / rep.primitive_norms.min() <= 2
    assert np.all(rep.integrals >= 0.5)
    assert np.allclose(rep.primitive_norms, rep.oracle, rtol=0.25)
    # [DERIVED] |theta| = rho / 2 pi in the plane: int_0^1 (rho / 2 pi)^2 2 pi rho d rho = 1 / (8 pi)
    assert radial_primitive_norm(2, 1.0) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)), rel=1e-10)
