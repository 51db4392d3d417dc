import numpy as np
import pytest

from confderham.complex import MetricField, SimplicialComplex, refine
from confderham.forms import (Cochain, DegreeError, SampledForm, coboundary, conformal_norm,
                              constant_form, de_rham_project, load_cochain, lp_form_norm,
                              sample_form, sampled_conformal_norm, save_cochain, unit_form, wedge,
                              whitney_lift, whitney_values)
from conftest import space


def test_coboundary_path_example():
    cx = SimplicialComplex.from_simplices(np.array([[0.0], [1.0], [2.0]]), np.array([[0, 1], [1, 2]]))
    assert np.array_equal(coboundary(Cochain(0, [0, 1, 3]), cx).values, [1.0, 2.0])


def test_coboundary_of_constant_and_dd(square4, rng):
    cx, _ = square4
    assert not coboundary(Cochain(0, np.full(cx.count(0), 2.5)), cx).values.any()
    c = Cochain(0, rng.integers(-5, 5, cx.count(0)))
    assert not coboundary(coboundary(c, cx), cx).values.any()


def test_coboundary_degree_errors(square4):
    cx, _ = square4
    with pytest.raises(DegreeError):
        coboundary(Cochain(2, np.zeros(cx.count(2))), cx)
    with pytest.raises(ValueError):
        coboundary(Cochain(0, np.zeros(3)), cx)


def test_whitney_vertex_indicator_is_barycentric(square4):
    cx, metric = square4
    v = 7
    c = np.zeros(cx.count(0))
    c[v] = 1.0
    lift = whitney_lift(Cochain(0, c), cx, metric)
    assert lift.coeffs.min() >= 0 and lift.coeffs.max() <= 1
    tops = cx.simplices[2]
    for t in range(cx.count(2)):
        where = np.flatnonzero(tops[t] == v)
        expect = metric.bary[:, where[0]] if len(where) else np.zeros(len(metric.bary))
        assert np.allclose(lift.coeffs[t], expect, atol=1e-15)


def test_whitney_constant_zero_form(square4):
    cx, metric = square4
    lift = whitney_lift(Cochain(0, np.ones(cx.count(0))), cx, metric)
    assert np.allclose(lift.coeffs, 1.0, atol=1e-15)
    assert np.allclose(lift.dcoeffs, 0.0, atol=1e-15)


def test_whitney_edge_on_reference_triangle():
    # [DERIVED] lambda_0 dlambda_1 - lambda_1 dlambda_0 at the centroid = (dl1 - dl0)/3 = (2/3, 1/3)
    tri = SimplicialComplex.from_simplices(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    metric = MetricField.from_model(tri)
    assert tri.simplices[1].tolist() == [[0, 1], [0, 2], [1, 2]]
    val = whitney_values(Cochain(1, [1.0, 0.0, 0.0]), tri, metric, np.array([[1 / 3, 1 / 3, 1 / 3]]))
    assert np.allclose(val[0, 0], [2 / 3, 1 / 3], atol=1e-15)
    # unit integral along its own edge, zero along the others
    c = de_rham_project(whitney_lift(Cochain(1, [1.0, 0.0, 0.0]), tri, metric), tri, metric)
    assert np.allclose(c.values, [1.0, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_de_rham_inverts_whitney(square4, rng, k):
    cx, metric = square4
    c = Cochain(k, rng.standard_normal(cx.count(k)))
    back = de_rham_project(whitney_lift(c, cx, metric), cx, metric)
    assert np.max(np.abs(back.values - c.values)) <= 1e-10


def test_de_rham_zero_form(square4):
    cx, metric = square4
    zero = SampledForm(1, np.zeros(metric.weights.shape + (2,)))
    assert not de_rham_project(zero, cx, metric).values.any()


def test_de_rham_of_dx_is_edge_displacement(square4):
    cx, metric = square4
    c = de_rham_project(sample_form(constant_form(2, 1, [1.0, 0.0]), metric), cx, metric)
    e = cx.simplices[1]
    assert np.allclose(c.values, cx.points[e[:, 1], 0] - cx.points[e[:, 0], 0], atol=1e-14)


def test_whitney_commutes_with_coboundary(rng):
    for cx, metric in (space("euclidean_box", 2, resolution=3), space("sol_box", 3, resolution=1),
                       space("round_sphere", 2, resolution=2)):
        for k in range(cx.n):
            c = Cochain(k, rng.standard_normal(cx.count(k)))
            d_lift = whitney_lift(c, cx, metric).dcoeffs
            lift_d = whitney_lift(coboundary(c, cx), cx, metric).coeffs
            assert np.max(np.abs(d_lift - lift_d)) <= 1e-12 * max(1.0, np.abs(lift_d).max())


def test_lp_norm_examples(unit_square):
    cx, metric = unit_square
    vol = sample_form(constant_form(2, 2, [1.0]), metric)
    assert lp_form_norm(vol, 1, metric) == pytest.approx(1.0, abs=1e-14)
    dx = sample_form(constant_form(2, 1, [1.0, 0.0]), metric)
    assert lp_form_norm(dx, 2, metric) == pytest.approx(1.0, abs=1e-14)
    assert lp_form_norm(dx, 2, metric.rescaled(3.0)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        lp_form_norm(dx, 0.5, metric)


def test_lp_norm_sup(square4):
    cx, metric = square4
    f = SampledForm(0, np.linspace(-3, 2, metric.weights.size).reshape(metric.weights.shape))
    assert lp_form_norm(f, np.inf, metric) == 3.0


def test_conformal_norm_unit(square4):
    cx, metric = square4
    rep = conformal_norm(Cochain(0, np.ones(cx.count(0))), cx, metric)
    assert rep.lp_part == 1.0 and rep.dlp_part == 0.0 and rep.total == 1.0


def test_conformal_norm_exact_form():
    cx = SimplicialComplex.from_simplices(np.array([[0.0], [1.0], [2.0]]), np.array([[0, 1], [1, 2]]))
    metric = MetricField.from_model(cx)
    du = coboundary(Cochain(0, [0.0, 1.0, 3.0]), cx)
    rep = conformal_norm(du, cx, metric)
    assert rep.dlp_part == 0.0 and rep.lp_part > 0


@pytest.mark.parametrize("k", [0, 1, 2])
def test_conformal_norm_rescale(square4, rng, k):
    cx, metric = square4
    c = Cochain(k, rng.standard_normal(cx.count(k)))
    a, b = conformal_norm(c, cx, metric), conformal_norm(c, cx, metric.rescaled(2.0))
    assert b.lp_part == pytest.approx(a.lp_part, rel=1e-12)
    assert b.dlp_part == pytest.approx(a.dlp_part, rel=1e-12)


def test_wedge_unit_and_antisymmetry(square4, rng):
    cx, metric = square4
    a = whitney_lift(Cochain(1, rng.standard_normal(cx.count(1))), cx, metric)
    one = unit_form(metric)
    prod = wedge(a, one)
    assert np.array_equal(prod.coeffs, a.coeffs)
    dx = sample_form(constant_form(2, 1, [1.0, 0.0]), metric)
    assert not wedge(dx, dx).coeffs.any()


def test_wedge_dx_dy(square4):
    cx, metric = square4
    dx = sample_form(constant_form(2, 1, [1.0, 0.0]), metric)
    dy = sample_form(constant_form(2, 1, [0.0, 1.0]), metric)
    vol = wedge(dx, dy)
    assert lp_form_norm(vol, 1, metric) == pytest.approx(1.0, abs=1e-14)
    assert (sampled_conformal_norm(vol, metric).total
            <= sampled_conformal_norm(dx, metric).total * sampled_conformal_norm(dy, metric).total + 1e-12)


def test_wedge_degree_overflow(square4):
    cx, metric = square4
    vol = sample_form(constant_form(2, 2, [1.0]), metric)
    dx = sample_form(constant_form(2, 1, [1.0, 0.0]), metric)
    with pytest.raises(DegreeError):
        wedge(vol, dx)


def test_cochain_arithmetic_and_roundtrip(tmp_path, rng):
    a = Cochain(1, rng.standard_normal(9))
    b = Cochain(1, rng.standard_normal(9))
    assert np.allclose((a + b - b).values, a.values)
    assert np.allclose((2.0 * a).values, 2 * a.values)
    with pytest.raises(DegreeError):
        a + Cochain(0, np.zeros(9))
    save_cochain(tmp_path / "c.txt", a)
    back = load_cochain(tmp_path / "c.txt")
    assert back.degree == 1 and np.array_equal(back.values, a.values)


def test_refined_de_rham_of_affine_one_form():
    # x dy is not closed; its de Rham cochain still integrates exactly with a field
    from confderham.scenarios import x_dy_form
    cx, metric = refine(*space("euclidean_box", 2, resolution=2))
    c = de_rham_project(sample_form(x_dy_form(2), metric), cx, metric)
    e = cx.simplices[1]
    p0, p1 = cx.points[e[:, 0]], cx.points[e[:, 1]]
    exact = 0.5 * (p0[:, 0] + p1[:, 0]) * (p1[:, 1] - p0[:, 1])
    assert np.allclose(c.values, exact, atol=1e-14)
