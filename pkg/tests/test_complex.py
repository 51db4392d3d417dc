import numpy as np
import pytest

from confderham.catalog import KINDS, PoincareModel, SolModel, list_catalog
from confderham.complex import (MetricError, MetricField, SimplicialComplex, form_gram, gram_on_forms,
                                load_mesh, refine, save_mesh)
from conftest import space

SMALL = {
    "euclidean_box": dict(n=2, resolution=2),
    "euclidean_ball": dict(n=2, resolution=2),
    "round_sphere": dict(n=2, resolution=2),
    "poincare_ball": dict(n=2, resolution=2, radius=0.9),
    "sol_box": dict(n=3, resolution=1),
    "annulus": dict(n=2, resolution=2, inner_radius=0.5),
    "flat_torus": dict(n=2, resolution=3),
}


def test_catalog_lists_every_kind():
    assert set(list_catalog()) == set(KINDS) == set(SMALL)


def test_unit_square_counts_and_area(unit_square):
    cx, metric = unit_square
    assert cx.counts == (4, 5, 2)
    assert metric.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert metric.total_volume() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_boundary_of_boundary_is_zero(kind):
    cx, _ = space(kind, **SMALL[kind])
    for k in range(1, cx.n):
        bb = (cx.incidence[k] @ cx.incidence[k + 1]).toarray()
        assert not bb.any()
        assert cx.incidence[k].dtype.kind == "i"


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_faces_unique_and_signs(kind):
    cx, _ = space(kind, **SMALL[kind])
    for k in range(1, cx.n + 1):
        faces = cx.simplices[k - 1]
        assert len(np.unique(faces, axis=0)) == len(faces)
        inc = cx.incidence[k].toarray()
        assert set(np.unique(inc)) <= {-1, 0, 1}
        # each k-simplex has exactly k+1 faces, with alternating signs in vertex order
        for j, s in enumerate(cx.simplices[k][:5]):
            rows = np.flatnonzero(inc[:, j])
            assert len(rows) == k + 1
            for i in range(k + 1):
                face = np.delete(s, i)
                row = np.flatnonzero((faces == face).all(axis=1))[0]
                assert inc[row, j] == (-1) ** i


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_metric_invariants(kind):
    _, metric = space(kind, **SMALL[kind])
    assert np.all(np.linalg.eigvalsh(metric.g)[..., 0] > 0)
    assert np.all(metric.lam > 0) and np.all(metric.vol_density > 0)
    ref = metric.ref_weights.sum()
    from math import factorial
    assert ref == pytest.approx(1.0 / factorial(metric.n), rel=1e-14)


def test_boundary_detection_single_coface(square4):
    cx, _ = square4
    counts = np.bincount(cx.face_index[1].ravel(), minlength=cx.count(1))
    assert np.array_equal(cx.boundary[1], counts == 1)


def test_poincare_factor():
    cx, metric = space("poincare_ball", 2, resolution=3, radius=0.9)
    r2 = np.sum(metric.x ** 2, axis=-1)
    assert np.allclose(metric.lam, 2 / (1 - r2), rtol=1e-14)
    frame = np.broadcast_to(np.eye(2), (1, 1, 2, 2))
    _, lam0 = PoincareModel().tensor(np.zeros((1, 1, 2)), frame)
    assert float(np.ravel(lam0)[0]) == 2.0


def test_sol_metric_entries():
    cx, metric = space("sol_box", 3, resolution=2)
    z = metric.x[..., 2]
    assert np.allclose(metric.g[..., 0, 0], np.exp(-2 * z))
    assert np.allclose(metric.g[..., 1, 1], np.exp(2 * z))
    assert np.allclose(metric.g[..., 2, 2], 1.0)
    off = metric.g.copy()
    for i in range(3):
        off[..., i, i] = 0
    assert not off.any()
    x = np.zeros((1, 1, 3))
    g, _ = SolModel().tensor(x, np.broadcast_to(np.eye(3), (1, 1, 3, 3)))
    assert np.array_equal(np.asarray(g).reshape(3, 3), np.eye(3))


def test_refine_square_preserves_area(unit_square):
    cx, metric = refine(*unit_square)
    assert cx.count(2) == 8
    assert metric.total_volume() == pytest.approx(1.0, abs=1e-10)


def test_refine_octahedron():
    cx, metric = space("round_sphere", 2, resolution=1)
    assert cx.count(2) == 8
    cx2, _ = refine(cx, metric)
    assert cx2.count(2) == 32
    assert cx2.euler_characteristic() == 2


def test_refine_poincare_reevaluates_density():
    cx, metric = refine(*space("poincare_ball", 2, resolution=2, radius=0.8))
    r2 = np.sum(metric.x ** 2, axis=-1)
    assert np.allclose(metric.vol_density, (2 / (1 - r2)) ** 2, rtol=1e-12)


def test_gram_identity_and_scaling(square4):
    cx, metric = square4
    for k in range(3):
        G = gram_on_forms(metric, (0, 0), k)
        assert np.allclose(G, np.eye(len(G)))
    lam = 1.7
    scaled = metric.rescaled(lam)
    for k in range(3):
        assert np.allclose(form_gram(scaled, k), lam ** (-2 * k) * form_gram(metric, k), rtol=1e-14)
    assert np.allclose(scaled.vol_density, lam ** 2 * metric.vol_density, rtol=1e-14)


def test_gram_diag_metric(unit_square):
    cx, _ = unit_square
    metric = MetricField.from_arrays(cx, np.diag([4.0, 1.0]))
    G = gram_on_forms(metric, (0, 0), 1)
    assert G[0, 0] == pytest.approx(0.25) and G[1, 1] == pytest.approx(1.0)


def test_metric_validation(unit_square):
    cx, _ = unit_square
    with pytest.raises(MetricError):
        MetricField.from_arrays(cx, np.diag([1.0, -1.0]))
    with pytest.raises(MetricError):
        MetricField.from_arrays(cx, np.eye(2), lam=-1.0)
    with pytest.raises(MetricError):
        MetricField.from_arrays(cx, np.eye(2)).rescaled(0.0)
    with pytest.raises(ValueError):
        gram_on_forms(MetricField.from_arrays(cx, np.eye(2)), (0, 0), 3)


def test_catalog_rejects_bad_specs():
    with pytest.raises(ValueError):
        space("poincare_ball", 2, radius=1.0)
    with pytest.raises(ValueError):
        space("sol_box", 2)
    with pytest.raises(ValueError):
        space("no_such_space")


@pytest.mark.parametrize("kind", ["euclidean_box", "round_sphere", "flat_torus", "poincare_ball"])
def test_mesh_roundtrip(tmp_path, kind):
    cx, metric = space(kind, **SMALL[kind])
    path = tmp_path / "m.txt"
    save_mesh(path, cx, metric)
    cx2, metric2 = load_mesh(path)
    assert np.array_equal(cx2.points, cx.points)
    for k in range(cx.n + 1):
        assert np.array_equal(cx2.simplices[k], cx.simplices[k])
    assert np.array_equal(cx2.orientation, cx.orientation)
    assert np.array_equal(metric2.g, metric.g) and np.array_equal(metric2.lam, metric.lam)
    assert np.allclose(metric2.measure, metric.measure, rtol=1e-14)


def test_mesh_without_metric(tmp_path, unit_square):
    cx, _ = unit_square
    save_mesh(tmp_path / "m.txt", cx)
    cx2, metric = load_mesh(tmp_path / "m.txt")
    assert metric is None and cx2.counts == cx.counts


def test_torus_is_closed():
    cx, _ = space("flat_torus", 2, resolution=3)
    assert not cx.boundary[1].any()
    assert cx.euler_characteristic() == 0


def test_from_simplices_orientation_consistent(square4):
    cx, _ = square4
    # oriented sum of top simplices has boundary only on the outer boundary
    chain = cx.incidence[2] @ cx.orientation
    assert np.all((chain != 0) == cx.boundary[1])


def test_simplicial_complex_path():
    cx = SimplicialComplex.from_simplices(np.array([[0.0], [1.0], [2.0]]), np.array([[0, 1], [1, 2]]))
    assert cx.counts == (3, 2)
