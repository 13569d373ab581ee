import numpy as np
import pytest

from fpbench.simplex import (
    clamp_floor,
    count_simplex_points,
    local_box_mesh,
    product_mesh,
    project_simplex,
    simplex_points,
)


def test_project_simplex_fixed_point():
    p = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(p), p)


def test_project_simplex_rows():
    out = project_simplex(np.array([[2.0, 0.0], [0.4, 0.4]]))
    np.testing.assert_allclose(out, [[1.0, 0.0], [0.5, 0.5]])
    assert np.all(out >= 0)


def test_clamp_floor_renormalises():
    p = clamp_floor(np.array([0.0, 1.0]), floor=1e-3)
    assert p.sum() == pytest.approx(1.0)
    assert p[0] > 0


def test_simplex_points_count():
    pts = simplex_points(3, 4)
    assert len(pts) == count_simplex_points(3, 4) == 15
    np.testing.assert_allclose(pts.sum(axis=1), 1.0)


def test_simplex_points_rejects_bad_args():
    with pytest.raises(ValueError):
        simplex_points(0, 3)


def test_product_mesh_size():
    assert len(list(product_mesh([2, 2], 2))) == 9


def test_local_box_mesh_stays_on_simplex():
    mesh = local_box_mesh(np.array([[0.5, 0.5], [0.9, 0.1]]), 0.2, 5)
    assert mesh.shape[1:] == (2, 2)
    np.testing.assert_allclose(mesh.sum(axis=2), 1.0)
    assert np.all(mesh >= 0)
