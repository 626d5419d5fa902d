"""Hölder-norm estimation, field superposition and FD shape derivatives."""

import math

import numpy as np
import pytest

from heatlayer.analysis import (
    HolderEstimate,
    ShapePath,
    parabolic_norm,
    shape_derivative,
    smoothness_report,
    superpose,
)
from heatlayer.geometry import BoundaryMap
from heatlayer.quadrature import SpaceGrid, TimeGrid


@pytest.fixture(scope="module")
def small_grids():
    return TimeGrid(0.5, 8), SpaceGrid(16)


def circle_points(n=64):
    th = 2.0 * math.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


# ---------------------------------------------------------------------------
# Parabolic Hölder estimator
# ---------------------------------------------------------------------------


def test_sqrt_t_time_seminorm_is_one():
    tg = TimeGrid(1.0, 200)
    pts = circle_points(32)
    values = np.sqrt(tg.nodes)[:, None] * np.ones((1, 32))
    est = parabolic_norm(values, tg, pts, alpha=1.0)
    # The quotient |sqrt(t) - sqrt(s)| / |t - s|^(1/2) is maximized (= 1)
    # at s = 0, and the (0, end) pair is always sampled.
    assert est.time_seminorm == pytest.approx(1.0, abs=1e-12)
    assert est.sup_part == pytest.approx(1.0)
    assert est.time_exponent == 0.5


def test_space_seminorm_lipschitz_bound():
    tg = TimeGrid(1.0, 16)
    pts = circle_points(128)
    values = np.broadcast_to(pts[:, 0], (17, 128)).copy()
    est = parabolic_norm(values, tg, pts, alpha=1.0)
    # x-coordinate is 1-Lipschitz in the ambient metric.
    assert 0.5 <= est.space_seminorm <= 1.0 + 1e-12


def test_parabolic_norm_determinism_and_monotone_budget():
    rng = np.random.default_rng(7)
    tg = TimeGrid(1.0, 64)
    pts = circle_points(64)
    values = rng.normal(size=(65, 64))
    a = parabolic_norm(values, tg, pts, alpha=0.5, seed=3)
    b = parabolic_norm(values, tg, pts, alpha=0.5, seed=3)
    assert a == b
    # Lower-bound character: a larger pair budget can only increase it.
    small = parabolic_norm(values, tg, pts, alpha=0.5, seed=3, max_pairs=64)
    assert small.time_seminorm <= a.time_seminorm + 1e-15
    assert small.space_seminorm <= a.space_seminorm + 1e-15


def test_parabolic_norm_validation_and_order_one():
    tg = TimeGrid(1.0, 16)
    pts = circle_points(32)
    values = np.ones((17, 32))
    with pytest.raises(ValueError):
        parabolic_norm(values, tg, pts, alpha=0.0)
    with pytest.raises(ValueError):
        parabolic_norm(values, tg, pts, alpha=1.5)
    with pytest.raises(ValueError):
        parabolic_norm(values, tg, pts, alpha=0.5, order=2)
    est = parabolic_norm(values, tg, pts, alpha=0.5, order=1)
    assert est.grad_time_seminorm == pytest.approx(0.0, abs=1e-10)
    assert est.grad_space_seminorm == pytest.approx(0.0, abs=1e-10)
    assert est.total() >= est.sup_part


# ---------------------------------------------------------------------------
# Superposition with a boundary map
# ---------------------------------------------------------------------------


def test_superpose_values_and_pair_mode(small_grids):
    tg, sg = small_grids
    phi = BoundaryMap.dilation(1.5)
    out = superpose(lambda t, p: t + p[..., 0], phi, tg, sg)
    assert out.shape == (tg.steps + 1, sg.n)
    np.testing.assert_allclose(out[3], tg.nodes[3] + 1.5 * np.cos(sg.theta), atol=1e-12)
    pair = superpose(lambda t, p: (p**2).sum(-1), phi, tg, sg, pair=True)
    assert pair.shape == (tg.steps + 1, sg.n, sg.n)
    np.testing.assert_allclose(pair, np.swapaxes(pair, 1, 2), atol=1e-12)
    np.testing.assert_allclose(np.diagonal(pair, axis1=1, axis2=2), 0.0, atol=1e-14)


def test_superpose_domain_guard(small_grids):
    tg, sg = small_grids
    phi = BoundaryMap.dilation(2.0)
    with pytest.raises(ValueError):
        superpose(lambda t, p: p[..., 0], phi, tg, sg,
                  domain=lambda p: np.linalg.norm(p, axis=-1) < 1.0)


# ---------------------------------------------------------------------------
# Shape derivatives
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def radial_path():
    base = BoundaryMap.identity()
    direction = BoundaryMap.radial([0.0, 0.0, 0.0, 0.3])
    return ShapePath(base, direction, s_max=0.1)


def test_shape_path_basics(radial_path):
    th = np.linspace(0, 2 * math.pi, 9)[:-1]
    np.testing.assert_allclose(radial_path.at(0.0)(th), radial_path.base(th), atol=1e-15)
    np.testing.assert_allclose(
        radial_path.at(0.05)(th),
        radial_path.base(th) + 0.05 * radial_path.direction(th),
        atol=1e-14,
    )
    radial_path.certify()


def test_first_derivative_second_order_convergence(radial_path, small_grids):
    tg, sg = small_grids
    res = shape_derivative("V", radial_path, 1, 1e-2, tg, sg)
    assert res.norm > 0
    assert res.converged
    assert res.observed_order == pytest.approx(2.0, abs=0.3)
    assert 0.5 <= res.stabilization_ratio <= 2.0


def test_translation_path_is_first_order_degenerate(small_grids):
    tg, sg = small_grids
    shift = BoundaryMap([0.4], [0.0], [-0.2], [0.0])
    path = ShapePath(BoundaryMap.identity(), shift, s_max=0.5)
    for kind in ("V", "W_star"):
        res = shape_derivative(kind, path, 1, 1e-2, tg, sg, diagnostics=False)
        assert res.norm <= 1e-12


def test_derivative_scales_with_direction(radial_path, small_grids):
    # Replacing the direction by 2 d traverses the path twice as fast, so
    # the first derivative doubles: est_{2d}(h) = 2 est_d(2h).
    tg, sg = small_grids
    double_dir = BoundaryMap.radial([0.0, 0.0, 0.0, 0.6])
    fast = ShapePath(radial_path.base, double_dir, s_max=0.05)
    h = 5e-3
    a = shape_derivative("V", fast, 1, h, tg, sg, diagnostics=False)
    b = shape_derivative("V", radial_path, 1, 2 * h, tg, sg, diagnostics=False)
    np.testing.assert_allclose(a.estimate, 2.0 * b.estimate, atol=1e-12)


def test_shape_derivative_validation(radial_path, small_grids):
    tg, sg = small_grids
    with pytest.raises(ValueError):
        shape_derivative("Q", radial_path, 1, 1e-2, tg, sg)
    with pytest.raises(ValueError):
        shape_derivative("V", radial_path, 5, 1e-2, tg, sg)


def test_smoothness_report_rows(radial_path, small_grids):
    tg, sg = small_grids
    header, rows = smoothness_report(
        [("radial", radial_path)], ("V", "W"), tg, sg, orders=(1, 2)
    )
    assert header[:3] == ["path", "kind", "order"]
    assert len(rows) == 4
    for row in rows:
        assert row[0] == "radial" and row[1] in ("V", "W")
        assert row[3] >= 0.0
