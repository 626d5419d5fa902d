"""Boundary maps, pullback geometry, shape files and the tubular collar."""

import math

import numpy as np
import pytest

from heatlayer import geometry
from heatlayer.geometry import (
    BoundaryMap,
    GeometryError,
    ReferenceCircle,
    ShapeFileError,
    classify_point,
    curvature_ratio,
    extend,
    load_shape,
    normal_of_map,
    normal_of_map_derivative,
    pullback_normal,
    save_shape,
    sigma_tilde,
)

THETA = np.linspace(0.0, 2.0 * math.pi, 17)[:-1]


def radial_oracle_normal(rho, drho, theta):
    """Outward unit normal of the curve r = rho(theta) from the level set
    F(x) = |x| - rho(atan2(y, x)); grad F is the analytic outward direction."""
    r = rho(theta)
    # grad F in polar components: e_r - (rho'/r) e_theta at the curve.
    er = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    et = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    g = er - (drho(theta) / r)[:, None] * et
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def test_reference_circle():
    c = ReferenceCircle(2.0)
    p = c.point(THETA)
    np.testing.assert_allclose(np.linalg.norm(p, axis=1), 2.0, rtol=1e-14)
    np.testing.assert_allclose(c.normal(THETA), p / 2.0, atol=1e-14)


def test_identity_map_and_derivatives():
    phi = BoundaryMap.identity()
    np.testing.assert_allclose(
        phi(THETA), np.stack([np.cos(THETA), np.sin(THETA)], axis=-1), atol=1e-14
    )
    np.testing.assert_allclose(phi.speed(THETA), 1.0, rtol=1e-14)
    eps = 1e-6
    fd = (phi(THETA + eps) - phi(THETA - eps)) / (2 * eps)
    np.testing.assert_allclose(phi.derivative(THETA), fd, atol=1e-8)


def test_radial_map_values():
    phi = BoundaryMap.radial([1.0, 0.0, 0.12])
    rho = 1.0 + 0.12 * np.cos(2 * THETA)
    expect = rho[:, None] * np.stack([np.cos(THETA), np.sin(THETA)], axis=-1)
    np.testing.assert_allclose(phi(THETA), expect, atol=1e-13)


def test_normal_of_map_against_level_set_oracle():
    phi = BoundaryMap.radial([1.0, 0.0, 0.12])
    oracle = radial_oracle_normal(
        lambda th: 1.0 + 0.12 * np.cos(2 * th),
        lambda th: -0.24 * np.sin(2 * th),
        THETA,
    )
    np.testing.assert_allclose(normal_of_map(phi, THETA), oracle, atol=1e-12)
    # Outward: positive projection on the position vector for a star shape.
    assert np.all(np.einsum("nl,nl->n", normal_of_map(phi, THETA), phi(THETA)) > 0)


def test_normal_derivative_matches_fd():
    phi = BoundaryMap.radial([1.0, 0.0, 0.12])
    eps = 1e-6
    fd = (normal_of_map(phi, THETA + eps) - normal_of_map(phi, THETA - eps)) / (2 * eps)
    np.testing.assert_allclose(normal_of_map_derivative(phi, THETA), fd, atol=1e-7)


def test_sigma_tilde_is_speed_ratio():
    phi = BoundaryMap.dilation(1.5)
    np.testing.assert_allclose(sigma_tilde(phi, THETA), 1.5, rtol=1e-13)
    phi2 = BoundaryMap.radial([1.0, 0.0, 0.12])
    np.testing.assert_allclose(sigma_tilde(phi2, THETA), phi2.speed(THETA), rtol=1e-13)


def test_curvature_ratio_on_circles():
    # Unit circle: curvature 1; dilated circle: curvature 1/lam, and the
    # ratio is normalized by the reference curvature at matching speed.
    k1 = curvature_ratio(BoundaryMap.identity(), THETA)
    np.testing.assert_allclose(k1, k1[0], rtol=1e-12)
    lam = 1.7
    k2 = curvature_ratio(BoundaryMap.dilation(lam), THETA)
    np.testing.assert_allclose(k2, k1 / lam, rtol=1e-12)


def test_max_speed_memoized_and_correct():
    phi = BoundaryMap.radial([1.0, 0.0, 0.12])
    th = np.linspace(0, 2 * math.pi, 4096)
    brute = float(np.max(phi.speed(th)))
    assert phi.max_speed() == pytest.approx(brute, rel=1e-4)
    assert phi.max_speed() is phi.max_speed()  # cached float object


def test_combine_is_affine_in_s():
    base = BoundaryMap.identity()
    direction = BoundaryMap.radial([0.0, 0.0, 0.0, 1.0])
    mid = BoundaryMap.combine(base, direction, 0.25)
    np.testing.assert_allclose(
        mid(THETA), base(THETA) + 0.25 * direction(THETA), atol=1e-13
    )
    np.testing.assert_allclose(BoundaryMap.combine(base, direction, 0.0)(THETA),
                               base(THETA), atol=1e-15)


def test_validate_rejects_degenerate_map():
    # Zero map has zero speed everywhere.
    bad = BoundaryMap([0.0], [0.0], [0.0], [0.0])
    with pytest.raises(GeometryError):
        bad.validate()


def test_classify_point(perturbed):
    assert classify_point(perturbed, np.array([0.0, 0.0])) == "interior"
    assert classify_point(perturbed, np.array([3.0, 0.0])) == "exterior"


# ---------------------------------------------------------------------------
# Shape files
# ---------------------------------------------------------------------------


def test_shape_file_roundtrip(tmp_path, perturbed):
    path = tmp_path / "shape.txt"
    save_shape(perturbed, path)
    back = load_shape(path)
    np.testing.assert_allclose(back(THETA), perturbed(THETA), atol=1e-15)
    assert back.coefficient_hash() == perturbed.coefficient_hash()


@pytest.mark.parametrize(
    "content,fragment",
    [
        ("cos_x_0=1.0\n", "radius"),
        ("radius=1.0\nwhat=3\n", "unknown key"),
        ("radius=1.0\ncos_x_1=banana\n", "bad numeric value"),
        ("radius=1.0\nnonsense line\n", "key=value"),
    ],
)
def test_shape_file_errors(tmp_path, content, fragment):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    with pytest.raises(ShapeFileError, match=fragment):
        load_shape(path)


# ---------------------------------------------------------------------------
# Tubular collar
# ---------------------------------------------------------------------------


def test_extension_chart_basics(perturbed):
    ext = extend(perturbed, 0.15)
    th = THETA
    np.testing.assert_allclose(
        ext.physical_point(th, np.zeros_like(th)), perturbed(th), atol=1e-13
    )
    # Offset along the outward normal by s (reference-side convention:
    # positive s moves outward by s * nu).
    p_in = ext.physical_point(th, np.full_like(th, 0.1))
    nu = normal_of_map(perturbed, th)
    np.testing.assert_allclose(p_in, perturbed(th) + 0.1 * nu, atol=1e-12)
    # Chart jacobians invertible throughout.
    ss = np.full_like(th, -0.12)
    det = ext.det_dphi(th, ss)
    assert np.all(np.abs(det) > 1e-3)


def test_extension_jacobian_matches_fd(perturbed):
    ext = extend(perturbed, 0.15)
    th = np.array([0.7])
    s = np.array([-0.08])
    jac = ext.chart_jacobian_physical(th, s)[0]
    eps = 1e-6
    fd_th = (ext.physical_point(th + eps, s) - ext.physical_point(th - eps, s)) / (2 * eps)
    fd_s = (ext.physical_point(th, s + eps) - ext.physical_point(th, s - eps)) / (2 * eps)
    np.testing.assert_allclose(jac[:, 0], fd_th[0], atol=1e-7)
    np.testing.assert_allclose(jac[:, 1], fd_s[0], atol=1e-7)


def test_extension_rejects_too_wide_collar():
    # rho = 1 + 0.3 cos 3theta has a small inner curvature radius; a wide
    # collar self-intersects and must be refused.
    phi = BoundaryMap.radial([1.0, 0.0, 0.0, 0.3])
    with pytest.raises(GeometryError):
        extend(phi, 0.3)
    extend(phi, 0.05)  # narrow collar is fine


def test_pullback_normal_unit_circle():
    ext = extend(BoundaryMap.identity(), 0.2)
    n = pullback_normal(ext, THETA)
    np.testing.assert_allclose(n, np.stack([np.cos(THETA), np.sin(THETA)], axis=-1),
                               atol=1e-12)
