"""Layer potentials: assembly oracles, jump relations, structure, fields."""

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import i0e

from heatlayer.geometry import BoundaryMap
from heatlayer.potentials import (
    BoundaryOperatorMatrix,
    NearBoundaryWarning,
    SpaceTimeDensity,
    assemble,
    boundary_value_extrapolate,
    disk_heat_mass,
    double_layer_eval,
    field_at_points,
    identity_crosscheck,
    jump_probe,
    log_weights,
    single_layer_eval,
    single_layer_grad,
)
from heatlayer.potentials import _point_eval
from heatlayer.quadrature import SpaceGrid, TimeGrid


def ones_density(tgrid, sgrid):
    return SpaceTimeDensity(tgrid, sgrid, np.ones((tgrid.steps + 1, sgrid.n)))


# ---------------------------------------------------------------------------
# Density container and log weights
# ---------------------------------------------------------------------------


def test_density_container(tgrid, sgrid):
    mu = SpaceTimeDensity.from_function(tgrid, sgrid, lambda t, th: t * np.cos(th))
    assert mu.values.shape == (tgrid.steps + 1, sgrid.n)
    assert mu.in_c0
    assert not ones_density(tgrid, sgrid).in_c0
    assert np.all(SpaceTimeDensity.zero(tgrid, sgrid).values == 0.0)
    with pytest.raises(ValueError):
        SpaceTimeDensity(tgrid, sgrid, np.zeros((3, sgrid.n)))


def test_log_weights_fourier_oracle():
    # int log(4 sin^2((theta_j - t)/2)) cos(k t) dt = -(2 pi / k) cos(k theta_j),
    # and 0 against a constant.
    n = 24
    theta = 2.0 * math.pi * np.arange(n) / n
    lw = log_weights(n)
    np.testing.assert_allclose(lw @ np.ones(n), 0.0, atol=1e-12)
    for k in (1, 2, 5):
        got = lw @ np.cos(k * theta)
        np.testing.assert_allclose(got, -(2 * math.pi / k) * np.cos(k * theta),
                                   atol=1e-11)


# ---------------------------------------------------------------------------
# Assembly oracles on the unit circle (radially reduced closed forms)
# ---------------------------------------------------------------------------


def test_single_layer_of_one_bessel_oracle(unit_circle):
    # On the unit circle with density 1 the boundary value is
    # u(t) = int_0^t i0e(1/(2s)) / (2s) ds (radial reduction).
    tg, sg = TimeGrid(1.0, 32), SpaceGrid(32)
    v1 = assemble("V", unit_circle, tg, sg).apply(ones_density(tg, sg))
    for i in (4, 16, 32):
        ref = quad(lambda s: i0e(1.0 / (2 * s)) / (2 * s), 0, tg.nodes[i],
                   epsabs=1e-13, epsrel=1e-12, limit=400)[0]
        assert v1[i, 0] == pytest.approx(ref, abs=1e-10)
    # Rotational symmetry: constant in theta.
    np.testing.assert_allclose(v1, np.broadcast_to(v1[:, :1], v1.shape), atol=1e-12)


def test_double_layer_of_one_boundary_identity(unit_circle):
    # Boundary trace of the double layer of 1 equals G(t, x) - 1/2 with G
    # the heat mass of the unit disk.
    tg, sg = TimeGrid(1.0, 32), SpaceGrid(32)
    w1 = assemble("W", unit_circle, tg, sg).apply(ones_density(tg, sg))
    x = unit_circle(np.array([0.0]))[0]
    for i in (4, 16, 32):
        ref = disk_heat_mass(tg.nodes[i], x) - 0.5
        assert w1[i, 0] == pytest.approx(ref, abs=1e-10)


def test_disk_heat_mass_center_closed_form():
    for t in (0.05, 0.3, 1.0):
        assert disk_heat_mass(t, np.zeros(2)) == pytest.approx(
            1.0 - math.exp(-1.0 / (4 * t)), rel=1e-10
        )
    assert disk_heat_mass(0.0, np.zeros(2)) == 0.0


# ---------------------------------------------------------------------------
# Off-boundary evaluation
# ---------------------------------------------------------------------------


@pytest.mark.filterwarnings("ignore::heatlayer.potentials.NearBoundaryWarning")
def test_field_engines_agree(perturbed, tgrid, sgrid, mu_tcos):
    # Batched multi-time evaluation vs the single-point engine.
    pts = np.array([[0.2, 0.1], [1.8, -0.9], [0.0, 0.65]])
    batched = field_at_points(perturbed, mu_tcos, pts,
                              kinds=("value", "grad_x", "grad_y", "double"))
    for i in (5, 16):
        t = tgrid.nodes[i]
        for j, x in enumerate(pts):
            ref = _point_eval(perturbed, mu_tcos, t, x, ("value", "grad", "double"))
            assert batched["value"][i, j] == pytest.approx(ref["value"], abs=1e-12)
            assert batched["double"][i, j] == pytest.approx(ref["double"], abs=1e-12)
            np.testing.assert_allclose(
                [batched["grad_x"][i, j], batched["grad_y"][i, j]],
                ref["grad"], atol=1e-11,
            )


def test_single_layer_is_caloric(perturbed, tgrid, sgrid, mu_tcos):
    # FD heat residual at a point well separated from the curve.
    x = np.array([2.2, 0.8])
    t = 0.75
    eps = 2e-3

    def u(tt, xx):
        return single_layer_eval(perturbed, mu_tcos, tt, xx)

    u0 = u(t, x)
    ut = (u(t + eps, x) - u(t - eps, x)) / (2 * eps)
    lap = sum(
        (u(t, x + eps * e) - 2 * u0 + u(t, x - eps * e)) / eps**2
        for e in (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    )
    assert abs(ut - lap) < 1e-3 * max(abs(u0), 1e-12)


def test_causality_and_near_boundary_warning(perturbed, mu_tcos):
    assert single_layer_eval(perturbed, mu_tcos, 0.0, np.array([3.0, 0.0])) == 0.0
    with pytest.warns(NearBoundaryWarning):
        single_layer_eval(perturbed, mu_tcos, 0.5, perturbed(np.array([0.3]))[0]
                          + np.array([1e-4, 0.0]))


def test_gradient_engine_matches_fd(perturbed, mu_tcos):
    x = np.array([1.9, 0.4])
    t = 0.6
    g = single_layer_grad(perturbed, mu_tcos, t, x)
    eps = 1e-5
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = eps
        fd = (single_layer_eval(perturbed, mu_tcos, t, x + e)
              - single_layer_eval(perturbed, mu_tcos, t, x - e)) / (2 * eps)
        assert g[axis] == pytest.approx(fd, rel=1e-6, abs=1e-12)


# ---------------------------------------------------------------------------
# Jump relations (coarse; the full-resolution run lives in the acceptance set)
# ---------------------------------------------------------------------------


def test_jump_relations_coarse(unit_circle):
    tg, sg = TimeGrid(1.0, 32), SpaceGrid(64)
    mu = SpaceTimeDensity.from_function(tg, sg, lambda t, th: t * (2.0 + np.cos(th)))
    ws = assemble("W_star", unit_circle, tg, sg).apply(mu)
    w = assemble("W", unit_circle, tg, sg).apply(mu)
    probes = [(tg.nodes[16], 12), (tg.nodes[28], 40)]
    for t, j in probes:
        i = int(round(t / tg.h))
        th = sg.theta[j]
        half = 0.5 * mu.values[i, j]
        # Interior normal-derivative limit of the single layer: +mu/2 + W_*.
        lim = jump_probe(unit_circle, mu, "single_normal", "+", t, th)
        assert lim - ws[i, j] == pytest.approx(half, rel=0.05)
        lim = jump_probe(unit_circle, mu, "single_normal", "-", t, th)
        assert lim - ws[i, j] == pytest.approx(-half, rel=0.05)
        # Interior value limit of the double layer: -mu/2 + W.
        lim = jump_probe(unit_circle, mu, "double_value", "+", t, th)
        assert lim - w[i, j] == pytest.approx(-half, rel=0.05)
        lim = jump_probe(unit_circle, mu, "double_value", "-", t, th)
        assert lim - w[i, j] == pytest.approx(half, rel=0.05)


def test_single_layer_value_is_continuous(unit_circle):
    tg, sg = TimeGrid(1.0, 32), SpaceGrid(64)
    mu = SpaceTimeDensity.from_function(tg, sg, lambda t, th: t * (2.0 + np.cos(th)))
    v = assemble("V", unit_circle, tg, sg).apply(mu)
    t, j = tg.nodes[16], 8
    th = sg.theta[j]
    plus = boundary_value_extrapolate(unit_circle, mu, t, th, "+")
    minus = boundary_value_extrapolate(unit_circle, mu, t, th, "-")
    assert plus == pytest.approx(minus, rel=2e-3)
    assert plus == pytest.approx(v[16, j], rel=2e-3)


def test_identity_crosscheck_consistency(unit_circle):
    report = identity_crosscheck(unit_circle, TimeGrid(1.0, 32), SpaceGrid(64))
    assert set(report) == {"V_1", "V_2", "W_star"}
    assert max(report.values()) < 0.25


# ---------------------------------------------------------------------------
# Structure: equivariance, Toeplitz blocks, serialization
# ---------------------------------------------------------------------------


def test_translation_equivariance(perturbed, tgrid, sgrid):
    shift = np.array([0.7, -0.3])
    moved = BoundaryMap(
        perturbed.ax + np.array([shift[0]] + [0.0] * (len(perturbed.ax) - 1)),
        perturbed.bx,
        perturbed.ay + np.array([shift[1]] + [0.0] * (len(perturbed.ay) - 1)),
        perturbed.by,
        perturbed.circle,
    )
    for kind in ("V", "W_star", "W"):
        a = assemble(kind, perturbed, tgrid, sgrid)
        b = assemble(kind, moved, tgrid, sgrid)
        assert np.max(np.abs(a.c_blocks - b.c_blocks)) < 1e-14
        assert np.max(np.abs(a.d_blocks - b.d_blocks)) < 1e-14


def test_lag_block_reproduces_apply(perturbed, tgrid, sgrid, mu_tcos):
    op = assemble("V", perturbed, tgrid, sgrid)
    m = tgrid.steps
    out = np.zeros_like(mu_tcos.values)
    for i in range(1, m + 1):
        for lag in range(i):
            out[i] += op.lag_block(lag) @ mu_tcos.values[i - lag]
    np.testing.assert_allclose(out, op.apply(mu_tcos), atol=1e-14)
    with pytest.raises(ValueError):
        op.lag_block(m)


def test_serialization_roundtrip(tmp_path, perturbed, tgrid, sgrid, mu_tcos):
    op = assemble("W_star", perturbed, tgrid, sgrid)
    path = tmp_path / "op.bin"
    op.save(path)
    back = BoundaryOperatorMatrix.load(path)
    assert back.kind == op.kind
    assert back.tgrid == op.tgrid and back.sgrid == op.sgrid
    assert back.shape_hash == op.shape_hash
    np.testing.assert_array_equal(back.c_blocks, op.c_blocks)
    np.testing.assert_array_equal(back.d_blocks, op.d_blocks)
    np.testing.assert_array_equal(back.apply(mu_tcos), op.apply(mu_tcos))
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + bytes(64))
    with pytest.raises(ValueError):
        BoundaryOperatorMatrix.load(bad)


def test_operator_grid_mismatch_raises(perturbed, tgrid, sgrid):
    op = assemble("V", perturbed, tgrid, sgrid)
    other = SpaceTimeDensity.zero(TimeGrid(1.0, 8), sgrid)
    with pytest.raises(ValueError):
        op.apply(other)
    with pytest.raises(ValueError):
        assemble("Q", perturbed, tgrid, sgrid)


def test_double_layer_interior_identity_probe(unit_circle):
    # Interior point identity w[1](t, x) = G(t, x) - 1 (coarse version of
    # the full acceptance probe set).
    tg, sg = TimeGrid(1.0, 64), SpaceGrid(64)
    mu = SpaceTimeDensity(tg, sg, np.ones((tg.steps + 1, sg.n)))
    x = np.array([0.3, 0.0])
    t = 0.5
    got = double_layer_eval(unit_circle, mu, t, x)
    assert got == pytest.approx(disk_heat_mass(t, x) - 1.0, abs=1e-6)
