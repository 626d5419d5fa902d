"""Collar-chart machinery: pulled-back fields, weak residuals, transmission.

Fields are sampled on the two shells of a tubular collar around the
reference circle.  The "+" side is the inner shell (between the offset
curve at s = -delta and the interface), the "-" side the outer shell.
The module provides the field-to-weak-pair map used to state the heat
equation without second derivatives, a weak-residual functional over a
fixed test family, shell trace operators, a transmission-data verifier
for layer potentials, and an energy monitor for the dissipation
identity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import TubularExtension, normal_of_map
from .potentials import NearBoundaryWarning, SpaceTimeDensity, field_at_points
from .quadrature import TimeGrid

EPS_LADDER = (1e-2, 5e-3, 2.5e-3)

# Shell fields feed residual checks at the 1e-2/1e-3 level; a reduced
# upsampling factor keeps the evaluation error orders below that while
# cutting the cost of the volumetric grids substantially.
FINE_FACTOR_SHELL = 3.0


@dataclass
class AnnulusField:
    """Samples u(t_i, theta_j, s_k) on one shell of the collar chart.

    values has shape (steps+1, n_theta, n_s).  grads optionally carries
    the physical spatial gradient, iface_* one-sided interface limits
    (s -> 0 from inside the shell), each (steps+1, n_theta[, 2]).
    """

    ext: TubularExtension
    side: str
    tgrid: TimeGrid
    theta: np.ndarray
    s: np.ndarray
    values: np.ndarray
    grads: np.ndarray | None = None
    iface_values: np.ndarray | None = None
    iface_grads: np.ndarray | None = None
    ladder_values: np.ndarray | None = None

    def __post_init__(self):
        if self.side not in ("+", "-"):
            raise ValueError("side must be '+' or '-'")
        expected = (self.tgrid.steps + 1, len(self.theta), len(self.s))
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape}, expected {expected}")

    @property
    def starts_at_zero(self):
        return bool(np.max(np.abs(self.values[0])) == 0.0)


@dataclass(frozen=True)
class WeakPair:
    """(scalar, vector) pair fed to the weak heat pairing."""

    w0: np.ndarray
    w1: np.ndarray

    def __post_init__(self):
        if self.w1.shape != self.w0.shape + (2,):
            raise ValueError(f"inconsistent shapes {self.w0.shape} vs {self.w1.shape}")


@dataclass(frozen=True)
class TransmissionResiduals:
    """Normalized residuals of the transmission data of a layer potential."""

    interface_value_residual: float
    conormal_jump_residual: float
    shell_trace_residual_plus: float
    shell_trace_residual_minus: float
    weak_residual_plus: float
    weak_residual_minus: float
    initial_residual: float

    def as_dict(self):
        return {
            "interface_value_residual": self.interface_value_residual,
            "conormal_jump_residual": self.conormal_jump_residual,
            "shell_trace_residual_plus": self.shell_trace_residual_plus,
            "shell_trace_residual_minus": self.shell_trace_residual_minus,
            "weak_residual_plus": self.weak_residual_plus,
            "weak_residual_minus": self.weak_residual_minus,
            "initial_residual": self.initial_residual,
        }

    def max_residual(self):
        return max(self.as_dict().values())


def shell_s_nodes(ext: TubularExtension, side, n_s):
    """Chart s nodes of one shell, open at the interface.

    "+" runs from -delta up to -delta/n_s, "-" from delta/n_s up to
    delta, so the interface itself is never sampled directly.
    """
    d = ext.delta
    if side == "+":
        return np.linspace(-d, -d / n_s, n_s)
    return np.linspace(d / n_s, d, n_s)


def annulus_field_from_function(ext, side, tgrid, theta, s, fn, grad_fn=None):
    """Sample an explicit function u(t, y) (y physical) on a shell grid."""
    tt, th, ss = np.meshgrid(tgrid.nodes, theta, s, indexing="ij")
    pts = ext.physical_point(th, ss)
    values = fn(tt, pts[..., 0], pts[..., 1])
    grads = None
    if grad_fn is not None:
        grads = np.stack(grad_fn(tt, pts[..., 0], pts[..., 1]), axis=-1)
    return AnnulusField(ext, side, tgrid, theta, s, values, grads)


def _richardson_array(v1, v2, v3):
    return 2.0 * v3 - v2


def _ladder_points(ext, theta, side):
    sgn = -1.0 if side == "+" else 1.0
    return [ext.physical_point(theta, np.full_like(theta, sgn * e)) for e in EPS_LADDER]


def layer_annulus_fields(ext, mu: SpaceTimeDensity, kind="single", n_s=12,
                         with_grads=True, with_iface=True):
    """Pull a layer potential back onto both shells of the collar.

    kind "single" or "double".  Returns (plus_field, minus_field) with
    physical gradients, Richardson-extrapolated one-sided interface
    traces, and the raw value ladders attached.
    """
    if kind not in ("single", "double"):
        raise ValueError(f"unknown layer kind {kind!r}")
    phi = ext.base
    theta = mu.sgrid.theta
    value_kind = "value" if kind == "single" else "double"
    kinds = (value_kind, "grad_x", "grad_y") if with_grads else (value_kind,)
    out = []
    # Shell and ladder points sit close to the curve by construction;
    # the proximity warning carries no information here.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        for side in ("+", "-"):
            s = shell_s_nodes(ext, side, n_s)
            th, ss = np.meshgrid(theta, s, indexing="ij")
            pts = ext.physical_point(th, ss).reshape(-1, 2)
            fields = field_at_points(phi, mu, pts, kinds=kinds,
                                     fine_factor=FINE_FACTOR_SHELL)
            shape = (mu.tgrid.steps + 1, len(theta), n_s)
            values = fields[value_kind].reshape(shape)
            grads = None
            if with_grads:
                grads = np.stack(
                    [fields["grad_x"].reshape(shape), fields["grad_y"].reshape(shape)],
                    axis=-1,
                )
            af = AnnulusField(ext, side, mu.tgrid, theta, s, values, grads)
            if with_iface:
                lv, lg = [], []
                for pts_l in _ladder_points(ext, theta, side):
                    fl = field_at_points(phi, mu, pts_l, kinds=kinds,
                                         fine_factor=FINE_FACTOR_SHELL)
                    lv.append(fl[value_kind])
                    if with_grads:
                        lg.append(np.stack([fl["grad_x"], fl["grad_y"]], axis=-1))
                af.ladder_values = np.stack(lv)
                af.iface_values = _richardson_array(*lv)
                if with_grads:
                    af.iface_grads = _richardson_array(*lg)
            out.append(af)
    return tuple(out)


# ---------------------------------------------------------------------------
# The field-to-weak-pair map
# ---------------------------------------------------------------------------


def b_omega(ext: TubularExtension, u: AnnulusField) -> WeakPair:
    """Map a shell field to the pair (-|det DPhi| u, A Du^T |det DPhi|).

    A = (DPhi)^{-1} (DPhi)^{-T}; Du is the gradient with respect to the
    reference Cartesian coordinates, computed spectrally in theta and by
    second-order differences in s on the chart.
    """
    theta, s = u.theta, u.s
    th, ss = np.meshgrid(theta, s, indexing="ij")
    dphi = ext.dphi(th, ss)
    det = np.linalg.det(dphi)
    if np.any(np.abs(det) < 1e-14):
        raise ValueError("singular extension Jacobian on the shell grid")
    adet = np.abs(det)
    v = u.values
    n_t = len(theta)
    freqs = np.fft.fftfreq(n_t, d=1.0 / n_t)
    du_th = np.real(np.fft.ifft(1j * freqs[None, :, None] * np.fft.fft(v, axis=1), axis=1))
    du_s = np.gradient(v, s, axis=2, edge_order=2)
    grad_chart = np.stack([du_th, du_s], axis=-1)
    jref = ext.chart_jacobian_reference(th, ss)
    du = np.einsum("tnsk,nskl->tnsl", grad_chart, np.linalg.inv(jref))
    dinv = np.linalg.inv(dphi)
    a_mat = np.einsum("nskl,nsml->nskm", dinv, dinv)  # (DPhi)^-1 (DPhi)^-T
    w1 = np.einsum("nskm,tnsm->tnsk", a_mat, du) * adet[None, :, :, None]
    w0 = -adet[None, :, :] * v
    return WeakPair(w0, w1)


# ---------------------------------------------------------------------------
# Weak heat residual over a fixed test family
# ---------------------------------------------------------------------------


def _bump(xi):
    """C^2 bump with triple zeros at xi = 0, 1; vanishes outside (0, 1)."""
    xi = np.asarray(xi, dtype=float)
    core = xi * (1.0 - xi)
    return np.where((xi > 0) & (xi < 1), np.clip(core, 0.0, None) ** 3, 0.0)


def _bump_d(xi):
    xi = np.asarray(xi, dtype=float)
    core = xi * (1.0 - xi)
    return np.where(
        (xi > 0) & (xi < 1), 3.0 * np.clip(core, 0.0, None) ** 2 * (1.0 - 2.0 * xi), 0.0
    )


def default_test_family(tgrid: TimeGrid):
    """The documented 10-member family: 5 angular modes x 2 space-time bumps.

    Each entry is (angular(theta), d_angular(theta), time(t), d_time(t),
    s_window) with the s-profile a triple-zero bump over a stated
    fraction of the shell.
    """
    t1 = (0.05 * tgrid.horizon, 0.95 * tgrid.horizon)
    t2 = (0.40 * tgrid.horizon, 0.95 * tgrid.horizon)
    angular = [
        (lambda th: np.ones_like(th), lambda th: np.zeros_like(th)),
        (np.cos, lambda th: -np.sin(th)),
        (np.sin, np.cos),
        (lambda th: np.cos(2 * th), lambda th: -2 * np.sin(2 * th)),
        (lambda th: np.sin(2 * th), lambda th: 2 * np.cos(2 * th)),
    ]
    family = []
    for window in (t1, t2):
        for ang, dang in angular:
            family.append((ang, dang, window))
    return family


def weak_heat_residual(pair: WeakPair, rhs, ext: TubularExtension, u: AnnulusField,
                       test_family=None):
    """Max normalized weak-pairing residual over the test family.

    Computes max over tests psi of |intint (w0-r0) dpsi/dt + Dpsi .
    (w1-r1)| / intint (|dpsi/dt| + |Dpsi|), by tensor trapezoid on the
    chart of the shell carrying u.  A zero residual is the (necessary)
    discrete certificate that the pair satisfies the pulled-back heat
    equation in the weak sense.
    """
    w0 = pair.w0 if rhs is None else pair.w0 - rhs.w0
    w1 = pair.w1 if rhs is None else pair.w1 - rhs.w1
    tgrid, theta, s = u.tgrid, u.theta, u.s
    if test_family is None:
        test_family = default_test_family(tgrid)
    s_lo, s_hi = (-ext.delta, 0.0) if u.side == "+" else (0.0, ext.delta)
    t = tgrid.nodes
    th, ss = np.meshgrid(theta, s, indexing="ij")
    jref = ext.chart_jacobian_reference(th, ss)
    det_ref = np.abs(np.linalg.det(jref))
    jref_inv = np.linalg.inv(jref)

    # Quadrature weights: trapezoid in t and s, uniform in theta.
    wt = np.full(len(t), tgrid.h)
    wt[0] = wt[-1] = tgrid.h / 2.0
    ws = np.full(len(s), s[1] - s[0])
    ws[0] = ws[-1] = (s[1] - s[0]) / 2.0
    wq = det_ref[None, :, :] * (2.0 * math.pi / len(theta)) * ws[None, None, :]
    wq = wt[:, None, None] * wq

    xs = (ss - s_lo) / (s_hi - s_lo)
    b_s = _bump(xs)
    db_s = _bump_d(xs) / (s_hi - s_lo)

    worst = 0.0
    for ang, dang, (t_lo, t_hi) in test_family:
        xt = (t - t_lo) / (t_hi - t_lo)
        b_t = _bump(xt)
        db_t = _bump_d(xt) / (t_hi - t_lo)
        a_th = ang(theta)
        da_th = dang(theta)
        psi_t = db_t[:, None, None] * (a_th[:, None] * b_s)[None, :, :]
        dpsi_chart = np.stack(
            [
                np.broadcast_to((da_th[:, None] * b_s)[None, :, :], psi_t.shape),
                np.broadcast_to((a_th[:, None] * db_s)[None, :, :], psi_t.shape),
            ],
            axis=-1,
        ) * b_t[:, None, None, None]
        dpsi = np.einsum("tnsk,nskl->tnsl", dpsi_chart, jref_inv)
        pairing = float(np.sum(wq * (w0 * psi_t + np.einsum("tnsl,tnsl->tns", dpsi, w1))))
        scale = float(np.sum(wq * (np.abs(psi_t) + np.linalg.norm(dpsi, axis=-1))))
        worst = max(worst, abs(pairing) / max(scale, 1e-300))
    return worst


# ---------------------------------------------------------------------------
# Shell trace operators
# ---------------------------------------------------------------------------


def shell_operator(kind, ext: TubularExtension, mu: SpaceTimeDensity, side):
    """Layer-potential traces on the off-interface boundary of a shell.

    kind "V_shell" or "W_shell"; side "+" evaluates on the offset curve
    at s = -delta, side "-" at s = +delta.  Returns samples of shape
    (steps+1, n_theta).
    """
    if kind not in ("V_shell", "W_shell"):
        raise ValueError(f"unknown shell kind {kind!r}")
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    theta = mu.sgrid.theta
    s = -ext.delta if side == "+" else ext.delta
    pts = ext.physical_point(theta, np.full_like(theta, s))
    fk = "value" if kind == "V_shell" else "double"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        return field_at_points(ext.base, mu, pts, kinds=(fk,))[fk]


# ---------------------------------------------------------------------------
# Transmission-data verification
# ---------------------------------------------------------------------------


def transmission_verify(ext: TubularExtension, mu: SpaceTimeDensity, kind="single",
                        n_s=12, n_probe_t=6, n_probe_theta=8) -> TransmissionResiduals:
    """Residuals of the transmission data characterizing a layer potential.

    Builds the interior/exterior pullbacks of the single or double layer
    potential with density mu and checks every line of the transmission
    problem they solve: prescribed value jump across the interface (0
    for single, -mu for double), prescribed conormal-derivative jump (mu
    for single, 0 for double), agreement of the shell traces with the
    shell operators, weak heat residual of both fields, and zero initial
    values.  All residuals are sup norms divided by the common scale
    max(sup |mu|, sup |U|).
    """
    from .potentials import _point_eval  # independent evaluation path

    phi = ext.base
    up, um = layer_annulus_fields(ext, mu, kind=kind, n_s=n_s)
    theta = mu.sgrid.theta
    scale = max(float(np.max(np.abs(mu.values))),
                float(np.max(np.abs(up.values))), float(np.max(np.abs(um.values))), 1e-300)

    # (a) interface value jump minus g.
    g = np.zeros_like(mu.values) if kind == "single" else -mu.values
    iface_jump = up.iface_values - um.iface_values
    res_value = float(np.max(np.abs(iface_jump - g))) / scale

    # (b) conormal-derivative jump minus g1, via one-sided FD in s.
    g1 = mu.values if kind == "single" else np.zeros_like(mu.values)
    slopes = {}
    for side, af in (("+", up), ("-", um)):
        sgn = -1.0 if side == "+" else 1.0
        lv = af.ladder_values
        d23 = (lv[2] - lv[1]) / (sgn * (EPS_LADDER[2] - EPS_LADDER[1]))
        d12 = (lv[1] - lv[0]) / (sgn * (EPS_LADDER[1] - EPS_LADDER[0]))
        slopes[side] = 2.0 * d23 - d12
    res_conormal = float(np.max(np.abs(slopes["+"] - slopes["-"] - g1))) / scale

    # (c) shell traces vs an independent single-point evaluation path.
    probes_t = np.unique(np.linspace(1, mu.tgrid.steps, n_probe_t).astype(int))
    probes_th = np.arange(0, len(theta), max(1, len(theta) // n_probe_theta))
    res_shell = {}
    fk = ("value",) if kind == "single" else ("double",)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        for side, af in (("+", up), ("-", um)):
            edge_col = 0 if side == "+" else n_s - 1
            s_edge = af.s[edge_col]
            dev = 0.0
            for i in probes_t:
                for j in probes_th:
                    x = ext.physical_point(np.asarray(theta[j]), np.asarray(s_edge))
                    ref = _point_eval(phi, mu, mu.tgrid.nodes[i], x, fk)[fk[0]]
                    dev = max(dev, abs(af.values[i, j, edge_col] - ref))
            res_shell[side] = dev / scale

    # (d) weak heat residual of both pullbacks against a zero right side.
    res_weak = {}
    for side, af in (("+", up), ("-", um)):
        pair = b_omega(ext, af)
        res_weak[side] = weak_heat_residual(pair, None, ext, af) / scale

    # (e) initial values.
    res_init = max(float(np.max(np.abs(up.values[0]))), float(np.max(np.abs(um.values[0])))) / scale

    return TransmissionResiduals(
        res_value, res_conormal, res_shell["+"], res_shell["-"],
        res_weak["+"], res_weak["-"], res_init,
    )


# ---------------------------------------------------------------------------
# Energy monitor
# ---------------------------------------------------------------------------


def energy_monitor(ext: TubularExtension, up: AnnulusField, um: AnnulusField,
                   full=False):
    """Dissipation identity for a caloric field pair on the two shells.

    Returns (e, de_dt, identity_residual) sampled at the time nodes
    (with full=True, additionally the dissipation and boundary terms):
    e(t) is the squared L2 mass over both physical shells, de_dt its
    centered difference, and identity_residual the absolute mismatch of

        de/dt = -2 sum int |grad v|^2 + 2 (interface + outer edge terms)

    with all one-sided boundary terms retained.  Fields must carry
    gradients and interface traces.
    """
    for af in (up, um):
        if af.grads is None or af.iface_values is None or af.iface_grads is None:
            raise ValueError("energy_monitor needs gradients and interface traces")
    tgrid = up.tgrid
    theta = up.theta
    n_t = len(theta)
    dth = 2.0 * math.pi / n_t
    nu = normal_of_map(ext.base, theta)
    dissipation = np.zeros(tgrid.steps + 1)
    energy = np.zeros(tgrid.steps + 1)
    boundary = np.zeros(tgrid.steps + 1)

    for af in (up, um):
        # Extend the chart rows with the interface limit row so the s
        # quadrature covers the full shell.
        if af.side == "+":
            s_ext = np.concatenate([af.s, [0.0]])
            v_ext = np.concatenate([af.values, af.iface_values[:, :, None]], axis=2)
            g_ext = np.concatenate([af.grads, af.iface_grads[:, :, None, :]], axis=2)
        else:
            s_ext = np.concatenate([[0.0], af.s])
            v_ext = np.concatenate([af.iface_values[:, :, None], af.values], axis=2)
            g_ext = np.concatenate([af.iface_grads[:, :, None, :], af.grads], axis=2)
        th, ss = np.meshgrid(theta, s_ext, indexing="ij")
        det = np.abs(np.linalg.det(ext.chart_jacobian_physical(th, ss)))
        energy += dth * np.trapezoid(v_ext**2 * det[None], x=s_ext, axis=2).sum(axis=1)
        g2 = np.einsum("tnsl,tnsl->tns", g_ext, g_ext)
        dissipation += dth * np.trapezoid(g2 * det[None], x=s_ext, axis=2).sum(axis=1)

        # Interface term: outward normal of the inner shell is +nu, of
        # the outer shell -nu.
        sgn = 1.0 if af.side == "+" else -1.0
        dsig = np.linalg.norm(ext.chart_jacobian_physical(theta, np.zeros(n_t))[:, :, 0], axis=1)
        vn = np.einsum("tnl,nl->tn", af.iface_grads, nu)
        boundary += sgn * dth * np.sum(af.iface_values * vn * dsig[None, :], axis=1)

        # Outer edge term: at s = -delta the shell's outward normal is
        # -nu (towards the center), at s = +delta it is +nu.
        edge_col = 0 if af.side == "+" else len(af.s) - 1
        s_edge = af.s[edge_col]
        sgn_e = -1.0 if af.side == "+" else 1.0
        dsig_e = np.linalg.norm(
            ext.chart_jacobian_physical(theta, np.full(n_t, s_edge))[:, :, 0], axis=1
        )
        vn_e = np.einsum("tnl,nl->tn", af.grads[:, :, edge_col, :], nu)
        boundary += sgn_e * dth * np.sum(af.values[:, :, edge_col] * vn_e * dsig_e[None, :], axis=1)

    de_dt = np.gradient(energy, tgrid.nodes, edge_order=2)
    residual = np.abs(de_dt + 2.0 * dissipation - 2.0 * boundary)
    if full:
        return energy, de_dt, residual, dissipation, boundary
    return energy, de_dt, residual
