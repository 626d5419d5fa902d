"""Heat-kernel evaluation and exact time-slab integrals.

The Gauss-Weierstrass kernel, its spatial gradient, and closed-form
integrals of the kernel over time slabs.  The slab integrals are what the
Nystrom assembly uses to remove the time singularity from the diagonal
blocks: for n = 2 they reduce to exponential-integral and exponential
terms, so no numerical time quadrature is ever applied to a singular
integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import exp1

EULER_GAMMA = 0.5772156649015328606

# Documented tolerance of the adaptive fallback used for n != 2.
ADAPTIVE_TOL = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """Ambient dimension of the heat kernel."""

    dim: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")


def expint_e1(z):
    """Exponential integral E1 for z >= 0 (vectorized).

    E1(+inf) = 0 and E1(0) = +inf are honoured.
    """
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z < 0):
        raise ValueError("expint_e1 requires z >= 0")
    with np.errstate(divide="ignore"):
        out = exp1(z)
    out[z == 0.0] = np.inf
    out[np.isinf(z)] = 0.0
    return out[0] if scalar else out


def _e1_regular(z):
    """Entire part of E1: E1(z) + gamma + log z, by power series.

    Intended for z <= ~2; the series is sum_{k>=1} (-1)^(k+1) z^k / (k k!).
    """
    z = np.asarray(z, dtype=float)
    acc = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(1, 40):
        term = term * (-z) / k
        contrib = -term / k
        acc += contrib
        if np.max(np.abs(contrib)) < 1e-18 * max(np.max(np.abs(acc)), 1e-300):
            break
    return acc


def e1_regularized(z):
    """E1(z) + gamma + log(z), entire in z, finite at z = 0."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    small = z <= 1.0
    out[small] = _e1_regular(z[small])
    large = ~small
    if np.any(large):
        zl = z[large]
        out[large] = exp1(zl) + EULER_GAMMA + np.log(zl)
    return out[0] if scalar else out


def eval_s(params: KernelParams, t, x):
    """Fundamental solution of the heat operator.

    Returns (4 pi t)^(-n/2) exp(-|x|^2 / 4t) for t > 0 and exactly 0 for
    t <= 0.  The origin of space-time is outside the domain.
    """
    x = np.asarray(x, dtype=float)
    r2 = float(np.dot(x, x))
    if t == 0.0 and r2 == 0.0:
        raise ValueError("S_n is undefined at (t, x) = (0, 0)")
    if t <= 0.0:
        return 0.0
    n = params.dim
    return (4.0 * math.pi * t) ** (-n / 2.0) * math.exp(-r2 / (4.0 * t))


def eval_grad_s(params: KernelParams, t, x):
    """Spatial gradient of the heat kernel: -x/(2t) * S_n(t, x)."""
    x = np.asarray(x, dtype=float)
    r2 = float(np.dot(x, x))
    if t == 0.0 and r2 == 0.0:
        raise ValueError("grad S_n is undefined at (t, x) = (0, 0)")
    if t <= 0.0:
        return np.zeros_like(x)
    return -x / (2.0 * t) * eval_s(params, t, x)


# ---------------------------------------------------------------------------
# Closed-form time-slab integrals (n = 2) used by the Nystrom assembly.
#
# With z(s) = r^2 / (4 s):
#   m0(a,b;r) = int_a^b S_2(s, r) ds      = (E1(z_b) - E1(z_a)) / (4 pi)
#   m1(a,b;r) = int_a^b s S_2(s, r) ds    = (F(b) - F(a)) / (4 pi),
#               F(s) = s e^{-z} - (r^2/4) E1(z)
#   a0(a,b;r) = int_a^b S_2(s, r)/(2s) ds = (e^{-z_b} - e^{-z_a})/(2 pi r^2)
# a1 = m1-analogue of a0 equals m0 / 2.
# ---------------------------------------------------------------------------


def slab_m0(a, b, r):
    """int_a^b S_2(s, r) ds, vectorized in r, with a stable r -> 0 limit.

    Requires 0 <= a < b.  At r = 0 the a = 0 case diverges (caller's
    responsibility); for a > 0 the limit log(b/a)/(4 pi) is returned.
    """
    r = np.asarray(r, dtype=float)
    r2 = r * r
    if a == 0.0:
        zb = r2 / (4.0 * b)
        out = expint_e1(np.where(r2 > 0, zb, 1.0)) / (4.0 * math.pi)
        out = np.where(r2 > 0, out, np.inf)
        return out
    za = r2 / (4.0 * a)
    zb = r2 / (4.0 * b)
    # Difference of E1 at two small arguments cancels badly; route small
    # arguments through the entire part.
    small = za <= 1.0
    out = np.empty_like(r2)
    if np.any(small):
        diff = e1_regularized(zb[small]) - e1_regularized(za[small])
        out[small] = (diff + math.log(b / a)) / (4.0 * math.pi)
    large = ~small
    if np.any(large):
        out[large] = (expint_e1(zb[large]) - expint_e1(za[large])) / (4.0 * math.pi)
    return out


def slab_m1(a, b, r):
    """int_a^b s S_2(s, r) ds with the same conventions as slab_m0."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    zb = np.where(r2 > 0, r2 / (4.0 * b), 0.0)
    eb = b * np.exp(-zb)
    if a == 0.0:
        ea = 0.0
        m0 = expint_e1(np.where(r2 > 0, zb, 1.0)) / (4.0 * math.pi)
        m0 = np.where(r2 > 0, m0, 0.0)  # r^2 * m0 -> 0 as r -> 0
    else:
        za = np.where(r2 > 0, r2 / (4.0 * a), 0.0)
        ea = a * np.exp(-za)
        m0 = np.where(r2 > 0, slab_m0(a, b, np.maximum(r, 1e-300)), 0.0)
    return (eb - ea) / (4.0 * math.pi) - (r2 / 4.0) * m0


def slab_a0(a, b, r):
    """int_a^b S_2(s, r) / (2 s) ds.

    For a > 0 this is finite at r = 0 (limit (1/a - 1/b)/(8 pi)); for a = 0
    it diverges like 1/r^2 and r > 0 is required.
    """
    r = np.asarray(r, dtype=float)
    r2 = r * r
    if a == 0.0:
        zb = np.where(r2 > 0, r2 / (4.0 * b), np.inf)
        return np.where(r2 > 0, np.exp(-zb) / (2.0 * math.pi * np.maximum(r2, 1e-300)), np.inf)
    za = r2 / (4.0 * a)
    x = (r2 / 4.0) * (1.0 / a - 1.0 / b)  # = za - zb >= 0
    # (e^{-zb} - e^{-za}) / r^2 = e^{-za} expm1(x) / r^2
    #                           = e^{-za} * (expm1(x)/x) * (1/a - 1/b)/4
    ratio = np.where(x > 0, np.expm1(x) / np.where(x > 0, x, 1.0), 1.0)
    return np.exp(-za) * ratio * (1.0 / a - 1.0 / b) / (8.0 * math.pi)


def slab_hat_weights(a, b, r, h, need_value=True, need_grad=True, cutoff=40.0,
                     a_hat=None):
    """Fused hat-function weights of one time slab, sharing E1/exp work.

    For the slab [a, b] of a uniform grid of step h, returns the product
    integration coefficients (cn, cp, gn, gp): cn and cp multiply the
    later and earlier density node for the kernel S_2, gn and gp do the
    same for S_2(s, r)/(2s).  Entries with r^2/(4b) > cutoff are exactly
    zero (the kernel is below 1e-17 there) and are skipped.  Requires
    r > 0 when a = 0; unneeded outputs are returned as None.  a_hat
    overrides the hat-function left endpoint when the integration slab
    is clipped at 0 (off-grid evaluation times).
    """
    r = np.asarray(r, dtype=float)
    r2 = r * r
    zb_full = r2 / (4.0 * b)
    mask = zb_full <= cutoff if cutoff is not None else np.ones(r2.shape, bool)
    out = [np.zeros(r2.shape) if need else None
           for need in (need_value, need_value, need_grad, need_grad)]
    if not np.any(mask):
        return tuple(out)
    r2c = r2[mask]
    zb = zb_full[mask]
    eb = np.exp(-zb)
    if a == 0.0:
        m0 = expint_e1(zb) / (4.0 * math.pi)
        m1 = b * eb / (4.0 * math.pi) - (r2c / 4.0) * m0
        if need_grad:
            a0 = eb / (2.0 * math.pi * r2c)
    else:
        za = r2c / (4.0 * a)
        ea = np.exp(-za)
        m0 = np.empty_like(r2c)
        small = za <= 1.0
        if np.any(small):
            diff = e1_regularized(zb[small]) - e1_regularized(za[small])
            m0[small] = (diff + math.log(b / a)) / (4.0 * math.pi)
        big = ~small
        if np.any(big):
            m0[big] = (exp1(zb[big]) - exp1(za[big])) / (4.0 * math.pi)
        m1 = (b * eb - a * ea) / (4.0 * math.pi) - (r2c / 4.0) * m0
        if need_grad:
            x = za - zb
            ratio = np.where(x > 0, np.expm1(x) / np.where(x > 0, x, 1.0), 1.0)
            a0 = ea * ratio * (1.0 / a - 1.0 / b) / (8.0 * math.pi)
    ah = a if a_hat is None else a_hat
    if need_value:
        out[0][mask] = (b * m0 - m1) / h
        out[1][mask] = (m1 - ah * m0) / h
    if need_grad:
        out[2][mask] = (b * a0 - m0 / 2.0) / h
        out[3][mask] = (m0 / 2.0 - ah * a0) / h
    return tuple(out)


def slab_integral_s(params: KernelParams, r, a, b):
    """Exact time integral int_a^b S_n(s, x) ds with r = |x| > 0.

    n = 2 uses the closed form above; other dimensions fall back to
    adaptive Gauss-Kronrod quadrature at tolerance 1e-12.
    """
    if np.any(np.asarray(r) <= 0.0):
        raise ValueError("slab_integral_s requires r > 0 (log divergence at r = 0)")
    if not (0.0 <= a <= b):
        raise ValueError(f"need 0 <= a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0 if np.ndim(r) == 0 else np.zeros_like(np.asarray(r, dtype=float))
    if params.dim == 2:
        out = slab_m0(a, b, r)
        return float(out) if np.ndim(r) == 0 else out
    n = params.dim

    def integrand(s, rr):
        return (4.0 * math.pi * s) ** (-n / 2.0) * math.exp(-rr * rr / (4.0 * s))

    rs = np.atleast_1d(np.asarray(r, dtype=float))
    vals = np.array(
        [quad(integrand, a, b, args=(rr,), epsabs=ADAPTIVE_TOL, epsrel=ADAPTIVE_TOL, limit=200)[0] for rr in rs]
    )
    return float(vals[0]) if np.ndim(r) == 0 else vals.reshape(np.shape(r))


def flatness_probe(params: KernelParams, xi, t, max_order):
    """Scaled time-derivative magnitudes of s -> S_n(s, xi) at s = t.

    Returns |d^k/ds^k S_n(s, xi)| h^k / k! for k = 0..max_order, estimated
    with central finite differences of step h = t/10.  The scaling by
    h^k / k! exposes the flatness of the kernel as t -> 0+ (every entry
    collapses to zero), which is exactly the obstruction to analyticity
    in time.
    """
    xi = np.asarray(xi, dtype=float)
    if float(np.dot(xi, xi)) <= 0.0:
        raise ValueError("flatness_probe requires xi != 0")
    if t <= 0.0:
        raise ValueError("flatness_probe requires t > 0")
    if max_order > 4:
        raise ValueError("max_order must be <= 4")
    h = t / 10.0
    stencils = {
        0: {0: 1.0},
        1: {-1: -0.5, 1: 0.5},
        2: {-1: 1.0, 0: -2.0, 1: 1.0},
        3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
        4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
    }
    out = []
    for k in range(max_order + 1):
        acc = 0.0
        for off, c in stencils[k].items():
            s = t + off * h
            acc += c * (eval_s(params, s, xi) if s > 0 else 0.0)
        deriv = acc / h**k
        out.append(abs(deriv) * h**k / math.factorial(k))
    return out
