"""Reference circle, trigonometric boundary maps, and tubular extensions.

The reference boundary is a circle of radius R.  Admissible shapes are
trigonometric-polynomial embeddings of that circle; admissibility
(injectivity, injective differential, positive orientation) is certified
numerically on a sample grid.  A shape can be extended to a two-sided
collar of the circle by offsetting along its own outward normal, which is
the concrete extension operator used everywhere downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """A geometric admissibility check failed."""


class ShapeFileError(ValueError):
    """A shape file could not be parsed."""


# Clockwise quarter rotation; maps the unit tangent of a positively
# oriented curve to its outward normal.
_ROT_CW = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class ReferenceCircle:
    """The fixed reference boundary: a circle of radius R about the origin."""

    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError(f"radius must be positive, got {self.radius}")

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def normal(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


class BoundaryMap:
    """Trigonometric-polynomial embedding of the reference circle.

    The embedded curve is c(theta) = phi(x(theta)) with

        c_x(theta) = sum_k ax[k] cos(k theta) + bx[k] sin(k theta)
        c_y(theta) = sum_k ay[k] cos(k theta) + by[k] sin(k theta)

    stored coefficient-wise.  Derivatives in theta are exact.
    """

    def __init__(self, ax, bx, ay, by, circle: ReferenceCircle | None = None):
        self.circle = circle if circle is not None else ReferenceCircle()
        k = max(len(ax), len(bx), len(ay), len(by))
        self.ax = np.zeros(k)
        self.bx = np.zeros(k)
        self.ay = np.zeros(k)
        self.by = np.zeros(k)
        self.ax[: len(ax)] = ax
        self.bx[: len(bx)] = bx
        self.ay[: len(ay)] = ay
        self.by[: len(by)] = by

    # -- constructors -----------------------------------------------------

    @classmethod
    def identity(cls, circle: ReferenceCircle | None = None):
        circle = circle if circle is not None else ReferenceCircle()
        r = circle.radius
        return cls([0.0, r], [0.0, 0.0], [0.0, 0.0], [0.0, r], circle)

    @classmethod
    def dilation(cls, lam, circle: ReferenceCircle | None = None):
        circle = circle if circle is not None else ReferenceCircle()
        r = lam * circle.radius
        return cls([0.0, r], [0.0, 0.0], [0.0, 0.0], [0.0, r], circle)

    @classmethod
    def radial(cls, rho_coeffs_cos, rho_coeffs_sin=(), circle: ReferenceCircle | None = None):
        """Star-shaped map c(theta) = rho(theta) (cos theta, sin theta).

        rho is a cosine/sine polynomial; the product is expanded into the
        coefficient arrays exactly via product-to-sum identities.
        """
        circle = circle if circle is not None else ReferenceCircle()
        kmax = max(len(rho_coeffs_cos), len(rho_coeffs_sin))
        # The product rho(theta) (cos, sin) is a trig polynomial of degree
        # kmax + 1; project it exactly from equispaced samples.
        return cls._from_samples(
            lambda th: (
                _eval_trig(rho_coeffs_cos, rho_coeffs_sin, th)[..., None]
                * np.stack([np.cos(th), np.sin(th)], axis=-1)
            ),
            degree=kmax + 1,
            circle=circle,
        )

    @classmethod
    def _from_samples(cls, fn, degree, circle):
        n = 4 * (degree + 1)
        th = 2.0 * math.pi * np.arange(n) / n
        pts = fn(th)  # (n, 2)
        coeffs = []
        for comp in range(2):
            f = np.fft.rfft(pts[:, comp]) / n
            a = np.zeros(degree + 1)
            b = np.zeros(degree + 1)
            a[0] = f[0].real
            for k in range(1, degree + 1):
                a[k] = 2.0 * f[k].real
                b[k] = -2.0 * f[k].imag
            coeffs.append((a, b))
        (ax, bx), (ay, by) = coeffs
        return cls(ax, bx, ay, by, circle)

    @classmethod
    def combine(cls, base: "BoundaryMap", direction: "BoundaryMap", s: float):
        """Coefficient-wise base + s * direction (shape paths)."""
        k = max(len(base.ax), len(direction.ax))

        def pad(v):
            out = np.zeros(k)
            out[: len(v)] = v
            return out

        return cls(
            pad(base.ax) + s * pad(direction.ax),
            pad(base.bx) + s * pad(direction.bx),
            pad(base.ay) + s * pad(direction.ay),
            pad(base.by) + s * pad(direction.by),
            base.circle,
        )

    # -- evaluation --------------------------------------------------------

    def __call__(self, theta):
        return self.derivative(theta, order=0)

    def derivative(self, theta, order=1):
        theta = np.asarray(theta, dtype=float)
        k = np.arange(len(self.ax))
        kt = np.multiply.outer(theta, k)
        ck, sk = np.cos(kt), np.sin(kt)
        if order == 0:
            fc, fs = ck, sk
        elif order == 1:
            fc, fs = -sk * k, ck * k
        elif order == 2:
            fc, fs = -ck * k * k, -sk * k * k
        else:
            raise ValueError("order must be 0, 1 or 2")
        x = fc @ self.ax + fs @ self.bx
        y = fc @ self.ay + fs @ self.by
        return np.stack([x, y], axis=-1)

    def speed(self, theta):
        return np.linalg.norm(self.derivative(theta, 1), axis=-1)

    def max_speed(self, samples=512):
        cached = getattr(self, "_max_speed", None)
        if cached is None:
            th = 2.0 * math.pi * np.arange(samples) / samples
            cached = float(np.max(self.speed(th)))
            self._max_speed = cached
        return cached

    # -- admissibility -----------------------------------------------------

    def validate(self, samples=1024):
        """Certify membership in the admissible class on a sample grid.

        Checks a positive lower bound on |c'|, an injectivity ratio bounded
        away from zero, and positive orientation.  Raises GeometryError.
        """
        th = 2.0 * math.pi * np.arange(samples) / samples
        sp = self.speed(th)
        if np.min(sp) <= 1e-10 * np.max(sp):
            raise GeometryError("differential not injective: |c'| vanishes")
        pts = self(th)
        d = pts[:, None, :] - pts[None, :, :]
        dist = np.linalg.norm(d, axis=-1)
        dtheta = np.abs(th[:, None] - th[None, :])
        dtheta = np.minimum(dtheta, 2.0 * math.pi - dtheta)
        chord = 2.0 * self.circle.radius * np.sin(dtheta / 2.0)
        mask = chord > 0
        ratio = np.min(dist[mask] / chord[mask])
        if ratio <= 1e-8:
            raise GeometryError("map not injective on the sample grid")
        area2 = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        if area2 <= 0:
            raise GeometryError("orientation reversed: curve must be counterclockwise")
        return ratio

    def coefficient_hash(self):
        import hashlib

        payload = np.concatenate(
            [[self.circle.radius], self.ax, self.bx, self.ay, self.by]
        ).tobytes()
        return hashlib.sha256(payload).digest()


def _eval_trig(cos_coeffs, sin_coeffs, theta):
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for k, a in enumerate(cos_coeffs):
        out = out + a * np.cos(k * theta)
    for k, b in enumerate(sin_coeffs):
        out = out + b * np.sin(k * theta)
    return out


# ---------------------------------------------------------------------------
# Shape files: plain-text key=value
# ---------------------------------------------------------------------------


def load_shape(path) -> BoundaryMap:
    """Read a shape file (radius=, cos_x_k=, sin_x_k=, cos_y_k=, sin_y_k=)."""
    radius = None
    coeffs = {"cos_x": {}, "sin_x": {}, "cos_y": {}, "sin_y": {}}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ShapeFileError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            try:
                value = float(value)
            except ValueError:
                raise ShapeFileError(f"{path}:{lineno}: bad numeric value for key {key!r}")
            if key == "radius":
                radius = value
                continue
            parts = key.rsplit("_", 1)
            if len(parts) != 2 or parts[0] not in coeffs or not parts[1].isdigit():
                raise ShapeFileError(f"{path}:{lineno}: unknown key {key!r}")
            coeffs[parts[0]][int(parts[1])] = value
    if radius is None:
        raise ShapeFileError(f"{path}: missing required key 'radius'")
    kmax = max([0] + [max(d) for d in coeffs.values() if d])

    def arr(d):
        out = np.zeros(kmax + 1)
        for k, v in d.items():
            out[k] = v
        return out

    return BoundaryMap(
        arr(coeffs["cos_x"]), arr(coeffs["sin_x"]), arr(coeffs["cos_y"]), arr(coeffs["sin_y"]),
        ReferenceCircle(radius),
    )


def save_shape(phi: BoundaryMap, path):
    with open(path, "w") as fh:
        fh.write(f"radius={float(phi.circle.radius)!r}\n")
        for name, v in (("cos_x", phi.ax), ("sin_x", phi.bx), ("cos_y", phi.ay), ("sin_y", phi.by)):
            for k, val in enumerate(v):
                if val != 0.0:
                    fh.write(f"{name}_{k}={float(val)!r}\n")


# ---------------------------------------------------------------------------
# Pullback quantities on the boundary
# ---------------------------------------------------------------------------


def sigma_tilde(phi: BoundaryMap, theta):
    """Arc-length element ratio |(phi o x)'(theta)| / |x'(theta)|.

    Converts integrals over the image curve into integrals over the
    reference circle.
    """
    return phi.speed(theta) / phi.circle.radius


def normal_of_map(phi: BoundaryMap, theta):
    """Outward unit normal of the image curve at phi(x(theta)).

    Clockwise rotation of the unit tangent; requires positive orientation.
    """
    d = phi.derivative(theta, 1)
    t = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return t @ _ROT_CW.T


def normal_of_map_derivative(phi: BoundaryMap, theta):
    """d/dtheta of normal_of_map (exact, via c' and c'')."""
    d1 = phi.derivative(theta, 1)
    d2 = phi.derivative(theta, 2)
    sp = np.linalg.norm(d1, axis=-1, keepdims=True)
    dd = np.sum(d1 * d2, axis=-1, keepdims=True)
    tprime = d2 / sp - d1 * dd / sp**3
    return tprime @ _ROT_CW.T


def curvature_ratio(phi: BoundaryMap, theta):
    """Diagonal limit of (c(t) - c(t'))c dot nu(t') / |c(t) - c(t')|^2.

    Equals -(c' x c'') / (2 |c'|^3); this is the removable-singularity
    value of the double-layer kernel's smooth factor.
    """
    d1 = phi.derivative(theta, 1)
    d2 = phi.derivative(theta, 2)
    cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    sp = np.linalg.norm(d1, axis=-1)
    return -cross / (2.0 * sp**3)


def classify_point(phi: BoundaryMap, y, samples=4096, tol=1e-9):
    """Interior/exterior classification by winding number.

    The image curve is polygonized at `samples` nodes; a point closer than
    `tol` to the polygon is rejected.
    """
    y = np.asarray(y, dtype=float)
    th = 2.0 * math.pi * np.arange(samples) / samples
    pts = phi(th)
    seg = np.roll(pts, -1, axis=0) - pts
    rel = y[None, :] - pts
    tpar = np.clip(np.sum(rel * seg, axis=1) / np.maximum(np.sum(seg * seg, axis=1), 1e-300), 0.0, 1.0)
    closest = pts + tpar[:, None] * seg
    dist = np.min(np.linalg.norm(closest - y[None, :], axis=1))
    if dist < tol:
        raise GeometryError(f"point {y} is within tolerance {tol} of the curve")
    v = pts - y[None, :]
    ang = np.arctan2(v[:, 1], v[:, 0])
    dang = np.diff(np.concatenate([ang, ang[:1]]))
    dang = (dang + math.pi) % (2.0 * math.pi) - math.pi
    winding = int(round(np.sum(dang) / (2.0 * math.pi)))
    return "interior" if winding != 0 else "exterior"


# ---------------------------------------------------------------------------
# Tubular extension
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TubularExtension:
    """Normal-offset extension of a boundary map to a two-sided collar.

    Chart coordinates (theta, s) with s in [-delta, delta]; s < 0 is the
    inner (interior) shell, s > 0 the outer shell.  The reference point is
    x(theta) + s nu_circle(theta) and the physical point is
    phi(theta) + s nu_phi(theta), so the restriction to s = 0 is phi.
    """

    base: BoundaryMap
    delta: float

    def reference_point(self, theta, s):
        theta = np.asarray(theta, dtype=float)
        s = np.asarray(s, dtype=float)
        r = self.base.circle.radius + s
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def physical_point(self, theta, s):
        s = np.asarray(s, dtype=float)
        return self.base(theta) + s[..., None] * normal_of_map(self.base, theta)

    def chart_jacobian_reference(self, theta, s):
        """Columns (d/dtheta, d/ds) of the reference chart, shape (..., 2, 2)."""
        theta = np.asarray(theta, dtype=float)
        s = np.asarray(s, dtype=float)
        r = self.base.circle.radius + s
        col_t = np.stack([-r * np.sin(theta), r * np.cos(theta)], axis=-1)
        col_s = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return np.stack([col_t, col_s], axis=-1)

    def chart_jacobian_physical(self, theta, s):
        """Columns (d/dtheta, d/ds) of the physical chart."""
        s = np.asarray(s, dtype=float)
        col_t = self.base.derivative(theta, 1) + s[..., None] * normal_of_map_derivative(self.base, theta)
        col_s = normal_of_map(self.base, theta)
        return np.stack([col_t, col_s], axis=-1)

    def dphi(self, theta, s):
        """Jacobian of the extension w.r.t. reference Cartesian coordinates."""
        jp = self.chart_jacobian_physical(theta, s)
        jr = self.chart_jacobian_reference(theta, s)
        return jp @ np.linalg.inv(jr)

    def det_dphi(self, theta, s):
        return np.linalg.det(self.dphi(theta, s))

    def validate(self, n_theta=512, n_s=64):
        th = 2.0 * math.pi * np.arange(n_theta) / n_theta
        sv = np.linspace(-self.delta, self.delta, n_s)
        tt, ss = np.meshgrid(th, sv, indexing="ij")
        det = np.linalg.det(self.chart_jacobian_physical(tt, ss))
        if np.min(det) <= 0 and np.max(det) >= 0:
            raise GeometryError("delta too large for this shape (chart Jacobian changes sign)")
        if np.min(np.abs(det)) < 1e-12:
            raise GeometryError("delta too large for this shape (degenerate chart Jacobian)")
        # A' orientation: the inner shell must land in the interior.
        for theta in th[:: max(1, n_theta // 16)]:
            inner = self.physical_point(theta, np.asarray(-self.delta / 2.0))
            if classify_point(self.base, inner) != "interior":
                raise GeometryError("inner shell escapes the interior (A' violated)")
        # Extension property at s = 0.
        if not np.allclose(self.physical_point(th, np.zeros_like(th)), self.base(th), atol=1e-14):
            raise GeometryError("extension does not restrict to the boundary map")
        return True


def extend(phi: BoundaryMap, delta, validate=True, n_theta=512, n_s=64) -> TubularExtension:
    """Concrete extension operator: offset phi along its outward normal.

    Admissibility of delta is certified numerically, not assumed.
    """
    if delta <= 0:
        raise GeometryError("delta must be positive")
    phi.validate()
    ext = TubularExtension(phi, float(delta))
    if validate:
        ext.validate(n_theta=n_theta, n_s=n_s)
    return ext


def pullback_normal(ext: TubularExtension, theta):
    """Pulled-back outward normal (DPhi)^-T nu / |(DPhi)^-T nu| at s = 0."""
    theta = np.asarray(theta, dtype=float)
    dphi = ext.dphi(theta, np.zeros_like(theta))
    if np.any(np.abs(np.linalg.det(dphi)) < 1e-14):
        raise GeometryError("singular extension Jacobian")
    nu = ext.base.circle.normal(theta)
    v = np.einsum("...ji,...j->...i", np.linalg.inv(dphi), nu)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
