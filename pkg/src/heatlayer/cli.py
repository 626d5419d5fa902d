"""Batch experiment runner: CSV tables and self-contained SVG plots.

Each subcommand runs one verification experiment at the configured
resolution, writes ``<name>.csv`` (and for time series an SVG line
plot), and exits 0 when every in-run tolerance is met, 1 on a tolerance
failure (results are still written), or 2 on a configuration error with
a single-line diagnostic naming the offending key.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import ShapePath, parabolic_norm, smoothness_report
from .geometry import BoundaryMap, GeometryError, ShapeFileError, extend, load_shape
from .potentials import (
    NearBoundaryWarning,
    SpaceTimeDensity,
    assemble,
    disk_heat_mass,
    double_layer_eval,
    jump_probe,
)
from .pullback import (
    annulus_field_from_function,
    b_omega,
    energy_monitor,
    layer_annulus_fields,
    shell_s_nodes,
    transmission_verify,
    weak_heat_residual,
)
from .quadrature import SpaceGrid, TimeGrid

SUBCOMMANDS = (
    "kernel-check",
    "jump-test",
    "dlp-identity",
    "pullback-weak",
    "transmission",
    "energy",
    "shape-sweep",
    "norms",
)

_CONFIG_KEYS = ("shape", "n", "m", "t_final", "alpha", "delta", "seed", "out")


class ConfigError(Exception):
    pass


class ExperimentConfig:
    """Validated run parameters shared by all subcommands."""

    def __init__(self, shape=None, n=64, m=32, t_final=1.0, alpha=0.5,
                 delta=0.3, seed=0, out="."):
        self.shape = shape
        self.n = int(n)
        self.m = int(m)
        self.t_final = float(t_final)
        self.alpha = float(alpha)
        self.delta = float(delta)
        self.seed = int(seed)
        self.out = Path(out)
        if self.n < 8 or self.n % 2 != 0:
            raise ConfigError(f"config error: key 'n' must be even and >= 8, got {self.n}")
        if self.m < 2:
            raise ConfigError(f"config error: key 'm' must be >= 2, got {self.m}")
        if not self.t_final > 0:
            raise ConfigError(f"config error: key 't_final' must be > 0, got {self.t_final}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"config error: key 'alpha' must lie in (0, 1), got {self.alpha}")
        if not self.delta > 0:
            raise ConfigError(f"config error: key 'delta' must be > 0, got {self.delta}")

    def boundary_map(self):
        if self.shape is None:
            return BoundaryMap.identity()
        return load_shape(self.shape)

    def grids(self):
        return TimeGrid(self.t_final, self.m), SpaceGrid(self.n)


def _parse_config_file(path):
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config error: line {lineno} of {path} is not key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config error: unknown key '{key}' in {path}")
        overrides[key] = value.strip()
    return overrides


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_svg(path, series, title="", xlabel="", ylabel=""):
    """Minimal deterministic SVG line plot (polylines + axis ticks)."""
    w, hgt, ml, mr, mt, mb = 640, 400, 70, 20, 30, 50
    xs_all = np.concatenate([np.asarray(s[0], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[1], float) for s in series])
    x0, x1 = float(np.min(xs_all)), float(np.max(xs_all))
    y0, y1 = float(np.min(ys_all)), float(np.max(ys_all))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    sx = (w - ml - mr) / (x1 - x0)
    sy = (hgt - mt - mb) / (y1 - y0)

    def px(x):
        return ml + (x - x0) * sx

    def py(y):
        return hgt - mb - (y - y0) * sy

    colors = ("#1f5fa8", "#c03a2b", "#2e8b57", "#8b5a9e", "#b8860b")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}" '
        f'viewBox="0 0 {w} {hgt}">',
        f'<rect width="{w}" height="{hgt}" fill="white"/>',
        f'<text x="{w // 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{hgt - mb}" x2="{w - mr}" y2="{hgt - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{hgt - mb}" stroke="black"/>',
        f'<text x="{w // 2}" y="{hgt - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{hgt // 2}" font-size="12" '
        f'transform="rotate(-90 14 {hgt // 2})" text-anchor="middle">{ylabel}</text>',
    ]
    for k in range(5):
        xt = x0 + k * (x1 - x0) / 4
        yt = y0 + k * (y1 - y0) / 4
        parts.append(
            f'<line x1="{px(xt):.2f}" y1="{hgt - mb}" x2="{px(xt):.2f}" '
            f'y2="{hgt - mb + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(xt):.2f}" y="{hgt - mb + 18}" text-anchor="middle" '
            f'font-size="10">{xt:.3g}</text>'
        )
        parts.append(
            f'<line x1="{ml - 5}" y1="{py(yt):.2f}" x2="{ml}" y2="{py(yt):.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{py(yt):.2f}" text-anchor="end" '
            f'font-size="10">{yt:.3g}</text>'
        )
    for i, (xs, ys, label) in enumerate(series):
        color = colors[i % len(colors)]
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{w - mr - 5}" y="{mt + 15 + 14 * i}" text-anchor="end" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Subcommands (each returns 0/1)
# ---------------------------------------------------------------------------


def _cmd_kernel_check(cfg: ExperimentConfig):
    params = kernels.KernelParams(2)
    rows = []
    ok = True
    for t in (0.05, 0.5, 1.0):
        big_l = 10.0 * math.sqrt(t)
        x = np.linspace(-big_l, big_l, 400)
        wq = np.full(400, x[1] - x[0])
        wq[0] = wq[-1] = (x[1] - x[0]) / 2.0
        r2 = x[:, None] ** 2 + x[None, :] ** 2
        vals = np.exp(-r2 / (4.0 * t)) / (4.0 * math.pi * t)
        mass = float(wq @ vals @ wq)
        err = abs(mass - 1.0)
        ok &= err <= 1e-8
        rows.append([t, mass, err])
    write_csv(cfg.out / "kernel-check.csv", ["t", "mass", "abs_error"], rows)
    write_svg(
        cfg.out / "kernel-check.svg",
        [([r[0] for r in rows], [r[2] for r in rows], "|mass-1|")],
        title="Gaussian mass error", xlabel="t", ylabel="error",
    )
    return 0 if ok else 1


def _cmd_jump_test(cfg: ExperimentConfig):
    import warnings

    phi = cfg.boundary_map()
    tgrid, sgrid = cfg.grids()
    mu = SpaceTimeDensity.from_function(tgrid, sgrid, lambda t, th: t * (2.0 + np.cos(th)))
    ws = assemble("W_star", phi, tgrid, sgrid).apply(mu)
    w = assemble("W", phi, tgrid, sgrid).apply(mu)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBoundaryWarning)
        for probe in range(16):
            i = int(rng.integers(tgrid.steps // 4, tgrid.steps + 1))
            j = int(rng.integers(0, sgrid.n))
            t, th = tgrid.nodes[i], sgrid.theta[j]
            expected = 0.5 * mu.values[i, j]
            if probe % 2 == 0:
                lim = jump_probe(phi, mu, "single_normal", "+", t, th)
                measured = lim - ws[i, j]
                kind = "single_normal+"
            else:
                lim = jump_probe(phi, mu, "double_value", "-", t, th)
                measured = lim - w[i, j]
                kind = "double_value-"
            rel = abs(measured - expected) / abs(expected)
            worst = max(worst, rel)
            rows.append([kind, th, t, measured, expected, rel])
    write_csv(
        cfg.out / "jump-test.csv",
        ["kind", "theta", "t", "measured_jump", "half_mu", "rel_error"],
        rows,
    )
    return 0 if worst <= 0.02 else 1


def _cmd_dlp_identity(cfg: ExperimentConfig):
    phi = BoundaryMap.identity()  # the volume oracle needs the unit disk
    tgrid, sgrid = cfg.grids()
    one = SpaceTimeDensity.from_function(tgrid, sgrid, lambda t, th: np.ones_like(th))
    probes = [((0.3, 0.0), True), ((0.0, -0.5), True), ((1.5, 0.3), False)]
    rows = []
    worst = 0.0
    for (x1, x2), inside in probes:
        for t in (0.25, 0.5, 1.0):
            if t > cfg.t_final + 1e-12:
                continue
            val = double_layer_eval(phi, one, t, np.array([x1, x2]))
            g = disk_heat_mass(t, math.hypot(x1, x2))
            oracle = g - 1.0 if inside else g
            err = abs(val - oracle)
            worst = max(worst, err)
            rows.append([t, x1, x2, val, oracle, err])
    write_csv(
        cfg.out / "dlp-identity.csv",
        ["t", "x1", "x2", "dlp_of_one", "volume_oracle", "abs_error"],
        rows,
    )
    return 0 if worst <= 1e-4 else 1


_WEAK_SHAPES = (
    ("identity", lambda: BoundaryMap.identity()),
    ("dilation_1.5", lambda: BoundaryMap.dilation(1.5)),
    ("radial_cos3", lambda: BoundaryMap.radial([1.0, 0.0, 0.0, 0.3])),
)


def _cmd_pullback_weak(cfg: ExperimentConfig):
    tgrid = TimeGrid(cfg.t_final, max(cfg.m, 40))
    theta = SpaceGrid(cfg.n).theta
    # The most curved of the fixed shapes only admits collars below 0.245.
    delta = min(cfg.delta, 0.2)
    x0 = np.array([3.2, 1.3])
    t0 = 0.1

    def caloric(t, x, y):
        r2 = (x - x0[0]) ** 2 + (y - x0[1]) ** 2
        return np.exp(-r2 / (4.0 * (t + t0))) / (4.0 * math.pi * (t + t0))

    rows = []
    ok = True
    for label, factory in _WEAK_SHAPES:
        phi = factory()
        ext = extend(phi, delta)
        for side in ("+", "-"):
            s = shell_s_nodes(ext, side, 32)
            u = annulus_field_from_function(ext, side, tgrid, theta, s, caloric)
            scale = float(np.max(np.abs(u.values)))
            res = weak_heat_residual(b_omega(ext, u), None, ext, u) / scale
            uc = annulus_field_from_function(ext, side, tgrid, theta, s,
                                             lambda t, x, y: x**2)
            cscale = float(np.max(np.abs(uc.values)))
            control = weak_heat_residual(b_omega(ext, uc), None, ext, uc) / cscale
            ratio = control / max(res, 1e-300)
            ok &= res <= 1e-3 and ratio >= 10.0
            rows.append([label, side, res, control, ratio])
    write_csv(
        cfg.out / "pullback-weak.csv",
        ["shape", "side", "caloric_residual", "control_residual", "separation"],
        rows,
    )
    return 0 if ok else 1


def _cmd_transmission(cfg: ExperimentConfig):
    phi = cfg.boundary_map()
    ext = extend(phi, cfg.delta)
    tgrid, sgrid = cfg.grids()
    mu = SpaceTimeDensity.from_function(tgrid, sgrid, lambda t, th: t * (2.0 + np.cos(th)))
    rows = []
    worst = 0.0
    keys = None
    for kind in ("single", "double"):
        res = transmission_verify(ext, mu, kind=kind)
        d = res.as_dict()
        keys = sorted(d)
        worst = max(worst, res.max_residual())
        rows.append([kind] + [d[k] for k in keys])
    write_csv(cfg.out / "transmission.csv", ["kind"] + keys, rows)
    return 0 if worst <= 1e-2 else 1


def _cmd_energy(cfg: ExperimentConfig):
    phi = cfg.boundary_map()
    ext = extend(phi, cfg.delta)
    tgrid, sgrid = cfg.grids()
    mu = SpaceTimeDensity.from_function(tgrid, sgrid, lambda t, th: t * (2.0 + np.cos(th)))
    up, um = layer_annulus_fields(ext, mu, kind="single", n_s=32)
    e, dedt, res, diss, _ = energy_monitor(ext, up, um, full=True)
    scale = np.maximum(np.abs(dedt), 2.0 * diss)
    rel = res / np.maximum(scale, 1e-300)
    i0 = max(1, int(math.ceil(0.1 * tgrid.steps - 1e-12)))
    ok = bool(np.max(rel[i0:]) <= 0.05)

    # Negative control: a time-constant non-caloric field.
    theta = sgrid.theta
    fields = []
    for side in ("+", "-"):
        s = shell_s_nodes(ext, side, 32)
        af = annulus_field_from_function(
            ext, side, tgrid, theta, s,
            lambda t, x, y: x**2 + y**2,
            grad_fn=lambda t, x, y: (2.0 * x + 0 * t, 2.0 * y + 0 * t),
        )
        p0 = ext.physical_point(theta, np.zeros_like(theta))
        n_t = tgrid.steps + 1
        af.iface_values = np.broadcast_to(np.sum(p0**2, axis=1), (n_t, len(theta))).copy()
        af.iface_grads = np.broadcast_to(2.0 * p0, (n_t, len(theta), 2)).copy()
        fields.append(af)
    ec, dc, rc, dissc, _ = energy_monitor(ext, *fields, full=True)
    relc = rc / np.maximum(np.maximum(np.abs(dc), 2.0 * dissc), 1e-300)
    ok &= bool(np.max(relc[i0:]) > 0.5)

    rows = [[t, ev, dv, rv, relv, rcv] for t, ev, dv, rv, relv, rcv in
            zip(tgrid.nodes, e, dedt, res, rel, relc)]
    write_csv(
        cfg.out / "energy.csv",
        ["t", "energy", "de_dt", "identity_residual", "rel_residual", "control_rel_residual"],
        rows,
    )
    write_svg(
        cfg.out / "energy.svg",
        [(tgrid.nodes, e, "e(t)"), (tgrid.nodes, dedt, "de/dt")],
        title="Energy monitor", xlabel="t", ylabel="value",
    )
    return 0 if ok else 1


def _cmd_shape_sweep(cfg: ExperimentConfig):
    tgrid = TimeGrid(cfg.t_final, min(cfg.m, 16))
    sgrid = SpaceGrid(min(cfg.n, 32))
    base = BoundaryMap.identity()
    paths = [
        ("radial_cos3", ShapePath(base, BoundaryMap.radial([0.0, 0.0, 0.0, 0.3]), 0.1)),
        ("translation", ShapePath(base, BoundaryMap([0.3], [0.0], [0.1], [0.0]), 0.1)),
    ]
    kinds = ("V", "V_1", "V_2", "W_star")
    header, rows = smoothness_report(paths, kinds, tgrid, sgrid, orders=(1, 2, 3, 4), h=1e-2)
    ok = True
    for row in rows:
        label, kind, order, norm, obs, ratio, _ = row
        if label == "translation" and order == 1:
            ok &= norm <= 1e-12
        if label == "radial_cos3" and order == 1:
            ok &= (obs is not None) and not math.isnan(obs) and obs >= 1.9
        if label == "radial_cos3" and order == 4:
            ok &= 0.5 <= ratio <= 2.0
    write_csv(cfg.out / "shape-sweep.csv", header, rows)
    orders = sorted({r[2] for r in rows})
    series = []
    for kind in kinds:
        ys = [next(r[3] for r in rows if r[0] == "radial_cos3" and r[1] == kind and r[2] == o)
              for o in orders]
        series.append((orders, ys, kind))
    write_svg(cfg.out / "shape-sweep.svg", series, title="FD shape-derivative norms",
              xlabel="derivative order", ylabel="Frobenius norm")
    return 0 if ok else 1


def _cmd_norms(cfg: ExperimentConfig):
    phi = cfg.boundary_map()
    tgrid, sgrid = cfg.grids()
    pts = phi(sgrid.theta)
    sqrt_t = np.sqrt(tgrid.nodes)[:, None] * np.ones((1, sgrid.n))
    est = parabolic_norm(sqrt_t, tgrid, pts, alpha=1.0, seed=cfg.seed)
    semi_ok = 0.99 <= est.time_seminorm <= 1.0 + 1e-12

    tgrid2 = TimeGrid(cfg.t_final, 2 * cfg.m)
    sgrid2 = SpaceGrid(2 * cfg.n)
    op1 = assemble("V", phi, tgrid, sgrid)
    op2 = assemble("V", phi, tgrid2, sgrid2)
    rng = np.random.default_rng(cfg.seed)
    rows = [["sqrt_t_seminorm", est.time_seminorm, est.time_seminorm, 1.0]]
    ok = semi_ok
    for idx in range(20):
        deg = 4
        ak = rng.normal(size=deg + 1) / (1.0 + np.arange(deg + 1)) ** 2
        bk = rng.normal(size=deg + 1) / (1.0 + np.arange(deg + 1)) ** 2
        p = rng.uniform(0.5, 2.0)

        def dens(t, th, ak=ak, bk=bk, p=p):
            series = sum(
                ak[k] * np.cos(k * th) + bk[k] * np.sin(k * th) for k in range(deg + 1)
            )
            return (t**p) * (2.0 + series)

        mu1 = SpaceTimeDensity.from_function(tgrid, sgrid, dens)
        mu2 = SpaceTimeDensity.from_function(tgrid2, sgrid2, dens)
        r1 = float(np.max(np.abs(op1.apply(mu1)))) / float(np.max(np.abs(mu1.values)))
        r2 = float(np.max(np.abs(op2.apply(mu2)))) / float(np.max(np.abs(mu2.values)))
        factor = r2 / r1 if r1 > 0 else math.inf
        ok &= 0.5 <= factor <= 2.0
        rows.append([f"density_{idx}", r1, r2, factor])
    write_csv(
        cfg.out / "norms.csv",
        ["case", "coarse_ratio", "fine_ratio", "stability_factor"],
        rows,
    )
    write_svg(
        cfg.out / "norms.svg",
        [(list(range(len(rows) - 1)), [r[3] for r in rows[1:]], "fine/coarse")],
        title="Operator norm ratio stability", xlabel="density index", ylabel="factor",
    )
    return 0 if ok else 1


_DISPATCH = {
    "kernel-check": _cmd_kernel_check,
    "jump-test": _cmd_jump_test,
    "dlp-identity": _cmd_dlp_identity,
    "pullback-weak": _cmd_pullback_weak,
    "transmission": _cmd_transmission,
    "energy": _cmd_energy,
    "shape-sweep": _cmd_shape_sweep,
    "norms": _cmd_norms,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="heatlayer",
        description="Verification experiments for heat layer potentials",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--shape", default=None, help="shape file path")
        p.add_argument("--n", type=int, default=64, help="spatial nodes (even, >= 8)")
        p.add_argument("--m", type=int, default=32, help="time steps (>= 2)")
        p.add_argument("--t-final", type=float, default=1.0, dest="t_final")
        p.add_argument("--alpha", type=float, default=0.5)
        p.add_argument("--delta", type=float, default=0.3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        p.add_argument("--config", default=None, help="key=value file overriding flags")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = {k: getattr(args, k) for k in _CONFIG_KEYS}
        if args.config is not None:
            values.update(_parse_config_file(args.config))
        cfg = ExperimentConfig(**values)
        cfg.out.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.subcommand](cfg)
    except (ConfigError, ShapeFileError, GeometryError) as exc:
        print(f"{exc}".splitlines()[0], file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
