"""Command line driver.

Exit codes: 0 ok, 1 a check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .builtin_examples import ExampleSurface, builtin_surface
from .carnot_algebra import (
    CarnotGroup, builtin_abelian, builtin_engel, builtin_heisenberg, tensor_from_json,
    validate_structure,
)
from .expr import ExpressionError, parse_field
from .identities import verify_identities
from .jets import FiniteDifferenceField
from .variation import (
    NotHMinimalOnPatch, QuadraturePatch, first_variation, h_perimeter, random_bumps,
    second_variation, stability_certificate,
)

SCAN_FMT = "%.17g"


class InputError(Exception):
    pass


# -- inputs --------------------------------------------------------------------

def load_group_data(spec: str):
    """(strata, tensor) from a builtin id or a JSON file/string."""
    s = spec.strip()
    low = s.lower()
    if low.startswith(("heisenberg", "h")) and not os.path.exists(s) and not s.startswith("{"):
        digits = "".join(ch for ch in low if ch.isdigit())
        m = int(digits) if digits else 1
        g = builtin_heisenberg(m)
        return g.strata_dims, g.structure.tolist()
    if low.startswith("abelian"):
        n = int(low.split(":")[1]) if ":" in low else 3
        g = builtin_abelian(n)
        return g.strata_dims, g.structure.tolist()
    if low == "engel":
        g = builtin_engel()
        return g.strata_dims, g.structure.tolist()
    try:
        text = open(s).read() if os.path.exists(s) else s
        return tensor_from_json(json.loads(text))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read group spec {spec!r}: {exc}") from exc


def load_group(spec: str) -> CarnotGroup:
    dims, C = load_group_data(spec)
    report = validate_structure(dims, C)
    if not report.ok:
        raise InputError("invalid group: " + "; ".join(str(v) for v in report.violations[:5]))
    return report.group


def load_surface(spec: str, group: CarnotGroup) -> ExampleSurface:
    name = spec.strip()
    if name == "hparab":
        if not group.is_heisenberg():
            raise InputError("hparab needs a Heisenberg group")
        return builtin_surface("hparab", group)
    if name == "nvplane":
        try:
            return builtin_surface("nvplane", group)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    if name == "vplane":
        return builtin_surface("vplane", group)
    if name.startswith("expr:"):
        name = name[5:]
    try:
        f = parse_field(name, group.n)
    except ExpressionError as exc:
        raise InputError(str(exc)) from exc
    return ExampleSurface("expr", group, f, {}, lambda X: np.zeros(np.shape(X)[:-1], bool),
                          group.n - 1, None)


def load_patch(spec: str | None, surface: ExampleSurface, jets: str = "analytic") -> QuadraturePatch:
    d = surface.group.n - 1
    cfg = {}
    if spec:
        try:
            text = open(spec).read() if os.path.exists(spec) else spec
            cfg = json.loads(text)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read patch spec {spec!r}: {exc}") from exc
    axis = int(cfg.get("axis", surface.graph_axis + 1)) - 1
    if not 0 <= axis < surface.group.n:
        raise InputError(f"chart axis {axis + 1} out of range")
    field = surface.f
    if jets == "fd":
        field = FiniteDifferenceField(surface.f.fn, surface.group.n, name=surface.f.name)
    graph = surface.graph if axis == surface.graph_axis else None
    try:
        return QuadraturePatch(surface.group, field, axis, cfg.get("lo", [0.1] * d),
                               cfg.get("hi", [1.1] * d), cfg.get("resolution", 32),
                               cfg.get("rule", "midpoint"), float(cfg.get("mask_radius", 1e-3)),
                               graph=graph)
    except (ValueError, TypeError) as exc:
        raise InputError(f"bad patch spec: {exc}") from exc


def _setup(args):
    group = load_group(args.group)
    surface = load_surface(args.surface or ("hparab" if group.is_heisenberg() else "vplane"), group)
    patch = load_patch(args.patch, surface, getattr(args, "jets", "analytic"))
    return group, surface, patch


def _write(text: str, out: str | None):
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------------

def cmd_validate(args) -> int:
    dims, C = load_group_data(args.group)
    try:
        report = validate_structure(dims, C)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if report.ok:
        g = report.group
        print(f"valid: strata={list(g.strata_dims)} n={g.n} step={g.k} Q={g.Q}")
        return 0
    for v in report.violations:
        print(str(v))
    return 1


def scan_table(patch: QuadraturePatch):
    geo = patch.geometry
    g = patch.group
    d = g.n - 1
    m = g.n - g.h
    header = ([f"u{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(g.n)] + ["|P_Hnu|"]
              + [f"varpi{a + 1}" for a in range(m)]
              + ["H_cc", "S2", "A2", "B_TS", "sigmaR", "sigmaH", "masked"])
    mask = patch.mask
    nanm = lambda a: np.where(mask, np.nan, a)
    cols = ([patch.U[:, i] for i in range(d)] + [patch.X[:, i] for i in range(g.n)]
            + [geo.p_h_norm] + [nanm(geo.varpi[:, a]) for a in range(m)]
            + [nanm(geo.H_cc), nanm(geo.S2), nanm(geo.A2), nanm(geo.b_ts()), patch.sigma_r,
               nanm(patch.sigma_h), mask.astype(float)])
    return header, np.stack(cols, axis=-1)


def format_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = [SCAN_FMT % v for v in row[:-1]] + [str(int(row[-1]))]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]


def _color(t: float) -> str:
    if not np.isfinite(t):
        return "#bbbbbb"
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    f = t - i
    c = [round(a + (b - a) * f) for a, b in zip(_RAMP[i], _RAMP[i + 1])]
    return "#%02x%02x%02x" % tuple(c)


def heatmap_svg(patch: QuadraturePatch, values, title: str, cell: int = 10) -> str:
    """Colored-cell raster over the first two chart axes (middle slice of any others)."""
    vals = np.asarray(values, dtype=float).reshape(patch.shape)
    while vals.ndim > 2:
        vals = vals[..., vals.shape[-1] // 2]
    if vals.ndim == 1:
        vals = vals[:, None]
    nx, ny = vals.shape
    finite = vals[np.isfinite(vals)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    span = hi - lo if hi > lo else 1.0
    W, H = nx * cell, ny * cell
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 120}" height="{H + 40}">',
           f'<text x="4" y="14" font-size="12">{title}</text>']
    for i in range(nx):
        for j in range(ny):
            y = 20 + (ny - 1 - j) * cell
            out.append(f'<rect x="{i * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{_color((vals[i, j] - lo) / span)}"/>')
    for k in range(11):
        y = 20 + H - (k + 1) * H / 11
        out.append(f'<rect x="{W + 10}" y="{y:.2f}" width="16" height="{H / 11:.2f}" '
                   f'fill="{_color(k / 10)}"/>')
    out.append(f'<text x="{W + 30}" y="30" font-size="10">{hi:.6g}</text>')
    out.append(f'<text x="{W + 30}" y="{20 + H}" font-size="10">{lo:.6g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_scan(args) -> int:
    _, _, patch = _setup(args)
    header, rows = scan_table(patch)
    print(f"nodes={len(rows)} masked_fraction={patch.masked_fraction!r}", file=sys.stderr)
    if args.format == "svg":
        col = args.column
        if col not in header:
            raise InputError(f"unknown column {col!r}; choose from {header}")
        _write(heatmap_svg(patch, rows[:, header.index(col)], col), args.out)
    elif args.format == "json":
        recs = [dict(zip(header, [None if not np.isfinite(v) else float(v) for v in r])) for r in rows]
        _write(json.dumps({"masked_fraction": patch.masked_fraction, "rows": recs}) + "\n", args.out)
    else:
        _write(format_csv(header, rows), args.out)
    return 0


def _samples(patch: QuadraturePatch, count: int, seed: int):
    rng = np.random.default_rng(seed)
    U = rng.uniform(patch.lo, patch.hi, size=(count, len(patch.lo)))
    return patch.embed(U)


def _green_patches(patch: QuadraturePatch, count: int, seed: int):
    d = len(patch.lo)
    res = max(4, min(16, int(40000 ** (1.0 / d))))
    for b in random_bumps(patch, count, seed):
        lo, hi = b.support
        yield b, QuadraturePatch(patch.group, patch.field, patch.axis, lo, hi, res, "gauss",
                                 patch.mask_radius, patch.graph)


def cmd_identities(args) -> int:
    _, surface, patch = _setup(args)
    X = _samples(patch, args.samples, args.seed)
    report = verify_identities(patch.group, patch.field, X, tol=args.tol, seed=args.seed)
    from .identities import Residual, green_sides
    for k, (b, gp) in enumerate(_green_patches(patch, 2, args.seed)):
        if gp.mask.any():
            continue
        lhs, rhs = green_sides(gp, b)
        report.rows.append(Residual(f"green_formula[{k}]", abs(lhs - rhs) / max(abs(rhs), 1e-300),
                                    1e-5 if args.tol is None else args.tol))
    if args.format == "json":
        _write(json.dumps({"passed": report.passed,
                           "rows": [{"name": r.name, "residual": r.residual, "tol": r.tol,
                                     "skipped": r.skipped, "passed": r.passed} for r in report.rows]},
                          allow_nan=True) + "\n", args.out)
    else:
        _write(report.table() + "\n", args.out)
    return 0 if report.passed else 1


def _bump_library(patch: QuadraturePatch, count: int, seed: int):
    return random_bumps(patch, count, seed)


def cmd_stability(args) -> int:
    _, _, patch = _setup(args)
    try:
        cert = stability_certificate(patch)
        values = [second_variation(patch, b).value for b in _bump_library(patch, args.bumps, args.seed)]
    except NotHMinimalOnPatch as exc:
        print(f"NotHMinimalOnPatch: {exc}", file=sys.stderr)
        return 1
    out = cert.to_dict()
    out["second_variation"] = values
    _write(json.dumps(out, indent=2) + "\n", args.out)
    return 0


def cmd_perimeter(args) -> int:
    _, _, patch = _setup(args)
    r = h_perimeter(patch)
    _write(json.dumps({"h_perimeter": r.value, "masked_fraction": r.masked_fraction,
                       "masked_measure": r.masked_measure, "min_p_h_norm": r.min_p_h_norm}) + "\n",
           args.out)
    return 0


def cmd_variation(args) -> int:
    _, _, patch = _setup(args)
    rows = []
    for b in _bump_library(patch, args.bumps, args.seed):
        row = {"center": b.center.tolist(), "radius": b.radius.tolist(), "amplitude": b.amplitude,
               "first_variation": first_variation(patch, b)}
        try:
            sv = second_variation(patch, b)
            row.update(second_variation=sv.value, gradient_term=sv.gradient_term,
                       potential_term=sv.potential_term)
        except NotHMinimalOnPatch:
            row["second_variation"] = None
        rows.append(row)
    _write(json.dumps({"bumps": rows}, indent=2) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact",
                                 description="Horizontal geometry of hypersurfaces in Carnot groups")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, surface=True):
        p.add_argument("--group", default="heisenberg:1",
                       help="heisenberg:N, abelian:N, engel, or a JSON spec (file or string)")
        if surface:
            p.add_argument("--surface", default=None,
                           help="vplane, nvplane, hparab, or an expression in x1..xn")
            p.add_argument("--patch", default=None, help="JSON patch spec (file or string)")
            p.add_argument("--jets", choices=["analytic", "fd"], default="analytic")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["csv", "json", "svg"], default="csv")

    common(sub.add_parser("validate", help="check structure constants"), surface=False)
    p = sub.add_parser("scan", help="per-node table over a patch")
    common(p)
    p.add_argument("--column", default="B_TS", help="column shown in the SVG heatmap")
    p = sub.add_parser("identities", help="residuals of the geometric identities")
    common(p)
    p.add_argument("--samples", type=int, default=100)
    for name, hlp in (("stability", "certificate and second variation of bumps"),
                      ("perimeter", "H-perimeter of a patch"),
                      ("variation", "first and second variation of bumps")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--bumps", type=int, default=5)
    return ap


COMMANDS = {"validate": cmd_validate, "scan": cmd_scan, "identities": cmd_identities,
            "stability": cmd_stability, "perimeter": cmd_perimeter, "variation": cmd_variation}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
