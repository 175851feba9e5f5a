"""CSV/JSON emission, field dumps and self-contained SVG figures.

Numbers are written with 17 significant digits so that round trips are exact
and repeated runs produce identical bytes.  The heatmap colour map is a
256-step piecewise-linear ramp through five anchor colours (dark violet,
blue, teal, green, yellow); index k = floor(255 (v - min) / (max - min)).
"""
import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CSV_SCHEMA = 1
SWEEP_COLUMNS = ("eps", "iters", "grad_norm", "J", "Jeps", "min_det", "err_K_vs_baseline",
                 "penalty_quartic", "keyest_monitor", "el_residual_median", "wall_ms",
                 "err_K_vs_reference", "el_rhs_median")
AUDIT_COLUMNS = ("name", "passed", "measured", "threshold", "context")
FIELD_COLUMNS = ("i", "j", "x1", "x2", "u")

_ANCHORS = np.array([[0x44, 0x01, 0x54], [0x3b, 0x52, 0x8b], [0x21, 0x91, 0x8c],
                     [0x5e, 0xc9, 0x62], [0xfd, 0xe7, 0x25]], dtype=float)


def _colormap():
    pos = np.linspace(0, 1, len(_ANCHORS))
    s = np.linspace(0, 1, 256)
    rgb = np.stack([np.interp(s, pos, _ANCHORS[:, c]) for c in range(3)], -1)
    return ["#%02x%02x%02x" % tuple(int(round(v)) for v in row) for row in rgb]


COLORMAP = _colormap()


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_rows(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema {CSV_SCHEMA}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_csv(path):
    """Rows of a CSV written by this module as dicts of strings."""
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------- tables


def sweep_rows(sweep, timing=True):
    for r in sweep.reports:
        yield (r.eps, r.iters, r.final_grad_norm, r.energy.J, r.energy.total, r.min_det,
               r.err_K_vs_baseline, r.penalty_quartic, r.keyest_monitor, r.el_residual,
               1e3 * r.wall_time if timing else float("nan"), r.err_K_vs_reference, r.el_rhs_scale)


def write_sweep_csv(path, sweep, timing=True):
    return _write_rows(path, SWEEP_COLUMNS, sweep_rows(sweep, timing))


def read_sweep_csv(path):
    rows = read_csv(path)
    missing = [c for c in SWEEP_COLUMNS if rows and c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return {c: np.array([float(r[c]) for r in rows]) for c in SWEEP_COLUMNS}


def _context_json(ctx):
    return json.dumps({k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                       for k, v in ctx.items()}, sort_keys=True)


def write_audit_csv(path, outcomes):
    rows = [(o.name, fmt(bool(o.passed)), o.measured, o.threshold, _context_json(o.context))
            for o in outcomes]
    return _write_rows(path, AUDIT_COLUMNS, rows)


def write_audit_json(path, outcomes):
    doc = {"schema": CSV_SCHEMA, "all_passed": all(o.passed for o in outcomes),
           "audits": [{"name": o.name, "passed": bool(o.passed), "measured": fmt(o.measured),
                       "threshold": fmt(o.threshold), "context": json.loads(_context_json(o.context))}
                      for o in outcomes]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)


def write_field_csv(path, grid, u):
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    idx = np.argwhere(grid.mask_inside)
    rows = ((int(i), int(j), grid.x1[i, j], grid.x2[i, j], u[i, j]) for i, j in idx)
    return _write_rows(path, FIELD_COLUMNS, rows)


def read_field_csv(path, grid):
    u = np.full(grid.shape, np.nan)
    for r in read_csv(path):
        u[int(r["i"]), int(r["j"])] = float(r["u"])
    if np.isnan(u[grid.mask_inside]).any():
        raise ValueError(f"{path}: field does not cover the grid of size {grid.n}")
    return u


# ---------------------------------------------------------------- SVG

W, H_, PAD = 520, 420, 60


def _svg(body, width=W, height=H_):
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="#ffffff"/>\n' + "".join(body) + "</svg>\n")


def _text(x, y, s, size=12, anchor="middle", extra=""):
    return f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}"{extra}>{escape(s)}</text>\n'


def color_index(values, lo, hi):
    if not hi > lo:
        return np.zeros(np.shape(values), dtype=int)
    k = np.floor(255 * (np.asarray(values) - lo) / (hi - lo)).astype(int)
    return np.clip(k, 0, 255)


def heatmap_svg(field, title=""):
    """Per-node rectangles; NaN nodes are left blank.  Axis 0 runs left to right."""
    field = np.asarray(field, dtype=float)
    n1, n2 = field.shape
    size = 360
    cell = size / max(n1, n2)
    finite = np.isfinite(field)
    lo = float(field[finite].min()) if finite.any() else 0.0
    hi = float(field[finite].max()) if finite.any() else 0.0
    idx = color_index(np.where(finite, field, lo), lo, hi)
    body = [_text(W / 2, 24, title, 14)]
    x0, y0 = 30, 40
    for i in range(n1):
        for j in range(n2):
            if finite[i, j]:
                body.append(f'<rect x="{x0 + i * cell:.3f}" y="{y0 + (n2 - 1 - j) * cell:.3f}" '
                            f'width="{cell:.3f}" height="{cell:.3f}" fill="{COLORMAP[idx[i, j]]}"/>\n')
    bx = x0 + size + 30
    for k in range(256):
        body.append(f'<rect x="{bx}" y="{y0 + size * (255 - k) / 256:.3f}" width="20" '
                    f'height="{size / 256 + 0.01:.3f}" fill="{COLORMAP[k]}"/>\n')
    body.append(_text(bx + 26, y0 + 10, f"{hi:.4g}", 11, "start"))
    body.append(_text(bx + 26, y0 + size, f"{lo:.4g}", 11, "start"))
    return _svg(body)


def _axis_map(values, log, lo_px, hi_px):
    v = np.asarray(values, dtype=float)
    v = np.log10(v) if log else v
    a, b = float(v.min()), float(v.max())
    if not b > a:
        a, b = a - 0.5, b + 0.5
    return (lambda t: lo_px + (hi_px - lo_px) * ((np.log10(t) if log else t) - a) / (b - a)), a, b


def _ticks(a, b, log):
    if log:
        return [10.0 ** k for k in range(math.floor(a), math.ceil(b) + 1) if a - 1e-9 <= k <= b + 1e-9]
    return list(np.linspace(a, b, 5))


def line_plot_svg(series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """``series`` is a list of (label, x, y).  Points that cannot be drawn
    (non-finite, or nonpositive on a log axis) are dropped."""
    palette = ["#1f4e9a", "#c0392b", "#1e8449", "#7d3c98"]
    clean = []
    for label, x, y in series:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        ok &= (x > 0) if logx else True
        ok &= (y > 0) if logy else True
        if ok.any():
            clean.append((label, x[ok], y[ok]))
    body = [_text(W / 2, 24, title, 14)]
    left, right, top, bottom = PAD + 10, W - 20, 40, H_ - PAD
    body.append(f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
                f'fill="none" stroke="#000000"/>\n')
    body.append(_text((left + right) / 2, H_ - 15, xlabel))
    body.append(_text(18, (top + bottom) / 2, ylabel, extra=f' transform="rotate(-90 18 {(top + bottom) / 2})"'))
    if clean:
        xs = np.concatenate([c[1] for c in clean])
        ys = np.concatenate([c[2] for c in clean])
        fx, ax, bx = _axis_map(xs, logx, left, right)
        fy, ay, by = _axis_map(ys, logy, bottom, top)
        for t in _ticks(ax, bx, logx):
            px = fx(t)
            body.append(f'<line x1="{px:.2f}" y1="{bottom}" x2="{px:.2f}" y2="{bottom + 5}" stroke="#000000"/>\n')
            body.append(_text(px, bottom + 18, f"{t:.3g}", 10))
        for t in _ticks(ay, by, logy):
            py = fy(t)
            body.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="#000000"/>\n')
            body.append(_text(left - 8, py + 4, f"{t:.3g}", 10, "end"))
        for k, (label, x, y) in enumerate(clean):
            col = palette[k % len(palette)]
            pts = " ".join(f"{fx(a):.2f},{fy(b):.2f}" for a, b in zip(x, y))
            body.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>\n')
            body.append(_text(right - 8, top + 16 + 14 * k, label, 11, "end", f' fill="{col}"'))
    return _svg(body)


def emit_svg(data, path=None, **kw):
    """2-D array -> heatmap; list of (label, x, y) -> line plot."""
    if isinstance(data, np.ndarray) and data.ndim == 2:
        doc = heatmap_svg(data, **kw)
    else:
        doc = line_plot_svg(data, **kw)
    if path is not None:
        Path(path).write_text(doc, encoding="utf-8")
    return doc


def write_figures(out, field, table, grid=None):
    """Solution heatmap, error-vs-eps and penalty-decay plots from a sweep table."""
    out = Path(out)
    paths = []
    if field is not None:
        f = np.asarray(field, dtype=float).copy()
        if grid is not None:
            f[~grid.mask_inside] = np.nan
        paths.append(out / "solution_heatmap.svg")
        emit_svg(f, paths[-1], title=f"u at eps = {table['eps'][-1]:.4g}")
    err = [("vs baseline", table["eps"], table["err_K_vs_baseline"])]
    if np.isfinite(table["err_K_vs_reference"]).any():
        err.append(("vs closed form", table["eps"], table["err_K_vs_reference"]))
    paths.append(out / "error_vs_eps.svg")
    emit_svg(err, paths[-1], title="sup-norm error on K", xlabel="eps", ylabel="error",
             logx=True, logy=True)
    paths.append(out / "penalty_decay.svg")
    emit_svg([("int (u - phi_eps)^4", table["eps"], table["penalty_quartic"])], paths[-1],
             title="penalty decay", xlabel="eps", ylabel="quartic penalty", logx=True, logy=True)
    return paths
