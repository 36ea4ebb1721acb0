"""Deterministic writers and readers for trajectories, ledgers and figures.

Numbers are written with 17 significant digits so that values read back
reproduce the stored doubles exactly.
"""

from __future__ import annotations

import csv
import io

import numpy as np


class MalformedCSV(ValueError):
    """A trajectory or ledger file could not be parsed."""


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_rows(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_trajectory_csv(path, states, iters=None):
    """``iter,x_0,...,x_{n-1}`` with one row per stored state."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n = states.shape[1]
    iters = range(states.shape[0]) if iters is None else iters
    _write_rows(path, ["iter"] + [f"x_{i}" for i in range(n)],
                ([k, *row] for k, row in zip(iters, states)))


def write_lyapunov_csv(path, values, drift, bound, ok, iters=None):
    """``iter,V,drift,bound,ok``; the first row holds ``V(x^0)`` with empty drift fields."""
    values = np.asarray(values, dtype=float)
    iters = list(range(values.shape[0])) if iters is None else list(iters)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "V", "drift", "bound", "ok"])
    w.writerow([fmt(iters[0]), fmt(values[0]), "", "", ""])
    for k in range(1, values.shape[0]):
        w.writerow([fmt(iters[k]), fmt(values[k]), fmt(drift[k - 1]), fmt(bound[k - 1]), fmt(bool(ok[k - 1]))])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_edges_csv(path, lams, iters=None):
    lams = np.asarray(lams, dtype=float)
    n = lams.shape[1]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    iters = range(lams.shape[0]) if iters is None else iters
    _write_rows(path, ["iter"] + [f"lam_{i}_{j}" for i, j in pairs],
                ([k, *[L[i, j] for i, j in pairs]] for k, L in zip(iters, lams)))


def read_trajectory_csv(path):
    """Return ``(iters, states)``; raise :class:`MalformedCSV` on any defect."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedCSV(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise MalformedCSV(f"{path} is empty")
    header = rows[0]
    if len(header) < 2 or header[0] != "iter" or header[1:] != [f"x_{i}" for i in range(len(header) - 1)]:
        raise MalformedCSV(f"{path} does not have an iter,x_0,... header")
    if len(rows) < 2:
        raise MalformedCSV(f"{path} has no data rows")
    iters, states = [], []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedCSV(f"{path}:{ln}: expected {len(header)} columns, got {len(row)}")
        try:
            iters.append(int(row[0]))
            states.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise MalformedCSV(f"{path}:{ln}: {exc}") from exc
    return np.array(iters), np.array(states)


def read_lyapunov_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedCSV(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["iter", "V"]:
        raise MalformedCSV(f"{path} does not have an iter,V,... header")
    try:
        iters = np.array([int(r[0]) for r in rows[1:]])
        values = np.array([float(r[1]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise MalformedCSV(f"{path}: {exc}") from exc
    return iters, values


# --- SVG ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _scale(vals, lo, hi, a, b):
    span = hi - lo
    if not np.isfinite(span) or span == 0.0:
        return np.full(np.shape(vals), 0.5 * (a + b))
    return a + (np.asarray(vals, dtype=float) - lo) / span * (b - a)


def _pts(xs, ys):
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def _panel(out, left, top, width, height, iters, series, title, stroke_width):
    out.append(f'<rect x="{left}" y="{top}" width="{width}" height="{height}" fill="none" stroke="#000" stroke-width="1"/>')
    out.append(f'<text x="{left + width / 2:.1f}" y="{top - 8}" text-anchor="middle" font-size="14">{title}</text>')
    finite = np.concatenate([s[np.isfinite(s)] for s in series]) if series else np.array([])
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    k0, k1 = float(iters[0]), float(iters[-1])
    xs = _scale(iters, k0, k1, left, left + width)
    for label, yv in ((lo, top + height), (hi, top)):
        out.append(f'<text x="{left - 6}" y="{yv + 4:.1f}" text-anchor="end" font-size="11">{label:.4g}</text>')
    out.append(f'<text x="{left}" y="{top + height + 16}" font-size="11">{k0:g}</text>')
    out.append(f'<text x="{left + width}" y="{top + height + 16}" text-anchor="end" font-size="11">{k1:g}</text>')
    for idx, s in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        ys = _scale(s, lo, hi, top + height, top)
        if len(xs) == 1:
            out.append(f'<circle cx="{xs[0]:.2f}" cy="{ys[0]:.2f}" r="2" fill="{color}"/>')
        else:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{stroke_width}" points="{_pts(xs, ys)}"/>')


def render_svg(iters, states, lyap_iters=None, lyap_values=None, title="state trajectories"):
    """Self-contained SVG: one polyline per agent, plus a Lyapunov panel when given.

    A trajectory with a single stored state is drawn as points only.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    iters = np.asarray(iters, dtype=float)
    has_v = lyap_values is not None and len(lyap_values) > 0
    width, ph = 960, 360
    height = 60 + ph + (ph + 70 if has_v else 0) + 30
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="#fff"/>',
        '<g font-family="sans-serif">',
    ]
    sw = 0.6 if states.shape[1] > 50 else 1.2
    _panel(out, 80, 40, width - 120, ph, iters, [states[:, i] for i in range(states.shape[1])], title, sw)
    if has_v:
        li = iters if lyap_iters is None else np.asarray(lyap_iters, dtype=float)
        _panel(out, 80, 40 + ph + 70, width - 120, ph, li, [np.asarray(lyap_values, dtype=float)],
               "Lyapunov function", 1.5)
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, svg):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(svg)
