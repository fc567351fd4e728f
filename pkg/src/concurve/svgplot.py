"""Static SVG charts from the package's CSV outputs, no plotting dependency.

Four figure families: trade-off scatter (fit vs decorrelation, strength
color-coded), verbose per-strength series, per-feature shape overlays, and
importance box/strip summaries, plus correlation heatmaps.  All output is
deterministic: fixed float formatting, seeded jitter, no timestamps.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError

FONT = 'font-family="Helvetica,Arial,sans-serif"'
JITTER_SEED = 12345

# low -> high strength color ramp (dark blue to warm yellow)
_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]

_NEG_COLOR = (33, 102, 172)    # correlation -1
_MID_COLOR = (247, 247, 247)   # correlation 0
_POS_COLOR = (178, 24, 43)     # correlation +1


def _f(v: float) -> str:
    return f"{v:.2f}"


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _ramp_color(frac: float) -> str:
    frac = min(max(frac, 0.0), 1.0)
    pos = frac * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    t = pos - i
    rgb = [round(a + (b - a) * t) for a, b in zip(_RAMP[i], _RAMP[i + 1])]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _diverging_color(value: float) -> str:
    value = min(max(value, -1.0), 1.0)
    lo, hi = (_NEG_COLOR, _MID_COLOR) if value < 0 else (_MID_COLOR, _POS_COLOR)
    t = value + 1.0 if value < 0 else value
    rgb = [round(a + (b - a) * t) for a, b in zip(lo, hi)]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _read_csv(path: str | Path, numeric: tuple[str, ...],
              text: tuple[str, ...] = ()) -> list[dict]:
    """Rows as dicts; numeric columns parsed, with schema errors naming the
    offending row number (header is row 1)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file")
        missing = [c for c in (*numeric, *text) if c not in header]
        if missing:
            raise SchemaError(f"{path}: row 1: missing columns {missing}")
        idx = {c: header.index(c) for c in (*numeric, *text)}
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) < len(header):
                raise SchemaError(f"{path}: row {lineno}: expected {len(header)} cells")
            row = {}
            for c in numeric:
                try:
                    row[c] = float(raw[idx[c]])
                except ValueError:
                    raise SchemaError(f"{path}: row {lineno}: column {c!r} is not numeric")
            for c in text:
                row[c] = raw[idx[c]]
            rows.append(row)
    return rows


class _Scale:
    """Linear data -> pixel mapping with a padded domain."""

    def __init__(self, lo: float, hi: float, px_lo: float, px_hi: float, pad: float = 0.06):
        if hi <= lo:
            hi = lo + 1.0
        span = hi - lo
        self.lo = lo - pad * span
        self.hi = hi + pad * span
        self.px_lo = px_lo
        self.px_hi = px_hi

    def __call__(self, v: float) -> float:
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.px_lo + frac * (self.px_hi - self.px_lo)

    def ticks(self, n: int = 5) -> list[float]:
        return [self.lo + (self.hi - self.lo) * i / (n - 1) for i in range(n)]


def _axes(out: list[str], x: _Scale, y: _Scale, x_label: str, y_label: str,
          x_tick_labels: list[tuple[float, str]] | None = None) -> None:
    out.append(f'<line x1="{_f(x.px_lo)}" y1="{_f(y.px_hi)}" x2="{_f(x.px_hi)}" '
               f'y2="{_f(y.px_hi)}" stroke="black" stroke-width="1"/>')
    out.append(f'<line x1="{_f(x.px_lo)}" y1="{_f(y.px_lo)}" x2="{_f(x.px_lo)}" '
               f'y2="{_f(y.px_hi)}" stroke="black" stroke-width="1"/>')
    if x_tick_labels is None:
        x_tick_labels = [(v, f"{v:.3g}") for v in x.ticks()]
    for v, label in x_tick_labels:
        px = x(v)
        out.append(f'<line x1="{_f(px)}" y1="{_f(y.px_hi)}" x2="{_f(px)}" '
                   f'y2="{_f(y.px_hi + 4)}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{_f(px)}" y="{_f(y.px_hi + 16)}" text-anchor="middle" '
                   f'font-size="10" {FONT}>{_esc(label)}</text>')
    for v in y.ticks():
        py = y(v)
        out.append(f'<line x1="{_f(x.px_lo - 4)}" y1="{_f(py)}" x2="{_f(x.px_lo)}" '
                   f'y2="{_f(py)}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{_f(x.px_lo - 7)}" y="{_f(py + 3)}" text-anchor="end" '
                   f'font-size="10" {FONT}>{v:.3g}</text>')
    mid_x = (x.px_lo + x.px_hi) / 2
    mid_y = (y.px_lo + y.px_hi) / 2
    out.append(f'<text x="{_f(mid_x)}" y="{_f(y.px_hi + 32)}" text-anchor="middle" '
               f'font-size="12" {FONT}>{_esc(x_label)}</text>')
    out.append(f'<text x="{_f(x.px_lo - 40)}" y="{_f(mid_y)}" text-anchor="middle" '
               f'font-size="12" {FONT} transform="rotate(-90 {_f(x.px_lo - 40)} '
               f'{_f(mid_y)})">{_esc(y_label)}</text>')


def _document(width: int, height: int, title: str, body: list[str]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14" {FONT}>'
        f'{_esc(title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _empty_chart(width: int, height: int, title: str) -> str:
    body = [
        f'<line x1="60" y1="{height - 50}" x2="{width - 30}" y2="{height - 50}" '
        f'stroke="black" stroke-width="1"/>',
        f'<line x1="60" y1="40" x2="60" y2="{height - 50}" stroke="black" stroke-width="1"/>',
        f'<text x="{width // 2}" y="{height // 2}" text-anchor="middle" font-size="13" '
        f'{FONT} fill="#888888">no data</text>',
    ]
    return _document(width, height, title, body)


def _lambda_label(lam: float) -> str:
    return "0" if lam == 0.0 else f"{lam:.3g}"


# ----------------------------------------------------------------------
# Trade-off scatter
# ----------------------------------------------------------------------

def plot_tradeoff(records_csv: str | Path, title: str = "fit vs decorrelation trade-off") -> str:
    """One marker per (strength, seed), colored by strength rank, plus a mean
    polyline through the per-strength centroids in strength order."""
    rows = _read_csv(records_csv, numeric=("lambda", "seed", "fit", "rperp"))
    rows = [r for r in rows if not (math.isnan(r["fit"]) or math.isnan(r["rperp"]))]
    width, height = 640, 460
    if not rows:
        return _empty_chart(width, height, title)
    lams = sorted({r["lambda"] for r in rows})
    rank = {lam: i for i, lam in enumerate(lams)}
    denom = max(len(lams) - 1, 1)
    x = _Scale(min(r["rperp"] for r in rows), max(r["rperp"] for r in rows), 70, width - 120)
    y = _Scale(min(r["fit"] for r in rows), max(r["fit"] for r in rows), 40, height - 60)
    body: list[str] = []
    _axes(body, x, y, "measured decorrelation (rperp)", "validation fit")
    for r in rows:
        color = _ramp_color(rank[r["lambda"]] / denom)
        body.append(f'<circle class="pt" cx="{_f(x(r["rperp"]))}" cy="{_f(y(r["fit"]))}" '
                    f'r="3" fill="{color}" fill-opacity="0.75"/>')
    points = []
    for lam in lams:
        sub = [r for r in rows if r["lambda"] == lam]
        mx = sum(r["rperp"] for r in sub) / len(sub)
        my = sum(r["fit"] for r in sub) / len(sub)
        points.append(f"{_f(x(mx))},{_f(y(my))}")
    body.append(f'<polyline class="mean" points="{" ".join(points)}" fill="none" '
                f'stroke="#333333" stroke-width="1.5"/>')
    # strength legend: color ramp endpoints
    lx = width - 100
    body.append(f'<text x="{lx}" y="50" font-size="11" {FONT}>strength</text>')
    for i, lam in enumerate((lams[0], lams[-1])):
        color = _ramp_color(rank[lam] / denom)
        cy = 66 + 18 * i
        body.append(f'<circle cx="{lx + 6}" cy="{cy}" r="4" fill="{color}"/>')
        body.append(f'<text x="{lx + 16}" y="{cy + 4}" font-size="10" {FONT}>'
                    f'{_esc(_lambda_label(lam))}</text>')
    return _document(width, height, title, body)


# ----------------------------------------------------------------------
# Verbose per-strength series
# ----------------------------------------------------------------------

def plot_verbose(verbose_csv: str | Path,
                 title: str = "fit and decorrelation vs strength") -> str:
    """Two stacked panels against the strength grid (categorical spacing so
    the exact-zero strength sits on an otherwise log-like axis)."""
    rows = _read_csv(verbose_csv, numeric=("lambda", "mean", "q05", "q95"),
                     text=("metric",))
    width, height = 640, 640
    if not rows:
        return _empty_chart(width, height, title)
    lams = sorted({r["lambda"] for r in rows})
    pos = {lam: i for i, lam in enumerate(lams)}
    body: list[str] = []
    panels = [("fit", "validation fit", 40), ("rperp", "decorrelation (rperp)", 340)]
    for metric, label, top in panels:
        series = sorted((r for r in rows if r["metric"] == metric),
                        key=lambda r: r["lambda"])
        if not series:
            continue
        x = _Scale(0, max(len(lams) - 1, 1), 70, width - 40, pad=0.02)
        vals = [v for r in series for v in (r["q05"], r["q95"], r["mean"])]
        y = _Scale(min(vals), max(vals), top, top + 240)
        step = max(1, len(lams) // 8)
        ticks = [(pos[lam], _lambda_label(lam)) for lam in lams[::step]]
        _axes(body, x, y, "strength (lambda)", label, x_tick_labels=ticks)
        band = [f"{_f(x(pos[r['lambda']]))},{_f(y(r['q95']))}" for r in series]
        band += [f"{_f(x(pos[r['lambda']]))},{_f(y(r['q05']))}" for r in reversed(series)]
        body.append(f'<polygon points="{" ".join(band)}" fill="#7788cc" '
                    f'fill-opacity="0.25" stroke="none"/>')
        line = [f"{_f(x(pos[r['lambda']]))},{_f(y(r['mean']))}" for r in series]
        body.append(f'<polyline class="mean-{metric}" points="{" ".join(line)}" '
                    f'fill="none" stroke="#223377" stroke-width="1.5"/>')
    return _document(width, height, title, body)


# ----------------------------------------------------------------------
# Shape functions
# ----------------------------------------------------------------------

def plot_shapes(shapes_csv: str | Path, title: str = "shape functions",
                rug_values: dict[str, np.ndarray] | None = None) -> str:
    """Per-feature panels; one thin line per seed plus a bold mean line, and
    an optional rug strip of observed feature values along each baseline."""
    rows = _read_csv(shapes_csv, numeric=("x", "contribution"), text=("feature",))
    has_seed = False
    try:
        rows_seeded = _read_csv(shapes_csv, numeric=("x", "contribution", "seed"),
                                text=("feature",))
        rows = rows_seeded
        has_seed = True
    except SchemaError:
        pass
    if not rows:
        return _empty_chart(640, 460, title)
    features = sorted({r["feature"] for r in rows})
    cols = min(3, len(features))
    rows_of_panels = math.ceil(len(features) / cols)
    panel_w, panel_h = 240, 200
    width = 60 + cols * panel_w
    height = 60 + rows_of_panels * panel_h
    body: list[str] = []
    for k, feature in enumerate(features):
        sub = [r for r in rows if r["feature"] == feature]
        px = 50 + (k % cols) * panel_w
        py = 40 + (k // cols) * panel_h
        x = _Scale(min(r["x"] for r in sub), max(r["x"] for r in sub),
                   px + 30, px + panel_w - 20)
        y = _Scale(min(r["contribution"] for r in sub),
                   max(r["contribution"] for r in sub), py + 14, py + panel_h - 40)
        body.append(f'<text x="{_f((x.px_lo + x.px_hi) / 2)}" y="{_f(py + 8)}" '
                    f'text-anchor="middle" font-size="11" {FONT}>{_esc(feature)}</text>')
        _axes(body, x, y, "", "")
        seeds = sorted({r["seed"] for r in sub}) if has_seed else [None]
        mean_acc: dict[float, list[float]] = {}
        for seed in seeds:
            line = sorted((r for r in sub if not has_seed or r["seed"] == seed),
                          key=lambda r: r["x"])
            pts = " ".join(f"{_f(x(r['x']))},{_f(y(r['contribution']))}" for r in line)
            body.append(f'<polyline class="seed-line" points="{pts}" fill="none" '
                        f'stroke="#999999" stroke-width="0.8" stroke-opacity="0.7"/>')
            for r in line:
                mean_acc.setdefault(r["x"], []).append(r["contribution"])
        mean_pts = " ".join(f"{_f(x(gx))},{_f(y(sum(vs) / len(vs)))}"
                            for gx, vs in sorted(mean_acc.items()))
        body.append(f'<polyline class="mean" points="{mean_pts}" fill="none" '
                    f'stroke="#bb3311" stroke-width="1.8"/>')
        if rug_values and feature in rug_values:
            base = y.px_hi
            for v in np.asarray(rug_values[feature]).ravel()[:512]:
                body.append(f'<line x1="{_f(x(float(v)))}" y1="{_f(base)}" '
                            f'x2="{_f(x(float(v)))}" y2="{_f(base - 5)}" '
                            f'stroke="#555555" stroke-width="0.4"/>')
    return _document(width, height, title, body)


# ----------------------------------------------------------------------
# Importance box/strip
# ----------------------------------------------------------------------

def plot_importance(importance_csv: str | Path,
                    title: str = "feature importances") -> str:
    """Median/quartile boxes with 1.5 IQR whiskers plus seeded-jitter strips."""
    rows = _read_csv(importance_csv, numeric=("seed", "importance"), text=("feature",))
    width, height = 640, 420
    if not rows:
        return _empty_chart(width, height, title)
    features = sorted({r["feature"] for r in rows})
    x = _Scale(0, max(len(features) - 1, 1), 80, width - 40, pad=0.1)
    all_vals = [r["importance"] for r in rows]
    y = _Scale(min(all_vals + [0.0]), max(all_vals), 40, height - 60)
    body: list[str] = []
    ticks = [(i, name) for i, name in enumerate(features)]
    _axes(body, x, y, "feature", "importance", x_tick_labels=ticks)
    rng = np.random.default_rng(JITTER_SEED)
    half = 14.0
    for i, feature in enumerate(features):
        vals = np.array(sorted(r["importance"] for r in rows if r["feature"] == feature))
        q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
        iqr = q3 - q1
        lo_w = vals[vals >= q1 - 1.5 * iqr].min()
        hi_w = vals[vals <= q3 + 1.5 * iqr].max()
        cx = x(i)
        body.append(f'<line x1="{_f(cx)}" y1="{_f(y(lo_w))}" x2="{_f(cx)}" '
                    f'y2="{_f(y(hi_w))}" stroke="#333333" stroke-width="1"/>')
        body.append(f'<rect class="box" x="{_f(cx - half)}" y="{_f(y(q3))}" '
                    f'width="{_f(2 * half)}" height="{_f(max(y(q1) - y(q3), 0.5))}" '
                    f'fill="#aabbdd" fill-opacity="0.8" stroke="#333333"/>')
        body.append(f'<line x1="{_f(cx - half)}" y1="{_f(y(med))}" x2="{_f(cx + half)}" '
                    f'y2="{_f(y(med))}" stroke="#111111" stroke-width="1.5"/>')
        for v in vals:
            jx = cx + rng.uniform(-half * 0.6, half * 0.6)
            body.append(f'<circle class="strip" cx="{_f(jx)}" cy="{_f(y(float(v)))}" '
                        f'r="2" fill="#cc5511" fill-opacity="0.8"/>')
    return _document(width, height, title, body)


# ----------------------------------------------------------------------
# Correlation heatmap
# ----------------------------------------------------------------------

def plot_corr(corr_csv: str | Path, title: str = "correlation matrix") -> str:
    """Diverging heatmap of a square labeled correlation CSV."""
    path = Path(corr_csv)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file")
        if len(header) < 2 or header[0] != "feature":
            raise SchemaError(f"{path}: row 1: expected 'feature' plus one column per feature")
        names = header[1:]
        matrix = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(names) + 1:
                raise SchemaError(f"{path}: row {lineno}: expected {len(names) + 1} cells")
            try:
                matrix.append([float(v) for v in raw[1:]])
            except ValueError:
                raise SchemaError(f"{path}: row {lineno}: non-numeric correlation value")
    if len(matrix) != len(names):
        raise SchemaError(f"{path}: {len(matrix)} rows for {len(names)} columns")
    p = len(names)
    cell = max(18, min(48, 360 // max(p, 1)))
    left, top = 110, 60
    width = left + p * cell + 60
    height = top + p * cell + 50
    body: list[str] = []
    for i in range(p):
        for j in range(p):
            color = _diverging_color(matrix[i][j])
            body.append(f'<rect class="cell" x="{left + j * cell}" y="{top + i * cell}" '
                        f'width="{cell}" height="{cell}" fill="{color}" '
                        f'stroke="#dddddd" stroke-width="0.5"/>')
            if p <= 12:
                body.append(f'<text x="{left + j * cell + cell // 2}" '
                            f'y="{top + i * cell + cell // 2 + 3}" text-anchor="middle" '
                            f'font-size="9" {FONT}>{matrix[i][j]:.2f}</text>')
    for i, name in enumerate(names):
        body.append(f'<text x="{left - 6}" y="{top + i * cell + cell // 2 + 3}" '
                    f'text-anchor="end" font-size="10" {FONT}>{_esc(name)}</text>')
        body.append(f'<text x="{left + i * cell + cell // 2}" y="{top - 6}" '
                    f'text-anchor="middle" font-size="10" {FONT} '
                    f'transform="rotate(-45 {left + i * cell + cell // 2} {top - 6})">'
                    f'{_esc(name)}</text>')
    return _document(width, height, title, body)
