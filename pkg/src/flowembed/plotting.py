"""Standalone SVG rendering of embeddings and learned vector fields."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

MODES = ("scatter", "quiver", "streamlines", "diffusion_heat")
COLOR_BY = ("label", "pseudotime", "none")

# categorical palette for labels, sequential (viridis stops) for pseudotime
CATEGORICAL = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")
SEQUENTIAL = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
NEUTRAL = "#555555"


@dataclass(frozen=True)
class PlotSpec:
    mode: str = "scatter"
    color_by: str = "label"
    grid: int = 20
    width: int = 600
    height: int = 600
    point_radius: float = 2.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown plot mode {self.mode!r}; expected one of {MODES}")
        if self.color_by not in COLOR_BY:
            raise ValueError(f"unknown color_by {self.color_by!r}; expected one of {COLOR_BY}")
        if self.grid < 2:
            raise ValueError(f"grid must be >= 2, got {self.grid}")
        if self.width < 10 or self.height < 10:
            raise ValueError("canvas too small")


def sequential_color(value: float) -> str:
    value = float(np.clip(value, 0.0, 1.0)) * (len(SEQUENTIAL) - 1)
    i = min(int(value), len(SEQUENTIAL) - 2)
    frac = value - i
    rgb = [round(a + (b - a) * frac) for a, b in zip(SEQUENTIAL[i], SEQUENTIAL[i + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def point_colors(n, labels=None, values=None, color_by="label") -> list[str]:
    if color_by == "label" and labels is not None:
        return [CATEGORICAL[int(l) % len(CATEGORICAL)] for l in labels]
    if color_by == "pseudotime" and values is not None:
        v = np.asarray(values, dtype=float)
        span = np.ptp(v)
        scaled = (v - v.min()) / span if span > 0 else np.zeros_like(v)
        return [sequential_color(s) for s in scaled]
    return [NEUTRAL] * n


def bounding_box(points):
    pts = np.asarray(points, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite coordinates")
    if np.all(hi - lo <= 0):
        raise ValueError("degenerate bounding box: all points coincide")
    # pad a flat axis so the box has positive area
    span = hi - lo
    pad = np.where(span > 0, 0.0, 0.5 * span.max())
    return lo - pad, hi + pad


def integrate_streamlines(field, seeds, lo, hi, step, max_steps=200):
    """Fixed-step midpoint integration along the normalised field direction.

    ``field`` maps an ``(M, 2)`` array to ``(M, 2)``.  Each line stops when
    it leaves the box ``[lo, hi]``, when the field vanishes, or after
    ``max_steps`` steps.  Returns a list of ``(L, 2)`` arrays (seed included).
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    p = np.array(seeds, dtype=float).reshape(-1, 2)
    lines = [[q.copy()] for q in p]
    active = np.all((p >= lo) & (p <= hi), axis=1)

    def direction(q):
        d = np.asarray(field(q), dtype=float).reshape(-1, 2)
        norm = np.linalg.norm(d, axis=1)
        ok = np.isfinite(norm) & (norm > 1e-12)
        unit = np.zeros_like(d)
        unit[ok] = d[ok] / norm[ok, None]
        return unit, ok

    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        k1, ok1 = direction(p[idx])
        mid = p[idx] + 0.5 * step * k1
        k2, ok2 = direction(mid)
        nxt = p[idx] + step * k2
        inside = ok1 & ok2 & np.all(np.isfinite(nxt), axis=1) & np.all((nxt >= lo) & (nxt <= hi), axis=1)
        for j, i in enumerate(idx):
            if inside[j]:
                p[i] = nxt[j]
                lines[i].append(nxt[j].copy())
            else:
                active[i] = False
    return [np.array(line) for line in lines]


class _Canvas:
    def __init__(self, lo, hi, spec: PlotSpec, margin=20):
        self.lo, self.hi, self.spec, self.margin = lo, hi, spec, margin
        inner = np.array([spec.width, spec.height], float) - 2 * margin
        span = hi - lo
        self.scale = float(np.min(inner / span))
        self.offset = margin + 0.5 * (inner - span * self.scale)
        self.parts = []

    def xy(self, pts):
        pts = np.atleast_2d(pts)
        sx = self.offset[0] + (pts[:, 0] - self.lo[0]) * self.scale
        sy = self.spec.height - (self.offset[1] + (pts[:, 1] - self.lo[1]) * self.scale)
        return np.column_stack([sx, sy])

    def add(self, element: str):
        self.parts.append(element)

    def svg(self, title: str) -> str:
        w, h = self.spec.width, self.spec.height
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">\n'
            f"<title>{escape(title)}</title>\n"
            f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _polyline(canvas, line, cls, stroke, width):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in canvas.xy(line))
    return f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}"/>'


def _arrow(canvas, start, vec, stroke):
    (x0, y0), (x1, y1) = canvas.xy(np.vstack([start, start + vec]))
    dx, dy = x1 - x0, y1 - y0
    length = np.hypot(dx, dy)
    if length < 1e-9:
        return ""
    ux, uy = dx / length, dy / length
    head = min(5.0, 0.4 * length)
    hx1, hy1 = x1 - head * (ux - 0.5 * uy), y1 - head * (uy + 0.5 * ux)
    hx2, hy2 = x1 - head * (ux + 0.5 * uy), y1 - head * (uy - 0.5 * ux)
    return (f'<path class="arrow" d="M{x0:.2f},{y0:.2f} L{x1:.2f},{y1:.2f} '
            f'M{hx1:.2f},{hy1:.2f} L{x1:.2f},{y1:.2f} L{hx2:.2f},{hy2:.2f}" '
            f'fill="none" stroke="{stroke}" stroke-width="1"/>')


def _grid(lo, hi, n):
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    return np.array([(x, y) for y in gy for x in gx])


def _scatter(canvas, points, colors, radius):
    for (x, y), c in zip(canvas.xy(points), colors):
        canvas.add(f'<circle class="pt" cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{c}" fill-opacity="0.8"/>')


def render_svg(result, spec: PlotSpec, path, field=None, values=None, title="embedding") -> Path:
    """Write an SVG of ``result`` (an :class:`EmbeddingResult` or an ``(N, 2)`` array).

    ``field`` overrides the vector field used in quiver/streamline mode
    (defaults to the trained ``result.psi``).  ``values`` supplies per-point
    intensities for ``diffusion_heat`` mode.
    """
    E = np.asarray(getattr(result, "embeddings", result), dtype=float)
    if E.ndim != 2 or E.shape[1] != 2:
        raise ValueError("render_svg needs 2-D embeddings")
    if not np.all(np.isfinite(E)):
        raise ValueError("non-finite embeddings")
    lo, hi = bounding_box(E)
    canvas = _Canvas(lo, hi, spec)
    labels = getattr(result, "labels", None)
    pseudotime = getattr(result, "pseudotime", None)

    if spec.mode == "diffusion_heat":
        if values is None:
            raise ValueError("diffusion_heat mode needs per-point values")
        v = np.asarray(values, dtype=float)
        top = v.max() if v.max() > 0 else 1.0
        colors = [sequential_color(s) for s in v / top]
    else:
        colors = point_colors(E.shape[0], labels, pseudotime, spec.color_by)
    _scatter(canvas, E, colors, spec.point_radius)

    if spec.mode in ("quiver", "streamlines"):
        if field is None:
            psi = getattr(result, "psi", None)
            if psi is None:
                raise ValueError(f"{spec.mode} mode requires a trained vector field")
            field = psi
        diag = float(np.linalg.norm(hi - lo))
        seeds = _grid(lo, hi, spec.grid)
        if spec.mode == "quiver":
            vecs = np.asarray(field(seeds), dtype=float)
            norms = np.linalg.norm(vecs, axis=1)
            top = norms.max() if norms.size and norms.max() > 0 else 1.0
            cell = diag / (spec.grid * np.sqrt(2))
            for s, vec in zip(seeds, vecs * (0.9 * cell / top)):
                canvas.add(_arrow(canvas, s, vec, "#222222"))
        else:
            for line in integrate_streamlines(field, seeds, lo, hi, 0.01 * diag, 200):
                if len(line) > 1:
                    canvas.add(_polyline(canvas, line, "streamline", "#222222", 0.8))
    path = Path(path)
    path.write_text(canvas.svg(title), encoding="utf-8")
    return path
