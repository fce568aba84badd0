"""Self-contained SVG heatmaps of per-cell values (no imaging dependency)."""

from __future__ import annotations

import numpy as np

from .abstraction import Label, Partition

__all__ = ["heatmap_svg", "write_heatmap"]

_W = 480  # drawing area in px
_PAD = 50


def _color(v: float) -> str:
    # white -> dark blue ramp
    v = float(min(max(v, 0.0), 1.0))
    lo = np.array([247, 251, 255])
    hi = np.array([8, 48, 107])
    r, g, b = (lo + (hi - lo) * v).round().astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") if abs(x) < 1e6 else f"{x:.3g}"


def heatmap_svg(partition: Partition, values, title: str = "") -> str:
    """SVG text for a heatmap of ``values`` (one per cell) over 1 or 2 discretized dims.

    Goal cells are outlined in green and obstacles drawn in red.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    dd = partition.discretized_dims
    if len(dd) not in (1, 2) or values.size != partition.n_cells:
        raise ValueError("heatmaps need 1 or 2 discretized dims and one value per cell")
    b = partition.spec.bounds
    dx = dd[0]
    dy = dd[1] if len(dd) == 2 else None
    x0, x1 = b.lo[dx], b.hi[dx]
    y0, y1 = (b.lo[dy], b.hi[dy]) if dy is not None else (0.0, 1.0)
    height = _W if dy is not None else 60
    sx = _W / (x1 - x0)
    sy = height / (y1 - y0)

    def px(x):
        return _PAD + (x - x0) * sx

    def py(y):
        return _PAD + height - (y - y0) * sy

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W + 2 * _PAD + 70}" height="{height + 2 * _PAD}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{_PAD}" y="{_PAD / 2:.1f}" font-size="13">{title}</text>',
    ]
    for cell, v in zip(partition.cells, values):
        lo, hi = cell.box.lo, cell.box.hi
        ylo, yhi = (lo[dy], hi[dy]) if dy is not None else (0.0, 1.0)
        stroke = ' stroke="#2ca02c" stroke-width="1.5"' if cell.label == Label.GOAL else ' stroke="#cccccc" stroke-width="0.3"'
        out.append(
            f'<rect x="{px(lo[dx]):.2f}" y="{py(yhi):.2f}" width="{(hi[dx] - lo[dx]) * sx:.2f}" '
            f'height="{(yhi - ylo) * sy:.2f}" fill="{_color(v)}"{stroke}><title>cell {cell.id}: {v:.4f}</title></rect>'
        )
    if dy is not None:
        for ob in partition.spec.obstacles:
            if set(ob.dims) != {dx, dy}:
                continue
            pts = _polygon(ob, (x0, x1, y0, y1), dx, dy)
            if len(pts):
                path = " ".join(f"{px(p[0]):.2f},{py(p[1]):.2f}" for p in pts)
                out.append(f'<polygon points="{path}" fill="#d62728" fill-opacity="0.55" stroke="#d62728"/>')
    # axes labels
    out.append(f'<text x="{px(x0):.1f}" y="{py(y0) + 16:.1f}">{_fmt(x0)}</text>')
    out.append(f'<text x="{px(x1) - 20:.1f}" y="{py(y0) + 16:.1f}">{_fmt(x1)}</text>')
    out.append(f'<text x="{px((x0 + x1) / 2) - 10:.1f}" y="{py(y0) + 30:.1f}">x{dx}</text>')
    if dy is not None:
        out.append(f'<text x="{_PAD - 34:.1f}" y="{py(y0):.1f}">{_fmt(y0)}</text>')
        out.append(f'<text x="{_PAD - 34:.1f}" y="{py(y1) + 10:.1f}">{_fmt(y1)}</text>')
        out.append(f'<text x="{_PAD - 34:.1f}" y="{py((y0 + y1) / 2):.1f}">x{dy}</text>')
    # colour bar
    cb_x = _PAD + _W + 20
    for i in range(20):
        v = 1.0 - i / 19
        out.append(f'<rect x="{cb_x}" y="{_PAD + i * height / 20:.2f}" width="14" height="{height / 20 + 0.5:.2f}" fill="{_color(v)}"/>')
    out.append(f'<text x="{cb_x + 18}" y="{_PAD + 8}">1</text>')
    out.append(f'<text x="{cb_x + 18}" y="{_PAD + height:.1f}">0</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _polygon(ob, window, dx, dy) -> np.ndarray:
    """Vertices of the obstacle clipped to the plot window (half-plane clipping)."""
    x0, x1, y0, y1 = window
    poly = [np.array(p, dtype=float) for p in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
    A = ob.A if ob.dims == (dx, dy) else ob.A[:, ::-1]
    for a, c in zip(A, ob.b):
        nxt = []
        for i in range(len(poly)):
            p, q = poly[i], poly[(i + 1) % len(poly)]
            fp, fq = a @ p - c, a @ q - c
            if fp <= 0:
                nxt.append(p)
            if fp * fq < 0:
                t = fp / (fp - fq)
                nxt.append(p + t * (q - p))
        poly = nxt
        if not poly:
            break
    return np.array(poly)


def write_heatmap(path, partition: Partition, values, title: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(heatmap_svg(partition, values, title))
