"""Scatter plots of 2D samples as standalone SVG, no plotting library needed."""
from __future__ import annotations

from pathlib import Path

import numpy as np

EXTENT = 3.0
SIZE_PX = 480


def _coords(points, what: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{what} must be an (n, 2) array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contain non-finite values")
    return arr


def scatter_svg(points, means, title: str | None = None) -> str:
    """SVG text with viewBox [-3, 3]^2; y is flipped so that up is positive."""
    pts, mus = _coords(points, "points"), _coords(means, "means")
    e = EXTENT
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE_PX}" height="{SIZE_PX}" '
        f'viewBox="{-e:g} {-e:g} {2 * e:g} {2 * e:g}">',
        f'<rect x="{-e:g}" y="{-e:g}" width="{2 * e:g}" height="{2 * e:g}" fill="white"/>',
        '<g stroke="#bbbbbb" stroke-width="0.01">'
        f'<line x1="{-e:g}" y1="0" x2="{e:g}" y2="0"/>'
        f'<line x1="0" y1="{-e:g}" x2="0" y2="{e:g}"/></g>',
    ]
    if title:
        safe = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        out.append(f"<title>{safe}</title>")
    out.append('<g fill="#1f77b4" fill-opacity="0.5">')
    # points outside the box are clipped by the viewBox, not dropped
    out.extend(f'<circle cx="{x:.4f}" cy="{-y:.4f}" r="0.02"/>' for x, y in pts)
    out.append("</g>")
    out.append('<g stroke="#d62728" stroke-width="0.03" fill="none">')
    for x, y in mus:
        out.append(f'<path d="M{x - 0.08:.4f} {-y - 0.08:.4f}L{x + 0.08:.4f} {-y + 0.08:.4f}'
                   f'M{x - 0.08:.4f} {-y + 0.08:.4f}L{x + 0.08:.4f} {-y - 0.08:.4f}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter_svg(points, means, path, title: str | None = None) -> Path:
    path = Path(path)
    path.write_bytes(scatter_svg(points, means, title).encode("utf-8"))
    return path
