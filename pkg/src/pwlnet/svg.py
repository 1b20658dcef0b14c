"""Minimal deterministic SVG writer for polygon figures.

Coordinates are printed with ``%.9g`` and the y axis points up.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

PALETTE = (
    "#1b9e77",
    "#d95f02",
    "#7570b3",
    "#e7298a",
    "#66a61e",
    "#e6ab02",
    "#a6761d",
    "#666666",
)


def fmt(x: float) -> str:
    return "%.9g" % x


class Figure:
    def __init__(self, bounds, width: int = 600, margin: int = 20, legend_width: int = 0):
        (x0, y0), (x1, y1) = bounds
        if not (x1 > x0 and y1 > y0):
            pad = 0.5
            x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
        self.x0, self.y0, self.x1, self.y1 = x0, y0, x1, y1
        self.scale = (width - 2 * margin) / (x1 - x0)
        self.margin = margin
        self.width = width + legend_width
        self.height = int(round((y1 - y0) * self.scale)) + 2 * margin
        self.plot_width = width
        self.items: list[str] = []

    def _xy(self, p) -> str:
        x = self.margin + (p[0] - self.x0) * self.scale
        y = self.margin + (self.y1 - p[1]) * self.scale
        return f"{fmt(x)},{fmt(y)}"

    def polygon(self, vertices, fill: str = "none", stroke: str = "#000000", stroke_width: float = 1.0, opacity: float = 1.0):
        pts = " ".join(self._xy(v) for v in np.asarray(vertices))
        self.items.append(
            f'<polygon points="{pts}" fill="{fill}" fill-opacity="{fmt(opacity)}" '
            f'stroke="{stroke}" stroke-width="{fmt(stroke_width)}"/>'
        )

    def polyline(self, vertices, stroke: str = "#000000", stroke_width: float = 1.0):
        pts = " ".join(self._xy(v) for v in np.asarray(vertices))
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{fmt(stroke_width)}"/>')

    def point(self, p, r: float = 3.0, fill: str = "#000000"):
        x, y = self._xy(p).split(",")
        self.items.append(f'<circle cx="{x}" cy="{y}" r="{fmt(r)}" fill="{fill}"/>')

    def legend(self, entries: Sequence[tuple[str, str]], title: Optional[str] = None):
        x = self.plot_width + 5
        y = self.margin
        if title:
            self.items.append(f'<text x="{x}" y="{y + 10}" font-size="12" font-family="sans-serif">{_esc(title)}</text>')
            y += 18
        for label, color in entries:
            self.items.append(f'<rect x="{x}" y="{y}" width="12" height="12" fill="{color}" stroke="#000000" stroke-width="0.5"/>')
            self.items.append(
                f'<text x="{x + 18}" y="{y + 10}" font-size="12" font-family="sans-serif">{_esc(label)}</text>'
            )
            y += 18

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">'
        )
        bg = f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>'
        return "\n".join([head, bg, *self.items, "</svg>"]) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def bounds_of(polys: Iterable[np.ndarray]):
    pts = np.vstack([np.asarray(p).reshape(-1, 2) for p in polys])
    return pts.min(axis=0), pts.max(axis=0)


def partitions_figure(vertex_lists, fills=None, border: str = "#ffffff", background: str = "#4a6fa5") -> Figure:
    """Partition outlines; each polygon filled (default one colour) with a
    white border, like a region map."""
    vertex_lists = list(vertex_lists)
    fig = Figure(bounds_of(vertex_lists))
    for i, v in enumerate(vertex_lists):
        fill = background if fills is None else fills[i]
        fig.polygon(v, fill=fill, stroke=border, stroke_width=1.0)
    return fig


def labeled_figure(vertex_lists, labels, num_classes: int, class_names=None, outlines=None) -> Figure:
    """Regions coloured by class with a legend; ``outlines`` optionally overlays
    partition borders in white."""
    vertex_lists = list(vertex_lists)
    names = class_names or [f"class {k}" for k in range(num_classes)]
    fig = Figure(bounds_of(vertex_lists), legend_width=120)
    for v, lab in zip(vertex_lists, labels):
        color = PALETTE[lab % len(PALETTE)]
        fig.polygon(v, fill=color, stroke=color, stroke_width=0.5)
    for v in outlines or []:
        fig.polygon(v, fill="none", stroke="#ffffff", stroke_width=1.0)
    fig.legend([(names[k], PALETTE[k % len(PALETTE)]) for k in range(num_classes)], title="argmax")
    return fig
