"""Deterministic SVG plots of grid results.

Three figures: the effort/performance scatter with the optimal-trajectory
polyline (one labeling lever encoded as marker shape, the other as color),
the per-lever importance curves, and the sweep saturation curves with the
detected saturation marked. Emission is a pure function of the rows: equal
inputs give byte-identical SVG.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .analysis import PerfPoint, Trajectory, detect_saturation, optimal_trajectory
from .errors import DomainError


@dataclass(frozen=True)
class PlotLayout:
    width: int = 760
    height: int = 480
    margin_left: int = 64
    margin_right: int = 200
    margin_top: int = 36
    margin_bottom: int = 56

    @property
    def plot_width(self) -> float:
        return self.width - self.margin_left - self.margin_right

    @property
    def plot_height(self) -> float:
        return self.height - self.margin_top - self.margin_bottom


DEFAULT_LAYOUT = PlotLayout()

MARKER_SHAPES = ("circle", "square", "triangle", "diamond")
MARKER_RADIUS = 5.0

SERIES_COLORS = {
    "diversity": "#1f77b4",
    "quality": "#ff7f0e",
    "completeness": "#2ca02c",
}

COLOR_LOW = (59, 76, 192)  # cold
COLOR_HIGH = (229, 122, 35)  # warm


def lerp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    rgb = tuple(round(a + t * (b - a)) for a, b in zip(COLOR_LOW, COLOR_HIGH))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


@dataclass(frozen=True)
class Bounds:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def x_to_px(self, x: float, layout: PlotLayout = DEFAULT_LAYOUT) -> float:
        return layout.margin_left + (x - self.xmin) / (self.xmax - self.xmin) * layout.plot_width

    def y_to_px(self, y: float, layout: PlotLayout = DEFAULT_LAYOUT) -> float:
        return layout.margin_top + (self.ymax - y) / (self.ymax - self.ymin) * layout.plot_height

    def px_to_x(self, px: float, layout: PlotLayout = DEFAULT_LAYOUT) -> float:
        return self.xmin + (px - layout.margin_left) / layout.plot_width * (self.xmax - self.xmin)

    def px_to_y(self, py: float, layout: PlotLayout = DEFAULT_LAYOUT) -> float:
        return self.ymax - (py - layout.margin_top) / layout.plot_height * (self.ymax - self.ymin)


def compute_bounds(xs: Sequence[float], ys: Sequence[float]) -> Bounds:
    """Data bounds padded to stable round figures so marker jitter at the
    edge never clips."""
    xmax = max(max(xs), 1.0)
    ymax = max(max(ys), 1.0)
    return Bounds(xmin=0.0, xmax=xmax * 1.05, ymin=0.0, ymax=ymax * 1.08)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _marker_svg(shape: str, px: float, py: float, color: str, title: str,
                css_class: str = "marker") -> str:
    r = MARKER_RADIUS
    t = f"<title>{title}</title>"
    if shape == "circle":
        return (f'<circle class="{css_class}" cx="{_fmt(px)}" cy="{_fmt(py)}" r="{r}" '
                f'fill="{color}">{t}</circle>')
    if shape == "square":
        return (f'<rect class="{css_class}" x="{_fmt(px - r)}" y="{_fmt(py - r)}" '
                f'width="{2 * r}" height="{2 * r}" fill="{color}">{t}</rect>')
    if shape == "triangle":
        pts = f"{_fmt(px)},{_fmt(py - r)} {_fmt(px - r)},{_fmt(py + r)} {_fmt(px + r)},{_fmt(py + r)}"
        return f'<polygon class="{css_class}" points="{pts}" fill="{color}">{t}</polygon>'
    pts = f"{_fmt(px)},{_fmt(py - r)} {_fmt(px + r)},{_fmt(py)} {_fmt(px)},{_fmt(py + r)} {_fmt(px - r)},{_fmt(py)}"
    return f'<polygon class="{css_class}" points="{pts}" fill="{color}">{t}</polygon>'


def _svg_open(layout: PlotLayout, title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{layout.width}" height="{layout.height}" '
        f'viewBox="0 0 {layout.width} {layout.height}">',
        f'<rect width="{layout.width}" height="{layout.height}" fill="#ffffff"/>',
        f'<text x="{layout.margin_left}" y="20" font-family="sans-serif" '
        f'font-size="14" fill="#222222">{title}</text>',
    ]


def _axes(layout: PlotLayout, bounds: Bounds, xlabel: str, ylabel: str,
          n_ticks: int = 5) -> list[str]:
    parts = []
    x0, y0 = layout.margin_left, layout.margin_top
    x1 = layout.margin_left + layout.plot_width
    y1 = layout.margin_top + layout.plot_height
    parts.append(
        f'<rect x="{x0}" y="{y0}" width="{_fmt(layout.plot_width)}" '
        f'height="{_fmt(layout.plot_height)}" fill="none" stroke="#888888"/>'
    )
    for i in range(n_ticks + 1):
        fx = bounds.xmin + (bounds.xmax - bounds.xmin) * i / n_ticks
        px = bounds.x_to_px(fx, layout)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y1}" x2="{_fmt(px)}" y2="{y1 + 5}" stroke="#888888"/>')
        parts.append(
            f'<text x="{_fmt(px)}" y="{y1 + 20}" font-family="sans-serif" font-size="11" '
            f'fill="#444444" text-anchor="middle">{fx:.2f}</text>'
        )
        fy = bounds.ymin + (bounds.ymax - bounds.ymin) * i / n_ticks
        py = bounds.y_to_px(fy, layout)
        parts.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="#888888"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" font-family="sans-serif" font-size="11" '
            f'fill="#444444" text-anchor="end">{fy:.2f}</text>'
        )
    parts.append(
        f'<text x="{_fmt(x0 + layout.plot_width / 2)}" y="{y1 + 40}" font-family="sans-serif" '
        f'font-size="12" fill="#222222" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{_fmt(y0 + layout.plot_height / 2)}" font-family="sans-serif" '
        f'font-size="12" fill="#222222" text-anchor="middle" '
        f'transform="rotate(-90 16 {_fmt(y0 + layout.plot_height / 2)})">{ylabel}</text>'
    )
    return parts


def _legend(layout: PlotLayout, lines: list[tuple[str, str, str]]) -> list[str]:
    """lines: (kind, color-or-shape, text); kind in {swatch, shape, text}."""
    parts = []
    x = layout.margin_left + layout.plot_width + 16
    y = layout.margin_top + 8
    for kind, key, text in lines:
        if kind == "swatch":
            parts.append(f'<rect x="{x}" y="{y - 8}" width="10" height="10" fill="{key}"/>')
        elif kind == "shape":
            parts.append(_marker_svg(key, x + 5, y - 3, "#555555", text,
                                     css_class="legend-marker"))
        parts.append(
            f'<text x="{x + 16}" y="{y}" font-family="sans-serif" font-size="11" '
            f'fill="#333333">{text}</text>'
        )
        y += 16
    return parts


def scatter_with_trajectory(points: Sequence[PerfPoint], axis: str,
                            layout: PlotLayout = DEFAULT_LAYOUT) -> str:
    """Effort/performance scatter plus the optimal trajectory.

    axis 'qd': color encodes quality, marker encodes diversity.
    axis 'dc': color encodes diversity, marker encodes completeness.
    """
    if not points:
        raise DomainError("no points to plot")
    if axis == "qd":
        color_of = lambda p: p.quality_pct / 100.0
        color_value = lambda p: p.quality_pct
        marker_value = lambda p: p.diversity
        color_name, marker_name = "quality", "diversity"
    elif axis == "dc":
        color_of = lambda p: p.diversity
        color_value = lambda p: p.diversity
        marker_value = lambda p: p.completeness
        color_name, marker_name = "diversity", "completeness"
    else:
        raise DomainError(f"axis must be 'qd' or 'dc', got {axis!r}")

    trajectory = optimal_trajectory(points)
    bounds = compute_bounds([p.effort for p in points], [p.perf_norm for p in points])

    marker_values = sorted({marker_value(p) for p in points})
    shape_of = {
        v: MARKER_SHAPES[i % len(MARKER_SHAPES)] for i, v in enumerate(marker_values)
    }

    parts = _svg_open(layout, f"model performance vs labeling effort ({axis})")
    parts += _axes(layout, bounds, f"effort ({axis})", "performance (normalized)")

    poly = " ".join(
        f"{_fmt(bounds.x_to_px(v.effort, layout))},{_fmt(bounds.y_to_px(v.perf_norm, layout))}"
        for v in trajectory.vertices
    )
    parts.append(
        f'<polyline class="trajectory" points="{poly}" fill="none" '
        f'stroke="#333333" stroke-width="1.5"/>'
    )
    for p in points:
        parts.append(
            _marker_svg(
                shape_of[marker_value(p)],
                bounds.x_to_px(p.effort, layout),
                bounds.y_to_px(p.perf_norm, layout),
                lerp_color(color_of(p)),
                p.label or f"effort={p.effort:.3f}",
            )
        )

    legend = [("text", "", f"color: {color_name}")]
    for v in sorted({color_value(p) for p in points}):
        t = v / 100.0 if color_name == "quality" else v
        legend.append(("swatch", lerp_color(t), f"{color_name}={v:g}"))
    legend.append(("text", "", f"marker: {marker_name}"))
    for v in marker_values:
        legend.append(("shape", shape_of[v], f"{marker_name}={v:g}"))
    parts += _legend(layout, legend)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def importance_plot(curves: dict[str, list[tuple[float, float]]],
                    layout: PlotLayout = DEFAULT_LAYOUT) -> str:
    """Per-lever value against normalized performance along the trajectory.
    Quality is drawn as a fraction of 100 so all levers share the axis."""
    if not curves:
        raise DomainError("no curves to plot")
    xs = [p for series in curves.values() for p, _ in series]
    bounds = compute_bounds(xs, [1.0])
    parts = _svg_open(layout, "lever values required along the optimal trajectory")
    parts += _axes(layout, bounds, "performance (normalized)", "lever value (fraction)")
    legend = []
    for name in ("quality", "diversity", "completeness"):
        if name not in curves:
            continue
        series = curves[name]
        color = SERIES_COLORS[name]
        scale = 100.0 if name == "quality" else 1.0
        pts = " ".join(
            f"{_fmt(bounds.x_to_px(p, layout))},{_fmt(bounds.y_to_px(v / scale, layout))}"
            for p, v in series
        )
        parts.append(
            f'<polyline class="series-{name}" points="{pts}" fill="none" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        for p, v in series:
            parts.append(
                f'<circle class="pt-{name}" cx="{_fmt(bounds.x_to_px(p, layout))}" '
                f'cy="{_fmt(bounds.y_to_px(v / scale, layout))}" r="3" fill="{color}"/>'
            )
        suffix = " (pct/100)" if name == "quality" else ""
        legend.append(("swatch", color, f"{name}{suffix}"))
    parts += _legend(layout, legend)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def saturation_plot(sweeps: dict[str, list[tuple[float, float]]], lever: str,
                    epsilon: float = 0.01, window: int = 2,
                    layout: PlotLayout = DEFAULT_LAYOUT) -> str:
    """Performance against one lever's sweep, one polyline per group of fixed
    other levers, with each detected saturation point marked."""
    if not sweeps:
        raise DomainError("no sweep groups to plot")
    xs = [v for series in sweeps.values() for v, _ in series]
    ys = [p for series in sweeps.values() for _, p in series]
    bounds = compute_bounds(xs, ys)
    parts = _svg_open(layout, f"performance saturation over {lever}")
    parts += _axes(layout, bounds, lever, "performance (normalized)")
    legend = []
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    for i, group in enumerate(sorted(sweeps)):
        series = sorted(sweeps[group])
        color = palette[i % len(palette)]
        pts = " ".join(
            f"{_fmt(bounds.x_to_px(v, layout))},{_fmt(bounds.y_to_px(p, layout))}"
            for v, p in series
        )
        parts.append(
            f'<polyline class="sweep" points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        if len(series) >= window + 1:
            sat = detect_saturation(series, epsilon=epsilon, window=window)
        else:
            sat = None
        if sat is not None:
            px = bounds.x_to_px(sat, layout)
            y0, y1 = layout.margin_top, layout.margin_top + layout.plot_height
            parts.append(
                f'<line class="saturation" x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" '
                f'y2="{_fmt(y1)}" stroke="{color}" stroke-dasharray="4 3"/>'
            )
        suffix = f", saturates at {sat:g}" if sat is not None else ", no saturation"
        legend.append(("swatch", color, f"{group}{suffix}"))
    parts += _legend(layout, legend)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
