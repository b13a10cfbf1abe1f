"""SVG rendering of sphere embeddings and inference diagrams.

SVG is assembled from strings with fixed float formatting so identical inputs
give byte-identical output.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from xml.sax.saxutils import escape

import numpy as np

from .embedding import Embedding
from .errors import ValidationError
from .geometry import SummaryStats
from .inference import InferenceReport, TestResult

logger = logging.getLogger(__name__)

PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)

# p < 0.001, p < 0.01, p < 0.05
SIGNIFICANCE_SHADES = ((0.001, "#08306b"), (0.01, "#4292c6"), (0.05, "#c6dbef"))
HIGH_DIM_FILL = "#333333"
VISUALIZED_FILL = "#999999"
ERROR_VISIBLE = 1e-9


class DiagramKind(str, Enum):
    VALUES = "VALUES"
    SIGNIFICANCE = "SIGNIFICANCE"
    PAIRWISE = "PAIRWISE"


@dataclass(frozen=True)
class RenderOptions:
    width: int = 800
    height: int = 800
    margin: int = 40
    palette: tuple[str, ...] = PALETTE
    opacity: float = 0.5
    config_hash: str | None = None  # written into each SVG as <metadata>

    def __post_init__(self):
        if self.width <= 2 * self.margin or self.height <= 2 * self.margin:
            raise ValidationError("canvas must be larger than twice the margin")
        if not self.palette:
            raise ValidationError("palette is empty")
        object.__setattr__(self, "palette", tuple(self.palette))

    def color(self, index: int) -> str:
        return self.palette[index % len(self.palette)]


@dataclass(frozen=True)
class SignFlip:
    pair: tuple[int, int]
    visualized: float
    target: float


@dataclass(frozen=True)
class Scene:
    embedding: Embedding
    colors: tuple[str, ...]
    width: int
    height: int
    scale: float
    origin: tuple[float, float]
    markers: tuple[SignFlip, ...] = field(default_factory=tuple)

    def to_px(self, point) -> tuple[float, float]:
        x, y = float(point[0]), float(point[1])
        return self.origin[0] + x * self.scale, self.origin[1] - y * self.scale

    def to_dict(self) -> dict:
        emb = self.embedding
        return {
            "dim": emb.dim,
            "labels": list(emb.labels),
            "centers": emb.centers.tolist(),
            "radii": emb.radii.tolist(),
            "colors": list(self.colors),
            "width": self.width,
            "height": self.height,
            "scale": self.scale,
            "origin": list(self.origin),
            "objective": emb.objective,
            "markers": [{"pair": list(m.pair), "visualized": m.visualized, "target": m.target} for m in self.markers],
        }


def _f(value: float) -> str:
    text = f"{value:.3f}"
    return "0.000" if text == "-0.000" else text


def _svg_open(options: RenderOptions) -> list[str]:
    width, height = options.width, options.height
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if options.config_hash is not None:
        lines.insert(2, f'<metadata class="config-hash">{escape(options.config_hash)}</metadata>')
    return lines


def _sign_flips(embedding: Embedding, report: InferenceReport | None) -> list[SignFlip]:
    """Pairs whose visualized margin has the opposite sign of the target margin.

    With a report, only pairs whose overlap test is significant count.
    """
    tol = ERROR_VISIBLE * embedding.target.scale
    flips = []
    for i, j in embedding.target.pairs():
        target = float(embedding.target.margins[i, j])
        visualized = float(embedding.achieved.margins[i, j])
        if target * visualized >= 0 or abs(visualized - target) <= tol:
            continue
        if report is not None:
            cell = report.first_order[i][j]
            if cell is None or not cell.significant:
                continue
        flips.append(SignFlip((i, j), visualized, target))
    return flips


def build_scene(embedding: Embedding, options: RenderOptions = RenderOptions(), report: InferenceReport | None = None) -> Scene:
    """Fit the embedding's first two axes into the canvas and find sign flips."""
    if not (np.all(np.isfinite(embedding.centers)) and np.all(np.isfinite(embedding.radii))):
        raise ValidationError("cannot render non-finite embedding values")
    xy = embedding.centers[:, :2]
    r = embedding.radii
    low = np.min(xy - r[:, None], axis=0)
    high = np.max(xy + r[:, None], axis=0)
    extent = high - low
    usable = np.array([options.width - 2 * options.margin, options.height - 2 * options.margin], dtype=float)
    ratios = [u / e for u, e in zip(usable, extent) if e > 0]
    scale = float(min(ratios)) if ratios else 1.0
    middle = 0.5 * (low + high)
    origin = (options.width / 2.0 - middle[0] * scale, options.height / 2.0 + middle[1] * scale)
    colors = tuple(options.color(k) for k in range(len(embedding.labels)))
    return Scene(embedding, colors, options.width, options.height, scale, origin, tuple(_sign_flips(embedding, report)))


def _marker_line(scene: Scene, flip: SignFlip) -> str:
    emb = scene.embedding
    i, j = flip.pair
    c_i, c_j = emb.centers[i, :2], emb.centers[j, :2]
    delta = c_j - c_i
    dist = float(np.linalg.norm(delta))
    u = delta / dist if dist > 0 else np.array([1.0, 0.0])
    # midpoint of the gap (or of the overlap) along the center line
    mid = c_i + u * (emb.radii[i] + 0.5 * flip.visualized)
    half = 0.5 * abs(flip.visualized - flip.target)
    x1, y1 = scene.to_px(mid - u * half)
    x2, y2 = scene.to_px(mid + u * half)
    return (
        f'<line class="sign-flip" x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
        f'stroke="#000000" stroke-width="3"/>'
    )


def _error_bar(scene: Scene, margin: int) -> str | None:
    emb = scene.embedding
    if emb.objective < ERROR_VISIBLE * emb.target.scale**2:
        return None
    length = math.sqrt(emb.objective) * scene.scale
    y = scene.height - margin / 2.0
    return (
        f'<line class="error-bar" x1="{_f(margin)}" y1="{_f(y)}" x2="{_f(margin + length)}" y2="{_f(y)}" '
        f'stroke="#d62728" stroke-width="4"/>'
    )


def render_scene(
    embedding: Embedding, options: RenderOptions = RenderOptions(), report: InferenceReport | None = None
) -> tuple[str, dict]:
    """Circles (2D) or shaded, depth-sorted discs (3D, orthographic) as SVG.

    Returns:
        (SVG text, scene description for JSON)
    """
    scene = build_scene(embedding, options, report)
    lines = _svg_open(options)

    order = list(range(len(embedding.labels)))
    if embedding.dim == 3:
        # viewer on +z: far spheres first
        order.sort(key=lambda k: (float(embedding.centers[k, 2]), k))
        lines.append("<defs>")
        for k in order:
            lines.append(
                f'<radialGradient id="shade-{k}" cx="0.35" cy="0.35" r="0.65">'
                f'<stop offset="0" stop-color="#ffffff"/>'
                f'<stop offset="1" stop-color="{scene.colors[k]}"/></radialGradient>'
            )
        lines.append("</defs>")

    for k in order:
        cx, cy = scene.to_px(embedding.centers[k])
        radius = embedding.radii[k] * scene.scale
        fill = f"url(#shade-{k})" if embedding.dim == 3 else scene.colors[k]
        lines.append(
            f'<circle class="sphere" cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(radius)}" fill="{fill}" '
            f'fill-opacity="{_f(options.opacity)}" stroke="{scene.colors[k]}" stroke-width="2"/>'
        )
    for k in order:
        cx, cy = scene.to_px(embedding.centers[k])
        lines.append(
            f'<text x="{_f(cx)}" y="{_f(cy)}" font-size="14" text-anchor="middle">{escape(embedding.labels[k])}</text>'
        )

    for flip in scene.markers:
        lines.append(_marker_line(scene, flip))
    bar = _error_bar(scene, options.margin)
    if bar is not None:
        lines.append(bar)
    lines.append("</svg>")

    logger.debug(f"Rendered {embedding.dim}D scene with {len(scene.markers)} sign-flip markers")
    return "\n".join(lines) + "\n", scene.to_dict()


def _grid(labels: list[str], options: RenderOptions) -> tuple[list[str], float]:
    """Cell borders and axis labels; returns the SVG lines and the cell size."""
    n = len(labels)
    cell = (min(options.width, options.height) - 2 * options.margin) / max(n, 1)
    m = options.margin
    lines = []
    for k in range(n + 1):
        pos = m + k * cell
        lines.append(f'<line x1="{_f(m)}" y1="{_f(pos)}" x2="{_f(m + n * cell)}" y2="{_f(pos)}" stroke="#cccccc"/>')
        lines.append(f'<line x1="{_f(pos)}" y1="{_f(m)}" x2="{_f(pos)}" y2="{_f(m + n * cell)}" stroke="#cccccc"/>')
    for k, label in enumerate(labels):
        centre = m + (k + 0.5) * cell
        text = escape(label)
        lines.append(f'<text x="{_f(centre)}" y="{_f(m - 8)}" font-size="12" text-anchor="middle">{text}</text>')
        lines.append(f'<text x="{_f(m - 8)}" y="{_f(centre)}" font-size="12" text-anchor="end">{text}</text>')
    return lines, cell


def _half_glyph(cx: float, cy: float, size: float, value: float, left: bool, fill: str) -> str | None:
    if value == 0 or size <= 0:
        return None
    side = "left" if left else "right"
    if value > 0:
        sweep = 0 if left else 1
        return (
            f'<path class="half-circle {side}" d="M {_f(cx)} {_f(cy - size)} A {_f(size)} {_f(size)} 0 0 {sweep} '
            f'{_f(cx)} {_f(cy + size)} Z" fill="{fill}"/>'
        )
    x = cx - size if left else cx
    return (
        f'<rect class="half-square {side}" x="{_f(x)}" y="{_f(cy - size)}" width="{_f(size)}" '
        f'height="{_f(2 * size)}" fill="{fill}"/>'
    )


def _cell_value(stats: SummaryStats, row: int, col: int) -> float:
    if row == col:
        return float(stats.radii[row])
    if row > col:
        return float(stats.distances[row, col])
    return float(stats.margins[row, col])


def render_values_diagram(stats_highdim: SummaryStats, stats_embedded: SummaryStats, options: RenderOptions = RenderOptions()) -> str:
    """Split Hinton diagram of radii, separations and margins.

    Left halves show the high-dimensional value, right halves the visualized
    one. Circles are positive values and squares negative; every glyph shares
    one size scale.
    """
    T = stats_highdim.n_classes
    if stats_embedded.n_classes != T:
        raise ValidationError(f"value diagram needs matching class counts, got {T} and {stats_embedded.n_classes}")
    lines = _svg_open(options)
    grid, cell = _grid(list(stats_highdim.labels), options)
    lines.extend(grid)

    values = [(r, c, _cell_value(stats_highdim, r, c), _cell_value(stats_embedded, r, c)) for r in range(T) for c in range(T)]
    largest = max((max(abs(hi), abs(vis)) for _, _, hi, vis in values), default=0.0)
    unit = 0.45 * cell / largest if largest > 0 else 0.0

    for row, col, high, visualized in values:
        cx = options.margin + (col + 0.5) * cell
        cy = options.margin + (row + 0.5) * cell
        for value, left, fill in ((high, True, HIGH_DIM_FILL), (visualized, False, VISUALIZED_FILL)):
            glyph = _half_glyph(cx, cy, abs(value) * unit, value, left, fill)
            if glyph is not None:
                lines.append(glyph)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def shade_for(result: TestResult | None) -> str | None:
    """Fill for a significant result by p-value stratum, else None."""
    if result is None or not result.significant:
        return None
    p = result.adjusted_p if result.adjusted_p is not None else result.p_value
    for threshold, color in SIGNIFICANCE_SHADES:
        if p < threshold:
            return color
    return SIGNIFICANCE_SHADES[-1][1]


def render_significance_diagram(report: InferenceReport, kind: DiagramKind = DiagramKind.SIGNIFICANCE, options: RenderOptions = RenderOptions()) -> str:
    """First-order (T x T) or pairwise second-order (K x K) significance grid.

    A significant cell is a filled circle when its estimate is positive and a
    filled square when it is negative; darker means smaller p.
    """
    kind = DiagramKind(kind)
    if kind is DiagramKind.SIGNIFICANCE:
        labels = list(report.labels)
        cells = report.first_order
    elif kind is DiagramKind.PAIRWISE:
        labels = [f"{report.labels[i]}-{report.labels[j]}" for i, j in report.pairs]
        cells = report.second_order
    else:
        raise ValidationError("use render_values_diagram for value diagrams")

    lines = _svg_open(options)
    grid, cell = _grid(labels, options)
    lines.extend(grid)
    for row, row_cells in enumerate(cells):
        for col, result in enumerate(row_cells):
            fill = shade_for(result)
            if fill is None:
                continue
            cx = options.margin + (col + 0.5) * cell
            cy = options.margin + (row + 0.5) * cell
            size = 0.4 * cell
            if result.estimate < 0:
                lines.append(
                    f'<rect class="significant" x="{_f(cx - size)}" y="{_f(cy - size)}" width="{_f(2 * size)}" '
                    f'height="{_f(2 * size)}" fill="{fill}"/>'
                )
            else:
                lines.append(f'<circle class="significant" cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(size)}" fill="{fill}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
