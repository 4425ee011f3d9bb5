"""
SVG 1.1 overlays of an alignment: x spots, transformed mu spots, markers and match lines.
"""
import logging
from html import escape
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models.configuration import Configuration
from ..models.report import AlignmentReport, QCReport
from ..models.transform import AffineTransform
from .spot_io import atomic_write_text

logger = logging.getLogger(__name__)

PADDING = 10.0
GLYPH = 2.5

STYLE = """<style type="text/css"><![CDATA[
.x { fill: none; stroke: #c0392b; stroke-width: 0.6; }
.mu { stroke: #2c3e50; stroke-width: 0.6; }
.marker-x { fill: none; stroke: #000000; stroke-width: 1.0; }
.marker-mu { fill: none; stroke: #1f618d; stroke-width: 1.0; }
.match { stroke: #27ae60; stroke-width: 0.5; }
.excluded { stroke: #e67e22; stroke-width: 1.0; stroke-dasharray: 2,1; }
text { font-family: sans-serif; font-size: 4px; }
]]></style>
"""


def _num(value: float) -> str:
    return f"{value:.6f}"


class SVGCanvas:
    """Append-only SVG document in image coordinates (y grows downwards)."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray, title: Optional[str] = None):
        x0, y0 = (float(v) - PADDING for v in lower)
        width, height = (float(u - l) + 2 * PADDING for l, u in zip(lower, upper))
        self.parts: List[str] = [
            '<?xml version="1.0" standalone="no"?>\n'
            '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
            '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
            f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" '
            f'width="{_num(width)}" height="{_num(height)}" '
            f'viewBox="{_num(x0)} {_num(y0)} {_num(width)} {_num(height)}">\n',
            STYLE,
        ]
        if title:
            self.parts.append(f"<title>{escape(title)}</title>\n")

    def group_start(self, css_id: str) -> None:
        self.parts.append(f'<g id="{escape(css_id)}">\n')

    def group_end(self) -> None:
        self.parts.append("</g>\n")

    def circle(self, p: Sequence[float], css_class: str, spot_id: str, r: float = GLYPH) -> None:
        self.parts.append(
            f'<circle class="{css_class}" cx="{_num(p[0])}" cy="{_num(p[1])}" r="{_num(r)}">'
            f"<title>{escape(spot_id)}</title></circle>\n"
        )

    def plus(self, p: Sequence[float], css_class: str, spot_id: str) -> None:
        x, y = p[0], p[1]
        self.parts.append(
            f'<path class="{css_class}" d="M {_num(x - GLYPH)} {_num(y)} H {_num(x + GLYPH)} '
            f'M {_num(x)} {_num(y - GLYPH)} V {_num(y + GLYPH)}">'
            f"<title>{escape(spot_id)}</title></path>\n"
        )

    def triangle(self, p: Sequence[float], css_class: str, label: str) -> None:
        x, y, h = p[0], p[1], 2 * GLYPH
        points = f"{_num(x)},{_num(y - h)} {_num(x - h)},{_num(y + h)} {_num(x + h)},{_num(y + h)}"
        self.parts.append(
            f'<polygon class="{css_class}" points="{points}"><title>{escape(label)}</title>'
            "</polygon>\n"
        )

    def line(self, start: Sequence[float], end: Sequence[float], css_class: str) -> None:
        self.parts.append(
            f'<line class="{css_class}" x1="{_num(start[0])}" y1="{_num(start[1])}" '
            f'x2="{_num(end[0])}" y2="{_num(end[1])}"/>\n'
        )

    def text(self, p: Sequence[float], content: str) -> None:
        self.parts.append(f'<text x="{_num(p[0])}" y="{_num(p[1])}">{escape(content)}</text>\n')

    def render(self) -> str:
        return "".join(self.parts) + "</svg>\n"


def _extent(*arrays: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    stacked = np.vstack([a for a in arrays if a.size] or [np.zeros((1, 2))])
    lower, upper = stacked.min(axis=0), stacked.max(axis=0)
    # keep a positive viewport for a single point
    return lower, np.maximum(upper, lower + 1.0)


def _marker_points(c: Configuration, points: np.ndarray) -> Iterable[Tuple[int, np.ndarray]]:
    for label, slot in zip(c.labels(), c.marker_slots):
        if slot is not None:
            yield label, points[slot]


def render_overlay(report: AlignmentReport, mu: Configuration, x: Configuration) -> str:
    """SVG text for an alignment report over its two configurations."""
    transform = AffineTransform(A=report.transform.A, b=report.transform.b)
    mu_t = transform.apply(mu.points)
    canvas = SVGCanvas(*_extent(x.points, mu_t), title="markermatch alignment")

    canvas.group_start("x-spots")
    for spot_id, p in zip(x.ids(), x.points):
        canvas.circle(p, "x", spot_id)
    for label, p in _marker_points(x, x.points):
        canvas.circle(p, "marker-x", f"x marker {label}", r=2 * GLYPH)
    canvas.group_end()

    canvas.group_start("mu-spots")
    for spot_id, p in zip(mu.ids(), mu_t):
        canvas.plus(p, "mu", spot_id)
    for label, p in _marker_points(mu, mu_t):
        canvas.triangle(p, "marker-mu", f"mu marker {label}")
    canvas.group_end()

    x_index: Dict[str, int] = {spot_id: j for j, spot_id in enumerate(x.ids())}
    mu_index: Dict[str, int] = {spot_id: i for i, spot_id in enumerate(mu.ids())}
    canvas.group_start("matches")
    for match in report.matches:
        if match.mu_spot_id is None:
            continue
        canvas.line(x.points[x_index[match.x_spot_id]], mu_t[mu_index[match.mu_spot_id]], "match")
    canvas.group_end()
    return canvas.render()


def render_qc_overlay(
    report: QCReport,
    mu_markers: np.ndarray,
    x_markers: np.ndarray,
    labels: Sequence[int],
    before: AffineTransform,
    after: AffineTransform,
) -> str:
    """Marker pairs under the all-marker fit and under the refit on retained markers."""
    mu_before, mu_after = before.apply(mu_markers), after.apply(mu_markers)
    canvas = SVGCanvas(*_extent(x_markers, mu_before, mu_after), title="marker screening")
    retained = set(report.retained_markers)

    for name, mapped in (("before", mu_before), ("after", mu_after)):
        canvas.group_start(name)
        for label, x_p, mu_p in zip(labels, x_markers, mapped):
            css_class = "match" if label in retained else "excluded"
            canvas.circle(x_p, "marker-x", f"x marker {label}")
            canvas.triangle(mu_p, "marker-mu", f"mu marker {label}")
            canvas.line(x_p, mu_p, css_class)
            if name == "after":
                canvas.text(x_p, str(label))
        canvas.group_end()
    return canvas.render()


def emit_overlay(
    report: AlignmentReport,
    mu: Configuration,
    x: Configuration,
    path: Union[str, Path],
) -> None:
    """Write the alignment overlay as an SVG 1.1 file."""
    atomic_write_text(path, render_overlay(report, mu, x))
    logger.info(f"Wrote overlay with {report.n_matched} match lines to {path}")
