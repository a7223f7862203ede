from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path
from typing import Union

from app.geometry import PhiSpec
from app.pin_wiggle import DotPinCertificate, PinCertificate
from app.tree_mechanism import TreeCertificate

PREAMBLE = """\
<?xml version="1.0" standalone="no"?>
<svg width="%(width).6f" height="%(height).6f" viewBox="%(min_x).6f %(min_y).6f %(width).6f %(height).6f" version="1.1" xmlns="http://www.w3.org/2000/svg">
<rect x="%(min_x).6f" y="%(min_y).6f" width="%(width).6f" height="%(height).6f" style="fill:#ffffff"/>
"""

POSTAMBLE = "</svg>\n"

SCALE = 400.0
CURVE_SAMPLES = 48

Certificate = Union[PinCertificate, DotPinCertificate, TreeCertificate]


class SvgCanvas:
    """Collects drawing commands in plane coordinates; y grows upward."""

    def __init__(self, scale: float = SCALE) -> None:
        self.scale = scale
        self.min_x: float | None = None
        self.max_x: float | None = None
        self.min_y: float | None = None
        self.max_y: float | None = None
        self.commands: list[str] = []

    def _xy(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale, -y * self.scale

    def require(self, x: float, y: float) -> None:
        sx, sy = self._xy(x, y)
        if self.min_x is None:
            self.min_x = self.max_x = sx
            self.min_y = self.max_y = sy
            return
        self.min_x = min(self.min_x, sx)
        self.max_x = max(self.max_x, sx)  # type: ignore[arg-type]
        self.min_y = min(self.min_y, sy)  # type: ignore[arg-type]
        self.max_y = max(self.max_y, sy)  # type: ignore[arg-type]

    def rect(self, lo: tuple[float, float], hi: tuple[float, float], stroke: str = "#000000", fill: str = "none") -> None:
        self.require(*lo)
        self.require(*hi)
        x, y = self._xy(lo[0], hi[1])
        w = (hi[0] - lo[0]) * self.scale
        h = (hi[1] - lo[1]) * self.scale
        self.commands.append(
            '<rect x="%.6f" y="%.6f" width="%.6f" height="%.6f" style="fill:%s;stroke:%s;stroke-width:0.5"/>'
            % (x, y, w, h, fill, stroke)
        )

    def line(self, points: list[tuple[float, float]], color: str = "#000000", width: float = 0.75) -> None:
        if len(points) < 2:
            return
        for x, y in points:
            self.require(x, y)
        coords = " ".join("%.6f,%.6f" % self._xy(x, y) for x, y in points)
        self.commands.append(
            '<polyline points="%s" style="fill:none;stroke:%s;stroke-width:%.6f"/>' % (coords, color, width)
        )

    def polygon(self, points: list[tuple[float, float]], color: str = "#000000", fill: str = "none") -> None:
        for x, y in points:
            self.require(x, y)
        coords = " ".join("%.6f,%.6f" % self._xy(x, y) for x, y in points)
        self.commands.append(
            '<polygon points="%s" style="fill:%s;fill-opacity:0.15;stroke:%s;stroke-width:0.5"/>' % (coords, fill, color)
        )

    def circle(self, x: float, y: float, radius_px: float = 2.0, color: str = "#000000") -> None:
        self.require(x, y)
        cx, cy = self._xy(x, y)
        self.commands.append('<circle cx="%.6f" cy="%.6f" r="%.6f" style="fill:%s"/>' % (cx, cy, radius_px, color))

    def text(self, x: float, y: float, label: str, color: str = "#666666") -> None:
        self.require(x, y)
        tx, ty = self._xy(x, y)
        self.commands.append(
            '<text x="%.6f" y="%.6f" fill="%s" font-size="10" font-family="monospace">%s</text>' % (tx, ty, color, label)
        )

    def render(self) -> str:
        if self.min_x is None:
            self.require(0.0, 0.0)
        assert self.min_x is not None and self.max_x is not None and self.min_y is not None and self.max_y is not None
        pad = max(self.max_x - self.min_x, self.max_y - self.min_y, 1.0) * 0.05
        values = {
            "min_x": self.min_x - pad,
            "min_y": self.min_y - pad,
            "width": self.max_x - self.min_x + 2 * pad,
            "height": self.max_y - self.min_y + 2 * pad,
        }
        return PREAMBLE % values + "".join(item + "\n" for item in self.commands) + POSTAMBLE

    def save(self, path: str | Path) -> None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(self.render(), encoding="utf-8")


def _f(box: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]) -> tuple[tuple[float, float], tuple[float, float]]:
    return (float(box[0][0]), float(box[1][0])), (float(box[0][1]), float(box[1][1]))


def curve_points(
    phi: PhiSpec, pin: tuple[float, float], t: float, z_range: tuple[float, float], branch: int
) -> list[tuple[float, float]]:
    """Float samples of the level curve y2 = g(y1) for plotting only."""
    points = []
    for i in range(CURVE_SAMPLES + 1):
        z = z_range[0] + (z_range[1] - z_range[0]) * i / CURVE_SAMPLES
        d1 = abs(z - pin[0])
        if phi.family == "dot":
            if pin[1] == 0:
                return []
            points.append((z, (t - pin[0] * z) / pin[1]))
            continue
        p = 2.0 if phi.family == "euclidean" else float(phi.p or 2)
        rest = t**p - d1**p
        if rest < 0:
            continue
        points.append((z, pin[1] + branch * math.pow(rest, 1 / p)))
    return points


def draw_pin(canvas: SvgCanvas, cert: PinCertificate, color: str = "#1f77b4") -> None:
    w1, w2 = cert.windows
    canvas.rect((float(w1[0]), float(w2[0])), (float(w1[1]), float(w2[1])), stroke=color)
    lo, hi = _f(cert.pin_box)
    canvas.rect(lo, hi, stroke="#d62728", fill="#d62728")
    pin = (float(cert.pin[0]), float(cert.pin[1]))
    canvas.circle(*pin, color="#d62728")
    branch = cert.witness.branch * cert.witness.reflections[1]
    span = (float(w1[0]), float(w1[1]))
    for t in (cert.t_interval.lo, cert.t_interval.hi):
        canvas.line(curve_points(cert.phi, pin, float(t), span, branch), color="#2ca02c")


def draw_wedge(canvas: SvgCanvas, apex: tuple[float, float], reach: float) -> None:
    canvas.polygon(
        [apex, (apex[0] + reach, apex[1] + reach / 3), (apex[0] + reach, apex[1] + reach)],
        color="#9467bd",
        fill="#9467bd",
    )


def plot_certificate(cert: Certificate) -> SvgCanvas:
    canvas = SvgCanvas()
    if isinstance(cert, DotPinCertificate):
        lo, hi = _f(cert.pin_box)
        canvas.rect(lo, hi, stroke="#d62728", fill="#d62728")
        starts, lengths = cert.hull_starts, cert.hull_lengths
        canvas.rect(
            (float(starts[0]), float(starts[1])),
            (float(starts[0] + lengths[0]), float(starts[1] + lengths[1])),
        )
        pin = (float(cert.pin[0]), float(cert.pin[1]))
        span = (float(starts[0]), float(starts[0] + lengths[0]))
        for t in cert.t_interval:
            canvas.line(curve_points(PhiSpec("dot"), pin, float(t), span, 1), color="#2ca02c")
        return canvas
    if isinstance(cert, PinCertificate):
        draw_pin(canvas, cert)
        if cert.engine == "middle-thirds":
            draw_wedge(canvas, (float(cert.pin[0]), float(cert.pin[1])), float(cert.windows[0][1] - cert.pin[0]))
        return canvas
    for v, (x, y) in enumerate(cert.skeleton, start=1):
        r = float(cert.radii[v - 1])
        canvas.rect((float(x) - r, float(y) - r), (float(x) + r, float(y) + r), stroke="#7f7f7f")
        canvas.circle(float(x), float(y))
        canvas.text(float(x), float(y), str(v))
    for a, b in cert.tree.edges:
        pa, pb = cert.skeleton[a - 1], cert.skeleton[b - 1]
        canvas.line([(float(pa[0]), float(pa[1])), (float(pb[0]), float(pb[1]))], color="#bbbbbb", width=0.5)
    for step in cert.steps:
        draw_pin(canvas, step.certificate)
    if cert.mode == "middle-thirds":
        root = cert.skeleton[0]
        draw_wedge(canvas, (float(root[0]), float(root[1])), 1.0)
    return canvas
