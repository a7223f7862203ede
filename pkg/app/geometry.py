from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Final, Literal, Protocol

from app.cantor_core import Interval, StageSet, epsilon_thickness, restrict, thickness
from app.intervals import (
    CertifiedInterval,
    IntervalDomainError,
    PrecisionError,
    Scalar,
    get_precision,
)
from app.precision import PrecisionPolicy, run_with_precision

PhiKind = Literal["euclidean", "dot", "pnorm", "implicit"]
Box = tuple[Interval, Interval]
Pair = tuple[CertifiedInterval, CertifiedInterval]

DEFAULT_DERIVATIVE_BUDGET: Final[int] = 2**14
MAX_PNORM_TERM: Final[int] = 64
BASE_FAMILIES: Final[tuple[str, ...]] = ("dist", "dot", "pnorm")


class GeometryError(RuntimeError):
    def __init__(self, message: str, code: str = "domain") -> None:
        super().__init__(message)
        self.code = code


def as_pair(point: tuple[Scalar, Scalar]) -> Pair:
    return CertifiedInterval.coerce(point[0]), CertifiedInterval.coerce(point[1])


def box_pair(box: Box) -> Pair:
    return CertifiedInterval(*box[0]), CertifiedInterval(*box[1])


@dataclass(frozen=True)
class PhiSpec:
    """A configuration function phi(x, y) on the plane.

    ``implicit`` kinds evaluate like their base family but their pin curves are
    always solved numerically, never through a closed form.
    """

    kind: PhiKind
    p: Fraction | None = None
    base: str | None = None
    domain_a: Box | None = None
    domain_b: Box | None = None

    def __post_init__(self) -> None:
        family = self.family
        if family == "pnorm":
            if self.p is None or self.p < 1:
                raise GeometryError("pnorm needs a rational p >= 1", code="parse_error")
            if self.p.numerator > MAX_PNORM_TERM or self.p.denominator > MAX_PNORM_TERM:
                raise GeometryError(f"pnorm exponent terms are limited to {MAX_PNORM_TERM}", code="parse_error")
        if self.kind == "implicit" and self.base not in BASE_FAMILIES:
            raise GeometryError(f"implicit base must be one of: {', '.join(BASE_FAMILIES)}", code="parse_error")

    @property
    def family(self) -> str:
        if self.kind == "implicit":
            return "pnorm" if self.base == "pnorm" else ("dot" if self.base == "dot" else "euclidean")
        return self.kind

    @property
    def is_distance_like(self) -> bool:
        return self.family in {"euclidean", "pnorm"}

    @property
    def has_closed_form(self) -> bool:
        return self.kind in {"euclidean", "dot"}

    def render(self) -> str:
        if self.kind == "euclidean":
            return "dist"
        if self.kind == "dot":
            return "dot"
        if self.kind == "pnorm":
            return f"pnorm:{self.p}"
        if self.base == "pnorm":
            return f"implicit:pnorm:{self.p}"
        return f"implicit:{self.base}"

    def value(self, x: Pair, y: Pair) -> CertifiedInterval:
        family = self.family
        if family == "dot":
            return x[0] * y[0] + x[1] * y[1]
        d1, d2 = y[0] - x[0], y[1] - x[1]
        if family == "euclidean":
            return (d1.square() + d2.square()).sqrt()
        assert self.p is not None
        return (abs(d1).pow_rational(self.p) + abs(d2).pow_rational(self.p)).pow_rational(1 / self.p)

    def grad_y(self, x: Pair, y: Pair) -> Pair:
        family = self.family
        if family == "dot":
            return x[0], x[1]
        d1, d2 = y[0] - x[0], y[1] - x[1]
        if family == "euclidean":
            norm = (d1.square() + d2.square()).sqrt()
            return d1 / norm, d2 / norm
        assert self.p is not None
        norm = self.value(x, y)
        scale = norm.pow_rational(self.p - 1)
        return _signed_power(d1, self.p - 1) / scale, _signed_power(d2, self.p - 1) / scale

    def lipschitz_factor(self, pins: Box) -> Fraction:
        """Bound on |phi(x, y) - phi(x, y')| per unit of coordinate spread of y - y'."""
        family = self.family
        if family == "dot":
            return max(abs(pins[0][0]), abs(pins[0][1])) + max(abs(pins[1][0]), abs(pins[1][1]))
        if family == "euclidean":
            return Fraction(3, 2)
        return Fraction(2)


def _signed_power(d: CertifiedInterval, exponent: Fraction) -> CertifiedInterval:
    mag = abs(d).pow_rational(exponent)
    if d.lo >= 0:
        return mag
    if d.hi <= 0:
        return -mag
    return CertifiedInterval(-mag.hi, mag.hi)


_RATIONAL = r"(-?\d+(?:/\d+)?)"
_BOX_PATTERN: Final[re.Pattern[str]] = re.compile(
    rf"^\[{_RATIONAL},{_RATIONAL}\]x\[{_RATIONAL},{_RATIONAL}\]$"
)


def parse_box(text: str) -> Box:
    match = _BOX_PATTERN.match("".join(text.split()))
    if match is None:
        raise GeometryError(f"box must look like [a,b]x[c,d], got {text!r}", code="parse_error")
    a, b, c, d = (Fraction(v) for v in match.groups())
    if a > b or c > d:
        raise GeometryError(f"box {text!r} has a reversed side", code="parse_error")
    return (a, b), (c, d)


def render_box(box: Box) -> str:
    return f"[{box[0][0]},{box[0][1]}]x[{box[1][0]},{box[1][1]}]"


def parse_phi_spec(text: str, domain_a: str | None = None, domain_b: str | None = None) -> PhiSpec:
    raw = text.strip().lower()
    box_a = parse_box(domain_a) if domain_a else None
    box_b = parse_box(domain_b) if domain_b else None
    if raw in {"dist", "euclidean"}:
        return PhiSpec("euclidean", domain_a=box_a, domain_b=box_b)
    if raw == "dot":
        return PhiSpec("dot", domain_a=box_a, domain_b=box_b)
    if raw.startswith("pnorm:"):
        return PhiSpec("pnorm", p=_parse_exponent(raw[len("pnorm:"):]), domain_a=box_a, domain_b=box_b)
    if raw.startswith("implicit:"):
        base = raw[len("implicit:"):]
        if base.startswith("pnorm:"):
            return PhiSpec("implicit", p=_parse_exponent(base[len("pnorm:"):]), base="pnorm", domain_a=box_a, domain_b=box_b)
        return PhiSpec("implicit", base=base, domain_a=box_a, domain_b=box_b)
    raise GeometryError("phi must be one of: dist, dot, pnorm:<p>, implicit:<dist|dot|pnorm:p>", code="parse_error")


def _parse_exponent(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise GeometryError(f"invalid pnorm exponent {text!r}", code="parse_error") from exc


# monotone maps


class MonotoneMap(Protocol):
    def enclose(self, z: CertifiedInterval) -> CertifiedInterval: ...

    def derivative(self, z: CertifiedInterval) -> CertifiedInterval: ...


@dataclass(frozen=True)
class AffineMap:
    scale: Fraction
    shift: Fraction

    def enclose(self, z: CertifiedInterval) -> CertifiedInterval:
        return z * self.scale + self.shift

    def derivative(self, z: CertifiedInterval) -> CertifiedInterval:
        return CertifiedInterval.exact(self.scale)


@dataclass(frozen=True)
class PinCurve:
    """Level curve {y : phi(x, y) = t} written as y2 = g(y1).

    x and t may be enclosures (a pin box and a target interval); the
    evaluations then enclose g over all of them at once. ``branch`` picks the
    side of x2 for distance-like families and ``bracket`` the y2 search range
    of the numerical solver.
    """

    phi: PhiSpec
    x: Pair
    t: CertifiedInterval
    branch: int = 1
    bracket: Interval | None = None
    tol: Fraction | None = None

    @property
    def affine(self) -> bool:
        return self.phi.kind == "dot" and self.x[0].is_exact and self.x[1].is_exact and self.t.is_exact

    def enclose(self, z: CertifiedInterval) -> CertifiedInterval:
        if self.phi.kind == "euclidean":
            radicand = self.t.square() - (z - self.x[0]).square()
            if not radicand.certainly_positive():
                raise GeometryError(f"z = {float(z.midpoint):.6g} leaves the pin curve domain", code="domain")
            root = radicand.sqrt()
            return self.x[1] + root if self.branch > 0 else self.x[1] - root
        if self.phi.kind == "dot":
            if self.x[1].contains_zero():
                raise GeometryError("dot pin curve needs x2 away from zero", code="axis_pin")
            return (self.t - self.x[0] * z) / self.x[1]
        return self._solve(z)

    def derivative(self, z: CertifiedInterval) -> CertifiedInterval:
        if self.phi.kind == "dot":
            return -self.x[0] / self.x[1]
        if self.phi.kind == "euclidean":
            radicand = self.t.square() - (z - self.x[0]).square()
            if not radicand.certainly_positive():
                raise GeometryError(f"z = {float(z.midpoint):.6g} leaves the pin curve domain", code="domain")
            slope = (z - self.x[0]) / radicand.sqrt()
            return -slope if self.branch > 0 else slope
        y2 = self.enclose(z)
        g1, g2 = self.phi.grad_y(self.x, (z, y2))
        if g2.contains_zero():
            raise GeometryError("derivative condition fails along the pin curve", code="derivative_condition")
        return -g1 / g2

    def _residual(self, z: CertifiedInterval, y2: Fraction, sign: int) -> CertifiedInterval:
        value = self.phi.value(self.x, (z, CertifiedInterval.exact(y2))) - self.t
        return value if sign > 0 else -value

    def _solve(self, z: CertifiedInterval) -> CertifiedInterval:
        if self.bracket is None:
            raise GeometryError("implicit pin curve needs a y2 bracket", code="no_bracket")
        lo, hi = Fraction(self.bracket[0]), Fraction(self.bracket[1])
        tol = self.tol if self.tol is not None else Fraction(1, 2 ** (get_precision() // 2))
        slope = self.phi.grad_y(self.x, (z, CertifiedInterval(lo, hi)))[1]
        if slope.contains_zero():
            raise GeometryError("derivative condition fails on the bracket", code="derivative_condition")
        sign = 1 if slope.certainly_positive() else -1
        if not (self._residual(z, lo, sign).hi < 0 and self._residual(z, hi, sign).lo > 0):
            raise GeometryError(
                f"no certified sign change of phi - t on [{float(lo):.6g}, {float(hi):.6g}]", code="no_bracket"
            )
        below, unsure = lo, hi
        while unsure - below > tol:
            mid = (below + unsure) / 2
            if self._residual(z, mid, sign).hi < 0:
                below = mid
            else:
                unsure = mid
        unsure, above = below, hi
        while above - unsure > tol:
            mid = (unsure + above) / 2
            if self._residual(z, mid, sign).lo > 0:
                above = mid
            else:
                unsure = mid
        return CertifiedInterval(below, above)


def eval_pin_curve(curve: PinCurve, z: Scalar, tol: Fraction | None = None, policy: PrecisionPolicy | None = None) -> CertifiedInterval:
    """Enclosure of g(z); with tol, precision escalates until the width is at most tol."""
    point = CertifiedInterval.coerce(z)
    if tol is None:
        return curve.enclose(point)

    def attempt() -> CertifiedInterval:
        result = curve.enclose(point)
        if result.width > tol:
            raise PrecisionError(f"enclosure width {float(result.width):.3e} exceeds {float(tol):.3e}")
        return result

    return run_with_precision(attempt, policy=policy)


def solve_implicit_pin_curve(
    phi: PhiSpec,
    x: tuple[Scalar, Scalar],
    t: Scalar,
    z: Scalar,
    tol: Fraction,
    bracket: Interval | None = None,
    policy: PrecisionPolicy | None = None,
) -> CertifiedInterval:
    if bracket is None and phi.domain_b is not None:
        bracket = phi.domain_b[1]
    if bracket is None:
        raise GeometryError("no y2 bracket given and no domain box to take it from", code="no_bracket")
    # the solver path is used for every family, including those with closed forms
    solver_phi = phi if phi.kind == "implicit" else PhiSpec(
        "implicit",
        p=phi.p,
        base={"euclidean": "dist", "dot": "dot", "pnorm": "pnorm"}[phi.kind],
        domain_a=phi.domain_a,
        domain_b=phi.domain_b,
    )
    curve = PinCurve(solver_phi, as_pair(x), CertifiedInterval.coerce(t), bracket=bracket, tol=tol / 4)
    return eval_pin_curve(curve, z, tol=tol, policy=policy)


# derivative condition


@dataclass(frozen=True)
class DerivativeVerdict:
    ok: bool
    m1: Fraction | None
    m2: Fraction | None
    witness: tuple[Interval, Interval, Interval, Interval] | None
    pieces: int


def _split_widest(box: tuple[CertifiedInterval, ...]) -> tuple[tuple[CertifiedInterval, ...], tuple[CertifiedInterval, ...]]:
    widest = max(range(len(box)), key=lambda i: box[i].width)
    low, high = box[widest].subdivide(2)
    return box[:widest] + (low,) + box[widest + 1 :], box[:widest] + (high,) + box[widest + 1 :]


def certify_derivative_condition(
    phi: PhiSpec, box_a: Box, box_b: Box, budget: int = DEFAULT_DERIVATIVE_BUDGET
) -> DerivativeVerdict:
    """Uniform lower bounds on |d phi / d y1| and |d phi / d y2| over box_a x box_b."""
    start = box_pair(box_a) + box_pair(box_b)
    queue = deque([start])
    m1: Fraction | None = None
    m2: Fraction | None = None
    evaluations = 0
    while queue:
        box = queue.popleft()
        evaluations += 1
        try:
            g1, g2 = phi.grad_y((box[0], box[1]), (box[2], box[3]))
        except IntervalDomainError:
            g1 = g2 = CertifiedInterval(Fraction(-1), Fraction(1))
        if not (g1.contains_zero() or g2.contains_zero()):
            low1, low2 = abs(g1).lo, abs(g2).lo
            m1 = low1 if m1 is None else min(m1, low1)
            m2 = low2 if m2 is None else min(m2, low2)
            continue
        center = tuple(CertifiedInterval.exact(side.midpoint) for side in box)
        try:
            c1, c2 = phi.grad_y((center[0], center[1]), (center[2], center[3]))
            vanishes = c1.contains_zero() or c2.contains_zero()
        except IntervalDomainError:
            vanishes = True
        if vanishes or evaluations >= budget:
            witness = tuple((side.lo, side.hi) for side in (center if vanishes else box))
            return DerivativeVerdict(False, None, None, witness, evaluations)  # type: ignore[arg-type]
        queue.extend(_split_widest(box))
    return DerivativeVerdict(True, m1, m2, None, evaluations)


# image thickness


def slope_enclosures(g: MonotoneMap, window: Interval, pieces: int) -> list[CertifiedInterval]:
    return [g.derivative(piece) for piece in CertifiedInterval(*window).subdivide(pieces)]


def certified_ratio_deviation(g: MonotoneMap, window: Interval, budget: int = 64, target: Fraction | None = None) -> Fraction:
    """Upper bound on sup |g'(a)/g'(b) - 1| for a, b in the window.

    Subdivision doubles until the bound drops below target or the piece budget is spent.
    """
    if isinstance(g, AffineMap):
        return Fraction(0)
    pieces = 1
    best: Fraction | None = None
    while pieces <= budget:
        slopes = slope_enclosures(g, window, pieces)
        if any(s.contains_zero() for s in slopes):
            raise GeometryError("g' is not bounded away from zero on the window", code="derivative_condition")
        if not (all(s.certainly_positive() for s in slopes) or all(s.certainly_negative() for s in slopes)):
            raise GeometryError("g' changes sign on the window", code="derivative_condition")
        mags = [abs(s) for s in slopes]
        deviation = max(m.hi for m in mags) / min(m.lo for m in mags) - 1
        best = deviation if best is None else min(best, deviation)
        if target is None or best < target:
            return best
        pieces *= 2
    assert best is not None
    return best


def image_thickness_lower_bound(
    stage: StageSet, window: Interval, g: MonotoneMap, epsilon: Fraction, budget: int = 64
) -> Fraction:
    eps = Fraction(epsilon)
    if not 0 < eps < 1:
        raise GeometryError("epsilon must lie in (0,1)", code="ratio_certification")
    restricted = restrict(stage, window)
    deviation = certified_ratio_deviation(g, window, budget=budget, target=eps)
    if not deviation < eps:
        raise GeometryError(
            f"ratio deviation bound {float(deviation):.4g} is not below epsilon {float(eps):.4g}",
            code="ratio_certification",
        )
    return epsilon_thickness(restricted, eps).tau_eps * (1 - eps)


def image_stage_thickness(stage: StageSet, window: Interval, g: MonotoneMap) -> Fraction:
    """Thickness of the mapped stage with endpoints at their enclosure midpoints."""
    restricted = restrict(stage, window)
    mapped = []
    for a, b in restricted.intervals:
        ga = g.enclose(CertifiedInterval.exact(a)).midpoint
        gb = g.enclose(CertifiedInterval.exact(b)).midpoint
        mapped.append((min(ga, gb), max(ga, gb)))
    mapped.sort()
    return thickness(StageSet(tuple(mapped))).tau


# wedge of slopes between 1 and 3


def wedge_member(point: tuple[Fraction, Fraction], apex: tuple[Fraction, Fraction]) -> bool:
    d1 = Fraction(point[0]) - Fraction(apex[0])
    d2 = Fraction(point[1]) - Fraction(apex[1])
    return d2 < d1 < 3 * d2


def wedge_contains_box(box: Box, apex: tuple[Fraction, Fraction]) -> bool:
    # the wedge is convex, so the corners decide
    return all(wedge_member((x, y), apex) for x in box[0] for y in box[1])


def wedge_slope_enclosure(box: Box, apex_box: Box) -> CertifiedInterval:
    """Enclosure of |g'| = (y1 - x1)/(y2 - x2) for y in box and pins x in apex_box."""
    y1, y2 = box_pair(box)
    x1, x2 = box_pair(apex_box)
    return abs((y1 - x1) / (y2 - x2))
