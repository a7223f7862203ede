from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Union

from app.cantor_core import Interval, StageSet, bridge_terminators, build_middle_set, thickness
from app.geometry import GeometryError, MonotoneMap
from app.intervals import CertifiedInterval, PrecisionError
from app.precision import PrecisionPolicy, run_with_precision

LinkReason = Literal["disjoint", "containment", "linked"]
HullLike = Union[StageSet, Interval]

DEFAULT_SLOPE_BUDGET = 2**14


class NewhouseError(RuntimeError):
    def __init__(self, message: str, code: str = "not_linked") -> None:
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class LinkedVerdict:
    linked: bool
    left_hull: Interval
    right_hull: Interval
    reason: LinkReason


def _hull_of(item: HullLike) -> Interval:
    if isinstance(item, StageSet):
        return item.hull
    return Fraction(item[0]), Fraction(item[1])


def linked(a: HullLike, b: HullLike) -> LinkedVerdict:
    ha, hb = _hull_of(a), _hull_of(b)
    left, right = sorted((ha, hb))
    if not max(ha[0], hb[0]) < min(ha[1], hb[1]):
        return LinkedVerdict(False, left, right, "disjoint")
    a_holds_b = ha[0] <= hb[0] and hb[1] <= ha[1]
    b_holds_a = hb[0] <= ha[0] and ha[1] <= hb[1]
    if a_holds_b or b_holds_a:
        return LinkedVerdict(False, left, right, "containment")
    return LinkedVerdict(True, left, right, "linked")


@dataclass(frozen=True)
class TraceStep:
    first_gap: Interval
    second_gap: Interval


@dataclass(frozen=True)
class IntersectionWitness:
    point: Fraction | None
    enclosure: CertifiedInterval
    trace: tuple[TraceStep, ...]
    first_interval: Interval
    second_interval: Interval
    preimage: Fraction | None = None


class _Side:
    """Endpoint enclosures of an interval system plus its bridge terminators.

    For an image side, ``native`` maps back to the preimage set so that gaps and
    intervals can be reported exactly.
    """

    def __init__(
        self,
        lo: list[CertifiedInterval],
        hi: list[CertifiedInterval],
        right_term: list[int],
        left_term: list[int],
        native: StageSet,
        reversed_order: bool,
        is_image: bool = False,
    ) -> None:
        self.lo = lo
        self.hi = hi
        self.right_term = right_term
        self.left_term = left_term
        self.native = native
        self.reversed_order = reversed_order
        self.is_image = is_image
        self._lo_lows = [v.lo for v in lo]

    @classmethod
    def exact(cls, stage: StageSet) -> "_Side":
        right_term, left_term = bridge_terminators(stage)
        return cls(
            [CertifiedInterval.exact(a) for a in stage.los],
            [CertifiedInterval.exact(b) for b in stage.his],
            right_term,
            left_term,
            stage,
            False,
        )

    @classmethod
    def image(cls, stage: StageSet, g: MonotoneMap, increasing: bool) -> "_Side":
        right_term, left_term = bridge_terminators(stage)
        lows = [g.enclose(CertifiedInterval.exact(a)) for a in stage.los]
        highs = [g.enclose(CertifiedInterval.exact(b)) for b in stage.his]
        if increasing:
            return cls(lows, highs, right_term, left_term, stage, False, True)
        n = len(stage.intervals)
        last_gap = n - 2
        # bridges of a decreasing image are the mirrored images of the preimage bridges
        mirrored_right = [last_gap - left_term[last_gap - j] for j in range(n - 1)]
        mirrored_left = [last_gap - right_term[last_gap - j] for j in range(n - 1)]
        return cls(highs[::-1], lows[::-1], mirrored_right, mirrored_left, stage, True, True)

    @property
    def count(self) -> int:
        return len(self.lo)

    def native_index(self, i: int) -> int:
        return self.count - 1 - i if self.reversed_order else i

    def native_interval(self, i: int) -> Interval:
        return self.native.intervals[self.native_index(i)]

    def native_gap(self, j: int) -> Interval:
        k = self.count - 2 - j if self.reversed_order else j
        return self.native.his[k], self.native.los[k + 1]

    def native_endpoint(self, which: Literal["lo", "hi"], i: int) -> Fraction:
        a, b = self.native_interval(i)
        if self.reversed_order:
            return b if which == "lo" else a
        return a if which == "lo" else b

    def classify(self, point: CertifiedInterval) -> tuple[Literal["member", "gap"], int]:
        idx = bisect.bisect_right(self._lo_lows, point.hi) - 1
        if idx >= 0 and point.lo <= self.hi[idx].hi:
            return "member", idx
        if idx < 0 or idx >= self.count - 1:
            raise NewhouseError("gap descent left the convex hull", code="not_linked")
        return "gap", idx


@dataclass
class _Hit:
    point: CertifiedInterval
    exact_point: Fraction | None
    first_index: int
    second_index: int
    preimage: Fraction | None


def _descend(first: _Side, second: _Side) -> tuple[_Hit, list[TraceStep]]:
    """Alternating refinement of a linked gap pair until an endpoint lands in the other set."""
    if first.lo[0].certainly_lt(second.lo[0]):
        left, right = first, second
    elif second.lo[0].certainly_lt(first.lo[0]):
        left, right = second, first
    else:
        raise PrecisionError("cannot order the hull left ends")
    trace: list[TraceStep] = []

    def hit(point_side: _Side, which: Literal["lo", "hi"], index: int, other: _Side, member: int) -> _Hit:
        point = (point_side.lo if which == "lo" else point_side.hi)[index]
        native = point_side.native_endpoint(which, index)
        first_index, second_index = (index, member) if point_side is first else (member, index)
        preimage = native if point_side.is_image else None
        return _Hit(point, point.lo if point.is_exact else None, first_index, second_index, preimage)

    kind, j = left.classify(right.lo[0])
    if kind == "member":
        return hit(right, "lo", 0, left, j), trace
    kind, k = right.classify(left.lo[j + 1])
    if kind == "member":
        return hit(left, "lo", j + 1, right, k), trace
    L, gl, R, gr = left, j, right, k
    max_steps = first.count + second.count + 2
    for _ in range(max_steps):
        a_gap = L.native_gap(gl) if L is first else R.native_gap(gr)
        b_gap = R.native_gap(gr) if L is first else L.native_gap(gl)
        trace.append(TraceStep(a_gap, b_gap))
        p1 = L.hi[gl]
        q2 = R.lo[gr + 1]
        bridge_end = L.hi[L.right_term[gl]]
        if bridge_end.certainly_gt(q2):
            kind, m = L.classify(q2)
            if kind == "member":
                return hit(R, "lo", gr + 1, L, m), trace
            L, gl, R, gr = R, gr, L, m
            continue
        bridge_start = R.lo[R.left_term[gr] + 1]
        if bridge_start.certainly_lt(p1):
            kind, m = R.classify(p1)
            if kind == "member":
                return hit(L, "hi", gl, R, m), trace
            L, gl, R, gr = R, m, L, gl
            continue
        raise NewhouseError(
            "neither bridge crosses the linked gap pair; the thickness hypothesis does not hold here",
            code="thickness_product",
        )
    raise NewhouseError("gap descent did not terminate", code="thickness_product")


def _thickness_or_none(stage: StageSet) -> Fraction | None:
    # a single interval has no gaps and behaves as infinitely thick here
    if len(stage.intervals) < 2:
        return None
    return thickness(stage).tau


def gap_lemma_intersect(a: StageSet, b: StageSet, tol: Fraction = Fraction(1, 10**6)) -> IntersectionWitness:
    verdict = linked(a, b)
    if not verdict.linked:
        raise NewhouseError(f"sets are not linked ({verdict.reason})", code="not_linked")
    tau_a, tau_b = _thickness_or_none(a), _thickness_or_none(b)
    if tau_a is not None and tau_b is not None and tau_a * tau_b < 1:
        raise NewhouseError(f"thickness product {tau_a * tau_b} is below 1", code="thickness_product")
    found, trace = _descend(_Side.exact(a), _Side.exact(b))
    point = found.exact_point
    assert point is not None
    if not (a.contains(point) and b.contains(point)):
        raise NewhouseError(f"descent returned {point}, which is not a common point", code="not_linked")
    return IntersectionWitness(
        point=point,
        enclosure=CertifiedInterval.exact(point),
        trace=tuple(trace),
        first_interval=a.intervals[found.first_index],
        second_interval=b.intervals[found.second_index],
    )


def is_middle_thirds_section(stage: StageSet) -> bool:
    lo, hi = stage.hull
    width = hi - lo
    if width <= 0 or width.numerator != 1:
        return False
    level, den = 0, width.denominator
    while den % 3 == 0:
        den //= 3
        level += 1
    if den != 1 or lo < 0 or hi > 1:
        return False
    scaled = lo * 3**level
    if scaled.denominator != 1:
        return False
    digits = int(scaled)
    while digits:
        if digits % 3 == 1:
            return False
        digits //= 3
    count = len(stage.intervals)
    depth = count.bit_length() - 1
    if count != 1 << depth:
        return False
    return build_middle_set(Fraction(1, 3), (lo, hi), depth).intervals == stage.intervals


def certify_slope_between(
    g: MonotoneMap, window: Interval, lower: Fraction, upper: Fraction, budget: int = DEFAULT_SLOPE_BUDGET
) -> CertifiedInterval:
    """Enclosure of |g'| on the window, certified to sit strictly inside (lower, upper)."""
    pending = [CertifiedInterval(*window)]
    sign: int | None = None
    hull: CertifiedInterval | None = None
    evaluations = 0
    while pending:
        piece = pending.pop()
        evaluations += 1
        try:
            slope = g.derivative(piece)
        except GeometryError:
            slope = None
        if slope is not None and not slope.contains_zero():
            piece_sign = 1 if slope.certainly_positive() else -1
            mag = abs(slope)
            if mag.certainly_gt(lower) and mag.certainly_lt(upper):
                if sign is not None and piece_sign != sign:
                    raise GeometryError("g' changes sign on the window", code="derivative_condition")
                sign = piece_sign
                hull = mag if hull is None else hull.hull(mag)
                continue
            center = CertifiedInterval.exact(piece.midpoint)
            point_mag = abs(g.derivative(center))
            if not (point_mag.certainly_gt(lower) and point_mag.certainly_lt(upper)):
                raise GeometryError(
                    f"|g'| at {float(piece.midpoint):.6g} is outside ({lower}, {upper})", code="derivative_condition"
                )
        if evaluations >= budget:
            raise GeometryError("slope certification budget exhausted", code="derivative_condition")
        pending.extend(reversed(piece.subdivide(2)))
    assert hull is not None and sign is not None
    return hull if sign > 0 else -hull


def gap_sequence_intersect_image(
    k1: StageSet,
    k2: StageSet,
    g: MonotoneMap,
    tol: Fraction = Fraction(1, 10**6),
    budget: int = DEFAULT_SLOPE_BUDGET,
    policy: PrecisionPolicy | None = None,
) -> IntersectionWitness:
    """Common point of K2 and g(K1) for middle-thirds sections with 1 < |g'| < 3 on hull(K1)."""
    for name, stage in (("K1", k1), ("K2", k2)):
        if not is_middle_thirds_section(stage):
            raise NewhouseError(f"{name} = {stage.descriptor} is not a middle-thirds section", code="not_section")
    slope = certify_slope_between(g, k1.hull, Fraction(1), Fraction(3), budget)
    increasing = slope.certainly_positive()

    def attempt() -> IntersectionWitness:
        image = _Side.image(k1, g, increasing)
        target = _Side.exact(k2)
        img_lo, img_hi = image.lo[0], image.hi[-1]
        k2_lo, k2_hi = target.lo[0], target.hi[-1]
        left_image = img_lo.certainly_lt(k2_lo) and k2_lo.certainly_lt(img_hi) and img_hi.certainly_lt(k2_hi)
        left_k2 = k2_lo.certainly_lt(img_lo) and img_lo.certainly_lt(k2_hi) and k2_hi.certainly_lt(img_hi)
        if not (left_image or left_k2):
            raise NewhouseError("K2 and g(K1) are not certifiably linked", code="not_linked")
        found, trace = _descend(image, target)
        if found.point.width > tol:
            raise PrecisionError("witness enclosure wider than tol")
        return IntersectionWitness(
            point=found.exact_point,
            enclosure=found.point,
            trace=tuple(trace),
            first_interval=image.native_interval(found.first_index),
            second_interval=k2.intervals[found.second_index],
            preimage=found.preimage,
        )

    return run_with_precision(attempt, policy=policy)
