from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Final, Literal

from app.cantor_core import (
    CantorCoreError,
    Interval,
    StageSet,
    affine_image,
    bridge_terminators,
    epsilon_thickness,
    restrict,
    thickness,
)
from app.geometry import (
    Box,
    GeometryError,
    PhiSpec,
    PinCurve,
    as_pair,
    certified_ratio_deviation,
    certify_derivative_condition,
    wedge_contains_box,
)
from app.intervals import CertifiedInterval, IntervalDomainError, PrecisionError, dyadic_ceiling
from app.logger import log_certificate_event
from app.metrics import MetricsCollector
from app.newhouse import (
    IntersectionWitness,
    NewhouseError,
    certify_slope_between,
    gap_sequence_intersect_image,
    is_middle_thirds_section,
)

logger = logging.getLogger(__name__)

Engine = Literal["thickness", "affine", "middle-thirds"]
Orientation = Literal["image-below", "image-above"]
Point = tuple[Fraction, Fraction]

RATIO_TARGET: Final[Fraction] = Fraction(1, 8)
# sections below the stage resolution are still searched this many levels deep
MAX_EXTRA_SECTION_LEVELS: Final[int] = 40
_SEARCH_ERRORS = (GeometryError, IntervalDomainError, PrecisionError, CantorCoreError, NewhouseError)


class PinWiggleError(RuntimeError):
    def __init__(self, message: str, code: str = "budget_exhausted") -> None:
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class SearchParameters:
    max_halvings: int = 64
    offset_span: int = 24
    sigma_halvings: int = 40
    ratio_pieces: int = 64
    anchor_candidates: int = 4
    epsilon_bits: int = 16
    derivative_budget: int = 2**14


@dataclass(frozen=True)
class PinWitness:
    anchors: Point
    deltas: Point
    reflections: tuple[int, int]
    orientation: Orientation
    branch: int
    t0: CertifiedInterval
    offset: Fraction
    epsilon: Fraction | None
    tau_tilde1: Fraction | None
    tau_tilde2: Fraction | None
    image_bound: Fraction | None
    bracket: Interval | None = None


@dataclass(frozen=True)
class PinCertificate:
    """T lies in the pinned phi-set of K1 x K2 for every pin in the box S.

    ``tau_tilde*`` and ``image_bound`` are None when the restricted window is a
    single interval, which acts as infinitely thick.
    """

    phi: PhiSpec
    engine: Engine
    set1: str
    set2: str
    pin: Point
    pin_box: Box
    t_interval: CertifiedInterval
    windows: tuple[Interval, Interval]
    restricted: tuple[str, str]
    witness: PinWitness
    limit_valid: bool
    slope: CertifiedInterval | None = None
    intersection: IntersectionWitness | None = None


@dataclass(frozen=True)
class DotPinCertificate:
    set1: str
    set2: str
    pin: Point
    delta: Fraction
    pin_box: Box
    t_interval: Interval
    hull_starts: Point
    hull_lengths: Point
    branch: Literal["upper", "lower"]
    formula_length: Fraction | None
    limit_valid: bool

    @property
    def length(self) -> Fraction:
        return self.t_interval[1] - self.t_interval[0]


# canonical frame: every window extends upward from its anchor


@dataclass(frozen=True)
class _Frame:
    phi: PhiSpec
    k1: StageSet
    k2: StageSet
    pin: Point
    reflections: tuple[int, int]

    @classmethod
    def build(cls, phi: PhiSpec, k1: StageSet, k2: StageSet, pin: Point, reflections: tuple[int, int]) -> "_Frame":
        c1 = k1 if reflections[0] > 0 else affine_image(k1, -1, 0)
        c2 = k2 if reflections[1] > 0 else affine_image(k2, -1, 0)
        return cls(phi, c1, c2, (reflections[0] * pin[0], reflections[1] * pin[1]), reflections)

    def original_window(self, axis: int, lo: Fraction, hi: Fraction) -> Interval:
        return (lo, hi) if self.reflections[axis] > 0 else (-hi, -lo)

    def original_anchor(self, axis: int, u: Fraction) -> Fraction:
        return self.reflections[axis] * u


def _room_reflection(stage: StageSet, coordinate: Fraction) -> int:
    lo, hi = stage.hull
    return 1 if hi - coordinate >= coordinate - lo else -1


def _tau_or_none(stage: StageSet) -> Fraction | None:
    if len(stage.intervals) < 2:
        return None
    return thickness(stage).tau


def _product_ok(bound: Fraction | None, tau2: Fraction | None, engine: Engine) -> bool:
    if bound is None or tau2 is None:
        return True
    return bound * tau2 >= 1 if engine == "affine" else bound * tau2 > 1


def rightward_reach(stage: StageSet, u: Fraction) -> Fraction:
    """Length of the bridge extending right from u (the hull when u opens the set)."""
    idx = stage.locate(u)
    if idx is None:
        raise PinWiggleError(f"anchor {u} is not in the set", code="not_gap_endpoint")
    if idx == 0 and u == stage.los[0]:
        return stage.hull[1] - u
    if u == stage.los[idx]:
        right_term, _ = bridge_terminators(stage)
        return stage.his[right_term[idx - 1]] - u
    return stage.his[idx] - u


def snap_window_end(stage: StageSet, u: Fraction, cap: Fraction) -> Fraction:
    """Largest stage right end e <= u + cap whose right gap beats every gap inside [u, e]."""
    limit = u + cap
    idx = stage.locate(u)
    if idx is None:
        raise PinWiggleError(f"anchor {u} is not in the set", code="not_gap_endpoint")
    if stage.his[idx] >= limit:
        return limit
    widths = stage.gap_widths
    best = stage.his[idx]
    inner = Fraction(0)
    for i in range(idx, len(stage.intervals)):
        if stage.his[i] > limit:
            break
        right_gap = widths[i] if i < len(widths) else None
        if right_gap is None or right_gap > inner:
            best = stage.his[i]
        if right_gap is not None:
            inner = max(inner, right_gap)
    return best


@dataclass(frozen=True)
class _Candidate:
    u: Fraction
    reach: Fraction


def standalone_anchors(stage: StageSet, coordinate: Fraction, limit: int) -> list[_Candidate]:
    """Right ends of bounded gaps above the pin coordinate, widest gap first."""
    right_term, _ = bridge_terminators(stage)
    ranked = []
    for j, width in enumerate(stage.gap_widths):
        u = stage.los[j + 1]
        if u > coordinate:
            ranked.append((-width, u, stage.his[right_term[j]] - u))
    ranked.sort()
    return [_Candidate(u, reach) for _, u, reach in ranked[:limit]]


def _bracket(frame: _Frame, u2: Fraction, e2: Fraction, spread: Fraction, branch: int) -> Interval:
    lo, hi = u2 - spread, e2 + spread
    if frame.phi.is_distance_like:
        x2 = frame.pin[1]
        if branch > 0:
            lo = max(lo, (x2 + u2) / 2)
        else:
            hi = min(hi, (x2 + e2) / 2)
    return lo, hi


@dataclass(frozen=True)
class _Found:
    u: Point
    e: Point
    t0: CertifiedInterval
    offset: Fraction
    t_interval: CertifiedInterval
    half_width: Fraction
    orientation: Orientation
    branch: int
    bracket: Interval | None
    epsilon: Fraction | None
    bound: Fraction | None
    tau1: Fraction | None
    tau2: Fraction | None


def _orientation(
    curve: PinCurve, u1: Fraction, e1: Fraction, u2: Fraction, e2: Fraction, decreasing: bool
) -> Orientation | None:
    try:
        g_u = curve.enclose(CertifiedInterval.exact(u1))
        g_e = curve.enclose(CertifiedInterval.exact(e1))
    except _SEARCH_ERRORS:
        return None
    low, high = (g_e, g_u) if decreasing else (g_u, g_e)
    if low.hi < u2 < high.lo and high.hi < e2:
        return "image-below"
    if u2 < low.lo and low.hi < e2 < high.lo:
        return "image-above"
    return None


class _WindowSearch:
    """Deterministic search for windows, a target offset and a pin box."""

    def __init__(
        self,
        frame: _Frame,
        engine: Engine,
        params: SearchParameters,
        offset_cap: Fraction | None = None,
        metrics: MetricsCollector | None = None,
    ) -> None:
        self.frame = frame
        self.engine = engine
        self.params = params
        self.offset_cap = offset_cap
        self.metrics = metrics
        self._tau_cache: dict[tuple[Fraction, Fraction, Fraction], Fraction] = {}

    def _count(self, name: str) -> None:
        if self.metrics is not None:
            self.metrics.increment(name)

    def _tau_eps(self, stage: StageSet, eps: Fraction) -> Fraction:
        key = (stage.hull[0], stage.hull[1], eps)
        if key not in self._tau_cache:
            self._tau_cache[key] = epsilon_thickness(stage, eps).tau_eps
        return self._tau_cache[key]

    def image_bound(
        self, curve: PinCurve, window: Interval, restricted: StageSet
    ) -> tuple[Fraction | None, Fraction | None, bool] | None:
        """(bound, epsilon, decreasing) for the image of the restricted window, or None."""
        try:
            first_slope = curve.derivative(CertifiedInterval.exact(window[0]))
            if first_slope.contains_zero():
                return None
            decreasing = first_slope.certainly_negative()
            tau1 = _tau_or_none(restricted)
            if self.engine == "affine":
                certified_ratio_deviation(curve, window, budget=1, target=None)
                return tau1, None, decreasing
            deviation = certified_ratio_deviation(
                curve, window, budget=self.params.ratio_pieces, target=RATIO_TARGET
            )
        except _SEARCH_ERRORS:
            return None
        eps = dyadic_ceiling(deviation, self.params.epsilon_bits)
        if eps >= 1:
            return None
        if tau1 is None:
            return None, eps, decreasing
        return self._tau_eps(restricted, eps) * (1 - eps), eps, decreasing

    def run(self, anchors1: list[_Candidate], anchors2: list[_Candidate]) -> _Found | None:
        for a1 in anchors1:
            for a2 in anchors2:
                found = self._attempt(a1, a2)
                if found is not None:
                    return found
        return None

    def _attempt(self, a1: _Candidate, a2: _Candidate) -> _Found | None:
        frame = self.frame
        x1, x2 = frame.pin
        u1, u2 = a1.u, a2.u
        if frame.phi.is_distance_like and (u1 == x1 or u2 == x2):
            return None
        self._count("search_attempts")
        branch = 1 if u2 > x2 else -1
        pin_pair = as_pair(frame.pin)
        t0 = frame.phi.value(pin_pair, as_pair((u1, u2)))
        e2 = snap_window_end(frame.k2, u2, a2.reach)
        restricted2 = restrict(frame.k2, (u2, e2))
        tau2 = _tau_or_none(restricted2)
        for halving in range(self.params.max_halvings):
            e1 = snap_window_end(frame.k1, u1, a1.reach / 2**halving)
            if e1 <= u1:
                break
            self._count("delta_halvings")
            restricted1 = restrict(frame.k1, (u1, e1))
            spread = (e2 - u2) + 4 * (e1 - u1)
            bracket = _bracket(frame, u2, e2, spread, branch) if not frame.phi.has_closed_form else None
            point_curve = PinCurve(frame.phi, pin_pair, t0, branch, bracket)
            pre = self.image_bound(point_curve, (u1, e1), restricted1)
            if pre is None or not _product_ok(pre[0], tau2, self.engine):
                continue
            log_certificate_event(
                logger,
                logging.DEBUG,
                "Window pair passes the thickness check at the base pin",
                stage="window",
                outcome=f"halving={halving}",
            )
            scale = min(e1 - u1, e2 - u2)
            if self.offset_cap is not None:
                scale = min(scale, self.offset_cap)
            k0 = 0
            while Fraction(1, 2**k0) > scale:
                k0 += 1
            for k in range(k0, k0 + self.params.offset_span):
                for sign in (1, -1):
                    offset = Fraction(sign, 2**k)
                    t_c = (t0.hi if sign > 0 else t0.lo) + offset
                    center_curve = PinCurve(frame.phi, pin_pair, CertifiedInterval.exact(t_c), branch, bracket)
                    orientation = _orientation(center_curve, u1, e1, u2, e2, pre[2])
                    if orientation is None:
                        continue
                    found = self._shrink_box(
                        (u1, u2), (e1, e2), t0, offset, t_c, orientation, branch, bracket, restricted1, tau2, scale
                    )
                    if found is not None:
                        return found
        return None

    def _shrink_box(
        self,
        u: Point,
        e: Point,
        t0: CertifiedInterval,
        offset: Fraction,
        t_c: Fraction,
        orientation: Orientation,
        branch: int,
        bracket: Interval | None,
        restricted1: StageSet,
        tau2: Fraction | None,
        scale: Fraction,
    ) -> _Found | None:
        frame = self.frame
        half = min(abs(offset) / 2, scale / 4)
        for _ in range(self.params.sigma_halvings):
            s_box = (
                CertifiedInterval.around(frame.pin[0], half),
                CertifiedInterval.around(frame.pin[1], half),
            )
            t_box = CertifiedInterval.around(t_c, half)
            curve = PinCurve(frame.phi, s_box, t_box, branch, bracket)
            result = self.image_bound(curve, (u[0], e[0]), restricted1)
            if result is not None and _orientation(curve, u[0], e[0], u[1], e[1], result[2]) == orientation:
                bound, eps, _ = result
                if _product_ok(bound, tau2, self.engine) and self._derivative_ok(s_box, u, e):
                    return _Found(
                        u=u,
                        e=e,
                        t0=t0,
                        offset=offset,
                        t_interval=t_box,
                        half_width=half,
                        orientation=orientation,
                        branch=branch,
                        bracket=bracket,
                        epsilon=eps,
                        bound=bound,
                        tau1=_tau_or_none(restricted1),
                        tau2=tau2,
                    )
            half /= 2
        return None

    def _derivative_ok(self, s_box: tuple[CertifiedInterval, CertifiedInterval], u: Point, e: Point) -> bool:
        if self.frame.phi.kind in {"euclidean", "dot"}:
            return True
        verdict = certify_derivative_condition(
            self.frame.phi,
            ((s_box[0].lo, s_box[0].hi), (s_box[1].lo, s_box[1].hi)),
            ((u[0], e[0]), (u[1], e[1])),
            budget=self.params.derivative_budget,
        )
        return verdict.ok


def _build_certificate(
    frame: _Frame, found: _Found, engine: Engine, k1: StageSet, k2: StageSet, pin: Point
) -> PinCertificate:
    windows = (
        frame.original_window(0, found.u[0], found.e[0]),
        frame.original_window(1, found.u[1], found.e[1]),
    )
    restricted1 = restrict(k1, windows[0])
    restricted2 = restrict(k2, windows[1])
    half = found.half_width
    return PinCertificate(
        phi=frame.phi,
        engine=engine,
        set1=k1.descriptor,
        set2=k2.descriptor,
        pin=pin,
        pin_box=((pin[0] - half, pin[0] + half), (pin[1] - half, pin[1] + half)),
        t_interval=found.t_interval,
        windows=windows,
        restricted=(restricted1.descriptor, restricted2.descriptor),
        witness=PinWitness(
            anchors=(frame.original_anchor(0, found.u[0]), frame.original_anchor(1, found.u[1])),
            deltas=(found.e[0] - found.u[0], found.e[1] - found.u[1]),
            reflections=frame.reflections,
            orientation=found.orientation,
            branch=found.branch,
            t0=found.t0,
            offset=found.offset,
            epsilon=found.epsilon,
            tau_tilde1=found.tau1,
            tau_tilde2=found.tau2,
            image_bound=found.bound,
            bracket=found.bracket,
        ),
        limit_valid=restricted1.limit_valid and restricted2.limit_valid,
    )


def _engine_for(phi: PhiSpec) -> Engine:
    return "affine" if phi.family == "dot" else "thickness"


def _check_product_hypothesis(k1: StageSet, k2: StageSet, engine: Engine) -> None:
    tau1, tau2 = _tau_or_none(k1), _tau_or_none(k2)
    if tau1 is None or tau2 is None:
        return
    product = tau1 * tau2
    if engine == "affine":
        if product < 1:
            raise PinWiggleError(f"thickness product {product} is below 1", code="thickness_product")
    elif not product > 1:
        raise PinWiggleError(f"thickness product {product} is not greater than 1", code="thickness_product")


def _check_domains(phi: PhiSpec, pin: Point) -> None:
    if phi.domain_a is not None:
        (a0, a1), (b0, b1) = phi.domain_a
        if not (a0 < pin[0] < a1 and b0 < pin[1] < b1):
            raise PinWiggleError("pin lies outside the open domain box A", code="domain")


def phi_pin_window(
    phi: PhiSpec,
    k1: StageSet,
    k2: StageSet,
    x0: Point,
    params: SearchParameters | None = None,
    metrics: MetricsCollector | None = None,
    engine: Engine | None = None,
) -> PinCertificate:
    """Pin certificate for phi; engine "thickness" runs the epsilon-thickness search even for dot products."""
    active = params or SearchParameters()
    pin = (Fraction(x0[0]), Fraction(x0[1]))
    chosen = engine or _engine_for(phi)
    _check_product_hypothesis(k1, k2, chosen)
    _check_domains(phi, pin)
    if phi.family == "dot" and (pin[0] == 0 or pin[1] == 0):
        raise PinWiggleError("dot pins must avoid the coordinate axes", code="axis_pin")
    reflections = (_room_reflection(k1, pin[0]), _room_reflection(k2, pin[1]))
    frame = _Frame.build(phi, k1, k2, pin, reflections)
    anchors1 = standalone_anchors(frame.k1, frame.pin[0], active.anchor_candidates)
    anchors2 = standalone_anchors(frame.k2, frame.pin[1], active.anchor_candidates)
    if not anchors1 or not anchors2:
        raise PinWiggleError("no bounded gap lies beyond the pin on some axis", code="budget_exhausted")
    found = _WindowSearch(frame, chosen, active, metrics=metrics).run(anchors1, anchors2)
    if found is None:
        raise PinWiggleError(
            f"search budget of {active.max_halvings} halvings exhausted without a certified window",
            code="budget_exhausted",
        )
    cert = _build_certificate(frame, found, chosen, k1, k2, pin)
    log_certificate_event(logger, logging.INFO, "Pin certificate emitted", stage="pin", outcome=chosen)
    return cert


def distance_pin_window(
    k1: StageSet,
    k2: StageSet,
    x0: Point,
    params: SearchParameters | None = None,
    metrics: MetricsCollector | None = None,
) -> PinCertificate:
    return phi_pin_window(PhiSpec("euclidean"), k1, k2, x0, params, metrics)


def leaf_window_anchor(stage: StageSet, coordinate: Fraction, radius: Fraction, pin_coordinate: Fraction) -> tuple[int, _Candidate]:
    """Reflection and canonical anchor for a window starting at a leaf coordinate."""
    c = Fraction(coordinate)
    idx = stage.locate(c)
    if idx is None:
        raise PinWiggleError(f"leaf coordinate {c} is not in the set", code="skeleton")
    lo, hi = stage.intervals[idx]
    if c == hi and c != lo:
        reflection = -1
    else:
        reflection = 1
    canonical = stage if reflection > 0 else affine_image(stage, -1, 0)
    u = reflection * c
    reach = rightward_reach(canonical, u)
    if lo < c < hi:
        reach = min(reach, hi - c)
    reach = min(reach, radius)
    toward = reflection * pin_coordinate - u
    if toward > 0:
        reach = min(reach, toward / 2)
    return reflection, _Candidate(u, reach)


def wiggle_for_edge(
    phi: PhiSpec,
    k1: StageSet,
    k2: StageSet,
    leaf: Point,
    pin: Point,
    radius: Fraction,
    offset_cap: Fraction,
    params: SearchParameters | None = None,
    metrics: MetricsCollector | None = None,
    engine: Engine | None = None,
) -> PinCertificate:
    """Pin certificate around ``pin`` whose windows start at the leaf point and stay in its box."""
    active = params or SearchParameters()
    pin_q = (Fraction(pin[0]), Fraction(pin[1]))
    r1, a1 = leaf_window_anchor(k1, leaf[0], radius, pin_q[0])
    r2, a2 = leaf_window_anchor(k2, leaf[1], radius, pin_q[1])
    frame = _Frame.build(phi, k1, k2, pin_q, (r1, r2))
    engine = engine or _engine_for(phi)
    found = _WindowSearch(frame, engine, active, offset_cap=offset_cap, metrics=metrics).run([a1], [a2])
    if found is None:
        raise PinWiggleError(f"no certified window for leaf {leaf} around pin {pin}", code="budget_exhausted")
    return _build_certificate(frame, found, engine, k1, k2, pin_q)


# dot products


def _scaled_hull(coefficient: Fraction, start: Fraction, length: Fraction) -> Interval:
    a, b = coefficient * start, coefficient * (start + length)
    return (a, b) if a <= b else (b, a)


def _dot_ranges(pin: Point, hulls: tuple[Interval, Interval]) -> tuple[Interval, Interval]:
    p_lo, p_hi = _scaled_hull(pin[0], hulls[0][0], hulls[0][1] - hulls[0][0])
    q_lo, q_hi = _scaled_hull(pin[1], hulls[1][0], hulls[1][1] - hulls[1][0])
    lower = (p_lo + q_lo, min(p_hi + q_lo, p_lo + q_hi))
    upper = (max(p_hi + q_lo, p_lo + q_hi), p_hi + q_hi)
    return lower, upper


def dot_window_for_box(box: Box, hulls: tuple[Interval, Interval]) -> tuple[Interval, Interval]:
    """Linked t-ranges valid for every pin of the box; the corners decide."""
    corners = [(x, y) for x in box[0] for y in box[1]]
    ranges = [_dot_ranges(c, hulls) for c in corners]
    lower = (max(r[0][0] for r in ranges), min(r[0][1] for r in ranges))
    upper = (max(r[1][0] for r in ranges), min(r[1][1] for r in ranges))
    return lower, upper


def dot_pin_window(k1: StageSet, k2: StageSet, x0: Point, delta: Fraction) -> DotPinCertificate:
    pin = (Fraction(x0[0]), Fraction(x0[1]))
    d = Fraction(delta)
    if pin[0] == 0 or pin[1] == 0:
        raise PinWiggleError("dot pins must avoid the coordinate axes", code="axis_pin")
    smallest = min(abs(pin[0]), abs(pin[1]))
    if d < 0 or not d < smallest / 3:
        raise PinWiggleError(f"delta must lie in [0, {smallest / 3})", code="delta_too_large")
    _check_product_hypothesis(k1, k2, "affine")
    box = ((pin[0] - d, pin[0] + d), (pin[1] - d, pin[1] + d))
    lower, upper = dot_window_for_box(box, (k1.hull, k2.hull))
    if upper[0] < upper[1]:
        chosen, branch = upper, "upper"
    elif lower[0] < lower[1]:
        chosen, branch = lower, "lower"
    else:
        raise PinWiggleError("the linked t-window is empty for this box", code="delta_too_large")
    lengths = (k1.hull[1] - k1.hull[0], k2.hull[1] - k2.hull[0])
    formula = lengths[0] * (smallest - 3 * d) if lengths[0] == lengths[1] else None
    return DotPinCertificate(
        set1=k1.descriptor,
        set2=k2.descriptor,
        pin=pin,
        delta=d,
        pin_box=box,
        t_interval=chosen,
        hull_starts=(k1.hull[0], k2.hull[0]),
        hull_lengths=lengths,
        branch=branch,  # type: ignore[arg-type]
        formula_length=formula,
        limit_valid=k1.limit_valid and k2.limit_valid,
    )


# middle thirds


def _section_levels(k1: StageSet, k2: StageSet) -> int:
    """Number of sub-section levels worth trying below the coarser of two sections."""
    depth = max(len(k1.intervals), len(k2.intervals)).bit_length() - 1
    return depth + MAX_EXTRA_SECTION_LEVELS + 1


def middle_thirds_pin_window(
    k1: StageSet,
    k2: StageSet,
    x0: Point,
    offset_cap: Fraction | None = None,
    params: SearchParameters | None = None,
) -> PinCertificate:
    """Pin certificate for middle-thirds sections inside the slope wedge of x0.

    The windows start at the lower-left corner of the section box and shrink by
    thirds until the pin curves have slope in (1, 3) and the linked inequalities
    hold on the sub-sections they cut out.
    """
    active = params or SearchParameters()
    pin = (Fraction(x0[0]), Fraction(x0[1]))
    for name, stage in (("K1", k1), ("K2", k2)):
        if not is_middle_thirds_section(stage):
            raise PinWiggleError(f"{name} = {stage.descriptor} is not a middle-thirds section", code="wedge")
    box = (k1.hull, k2.hull)
    if not wedge_contains_box(box, pin):
        raise PinWiggleError(f"section box {box} is not inside the wedge of {pin}", code="wedge")
    u = (k1.hull[0], k2.hull[0])
    side = min(k1.hull[1] - k1.hull[0], k2.hull[1] - k2.hull[0])
    for _ in range(_section_levels(k1, k2)):
        windows = ((u[0], u[0] + side), (u[1], u[1] + side))
        sub1, sub2 = restrict(k1, windows[0]), restrict(k2, windows[1])
        cert = _middle_thirds_search(k1, k2, sub1, sub2, pin, offset_cap, active)
        if cert is not None:
            return cert
        logger.debug("Middle-thirds sections of side %s did not certify; shrinking", side)
        side /= 3
    raise PinWiggleError("no sub-section and target offset certify the linked window", code="budget_exhausted")


def _middle_thirds_search(
    k1: StageSet,
    k2: StageSet,
    sub1: StageSet,
    sub2: StageSet,
    pin: Point,
    offset_cap: Fraction | None,
    active: SearchParameters,
) -> PinCertificate | None:
    phi = PhiSpec("euclidean")
    box = (sub1.hull, sub2.hull)
    u = (sub1.hull[0], sub2.hull[0])
    e = (sub1.hull[1], sub2.hull[1])
    pin_pair = as_pair(pin)
    t0 = phi.value(pin_pair, as_pair(u))
    scale = min(e[0] - u[0], e[1] - u[1]) / 4
    if offset_cap is not None:
        scale = min(scale, offset_cap)
    k0 = 0
    while Fraction(1, 2**k0) > scale:
        k0 += 1
    for k in range(k0, k0 + active.offset_span):
        offset = Fraction(1, 2**k)
        t_c = t0.hi + offset
        target_curve = PinCurve(phi, pin_pair, CertifiedInterval.exact(t_c), 1)
        try:
            if _orientation(target_curve, u[0], e[0], u[1], e[1], True) != "image-below":
                continue
        except _SEARCH_ERRORS:
            continue
        half = offset / 4
        for _ in range(active.sigma_halvings):
            s_box = (CertifiedInterval.around(pin[0], half), CertifiedInterval.around(pin[1], half))
            t_box = CertifiedInterval.around(t_c, half)
            curve = PinCurve(phi, s_box, t_box, 1)
            apexes = [(x, y) for x in (s_box[0].lo, s_box[0].hi) for y in (s_box[1].lo, s_box[1].hi)]
            try:
                ready = all(wedge_contains_box(box, apex) for apex in apexes) and (
                    _orientation(curve, u[0], e[0], u[1], e[1], True) == "image-below"
                )
                if ready:
                    slope = certify_slope_between(curve, sub1.hull, Fraction(1), Fraction(3), active.derivative_budget)
                    witness = gap_sequence_intersect_image(sub1, sub2, target_curve)
                    return PinCertificate(
                        phi=phi,
                        engine="middle-thirds",
                        set1=k1.descriptor,
                        set2=k2.descriptor,
                        pin=pin,
                        pin_box=((pin[0] - half, pin[0] + half), (pin[1] - half, pin[1] + half)),
                        t_interval=t_box,
                        windows=box,
                        restricted=(sub1.descriptor, sub2.descriptor),
                        witness=PinWitness(
                            anchors=u,
                            deltas=(e[0] - u[0], e[1] - u[1]),
                            reflections=(1, 1),
                            orientation="image-below",
                            branch=1,
                            t0=t0,
                            offset=offset,
                            epsilon=None,
                            tau_tilde1=_tau_or_none(sub1),
                            tau_tilde2=_tau_or_none(sub2),
                            image_bound=None,
                        ),
                        limit_valid=sub1.limit_valid and sub2.limit_valid,
                        slope=slope,
                        intersection=witness,
                    )
            except _SEARCH_ERRORS:
                pass
            half /= 2
    return None


# re-verification of recorded witnesses


def verify_pin_certificate(cert: PinCertificate, k1: StageSet, k2: StageSet, params: SearchParameters | None = None) -> list[str]:
    """Recheck every recorded inequality without searching; returns violations."""
    active = params or SearchParameters()
    violations: list[str] = []
    (s1, s2), t_box = cert.pin_box, cert.t_interval
    if not (s1[0] < s1[1] and s2[0] < s2[1]):
        violations.append("pin box is degenerate")
    if not (s1[0] <= cert.pin[0] <= s1[1] and s2[0] <= cert.pin[1] <= s2[1]):
        violations.append("pin box does not contain the pin")
    if not t_box.lo < t_box.hi:
        violations.append("target interval is empty")
    if cert.set1 != k1.descriptor or cert.set2 != k2.descriptor:
        violations.append("set descriptors do not match the rebuilt sets")
    w = cert.witness
    half = t_box.width / 2
    # a search pairs the pin box and target interval at one half-width; smaller pin boxes stay valid
    if not all(cert.pin[j] - half <= cert.pin_box[j][0] and cert.pin_box[j][1] <= cert.pin[j] + half for j in range(2)):
        violations.append("pin box reaches past the half-width of the target interval")
    if t_box.midpoint != (w.t0.hi if w.offset > 0 else w.t0.lo) + w.offset:
        violations.append("target interval is not centered at t0 plus the recorded offset")
    try:
        restricted = (restrict(k1, cert.windows[0]), restrict(k2, cert.windows[1]))
        if (restricted[0].descriptor, restricted[1].descriptor) != cert.restricted:
            violations.append("restricted set descriptors do not match the windows")
        frame = _Frame.build(cert.phi, k1, k2, cert.pin, w.reflections)
        canon = [
            (w.reflections[j] * cert.windows[j][0], w.reflections[j] * cert.windows[j][1]) for j in range(2)
        ]
        canon = [(min(a, b), max(a, b)) for a, b in canon]
        for j in range(2):
            if frame.original_anchor(j, canon[j][0]) != w.anchors[j]:
                violations.append(f"anchor {j + 1} does not open window {j + 1}")
            if canon[j][1] - canon[j][0] != w.deltas[j]:
                violations.append(f"window {j + 1} length differs from the recorded delta")
            stage = frame.k1 if j == 0 else frame.k2
            if stage.locate(canon[j][0]) is None:
                violations.append(f"anchor {j + 1} is not a point of the set")
        t0 = cert.phi.value(as_pair(frame.pin), as_pair((canon[0][0], canon[1][0])))
        if t0.hi < w.t0.lo or w.t0.hi < t0.lo:
            violations.append("recorded t0 misses phi at the pin and anchors")
        s_pair =(CertifiedInterval(*cert.pin_box[0]), CertifiedInterval(*cert.pin_box[1]))
        s_canon = tuple(
            s_pair[j] if w.reflections[j] > 0 else -s_pair[j] for j in range(2)
        )
        (u1, e1), (u2, e2) = canon
        curve = PinCurve(cert.phi, s_canon, t_box, w.branch, w.bracket)  # type: ignore[arg-type]
        if cert.engine == "middle-thirds":
            violations.extend(_verify_middle_thirds(cert, curve, restricted, active))
        else:
            violations.extend(_verify_thickness_engine(cert, curve, canon, frame, active))
        if cert.engine != "middle-thirds":
            decreasing = curve.derivative(CertifiedInterval.exact(u1)).certainly_negative()
        else:
            decreasing = True
        if _orientation(curve, u1, e1, u2, e2, decreasing) != w.orientation:
            violations.append("linked-window inequalities do not hold over the pin box and target interval")
    except (*_SEARCH_ERRORS, PinWiggleError) as exc:
        violations.append(f"re-verification error: {exc}")
    return violations


def _verify_thickness_engine(
    cert: PinCertificate, curve: PinCurve, canon: list[Interval], frame: _Frame, params: SearchParameters
) -> list[str]:
    w = cert.witness
    out: list[str] = []
    kt1 = restrict(frame.k1, canon[0])
    kt2 = restrict(frame.k2, canon[1])
    if _tau_or_none(kt2) != w.tau_tilde2:
        out.append("recorded thickness of the second window is wrong")
    if _tau_or_none(kt1) != w.tau_tilde1:
        out.append("recorded thickness of the first window is wrong")
    if cert.engine == "affine":
        certified_ratio_deviation(curve, canon[0], budget=1)
        bound = _tau_or_none(kt1)
    else:
        if w.epsilon is None or not 0 < w.epsilon < 1:
            return out + ["epsilon missing or outside (0,1)"]
        deviation = certified_ratio_deviation(curve, canon[0], budget=params.ratio_pieces, target=w.epsilon)
        if not deviation < w.epsilon:
            out.append("derivative ratio deviation is not certified below epsilon")
        bound = None if len(kt1.intervals) < 2 else epsilon_thickness(kt1, w.epsilon).tau_eps * (1 - w.epsilon)
    if bound != w.image_bound:
        out.append("recorded image thickness bound is wrong")
    if not _product_ok(w.image_bound, w.tau_tilde2, cert.engine):
        out.append("thickness product of the windows does not exceed the threshold")
    if cert.phi.kind not in {"euclidean", "dot"}:
        verdict = certify_derivative_condition(
            cert.phi, cert.pin_box, (cert.windows[0], cert.windows[1]), budget=params.derivative_budget
        )
        if not verdict.ok:
            out.append("derivative condition fails on the pin box and windows")
    return out


def _verify_middle_thirds(
    cert: PinCertificate, curve: PinCurve, restricted: tuple[StageSet, StageSet], params: SearchParameters
) -> list[str]:
    out: list[str] = []
    k1, k2 = restricted
    if not (is_middle_thirds_section(k1) and is_middle_thirds_section(k2)):
        out.append("windows are not middle-thirds sections")
    w = cert.witness
    if (w.tau_tilde1, w.tau_tilde2) != (_tau_or_none(k1), _tau_or_none(k2)):
        out.append("recorded section thickness is wrong")
    if w.epsilon is not None or w.image_bound is not None:
        out.append("the gap-sequence engine records no epsilon or image bound")
    box = (cert.windows[0], cert.windows[1])
    apexes = [(x, y) for x in cert.pin_box[0] for y in cert.pin_box[1]]
    if not all(wedge_contains_box(box, apex) for apex in apexes):
        out.append("section box leaves the wedge of some pin in the box")
    try:
        certify_slope_between(curve, k1.hull, Fraction(1), Fraction(3), params.derivative_budget)
    except GeometryError:
        out.append("slope of the pin curves is not certified inside (1, 3)")
    return out


def verify_dot_certificate(cert: DotPinCertificate, k1: StageSet, k2: StageSet) -> list[str]:
    violations: list[str] = []
    if cert.pin[0] == 0 or cert.pin[1] == 0:
        violations.append("pin lies on an axis")
    smallest = min(abs(cert.pin[0]), abs(cert.pin[1]))
    if not 0 <= cert.delta < smallest / 3:
        violations.append("delta is outside the admissible range")
    box = ((cert.pin[0] - cert.delta, cert.pin[0] + cert.delta), (cert.pin[1] - cert.delta, cert.pin[1] + cert.delta))
    if box != cert.pin_box:
        violations.append("pin box does not match pin and delta")
    if (k1.hull[0], k2.hull[0]) != cert.hull_starts or (
        k1.hull[1] - k1.hull[0],
        k2.hull[1] - k2.hull[0],
    ) != cert.hull_lengths:
        violations.append("hull data does not match the rebuilt sets")
    lower, upper = dot_window_for_box(cert.pin_box, (k1.hull, k2.hull))
    allowed = upper if cert.branch == "upper" else lower
    lo, hi = cert.t_interval
    if not (lo < hi and allowed[0] <= lo and hi <= allowed[1]):
        violations.append("target interval is not inside the linked t-window")
    tau1, tau2 = _tau_or_none(k1), _tau_or_none(k2)
    if tau1 is not None and tau2 is not None and tau1 * tau2 < 1:
        violations.append("thickness product is below 1")
    return violations
