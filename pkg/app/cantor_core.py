from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Final, Literal, Union

import mpmath

Side = Literal["left", "right"]
Interval = tuple[Fraction, Fraction]

SPEC_PREFIXES: Final[tuple[str, ...]] = ("middle:", "explicit:", "section:")


class CantorCoreError(ValueError):
    def __init__(self, message: str, code: str = "invalid_set") -> None:
        super().__init__(message)
        self.code = code


class SetSpecError(ValueError):
    def __init__(self, message: str, position: int, code: str = "parse_error") -> None:
        super().__init__(f"{message} at position {position}")
        self.position = position
        self.code = code


# construction descriptors


@dataclass(frozen=True)
class MiddleSpec:
    ratio: Fraction
    hull: Interval
    depth: int


@dataclass(frozen=True)
class ExplicitSpec:
    intervals: tuple[Interval, ...]


@dataclass(frozen=True)
class SectionSpec:
    base: "SetSpec"
    window: Interval


SetSpec = Union[MiddleSpec, ExplicitSpec, SectionSpec]


def _fmt(q: Fraction) -> str:
    return str(Fraction(q))


def _fmt_interval(pair: Interval) -> str:
    return f"[{_fmt(pair[0])},{_fmt(pair[1])}]"


def render_set_spec(spec: SetSpec) -> str:
    if isinstance(spec, MiddleSpec):
        return f"middle:{_fmt(spec.ratio)}@{_fmt_interval(spec.hull)}#{spec.depth}"
    if isinstance(spec, ExplicitSpec):
        return "explicit:{" + ",".join(_fmt_interval(pair) for pair in spec.intervals) + "}"
    return f"section:{render_set_spec(spec.base)}/{_fmt_interval(spec.window)}"


class _SetSpecParser:
    """Recursive descent over the set-spec grammar; whitespace is ignored."""

    def __init__(self, text: str) -> None:
        self.text = "".join(text.split())
        self.pos = 0

    def parse(self) -> SetSpec:
        spec = self._spec()
        if self.pos != len(self.text):
            raise SetSpecError(f"unexpected trailing input {self.text[self.pos:]!r}", self.pos)
        return spec

    def _peek(self, token: str) -> bool:
        return self.text.startswith(token, self.pos)

    def _expect(self, token: str) -> None:
        if not self._peek(token):
            found = self.text[self.pos : self.pos + len(token)] or "end of input"
            raise SetSpecError(f"expected {token!r}, found {found!r}", self.pos)
        self.pos += len(token)

    def _digits(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            raise SetSpecError("expected digits", start)
        return self.text[start : self.pos]

    def _integer(self) -> int:
        return int(self._digits())

    def _rational(self) -> Fraction:
        negative = False
        if self._peek("-"):
            negative = True
            self.pos += 1
        numerator = int(self._digits())
        denominator = 1
        if self._peek("/") and self.pos + 1 < len(self.text) and self.text[self.pos + 1].isdigit():
            self.pos += 1
            start = self.pos
            denominator = int(self._digits())
            if denominator == 0:
                raise SetSpecError("zero denominator", start)
        value = Fraction(numerator, denominator)
        return -value if negative else value

    def _interval(self) -> Interval:
        start = self.pos
        self._expect("[")
        lo = self._rational()
        self._expect(",")
        hi = self._rational()
        self._expect("]")
        if lo > hi:
            raise SetSpecError("interval lower end exceeds upper end", start)
        return lo, hi

    def _spec(self) -> SetSpec:
        if self._peek("middle:"):
            self.pos += len("middle:")
            ratio = self._rational()
            self._expect("@")
            hull = self._interval()
            self._expect("#")
            depth = self._integer()
            return MiddleSpec(ratio=ratio, hull=hull, depth=depth)
        if self._peek("explicit:"):
            self.pos += len("explicit:")
            self._expect("{")
            intervals = [self._interval()]
            while self._peek(","):
                self.pos += 1
                intervals.append(self._interval())
            self._expect("}")
            return ExplicitSpec(intervals=tuple(intervals))
        if self._peek("section:"):
            self.pos += len("section:")
            base = self._spec()
            self._expect("/")
            window = self._interval()
            return SectionSpec(base=base, window=window)
        raise SetSpecError(f"expected one of {', '.join(SPEC_PREFIXES)}", self.pos)


def parse_set_spec(text: str) -> SetSpec:
    return _SetSpecParser(text).parse()


def with_depth(spec: SetSpec, depth: int) -> SetSpec:
    if isinstance(spec, MiddleSpec):
        return replace(spec, depth=depth)
    if isinstance(spec, SectionSpec):
        return replace(spec, base=with_depth(spec.base, depth))
    return spec


def spec_depth(spec: SetSpec) -> int | None:
    if isinstance(spec, MiddleSpec):
        return spec.depth
    if isinstance(spec, SectionSpec):
        return spec_depth(spec.base)
    return None


# stage sets


@dataclass(frozen=True)
class Gap:
    left: Fraction | None
    right: Fraction | None

    @property
    def bounded(self) -> bool:
        return self.left is not None and self.right is not None

    @property
    def width(self) -> Fraction | None:
        if self.left is None or self.right is None:
            return None
        return self.right - self.left


@dataclass(frozen=True)
class StageSet:
    """Finite union of disjoint closed intervals standing in for a Cantor set.

    ``limit_valid`` marks sets whose stage thickness equals the thickness of the
    limit construction (middle-ratio sets, their affine images and sections cut
    along construction intervals).
    """

    intervals: tuple[Interval, ...]
    provenance: SetSpec | None = None
    limit_valid: bool = False

    def __post_init__(self) -> None:
        normalized = tuple((Fraction(a), Fraction(b)) for a, b in self.intervals)
        if not normalized:
            raise CantorCoreError("a stage set needs at least one interval")
        for a, b in normalized:
            if a > b:
                raise CantorCoreError(f"interval [{a},{b}] has lower end above upper end")
        for (_, b), (a, _) in zip(normalized, normalized[1:]):
            if not b < a:
                raise CantorCoreError(f"intervals must be sorted and disjoint, {b} is not below {a}")
        object.__setattr__(self, "intervals", normalized)

    @classmethod
    def explicit(cls, intervals: list[Interval] | tuple[Interval, ...]) -> "StageSet":
        pairs = tuple((Fraction(a), Fraction(b)) for a, b in intervals)
        return cls(intervals=pairs, provenance=ExplicitSpec(pairs))

    @cached_property
    def los(self) -> tuple[Fraction, ...]:
        return tuple(a for a, _ in self.intervals)

    @cached_property
    def his(self) -> tuple[Fraction, ...]:
        return tuple(b for _, b in self.intervals)

    @property
    def hull(self) -> Interval:
        return self.intervals[0][0], self.intervals[-1][1]

    @property
    def descriptor(self) -> str:
        spec = self.provenance or ExplicitSpec(self.intervals)
        return render_set_spec(spec)

    @cached_property
    def gap_widths(self) -> tuple[Fraction, ...]:
        return tuple(self.los[i + 1] - self.his[i] for i in range(len(self.intervals) - 1))

    @property
    def max_interval_width(self) -> Fraction:
        return max(b - a for a, b in self.intervals)

    def locate(self, value: Fraction) -> int | None:
        """Index of the closed interval holding value, or None when value sits in a gap."""
        idx = bisect.bisect_right(self.los, value) - 1
        if idx >= 0 and value <= self.his[idx]:
            return idx
        return None

    def contains(self, value: Fraction) -> bool:
        return self.locate(Fraction(value)) is not None


def build_middle_set(ratio: Fraction | int, hull: Interval, depth: int) -> StageSet:
    r = Fraction(ratio)
    a, b = Fraction(hull[0]), Fraction(hull[1])
    if not 0 < r < 1:
        raise CantorCoreError(f"ratio must lie in (0,1), got {r}")
    if not a < b:
        raise CantorCoreError("hull must be a nondegenerate interval")
    if depth < 0:
        raise CantorCoreError("depth must be non-negative")
    side = (1 - r) / 2
    intervals: list[Interval] = [(a, b)]
    for _ in range(depth):
        nxt: list[Interval] = []
        for lo, hi in intervals:
            piece = (hi - lo) * side
            nxt.append((lo, lo + piece))
            nxt.append((hi - piece, hi))
        intervals = nxt
    return StageSet(tuple(intervals), MiddleSpec(r, (a, b), depth), limit_valid=True)


def middle_two_over_k(k: int, depth: int, hull: Interval = (Fraction(0), Fraction(1))) -> StageSet:
    """Middle-(2/k) construction; its thickness is (k-2)/4."""
    if k <= 2:
        raise CantorCoreError("k must exceed 2")
    return build_middle_set(Fraction(2, k), hull, depth)


def build_set(spec: SetSpec | str) -> StageSet:
    if isinstance(spec, str):
        spec = parse_set_spec(spec)
    if isinstance(spec, MiddleSpec):
        return build_middle_set(spec.ratio, spec.hull, spec.depth)
    if isinstance(spec, ExplicitSpec):
        return StageSet(spec.intervals, spec, limit_valid=False)
    return restrict(build_set(spec.base), spec.window)


def gaps(stage: StageSet) -> list[Gap]:
    result = [Gap(None, stage.los[0])]
    result.extend(Gap(stage.his[i], stage.los[i + 1]) for i in range(len(stage.intervals) - 1))
    result.append(Gap(stage.his[-1], None))
    return result


def bounded_gaps(stage: StageSet) -> list[Gap]:
    return [g for g in gaps(stage) if g.bounded]


def affine_image(stage: StageSet, scale: Fraction | int, shift: Fraction | int) -> StageSet:
    s, c = Fraction(scale), Fraction(shift)
    if s == 0:
        raise CantorCoreError("scale must be nonzero", code="invalid_scale")
    mapped = [(s * a + c, s * b + c) for a, b in stage.intervals]
    if s < 0:
        mapped = [(hi, lo) for lo, hi in reversed(mapped)]
    pairs = tuple(mapped)
    return StageSet(pairs, ExplicitSpec(pairs), limit_valid=stage.limit_valid)


def restrict(stage: StageSet, window: Interval) -> StageSet:
    lo, hi = Fraction(window[0]), Fraction(window[1])
    if lo > hi:
        raise CantorCoreError("window lower end exceeds upper end")
    if lo <= stage.hull[0] and stage.hull[1] <= hi:
        return stage
    clipped: list[Interval] = []
    intact = True
    for a, b in stage.intervals:
        if b < lo or a > hi:
            continue
        na, nb = max(a, lo), min(b, hi)
        if (na, nb) != (a, b):
            intact = False
        clipped.append((na, nb))
    if not clipped:
        raise CantorCoreError(
            f"window [{lo},{hi}] misses the set {stage.descriptor}", code="empty_intersection"
        )
    base = stage.provenance or ExplicitSpec(stage.intervals)
    return StageSet(tuple(clipped), SectionSpec(base, (lo, hi)), limit_valid=stage.limit_valid and intact)


# bridges and thickness


def _next_greater(widths: tuple[Fraction, ...]) -> list[int]:
    n = len(widths)
    out = [n] * n
    stack: list[int] = []
    for k in range(n - 1, -1, -1):
        while stack and widths[stack[-1]] <= widths[k]:
            stack.pop()
        out[k] = stack[-1] if stack else n
        stack.append(k)
    return out


def _previous_greater(widths: tuple[Fraction, ...]) -> list[int]:
    out = [-1] * len(widths)
    stack: list[int] = []
    for k, w in enumerate(widths):
        while stack and widths[stack[-1]] <= w:
            stack.pop()
        out[k] = stack[-1] if stack else -1
        stack.append(k)
    return out


def _qualifies(width: Fraction, gap_width: Fraction, epsilon: Fraction) -> bool:
    if epsilon == 0:
        return width >= gap_width
    return width > (1 - epsilon) * gap_width


def bridge_terminators(stage: StageSet, epsilon: Fraction = Fraction(0)) -> tuple[list[int], list[int]]:
    """Terminating gap indices per bounded gap, for right-side and left-side bridges.

    Bounded gap j sits between intervals j and j+1. A right terminator equal to
    the number of bounded gaps, or a left terminator of -1, is the unbounded gap.
    """
    widths = stage.gap_widths
    n = len(widths)
    nxt = _next_greater(widths)
    prv = _previous_greater(widths)
    right_term = [n] * n
    left_term = [-1] * n
    for j, w in enumerate(widths):
        k = j + 1
        # widths up to the next strictly greater gap cannot qualify either
        while k < n and not _qualifies(widths[k], w, epsilon):
            k = nxt[k]
        right_term[j] = k
        k = j - 1
        while k >= 0 and not _qualifies(widths[k], w, epsilon):
            k = prv[k]
        left_term[j] = k
    return right_term, left_term


@dataclass(frozen=True)
class ThicknessEntry:
    endpoint: Fraction
    side: Side
    gap: Interval
    gap_width: Fraction
    bridge: Interval
    bridge_width: Fraction

    @property
    def ratio(self) -> Fraction:
        return self.bridge_width / self.gap_width


@dataclass(frozen=True)
class ThicknessReport:
    entries: tuple[ThicknessEntry, ...]
    tau: Fraction
    argmin: ThicknessEntry


@dataclass(frozen=True)
class EpsilonThicknessReport:
    epsilon: Fraction
    entries: tuple[ThicknessEntry, ...]
    tau_eps: Fraction
    argmin: ThicknessEntry
    classical_tau: Fraction = field(default=Fraction(0))


def _entries(stage: StageSet, epsilon: Fraction) -> tuple[ThicknessEntry, ...]:
    right_term, left_term = bridge_terminators(stage, epsilon)
    los, his = stage.los, stage.his
    entries: list[ThicknessEntry] = []
    for j, w in enumerate(stage.gap_widths):
        gap = (his[j], los[j + 1])
        left_end = los[left_term[j] + 1]
        entries.append(ThicknessEntry(his[j], "left", gap, w, (left_end, his[j]), his[j] - left_end))
        right_end = his[right_term[j]]
        entries.append(ThicknessEntry(los[j + 1], "right", gap, w, (los[j + 1], right_end), right_end - los[j + 1]))
    return tuple(entries)


def _require_bounded_gap(stage: StageSet) -> None:
    if len(stage.intervals) < 2:
        raise CantorCoreError(
            f"thickness is undefined for {stage.descriptor}: no bounded gaps", code="undefined_thickness"
        )


def thickness(stage: StageSet) -> ThicknessReport:
    _require_bounded_gap(stage)
    entries = _entries(stage, Fraction(0))
    best = min(entries, key=lambda e: e.ratio)
    return ThicknessReport(entries=entries, tau=best.ratio, argmin=best)


def _check_epsilon(epsilon: Fraction) -> Fraction:
    eps = Fraction(epsilon)
    if not 0 < eps < 1:
        raise CantorCoreError(f"epsilon must lie in (0,1), got {eps}", code="invalid_epsilon")
    return eps


def epsilon_thickness(stage: StageSet, epsilon: Fraction) -> EpsilonThicknessReport:
    eps = _check_epsilon(epsilon)
    _require_bounded_gap(stage)
    entries = _entries(stage, eps)
    best = min(entries, key=lambda e: e.ratio)
    return EpsilonThicknessReport(
        epsilon=eps, entries=entries, tau_eps=best.ratio, argmin=best, classical_tau=thickness(stage).tau
    )


def bridge(stage: StageSet, endpoint: Fraction, epsilon: Fraction = Fraction(0), side: Side | None = None) -> Interval:
    u = Fraction(endpoint)
    eps = Fraction(epsilon)
    if not 0 <= eps < 1:
        raise CantorCoreError(f"epsilon must lie in [0,1), got {eps}", code="invalid_epsilon")
    his, los = stage.his, stage.los
    n_gaps = len(stage.intervals) - 1
    # u closes gap j on its left when u == his[j]; opens gap j-1 on its right when u == los[j]
    idx_left = bisect.bisect_left(his, u)
    as_left = idx_left < n_gaps and his[idx_left] == u
    idx_right = bisect.bisect_left(los, u)
    as_right = 1 <= idx_right <= n_gaps and los[idx_right] == u
    if side is None:
        if as_left and as_right:
            raise CantorCoreError(f"{u} ends two gaps; pass side to choose one", code="not_gap_endpoint")
        side = "left" if as_left else "right"
    if side == "left" and not as_left or side == "right" and not as_right:
        raise CantorCoreError(f"{u} is not a {side} gap endpoint of {stage.descriptor}", code="not_gap_endpoint")
    right_term, left_term = bridge_terminators(stage, eps)
    if side == "left":
        return los[left_term[idx_left] + 1], u
    gap_index = idx_right - 1
    return u, his[right_term[gap_index]]


def epsilon_threshold(stage: StageSet) -> Fraction:
    """Largest e with every epsilon-bridge equal to the classical bridge for epsilon < e."""
    _require_bounded_gap(stage)
    widths = stage.gap_widths
    right_term, left_term = bridge_terminators(stage)
    threshold = Fraction(1)
    for j, w in enumerate(widths):
        inner = [widths[k] for k in range(j + 1, min(right_term[j], len(widths)))]
        inner += [widths[k] for k in range(left_term[j] + 1, j)]
        if inner:
            threshold = min(threshold, 1 - max(inner) / w)
    return threshold


def hausdorff_lower_bound(tau: Fraction | int | float) -> float:
    """Lower bound log 2 / log(2 + 1/tau) on the Hausdorff dimension."""
    if tau <= 0:
        raise CantorCoreError("tau must be positive", code="invalid_tau")
    with mpmath.workdps(40):
        t = mpmath.mpf(tau.numerator) / tau.denominator if isinstance(tau, Fraction) else mpmath.mpf(tau)
        return float(mpmath.log(2) / mpmath.log(2 + 1 / t))


def product_dimension_lower_bound(tau: Fraction | int | float) -> float:
    return 2 * hausdorff_lower_bound(tau)
