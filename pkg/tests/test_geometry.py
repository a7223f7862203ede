from __future__ import annotations

from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.cantor_core import build_middle_set
from app.geometry import (
    AffineMap,
    GeometryError,
    PhiSpec,
    PinCurve,
    as_pair,
    certified_ratio_deviation,
    certify_derivative_condition,
    eval_pin_curve,
    image_stage_thickness,
    image_thickness_lower_bound,
    parse_box,
    parse_phi_spec,
    render_box,
    solve_implicit_pin_curve,
    wedge_contains_box,
    wedge_member,
    wedge_slope_enclosure,
)
from app.intervals import CertifiedInterval

F = Fraction


def _mp(q: Fraction) -> mpmath.mpf:
    return mpmath.mpf(q.numerator) / q.denominator


@pytest.mark.parametrize(
    ("text", "kind", "rendered"),
    [
        ("dist", "euclidean", "dist"),
        ("Euclidean", "euclidean", "dist"),
        ("dot", "dot", "dot"),
        ("pnorm:3", "pnorm", "pnorm:3"),
        ("implicit:dist", "implicit", "implicit:dist"),
        ("implicit:pnorm:5/2", "implicit", "implicit:pnorm:5/2"),
    ],
)
def test_parse_phi_spec_kinds(text: str, kind: str, rendered: str) -> None:
    phi = parse_phi_spec(text)
    assert phi.kind == kind
    assert phi.render() == rendered


def test_implicit_family_follows_base() -> None:
    assert parse_phi_spec("implicit:dot").family == "dot"
    assert parse_phi_spec("implicit:pnorm:3").is_distance_like
    assert not parse_phi_spec("implicit:dist").has_closed_form
    assert parse_phi_spec("dist").has_closed_form


@pytest.mark.parametrize("text", ["cosine", "pnorm:1/2", "pnorm:x", "implicit:cosine", "pnorm:65"])
def test_parse_phi_spec_rejects_unknown(text: str) -> None:
    with pytest.raises(GeometryError) as exc_info:
        parse_phi_spec(text)
    assert exc_info.value.code == "parse_error"


def test_parse_box_round_trip() -> None:
    box = parse_box(" [0, 1/2] x [-1,3] ")
    assert box == ((F(0), F(1, 2)), (F(-1), F(3)))
    assert render_box(box) == "[0,1/2]x[-1,3]"
    with pytest.raises(GeometryError, match="reversed"):
        parse_box("[1,0]x[0,1]")
    with pytest.raises(GeometryError, match="look like"):
        parse_box("[0,1]")


def test_phi_values() -> None:
    origin = as_pair((0, 0))
    assert PhiSpec("euclidean").value(origin, as_pair((3, 4))) == CertifiedInterval.exact(5)
    assert PhiSpec("dot").value(as_pair((1, 2)), as_pair((3, 4))) == CertifiedInterval.exact(11)
    cube = PhiSpec("pnorm", p=F(3)).value(origin, as_pair((1, 2)))
    with mpmath.workdps(50):
        assert _mp(cube.lo) <= mpmath.cbrt(9) <= _mp(cube.hi)


def test_dot_lipschitz_factor_uses_pin_box() -> None:
    assert PhiSpec("dot").lipschitz_factor(((F(1), F(2)), (F(-3), F(1)))) == 5
    assert PhiSpec("euclidean").lipschitz_factor(((F(0), F(1)), (F(0), F(1)))) == F(3, 2)


def test_euclidean_pin_curve_closed_form() -> None:
    curve = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(5))
    assert curve.enclose(CertifiedInterval.exact(3)) == CertifiedInterval.exact(4)
    lower = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(5), branch=-1)
    assert lower.enclose(CertifiedInterval.exact(3)) == CertifiedInterval.exact(-4)
    assert curve.derivative(CertifiedInterval.exact(3)) == CertifiedInterval.exact(F(-3, 4))


def test_euclidean_pin_curve_domain_error() -> None:
    curve = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(1))
    with pytest.raises(GeometryError) as exc_info:
        curve.enclose(CertifiedInterval.exact(2))
    assert exc_info.value.code == "domain"


def test_dot_pin_curve_needs_off_axis_pin() -> None:
    curve = PinCurve(PhiSpec("dot"), as_pair((1, 0)), CertifiedInterval.exact(1))
    with pytest.raises(GeometryError) as exc_info:
        curve.enclose(CertifiedInterval.exact(0))
    assert exc_info.value.code == "axis_pin"
    line = PinCurve(PhiSpec("dot"), as_pair((1, 2)), CertifiedInterval.exact(3))
    assert line.affine
    assert line.enclose(CertifiedInterval.exact(1)) == CertifiedInterval.exact(1)


def test_pnorm_pin_curve_matches_mpmath() -> None:
    curve = PinCurve(PhiSpec("pnorm", p=F(3)), as_pair((0, 0)), CertifiedInterval.exact(2), bracket=(F(1), F(2)))
    value = eval_pin_curve(curve, 1, tol=F(1, 2**40))
    assert value.width <= F(1, 2**40)
    with mpmath.workdps(50):
        assert _mp(value.lo) <= mpmath.cbrt(7) <= _mp(value.hi)


def test_implicit_curve_without_bracket_is_refused() -> None:
    curve = PinCurve(PhiSpec("pnorm", p=F(3)), as_pair((0, 0)), CertifiedInterval.exact(2))
    with pytest.raises(GeometryError) as exc_info:
        curve.enclose(CertifiedInterval.exact(1))
    assert exc_info.value.code == "no_bracket"


def test_solver_agrees_with_closed_form() -> None:
    tol = F(1, 2**30)
    solved = solve_implicit_pin_curve(PhiSpec("euclidean"), (0, 0), 5, 3, tol, bracket=(F(1), F(5)))
    assert solved.contains(4)
    assert solved.width <= tol
    dot = solve_implicit_pin_curve(PhiSpec("dot"), (1, 2), 3, 1, tol, bracket=(F(-5), F(5)))
    assert dot.contains(1)


def test_solver_takes_bracket_from_domain_box() -> None:
    phi = parse_phi_spec("implicit:dist", domain_b="[0,5]x[1,5]")
    assert solve_implicit_pin_curve(phi, (0, 0), 5, 3, F(1, 2**20)).contains(4)
    with pytest.raises(GeometryError) as exc_info:
        solve_implicit_pin_curve(PhiSpec("euclidean"), (0, 0), 5, 3, F(1, 2**20))
    assert exc_info.value.code == "no_bracket"


def test_solver_without_sign_change_reports_no_bracket() -> None:
    with pytest.raises(GeometryError) as exc_info:
        solve_implicit_pin_curve(PhiSpec("euclidean"), (0, 0), 5, 3, F(1, 2**20), bracket=(F(9, 2), F(5)))
    assert exc_info.value.code == "no_bracket"


@settings(max_examples=60, derandomize=True, deadline=None)
@given(st.fractions(min_value=F(-4), max_value=F(4), max_denominator=64))
def test_euclidean_solver_encloses_closed_form(z: Fraction) -> None:
    exact = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(5)).enclose(
        CertifiedInterval.exact(z)
    )
    solved = solve_implicit_pin_curve(PhiSpec("euclidean"), (0, 0), 5, z, F(1, 2**24), bracket=(F(2), F(6)))
    assert solved.lo <= exact.hi and exact.lo <= solved.hi


def test_derivative_condition_holds_for_separated_boxes() -> None:
    verdict = certify_derivative_condition(
        PhiSpec("euclidean"), ((F(0), F(1, 10)), (F(0), F(1, 10))), ((F(1, 2), F(1)), (F(1, 2), F(1)))
    )
    assert verdict.ok
    assert verdict.m1 is not None and verdict.m1 > 0
    assert verdict.m2 is not None and verdict.m2 > 0
    assert verdict.witness is None


def test_derivative_condition_fails_when_gradient_vanishes() -> None:
    verdict = certify_derivative_condition(
        PhiSpec("euclidean"), ((F(0), F(1)), (F(0), F(1, 10))), ((F(0), F(1)), (F(1, 2), F(1)))
    )
    assert not verdict.ok
    assert verdict.witness is not None
    dot = certify_derivative_condition(PhiSpec("dot"), ((F(-1), F(1)), (F(1), F(2))), ((F(0), F(1)), (F(0), F(1))))
    assert not dot.ok


def test_dot_derivative_bounds_are_pin_coordinates() -> None:
    verdict = certify_derivative_condition(PhiSpec("dot"), ((F(1), F(2)), (F(3), F(4))), ((F(0), F(1)), (F(0), F(1))))
    assert verdict.ok
    assert (verdict.m1, verdict.m2) == (1, 3)


def test_affine_map_has_no_ratio_deviation() -> None:
    assert certified_ratio_deviation(AffineMap(F(3), F(1)), (F(0), F(1))) == 0


def test_image_thickness_bound_is_below_image_thickness() -> None:
    stage = build_middle_set(F(1, 5), (F(0), F(1)), 4)
    window = (F(21, 25), F(1))
    curve = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(3))
    bound = image_thickness_lower_bound(stage, window, curve, F(1, 4))
    assert 0 < bound <= image_stage_thickness(stage, window, curve)


def test_image_thickness_refuses_large_distortion() -> None:
    stage = build_middle_set(F(1, 5), (F(0), F(1)), 4)
    curve = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(3))
    with pytest.raises(GeometryError) as exc_info:
        image_thickness_lower_bound(stage, (F(1, 2), F(1)), curve, F(1, 100), budget=4)
    assert exc_info.value.code == "ratio_certification"


def test_wedge_membership() -> None:
    apex = (F(0), F(0))
    assert wedge_member((F(8, 9), F(2, 3)), apex)
    assert not wedge_member((F(1), F(1)), apex)
    assert not wedge_member((F(3), F(1)), apex)
    assert wedge_contains_box(((F(8, 9), F(1)), (F(1, 2), F(2, 3))), apex)
    assert not wedge_contains_box(((F(0), F(1)), (F(0), F(1))), apex)


def test_wedge_slope_enclosure_at_a_point() -> None:
    box = ((F(2), F(2)), (F(1), F(1)))
    apex = ((F(0), F(0)), (F(0), F(0)))
    assert wedge_slope_enclosure(box, apex) == CertifiedInterval.exact(2)


# g_{x,t} in t, sub-boxes, image thickness

targets = st.fractions(min_value=F(1), max_value=F(3), max_denominator=64)


@settings(max_examples=100, derandomize=True, deadline=None)
@given(targets, targets, st.fractions(min_value=F(0), max_value=F(1, 2), max_denominator=64))
def test_pin_curves_are_monotone_in_target(t1: Fraction, t2: Fraction, z: Fraction) -> None:
    if t1 == t2:
        return
    low, high = min(t1, t2), max(t1, t2)
    at = CertifiedInterval.exact(z)
    for phi, pin in ((PhiSpec("euclidean"), (0, 0)), (PhiSpec("dot"), (F(1, 2), 2))):
        upper_low = PinCurve(phi, as_pair(pin), CertifiedInterval.exact(low)).enclose(at)
        upper_high = PinCurve(phi, as_pair(pin), CertifiedInterval.exact(high)).enclose(at)
        assert upper_low.certainly_lt(upper_high)
    lower_low = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(low), branch=-1).enclose(at)
    lower_high = PinCurve(PhiSpec("euclidean"), as_pair((0, 0)), CertifiedInterval.exact(high), branch=-1).enclose(at)
    assert lower_high.certainly_lt(lower_low)


def _halves(side: tuple[Fraction, Fraction]) -> list[tuple[Fraction, Fraction]]:
    mid = (side[0] + side[1]) / 2
    return [(side[0], mid), (mid, side[1])]


@pytest.mark.parametrize("phi", [PhiSpec("euclidean"), PhiSpec("pnorm", p=F(3))])
def test_derivative_condition_holds_on_every_sub_box(phi: PhiSpec) -> None:
    box_a = ((F(0), F(1, 10)), (F(0), F(1, 10)))
    box_b = ((F(1, 2), F(1)), (F(1, 2), F(1)))
    whole = certify_derivative_condition(phi, box_a, box_b)
    assert whole.ok
    for a1 in _halves(box_a[0]):
        for a2 in _halves(box_a[1]):
            for b1 in _halves(box_b[0]):
                for b2 in _halves(box_b[1]):
                    part = certify_derivative_condition(phi, (a1, a2), (b1, b2))
                    assert part.ok
                    assert part.m1 is not None and part.m1 > 0
                    assert part.m2 is not None and part.m2 > 0


@st.composite
def image_instances(draw: st.DrawFn) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction], Fraction]:
    # a level-3 interval of the middle-fifth set inside [1/2, 1]
    corner = draw(st.sampled_from([F(3, 5) + F(3, 25) * i + F(6, 125) * j for i in (0, 2) for j in (0, 2)]))
    pin = (
        draw(st.fractions(min_value=F(-1, 2), max_value=F(0), max_denominator=32)),
        draw(st.fractions(min_value=F(-1, 2), max_value=F(0), max_denominator=32)),
    )
    target = draw(st.fractions(min_value=F(2), max_value=F(3), max_denominator=32))
    return (corner, corner + F(8, 125)), pin, target


@settings(max_examples=100, derandomize=True, deadline=None)
@given(image_instances())
def test_image_thickness_bound_never_exceeds_mapped_thickness(
    instance: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction], Fraction]
) -> None:
    window, pin, target = instance
    stage = build_middle_set(F(1, 5), (F(0), F(1)), 6)
    curve = PinCurve(PhiSpec("euclidean"), as_pair(pin), CertifiedInterval.exact(target))
    bound = image_thickness_lower_bound(stage, window, curve, F(1, 4))
    assert 0 < bound <= image_stage_thickness(stage, window, curve)
