from __future__ import annotations

from dataclasses import replace
from fractions import Fraction
from itertools import combinations

import pytest

from app.cantor_core import StageSet, restrict
from app.geometry import PhiSpec, wedge_contains_box
from app.tree_mechanism import (
    PeelStep,
    Tree,
    TreeCertificate,
    TreeError,
    certify_tree,
    certify_tree_middle_thirds,
    chebyshev,
    middle_thirds_skeleton,
    peel_order,
    skeleton_epsilon,
    validate_skeleton,
    verify_tree_certificate,
)

F = Fraction
CHAIN2 = ((F(0), F(0)), (F(2, 5), F(1)), (F(1), F(3, 5)))
STAR4 = ((F(0), F(0)), (F(2, 5), F(1)), (F(1), F(19, 25)), (F(19, 25), F(2, 5)))


@pytest.mark.parametrize(
    ("edges", "message"),
    [
        ([], "at least one edge"),
        ([(1, 2), (2, 3), (3, 1)], "need 2 edges"),
        ([(1, 2), (2, 1), (3, 4)], "cycle"),
        ([(1, 1), (2, 3)], "loop"),
    ],
)
def test_tree_rejects_bad_edges(edges: list[tuple[int, int]], message: str) -> None:
    with pytest.raises(TreeError, match=message) as exc_info:
        Tree.from_edges(edges)
    assert exc_info.value.code == "not_a_tree"


def test_tree_rejects_vertex_out_of_range() -> None:
    with pytest.raises(TreeError, match="outside"):
        Tree.from_edges([(1, 2), (2, 5)], vertex_count=3)


def test_named_trees() -> None:
    assert Tree.chain(2).edges == ((1, 2), (2, 3))
    assert Tree.chain(1).vertex_count == 2
    star = Tree.star(3)
    assert star.vertex_count == 4
    assert star.edges == ((1, 2), (1, 3), (1, 4))


def test_peel_order_removes_highest_leaf_first() -> None:
    assert peel_order(Tree.chain(2)) == [PeelStep(1, 3, 2), PeelStep(0, 2, 1)]
    assert [s.leaf for s in peel_order(Tree.star(3))] == [4, 3, 2]
    assert all(s.pin == 1 for s in peel_order(Tree.star(3)))


def test_peel_order_ends_at_vertex_one_for_chains() -> None:
    for k in range(1, 6):
        assert peel_order(Tree.chain(k))[-1].pin == 1


def test_skeleton_epsilon_is_half_least_chebyshev_distance() -> None:
    assert skeleton_epsilon(CHAIN2) == F(3, 10)
    assert skeleton_epsilon([(F(0), F(0)), (F(1), F(1, 4))]) == F(1, 2)


def test_validate_skeleton(middle_fifth: StageSet) -> None:
    phi = PhiSpec("euclidean")
    assert validate_skeleton(phi, middle_fifth, middle_fifth, Tree.chain(2), CHAIN2) == F(3, 10)
    assert validate_skeleton(phi, middle_fifth, middle_fifth, Tree.star(3), STAR4) > 0


@pytest.mark.parametrize(
    ("points", "message"),
    [
        (((F(0), F(0)), (F(1), F(1))), "2 points for 3 vertices"),
        (((F(0), F(0)), (F(1), F(1)), (F(0), F(0))), "distinct"),
        (((F(0), F(0)), (F(1, 2), F(1)), (F(1), F(3, 5))), "not in K1 x K2"),
        (((F(0), F(0)), (F(0), F(1)), (F(1), F(3, 5))), "share a coordinate"),
    ],
)
def test_validate_skeleton_errors(middle_fifth: StageSet, points: tuple[tuple[Fraction, Fraction], ...], message: str) -> None:
    with pytest.raises(TreeError, match=message) as exc_info:
        validate_skeleton(PhiSpec("euclidean"), middle_fifth, middle_fifth, Tree.chain(2), points)
    assert exc_info.value.code == "skeleton"


def test_dot_skeleton_may_share_coordinates_but_not_axes(middle_fifth: StageSet) -> None:
    phi = PhiSpec("dot")
    shared = ((F(1), F(1)), (F(1), F(3, 5)))
    assert validate_skeleton(phi, middle_fifth, middle_fifth, Tree.chain(1), shared) == F(1, 5)
    with pytest.raises(TreeError, match="axis"):
        validate_skeleton(phi, middle_fifth, middle_fifth, Tree.chain(1), ((F(0), F(1)), (F(1), F(1))))


def test_certify_tree_refuses_bad_skeleton(middle_fifth: StageSet) -> None:
    with pytest.raises(TreeError) as exc_info:
        certify_tree(PhiSpec("euclidean"), middle_fifth, middle_fifth, Tree.chain(1), [(F(1, 2), F(0)), (F(1), F(1))])
    assert exc_info.value.code == "skeleton"


def test_middle_thirds_skeleton_points_sit_in_each_wedge() -> None:
    points = middle_thirds_skeleton(3)
    assert points[:3] == ((F(0), F(0)), (F(8, 9), F(2, 3)), (F(80, 81), F(60, 81)))
    for i, apex in enumerate(points):
        for later in points[i + 1 :]:
            assert wedge_contains_box(((later[0], later[0]), (later[1], later[1])), apex)
    with pytest.raises(TreeError):
        middle_thirds_skeleton(0)


@pytest.mark.slow
def test_chain_certificate_verifies(chain_certificate: TreeCertificate, middle_fifth: StageSet) -> None:
    cert = chain_certificate
    assert len(cert.edge_intervals) == 2
    assert cert.epsilon == F(3, 10)
    assert [(s.leaf, s.pin) for s in cert.steps] == [(3, 2), (2, 1)]
    assert all(r <= cert.epsilon for r in cert.radii)
    assert verify_tree_certificate(cert, middle_fifth, middle_fifth) == []


@pytest.mark.slow
def test_tampered_radii_fail_verification(chain_certificate: TreeCertificate, middle_fifth: StageSet) -> None:
    tampered = replace(chain_certificate, radii=tuple(r * 2 for r in chain_certificate.radii))
    assert "final radii do not match the replayed radii" in verify_tree_certificate(tampered, middle_fifth, middle_fifth)


@pytest.mark.slow
@pytest.mark.parametrize(
    ("tree", "skeleton"),
    [(Tree.chain(1), ((F(0), F(0)), (F(1), F(1)))), (Tree.star(3), STAR4)],
)
def test_documented_skeletons_certify(tree: Tree, skeleton: tuple[tuple[Fraction, Fraction], ...], middle_fifth: StageSet) -> None:
    cert = certify_tree(PhiSpec("euclidean"), middle_fifth, middle_fifth, tree, skeleton)
    assert len(cert.steps) == len(tree.edges)
    assert verify_tree_certificate(cert, middle_fifth, middle_fifth) == []


@pytest.mark.slow
def test_middle_thirds_chain(middle_thirds_chain_certificate: TreeCertificate, middle_thirds: StageSet) -> None:
    cert = middle_thirds_chain_certificate
    assert cert.mode == "middle-thirds"
    assert len(cert.edge_intervals) == 3
    assert cert.skeleton[0] == (0, 0)
    assert verify_tree_certificate(cert, middle_thirds, middle_thirds) == []


@pytest.mark.slow
def test_middle_thirds_step_needs_a_section_at_its_leaf(
    middle_thirds_chain_certificate: TreeCertificate, middle_thirds: StageSet
) -> None:
    cert = middle_thirds_chain_certificate
    first = cert.steps[0]
    foreign = replace(first.certificate, set1=restrict(middle_thirds, (F(0), F(1, 3))).descriptor)
    tampered = replace(cert, steps=(replace(first, certificate=foreign), *cert.steps[1:]))
    violations = verify_tree_certificate(tampered, middle_thirds, middle_thirds)
    assert any("leaves the leaf box" in v for v in violations)


def _replayed_nesting(cert: TreeCertificate) -> None:
    eps = cert.epsilon
    for a, b in combinations(cert.skeleton, 2):
        # open boxes of radius eps around distinct skeleton points do not meet
        assert chebyshev(a, b) >= 2 * eps
    radii = [eps] * cert.tree.vertex_count
    for step in cert.steps:
        assert step.leaf_radius == radii[step.leaf - 1] <= eps
        pin_cert = step.certificate
        half = pin_cert.pin_box[0][1] - pin_cert.pin[0]
        assert step.pin_radius <= radii[step.pin - 1]
        assert step.pin_radius <= half
        leaf = cert.skeleton[step.leaf - 1]
        for j in range(2):
            lo, hi = pin_cert.windows[j]
            assert leaf[j] - step.leaf_radius <= lo and hi <= leaf[j] + step.leaf_radius
        radii[step.pin - 1] = step.pin_radius
    assert tuple(radii) == cert.radii


@pytest.mark.slow
def test_chain_boxes_are_disjoint_and_nested(chain_certificate: TreeCertificate) -> None:
    _replayed_nesting(chain_certificate)


@pytest.mark.slow
def test_middle_thirds_boxes_are_disjoint_and_nested(middle_thirds_chain_certificate: TreeCertificate) -> None:
    _replayed_nesting(middle_thirds_chain_certificate)
    assert all(0 < r <= middle_thirds_chain_certificate.epsilon for r in middle_thirds_chain_certificate.radii)


def test_skeleton_epsilon_boxes_touch_at_most() -> None:
    eps = skeleton_epsilon(STAR4)
    assert eps == min(chebyshev(a, b) for a, b in combinations(STAR4, 2)) / 2
    closest = [(a, b) for a, b in combinations(STAR4, 2) if chebyshev(a, b) == 2 * eps]
    assert closest
