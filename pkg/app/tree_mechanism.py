from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Callable, Literal

from app.cantor_core import (
    CantorCoreError,
    SectionSpec,
    StageSet,
    build_middle_set,
    parse_set_spec,
    render_set_spec,
    restrict,
)
from app.geometry import PhiSpec, as_pair, wedge_contains_box
from app.intervals import CertifiedInterval
from app.logger import log_certificate_event
from app.metrics import MetricsCollector
from app.pin_wiggle import (
    MAX_EXTRA_SECTION_LEVELS,
    Engine,
    PinCertificate,
    PinWiggleError,
    SearchParameters,
    middle_thirds_pin_window,
    verify_pin_certificate,
    wiggle_for_edge,
)

logger = logging.getLogger(__name__)

Point = tuple[Fraction, Fraction]
TreeMode = Literal["phi", "middle-thirds"]


class TreeError(RuntimeError):
    def __init__(self, message: str, code: str = "not_a_tree") -> None:
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Tree:
    """Tree on vertices 1..vertex_count with edges in input order."""

    vertex_count: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(cls, edges: list[tuple[int, int]] | tuple[tuple[int, int], ...], vertex_count: int | None = None) -> "Tree":
        pairs = tuple((int(a), int(b)) for a, b in edges)
        if not pairs:
            raise TreeError("a tree needs at least one edge")
        n = vertex_count if vertex_count is not None else max(max(e) for e in pairs)
        if len(pairs) != n - 1:
            raise TreeError(f"{n} vertices need {n - 1} edges, got {len(pairs)}")
        parent = list(range(n + 1))

        def find(v: int) -> int:
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for a, b in pairs:
            if not (1 <= a <= n and 1 <= b <= n):
                raise TreeError(f"edge ({a},{b}) uses a vertex outside 1..{n}")
            if a == b:
                raise TreeError(f"edge ({a},{b}) is a loop")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise TreeError(f"edge ({a},{b}) closes a cycle")
            parent[ra] = rb
        return cls(vertex_count=n, edges=pairs)

    @classmethod
    def chain(cls, k: int) -> "Tree":
        return cls.from_edges([(i, i + 1) for i in range(1, k + 1)])

    @classmethod
    def star(cls, leaves: int) -> "Tree":
        return cls.from_edges([(1, i) for i in range(2, leaves + 2)])


@dataclass(frozen=True)
class PeelStep:
    edge_index: int
    leaf: int
    pin: int


def peel_order(tree: Tree) -> list[PeelStep]:
    """Leaf removal sequence; the highest-numbered leaf goes first."""
    adjacency: dict[int, dict[int, int]] = {v: {} for v in range(1, tree.vertex_count + 1)}
    for idx, (a, b) in enumerate(tree.edges):
        adjacency[a][b] = idx
        adjacency[b][a] = idx
    steps: list[PeelStep] = []
    while len(steps) < len(tree.edges):
        leaf = max(v for v, nbrs in adjacency.items() if len(nbrs) == 1)
        (pin, idx), = adjacency[leaf].items()
        steps.append(PeelStep(edge_index=idx, leaf=leaf, pin=pin))
        del adjacency[pin][leaf]
        del adjacency[leaf]
    return steps


def chebyshev(a: Point, b: Point) -> Fraction:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def skeleton_epsilon(points: tuple[Point, ...] | list[Point]) -> Fraction:
    """Half the least pairwise Chebyshev distance; boxes of this radius are disjoint as open boxes."""
    return min(chebyshev(a, b) for a, b in combinations(points, 2)) / 2


def validate_skeleton(phi: PhiSpec, k1: StageSet, k2: StageSet, tree: Tree, points: tuple[Point, ...]) -> Fraction:
    if len(points) != tree.vertex_count:
        raise TreeError(f"skeleton has {len(points)} points for {tree.vertex_count} vertices", code="skeleton")
    if len(set(points)) != len(points):
        raise TreeError("skeleton points must be distinct", code="skeleton")
    for i, (y1, y2) in enumerate(points, start=1):
        if not (k1.contains(y1) and k2.contains(y2)):
            raise TreeError(f"skeleton point {i} = ({y1}, {y2}) is not in K1 x K2", code="skeleton")
        if phi.family == "dot" and (y1 == 0 or y2 == 0):
            raise TreeError(f"skeleton point {i} lies on a coordinate axis", code="skeleton")
    if phi.is_distance_like:
        for (i, a), (j, b) in combinations(enumerate(points, start=1), 2):
            if a[0] == b[0] or a[1] == b[1]:
                raise TreeError(f"skeleton points {i} and {j} share a coordinate", code="skeleton")
    return skeleton_epsilon(points)


@dataclass(frozen=True)
class TreeStep:
    edge_index: int
    leaf: int
    pin: int
    leaf_radius: Fraction
    pin_radius: Fraction
    certificate: PinCertificate


@dataclass(frozen=True)
class TreeCertificate:
    """Every vector of target values in the product of edge intervals is realized by the tree.

    Realizing configurations keep vertex v inside the box of half-width
    ``radii[v - 1]`` around its skeleton point.
    """

    mode: TreeMode
    phi: PhiSpec
    set1: str
    set2: str
    tree: Tree
    skeleton: tuple[Point, ...]
    epsilon: Fraction
    resolution: Fraction
    edge_intervals: tuple[CertifiedInterval, ...]
    radii: tuple[Fraction, ...]
    steps: tuple[TreeStep, ...]
    limit_valid: bool


def stage_resolution(phi: PhiSpec, k1: StageSet, k2: StageSet) -> Fraction:
    width = max(k1.max_interval_width, k2.max_interval_width)
    return width * phi.lipschitz_factor((k1.hull, k2.hull))


def _shrunk_radius(radius: Fraction, bound: Fraction) -> Fraction:
    while radius > bound:
        radius /= 2
    return radius


def _run_steps(
    tree: Tree,
    skeleton: tuple[Point, ...],
    epsilon: Fraction,
    wiggle: Callable[[Point, Point, Fraction], PinCertificate],
) -> tuple[tuple[TreeStep, ...], list[Fraction]]:
    radii = [epsilon] * tree.vertex_count
    steps: list[TreeStep] = []
    for step in peel_order(tree):
        leaf_radius = radii[step.leaf - 1]
        leaf_point, pin_point = skeleton[step.leaf - 1], skeleton[step.pin - 1]
        try:
            cert = wiggle(leaf_point, pin_point, leaf_radius)
        except PinWiggleError as exc:
            raise TreeError(
                f"edge {tree.edges[step.edge_index]} (leaf {step.leaf}, pin {step.pin}) failed: {exc}",
                code=exc.code,
            ) from exc
        half = cert.pin_box[0][1] - cert.pin[0]
        radii[step.pin - 1] = _shrunk_radius(radii[step.pin - 1], half)
        steps.append(
            TreeStep(
                edge_index=step.edge_index,
                leaf=step.leaf,
                pin=step.pin,
                leaf_radius=leaf_radius,
                pin_radius=radii[step.pin - 1],
                certificate=cert,
            )
        )
        log_certificate_event(
            logger,
            logging.INFO,
            "Tree edge certified",
            edge=f"{step.leaf}-{step.pin}",
            stage="tree",
            outcome="certified",
        )
    return tuple(steps), radii


def _edge_intervals(tree: Tree, steps: tuple[TreeStep, ...]) -> tuple[CertifiedInterval, ...]:
    by_edge = {s.edge_index: s.certificate.t_interval for s in steps}
    return tuple(by_edge[i] for i in range(len(tree.edges)))


def certify_tree(
    phi: PhiSpec,
    k1: StageSet,
    k2: StageSet,
    tree: Tree,
    skeleton: tuple[Point, ...] | list[Point],
    params: SearchParameters | None = None,
    metrics: MetricsCollector | None = None,
    engine: Engine | None = None,
) -> TreeCertificate:
    """Peel the tree leaf by leaf, wiggling each leaf's pin; no backtracking on failure."""
    points = tuple((Fraction(a), Fraction(b)) for a, b in skeleton)
    epsilon = validate_skeleton(phi, k1, k2, tree, points)
    resolution = stage_resolution(phi, k1, k2)
    active = params or SearchParameters()

    def wiggle(leaf: Point, pin: Point, radius: Fraction) -> PinCertificate:
        return wiggle_for_edge(phi, k1, k2, leaf, pin, radius, resolution, active, metrics, engine)

    steps, radii = _run_steps(tree, points, epsilon, wiggle)
    return TreeCertificate(
        mode="phi",
        phi=phi,
        set1=k1.descriptor,
        set2=k2.descriptor,
        tree=tree,
        skeleton=points,
        epsilon=epsilon,
        resolution=resolution,
        edge_intervals=_edge_intervals(tree, steps),
        radii=tuple(radii),
        steps=steps,
        limit_valid=all(s.certificate.limit_valid for s in steps),
    )


def middle_thirds_skeleton(k: int) -> tuple[Point, ...]:
    """k+1 points, each later point inside the slope wedge of every earlier one."""
    if k < 1:
        raise TreeError("k must be at least 1", code="skeleton")
    points = [(Fraction(0), Fraction(0))]
    for i in range(1, k + 1):
        scale = Fraction(1, 9 ** (i - 1))
        x, y = points[-1]
        points.append((x + scale * Fraction(8, 9), y + scale * Fraction(6, 9)))
    return tuple(points)


def _assign_in_reverse_peel(tree: Tree, points: tuple[Point, ...]) -> tuple[Point, ...]:
    steps = peel_order(tree)
    order = [steps[-1].pin] + [s.leaf for s in reversed(steps)]
    assigned: dict[int, Point] = {v: points[i] for i, v in enumerate(order)}
    return tuple(assigned[v] for v in range(1, tree.vertex_count + 1))


def _section_level(radius: Fraction) -> int:
    level = 0
    while Fraction(1, 3**level) > radius:
        level += 1
    return level


def _wedge_sections(k1: StageSet, k2: StageSet, leaf: Point, pin: Point, radius: Fraction, depth: int) -> tuple[StageSet, StageSet]:
    level = _section_level(radius)
    while level <= depth + MAX_EXTRA_SECTION_LEVELS:
        side = Fraction(1, 3**level)
        box = ((leaf[0], leaf[0] + side), (leaf[1], leaf[1] + side))
        if wedge_contains_box(box, pin):
            return restrict(k1, box[0]), restrict(k2, box[1])
        level += 1
    raise TreeError(f"no section at leaf {leaf} fits the wedge of {pin}", code="wedge")


def certify_tree_middle_thirds(
    tree: Tree,
    depth: int,
    params: SearchParameters | None = None,
) -> TreeCertificate:
    """Tree certificate for distances in C x C, C the middle-thirds set, on the wedge skeleton."""
    k = build_middle_set(Fraction(1, 3), (Fraction(0), Fraction(1)), depth)
    phi = PhiSpec("euclidean")
    skeleton = _assign_in_reverse_peel(tree, middle_thirds_skeleton(tree.vertex_count - 1))
    epsilon = skeleton_epsilon(skeleton)
    resolution = stage_resolution(phi, k, k)
    active = params or SearchParameters()

    def wiggle(leaf: Point, pin: Point, radius: Fraction) -> PinCertificate:
        kt1, kt2 = _wedge_sections(k, k, leaf, pin, radius, depth)
        return middle_thirds_pin_window(kt1, kt2, pin, offset_cap=resolution, params=active)

    steps, radii = _run_steps(tree, skeleton, epsilon, wiggle)
    return TreeCertificate(
        mode="middle-thirds",
        phi=phi,
        set1=k.descriptor,
        set2=k.descriptor,
        tree=tree,
        skeleton=skeleton,
        epsilon=epsilon,
        resolution=resolution,
        edge_intervals=_edge_intervals(tree, steps),
        radii=tuple(radii),
        steps=steps,
        limit_valid=all(s.certificate.limit_valid for s in steps),
    )


def _inside_box(window: tuple[Fraction, Fraction], center: Fraction, radius: Fraction) -> bool:
    return center - radius <= window[0] and window[1] <= center + radius


def _leaf_section(k: StageSet, descriptor: str, center: Fraction, radius: Fraction) -> StageSet:
    spec = parse_set_spec(descriptor)
    if not isinstance(spec, SectionSpec) or render_set_spec(spec.base) != k.descriptor:
        raise TreeError(f"{descriptor} is not a section of {k.descriptor}", code="wedge")
    if not _inside_box(spec.window, center, radius):
        raise TreeError(f"section {descriptor} leaves the leaf box", code="wedge")
    return restrict(k, spec.window)


def verify_tree_certificate(
    cert: TreeCertificate, k1: StageSet, k2: StageSet, params: SearchParameters | None = None
) -> list[str]:
    """Replay the radius bookkeeping and recheck every embedded pin certificate."""
    violations: list[str] = []
    try:
        tree = Tree.from_edges(cert.tree.edges, cert.tree.vertex_count)
    except TreeError as exc:
        return [f"tree is invalid: {exc}"]
    if cert.mode == "phi":
        try:
            epsilon = validate_skeleton(cert.phi, k1, k2, tree, cert.skeleton)
        except TreeError as exc:
            return [f"skeleton is invalid: {exc}"]
    else:
        epsilon = skeleton_epsilon(cert.skeleton)
    if epsilon != cert.epsilon:
        violations.append("epsilon is not half the least Chebyshev distance of the skeleton")
    if len(cert.steps) != len(tree.edges):
        return violations + ["number of steps differs from the number of edges"]
    radii = [epsilon] * tree.vertex_count
    for expected, step in zip(peel_order(tree), cert.steps):
        label = f"edge {tree.edges[step.edge_index]}"
        if (expected.edge_index, expected.leaf, expected.pin) != (step.edge_index, step.leaf, step.pin):
            violations.append(f"{label}: step is out of peel order")
            continue
        if step.leaf_radius != radii[step.leaf - 1]:
            violations.append(f"{label}: leaf radius does not match the replayed radius")
        pin_cert = step.certificate
        leaf_point, pin_point = cert.skeleton[step.leaf - 1], cert.skeleton[step.pin - 1]
        if pin_cert.pin != pin_point:
            violations.append(f"{label}: pin certificate is not centered on the pin vertex")
        for j in range(2):
            if not _inside_box(pin_cert.windows[j], leaf_point[j], step.leaf_radius):
                violations.append(f"{label}: window {j + 1} leaves the leaf box")
        half = pin_cert.pin_box[0][1] - pin_cert.pin[0]
        previous = radii[step.pin - 1]
        ratio = previous / step.pin_radius if step.pin_radius > 0 else Fraction(0)
        if not (step.pin_radius <= half and ratio >= 1 and ratio.denominator == 1 and ratio.numerator & (ratio.numerator - 1) == 0):
            violations.append(f"{label}: pin radius is not a dyadic shrink inside the pin box")
        radii[step.pin - 1] = step.pin_radius
        if cert.edge_intervals[step.edge_index] != pin_cert.t_interval:
            violations.append(f"{label}: edge interval differs from the step target interval")
        t0 = cert.phi.value(as_pair(pin_point), as_pair(leaf_point))
        t_box = pin_cert.t_interval
        gap = max(Fraction(0), t_box.lo - t0.hi, t0.lo - t_box.hi)
        if gap > cert.resolution:
            violations.append(f"{label}: skeleton value is farther than the resolution from the edge interval")
        if cert.mode == "middle-thirds":
            try:
                sets = (
                    _leaf_section(k1, pin_cert.set1, leaf_point[0], step.leaf_radius),
                    _leaf_section(k2, pin_cert.set2, leaf_point[1], step.leaf_radius),
                )
            except (TreeError, CantorCoreError) as exc:
                violations.append(f"{label}: {exc}")
                continue
        else:
            sets = (k1, k2)
        violations.extend(f"{label}: {v}" for v in verify_pin_certificate(pin_cert, sets[0], sets[1], params))
    if tuple(radii) != cert.radii:
        violations.append("final radii do not match the replayed radii")
    return violations
