from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from app.cantor_core import StageSet, build_set, parse_set_spec, spec_depth, with_depth
from app.geometry import PhiSpec
from app.logger import log_certificate_event
from app.pin_wiggle import DotPinCertificate, PinCertificate
from app.tree_mechanism import TreeCertificate, peel_order

logger = logging.getLogger(__name__)

PointMode = Literal["endpoints-left", "endpoints", "midpoints"]

DEFAULT_PIN_GRID = 128
DEFAULT_T_GRID = 128
DEFAULT_PAIR_CAP = 2**26
FLOAT_SLACK = 1e-9


class OracleRefusal(RuntimeError):
    def __init__(self, message: str, code: str = "pair_cap") -> None:
        super().__init__(message)
        self.code = code


@dataclass
class OracleReport:
    resolution: float
    checked_pins: int = 0
    checked_targets: int = 0
    max_residual: float = 0.0
    failures: list[dict[str, float]] = field(default_factory=list)
    rows: list[dict[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def enumerate_points(k1: StageSet, k2: StageSet, mode: PointMode = "endpoints-left") -> Iterator[tuple[float, float]]:
    """One point per pair of stage intervals, (#K1 intervals) * (#K2 intervals) in all.

    ``endpoints`` instead walks the union of both interval ends on each axis.
    """
    xs = _axis_points(k1, mode)
    ys = _axis_points(k2, mode)
    for x in xs:
        for y in ys:
            yield float(x), float(y)


def _axis_points(stage: StageSet, mode: PointMode) -> np.ndarray:
    lo = np.array([float(a) for a in stage.los])
    hi = np.array([float(b) for b in stage.his])
    if mode == "endpoints-left":
        return lo
    if mode == "midpoints":
        return (lo + hi) / 2
    return np.unique(np.concatenate([lo, hi]))


def stage_points(k1: StageSet, k2: StageSet, mode: PointMode = "endpoints-left") -> np.ndarray:
    """All grid points of K1 x K2 at stage resolution, shape (N, 2)."""
    xs, ys = np.meshgrid(_axis_points(k1, mode), _axis_points(k2, mode), indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel()])


def phi_values(phi: PhiSpec, pin: tuple[float, float], points: np.ndarray) -> np.ndarray:
    if phi.family == "dot":
        return pin[0] * points[:, 0] + pin[1] * points[:, 1]
    d1 = np.abs(points[:, 0] - pin[0])
    d2 = np.abs(points[:, 1] - pin[1])
    if phi.family == "euclidean":
        return np.hypot(d1, d2)
    assert phi.p is not None
    p = float(phi.p)
    return (d1**p + d2**p) ** (1 / p)


def grid_resolution(phi: PhiSpec, k1: StageSet, k2: StageSet, pins: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]) -> float:
    width = max(k1.max_interval_width, k2.max_interval_width)
    return float(width * phi.lipschitz_factor(pins))


def _rebuild(descriptor: str, depth: int | None) -> StageSet:
    spec = parse_set_spec(descriptor)
    if depth is not None:
        certified = spec_depth(spec)
        if certified is not None and depth < certified:
            raise OracleRefusal(
                f"oracle depth {depth} is below the certificate depth {certified}", code="depth_refused"
            )
        spec = with_depth(spec, depth)
    return build_set(spec)


def oracle_sets(set1: str, set2: str, depth: int | None = None) -> tuple[StageSet, StageSet]:
    return _rebuild(set1, depth), _rebuild(set2, depth)


def _pin_lattice(box: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]], pin_grid: int) -> list[tuple[float, float]]:
    """Square lattice over the box with ceil(sqrt(pin_grid)) pins a side, so 128 becomes 12 x 12."""
    side = max(1, math.ceil(math.sqrt(pin_grid)))
    xs = np.linspace(float(box[0][0]), float(box[0][1]), side)
    ys = np.linspace(float(box[1][0]), float(box[1][1]), side)
    return [(float(x), float(y)) for x in xs for y in ys]


def _target_grid(lo: Fraction, hi: Fraction, count: int, open_ends: bool) -> np.ndarray:
    if open_ends:
        return float(lo) + (float(hi) - float(lo)) * (np.arange(count) + 0.5) / count
    return np.linspace(float(lo), float(hi), count)


def _check_box(
    phi: PhiSpec,
    points: np.ndarray,
    box: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]],
    targets: np.ndarray,
    resolution: float,
    pin_grid: int,
    pair_cap: int,
    with_rows: bool,
) -> OracleReport:
    pins = _pin_lattice(box, pin_grid)
    if len(pins) * len(points) > pair_cap:
        raise OracleRefusal(f"{len(pins)} pins x {len(points)} points exceeds the pair cap {pair_cap}")
    report = OracleReport(resolution=resolution)
    for pin in pins:
        values = np.sort(phi_values(phi, pin, points))
        idx = np.clip(np.searchsorted(values, targets), 1, len(values) - 1)
        nearest = np.minimum(np.abs(values[idx] - targets), np.abs(values[idx - 1] - targets))
        if len(values) == 1:
            nearest = np.abs(values[0] - targets)
        report.checked_pins += 1
        report.checked_targets += len(targets)
        report.max_residual = max(report.max_residual, float(nearest.max()))
        for t, gap in zip(targets, nearest):
            if with_rows:
                report.rows.append({"x1": pin[0], "x2": pin[1], "t": float(t), "residual": float(gap)})
            if gap > resolution + FLOAT_SLACK:
                report.failures.append({"x1": pin[0], "x2": pin[1], "t": float(t), "residual": float(gap)})
    return report


def check_pin_certificate(
    cert: PinCertificate,
    depth: int | None = None,
    pin_grid: int = DEFAULT_PIN_GRID,
    t_grid: int = DEFAULT_T_GRID,
    pair_cap: int = DEFAULT_PAIR_CAP,
    mode: PointMode = "endpoints-left",
    with_rows: bool = False,
) -> OracleReport:
    """Every (pin, t) on a grid over S x T has a stage point within the resolution."""
    k1, k2 = oracle_sets(cert.set1, cert.set2, depth)
    points = stage_points(k1, k2, mode)
    resolution = grid_resolution(cert.phi, k1, k2, cert.pin_box)
    targets = _target_grid(cert.t_interval.lo, cert.t_interval.hi, t_grid, open_ends=False)
    report = _check_box(cert.phi, points, cert.pin_box, targets, resolution, pin_grid, pair_cap, with_rows)
    log_certificate_event(
        logger, logging.INFO, "Oracle pass over pin certificate", stage="oracle", outcome=str(report.passed)
    )
    return report


def check_dot_certificate(
    cert: DotPinCertificate,
    depth: int | None = None,
    pin_grid: int = DEFAULT_PIN_GRID,
    t_grid: int = DEFAULT_T_GRID,
    pair_cap: int = DEFAULT_PAIR_CAP,
    mode: PointMode = "endpoints-left",
    with_rows: bool = False,
) -> OracleReport:
    phi = PhiSpec("dot")
    k1, k2 = oracle_sets(cert.set1, cert.set2, depth)
    points = stage_points(k1, k2, mode)
    resolution = grid_resolution(phi, k1, k2, cert.pin_box)
    targets = _target_grid(cert.t_interval[0], cert.t_interval[1], t_grid, open_ends=True)
    return _check_box(phi, points, cert.pin_box, targets, resolution, pin_grid, pair_cap, with_rows)


def _tree_targets(cert: TreeCertificate, samples: int, seed: int) -> list[np.ndarray]:
    lows = np.array([float(i.lo) for i in cert.edge_intervals])
    highs = np.array([float(i.hi) for i in cert.edge_intervals])
    vectors = [(lows + highs) / 2]
    m = len(lows)
    if m <= 6:
        for mask in range(2**m):
            vectors.append(np.where([(mask >> b) & 1 for b in range(m)], highs, lows))
    rng = np.random.default_rng(seed)
    vectors.extend(lows + (highs - lows) * rng.random(m) for _ in range(samples))
    return vectors


def check_tree_certificate(
    cert: TreeCertificate,
    depth: int | None = None,
    samples: int = 16,
    seed: int = 0,
    mode: PointMode = "endpoints-left",
) -> OracleReport:
    """Realize target vectors greedily along the reverse peel order at stage resolution.

    Each edge is held to the stage resolution on its own; leaf candidates may sit
    one resolution outside their certified box.
    """
    k1, k2 = oracle_sets(cert.set1, cert.set2, depth)
    points = stage_points(k1, k2, mode)
    resolution = grid_resolution(cert.phi, k1, k2, (k1.hull, k2.hull))
    steps = peel_order(cert.tree)
    report = OracleReport(resolution=resolution)
    boxes = {}
    for v in range(1, cert.tree.vertex_count + 1):
        cx, cy = (float(c) for c in cert.skeleton[v - 1])
        r = float(cert.radii[v - 1]) + resolution
        inside = (np.abs(points[:, 0] - cx) <= r) & (np.abs(points[:, 1] - cy) <= r)
        boxes[v] = points[inside]
    for vector in _tree_targets(cert, samples, seed):
        placed = {steps[-1].pin: tuple(float(c) for c in cert.skeleton[steps[-1].pin - 1])}
        for step in reversed(steps):
            candidates = boxes[step.leaf]
            if len(candidates) == 0:
                report.failures.append({"edge": float(step.edge_index), "t": float(vector[step.edge_index]), "residual": math.inf})
                break
            values = phi_values(cert.phi, placed[step.pin], candidates)
            residuals = np.abs(values - vector[step.edge_index])
            best = int(np.argmin(residuals))
            report.checked_targets += 1
            report.max_residual = max(report.max_residual, float(residuals[best]))
            if residuals[best] > resolution + FLOAT_SLACK:
                report.failures.append(
                    {"edge": float(step.edge_index), "t": float(vector[step.edge_index]), "residual": float(residuals[best])}
                )
                break
            placed[step.leaf] = (float(candidates[best][0]), float(candidates[best][1]))
        report.checked_pins += 1
    return report


def brute_force_intersection(a: StageSet, b: StageSet) -> Fraction | None:
    """Least common point of two stage sets by a merge sweep, or None."""
    i = j = 0
    while i < len(a.intervals) and j < len(b.intervals):
        lo = max(a.intervals[i][0], b.intervals[j][0])
        hi = min(a.intervals[i][1], b.intervals[j][1])
        if lo <= hi:
            return lo
        if a.intervals[i][1] < b.intervals[j][1]:
            i += 1
        else:
            j += 1
    return None


def write_rows_csv(rows: list[dict[str, float]], path: str | Path) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["x1", "x2", "t", "residual"])
        writer.writeheader()
        writer.writerows(rows)
