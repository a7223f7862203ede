from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Final, Literal, Union

from app.cantor_core import CantorCoreError, SetSpecError, StageSet, build_set, parse_set_spec, spec_depth, with_depth
from app.certificates import CertificateFormatError
from app.config import SearchDefaults
from app.geometry import GeometryError, PhiSpec, parse_phi_spec
from app.intervals import IntervalDomainError, PrecisionError
from app.logger import log_certificate_event
from app.metrics import MetricsCollector
from app.mutation import MutationError
from app.newhouse import NewhouseError
from app.oracle import (
    DEFAULT_PAIR_CAP,
    DEFAULT_PIN_GRID,
    DEFAULT_T_GRID,
    OracleRefusal,
    OracleReport,
    check_dot_certificate,
    check_pin_certificate,
    check_tree_certificate,
)
from app.pin_wiggle import (
    DotPinCertificate,
    Engine,
    PinCertificate,
    PinWiggleError,
    SearchParameters,
    dot_pin_window,
    middle_thirds_pin_window,
    phi_pin_window,
    verify_dot_certificate,
    verify_pin_certificate,
)
from app.precision import PrecisionExhaustedError, counting_escalations
from app.tree_mechanism import (
    Tree,
    TreeCertificate,
    TreeError,
    certify_tree,
    certify_tree_middle_thirds,
    verify_tree_certificate,
)

logger = logging.getLogger(__name__)

Certificate = Union[PinCertificate, DotPinCertificate, TreeCertificate]
EngineChoice = Literal["auto", "thickness", "middle-thirds"]
Point = tuple[Fraction, Fraction]

EXIT_OK: Final[int] = 0
EXIT_USAGE: Final[int] = 2
EXIT_VERIFY_FAILED: Final[int] = 3
EXIT_THICKNESS: Final[int] = 4
EXIT_GEOMETRY: Final[int] = 5
EXIT_BUDGET: Final[int] = 6
EXIT_TREE: Final[int] = 7
EXIT_ORACLE: Final[int] = 8

_EXIT_BY_CODE: Final[dict[str, int]] = {
    "parse_error": EXIT_USAGE,
    "schema_mismatch": EXIT_USAGE,
    "descriptor_mismatch": EXIT_USAGE,
    "invalid_set": EXIT_USAGE,
    "invalid_epsilon": EXIT_USAGE,
    "invalid_scale": EXIT_USAGE,
    "empty_intersection": EXIT_USAGE,
    "undefined_thickness": EXIT_THICKNESS,
    "thickness_product": EXIT_THICKNESS,
    "not_linked": EXIT_THICKNESS,
    "not_gap_endpoint": EXIT_THICKNESS,
    "invalid_tau": EXIT_THICKNESS,
    "domain": EXIT_GEOMETRY,
    "derivative_condition": EXIT_GEOMETRY,
    "ratio_certification": EXIT_GEOMETRY,
    "no_bracket": EXIT_GEOMETRY,
    "axis_pin": EXIT_GEOMETRY,
    "delta_too_large": EXIT_GEOMETRY,
    "wedge": EXIT_GEOMETRY,
    "budget_exhausted": EXIT_BUDGET,
    "precision": EXIT_BUDGET,
    "precision_exhausted": EXIT_BUDGET,
    "skeleton": EXIT_TREE,
    "not_a_tree": EXIT_TREE,
    "pair_cap": EXIT_ORACLE,
    "depth_refused": EXIT_ORACLE,
}

_KNOWN_ERRORS = (
    CantorCoreError,
    SetSpecError,
    CertificateFormatError,
    MutationError,
    GeometryError,
    IntervalDomainError,
    PrecisionError,
    PrecisionExhaustedError,
    NewhouseError,
    PinWiggleError,
    TreeError,
    OracleRefusal,
)


def exit_code_for(exc: Exception) -> int:
    """Stable exit code for a failure; unknown codes fall back by error type."""
    code = getattr(exc, "code", None)
    if isinstance(code, str) and code in _EXIT_BY_CODE:
        return _EXIT_BY_CODE[code]
    if isinstance(exc, TreeError):
        return EXIT_TREE
    if isinstance(exc, OracleRefusal):
        return EXIT_ORACLE
    if isinstance(exc, (PrecisionError, PrecisionExhaustedError, PinWiggleError)):
        return EXIT_BUDGET
    if isinstance(exc, (GeometryError, IntervalDomainError)):
        return EXIT_GEOMETRY
    if isinstance(exc, (CantorCoreError, NewhouseError)):
        return EXIT_THICKNESS
    return EXIT_USAGE


def is_known_error(exc: Exception) -> bool:
    return isinstance(exc, _KNOWN_ERRORS)


def parse_point(text: str) -> Point:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise SetSpecError(f"point {text!r} must be written as x,y", 0)
    try:
        return Fraction(parts[0]), Fraction(parts[1])
    except (ValueError, ZeroDivisionError) as exc:
        raise SetSpecError(f"point {text!r} has a malformed coordinate", 0) from exc


def parse_rational(text: str, what: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise SetSpecError(f"{what} {text!r} is not a rational number", 0) from exc


def load_set(text: str, depth: int | None = None) -> StageSet:
    spec = parse_set_spec(text)
    if depth is not None:
        spec = with_depth(spec, depth)
    return build_set(spec)


_TREE_SHORTHAND = re.compile(r"^(chain|star):(\d+)$")


def load_tree(text: str, defaults: SearchDefaults | None = None) -> Tree:
    """Tree from 'chain:k', 'star:n', a named skeleton, or a file of 'a b' edge lines."""
    match = _TREE_SHORTHAND.match(text.strip())
    if match:
        size = int(match.group(2))
        return Tree.chain(size) if match.group(1) == "chain" else Tree.star(size)
    if defaults is not None and text in defaults.tree_edges:
        return Tree.from_edges(defaults.tree_edges[text])
    path = Path(text)
    if not path.exists():
        raise TreeError(f"tree {text!r} is neither a known name nor a readable file", code="not_a_tree")
    edges: list[tuple[int, int]] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        entry = line.split("#", 1)[0].replace(",", " ").split()
        if not entry:
            continue
        if len(entry) != 2 or not all(token.isdigit() for token in entry):
            raise TreeError(f"{path}:{number}: expected two vertex numbers", code="not_a_tree")
        edges.append((int(entry[0]), int(entry[1])))
    return Tree.from_edges(edges)


def load_skeleton(text: str, defaults: SearchDefaults | None = None) -> tuple[Point, ...]:
    if defaults is not None and text in defaults.skeletons:
        return defaults.skeletons[text]
    path = Path(text)
    if not path.exists():
        raise TreeError(f"skeleton {text!r} is neither a known name nor a readable file", code="skeleton")
    points: list[Point] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        entry = line.split("#", 1)[0].strip()
        if not entry:
            continue
        tokens = entry.replace(",", " ").split()
        if len(tokens) != 2:
            raise TreeError(f"{path}:{number}: expected two coordinates", code="skeleton")
        try:
            points.append((Fraction(tokens[0]), Fraction(tokens[1])))
        except (ValueError, ZeroDivisionError) as exc:
            raise TreeError(f"{path}:{number}: malformed coordinate", code="skeleton") from exc
    return tuple(points)


@dataclass(frozen=True)
class CertifyRequest:
    phi: str = "dist"
    set1: str = "middle:1/5@[0,1]#8"
    set2: str = "same"
    pin: str | None = None
    delta: str | None = None
    tree: str | None = None
    skeleton: str | None = None
    engine: EngineChoice = "auto"
    depth: int | None = None
    domain_a: str | None = None
    domain_b: str | None = None


def _middle_thirds_depth(request: CertifyRequest) -> int:
    if request.depth is not None:
        return request.depth
    depth = spec_depth(parse_set_spec(request.set1))
    return depth if depth is not None else 8


def issue_certificate(
    request: CertifyRequest,
    params: SearchParameters,
    defaults: SearchDefaults | None = None,
    metrics: MetricsCollector | None = None,
) -> Certificate:
    """Dispatch one certify request to the dot, pin, tree or middle-thirds engine."""
    started = time.perf_counter()
    phi: PhiSpec = parse_phi_spec(request.phi, request.domain_a, request.domain_b)
    if request.pin is None and request.tree is None:
        raise SetSpecError("certify needs --pin or --tree", 0)
    with counting_escalations(metrics):
        cert = _dispatch(request, phi, params, defaults, metrics)
    latency_ms = int((time.perf_counter() - started) * 1000)
    if metrics is not None:
        metrics.increment("certificates_emitted")
        metrics.observe_latency(latency_ms)
    log_certificate_event(
        logger, logging.INFO, "Certificate issued", command="certify", outcome=type(cert).__name__, latency_ms=latency_ms
    )
    return cert


def _dispatch(
    request: CertifyRequest,
    phi: PhiSpec,
    params: SearchParameters,
    defaults: SearchDefaults | None,
    metrics: MetricsCollector | None,
) -> Certificate:
    cert: Certificate
    if request.engine == "middle-thirds":
        if phi.kind != "euclidean":
            raise PinWiggleError("the middle-thirds engine covers euclidean distances only", code="wedge")
        if request.tree is not None:
            cert = certify_tree_middle_thirds(load_tree(request.tree, defaults), _middle_thirds_depth(request), params)
        else:
            assert request.pin is not None
            k1 = load_set(request.set1, request.depth)
            k2 = k1 if request.set2 == "same" else load_set(request.set2, request.depth)
            cert = middle_thirds_pin_window(k1, k2, parse_point(request.pin), params=params)
    else:
        # "thickness" forces the epsilon-thickness search where auto would take the dot product shortcuts
        forced: Engine | None = "thickness" if request.engine == "thickness" else None
        k1 = load_set(request.set1, request.depth)
        k2 = k1 if request.set2 == "same" else load_set(request.set2, request.depth)
        if request.tree is not None:
            tree = load_tree(request.tree, defaults)
            skeleton_name = request.skeleton or request.tree
            cert = certify_tree(phi, k1, k2, tree, load_skeleton(skeleton_name, defaults), params, metrics, forced)
        elif phi.kind == "dot" and request.delta is not None and forced is None:
            assert request.pin is not None
            cert = dot_pin_window(k1, k2, parse_point(request.pin), parse_rational(request.delta, "delta"))
        else:
            assert request.pin is not None
            cert = phi_pin_window(phi, k1, k2, parse_point(request.pin), params, metrics, forced)
    return cert


@dataclass
class CheckOutcome:
    violations: list[str]
    oracle: OracleReport | None
    warnings: list[str]

    @property
    def passed(self) -> bool:
        return not self.violations


def check_certificate(
    cert: Certificate,
    params: SearchParameters,
    depth: int | None = None,
    pin_grid: int = DEFAULT_PIN_GRID,
    t_grid: int = DEFAULT_T_GRID,
    pair_cap: int = DEFAULT_PAIR_CAP,
    seed: int = 0,
    with_rows: bool = False,
    run_oracle: bool = True,
) -> CheckOutcome:
    """Replay the recorded witnesses exactly, then run the brute-force oracle."""
    k1, k2 = build_set(cert.set1), build_set(cert.set2)
    if isinstance(cert, PinCertificate):
        violations = verify_pin_certificate(cert, k1, k2, params)
    elif isinstance(cert, DotPinCertificate):
        violations = verify_dot_certificate(cert, k1, k2)
    else:
        violations = verify_tree_certificate(cert, k1, k2, params)
    warnings = [] if cert.limit_valid else ["stage-only: the certificate covers the stage sets, not their limits"]
    report: OracleReport | None = None
    if run_oracle and not violations:
        if isinstance(cert, PinCertificate):
            report = check_pin_certificate(
                cert, depth, pin_grid=pin_grid, t_grid=t_grid, pair_cap=pair_cap, with_rows=with_rows
            )
        elif isinstance(cert, DotPinCertificate):
            report = check_dot_certificate(
                cert, depth, pin_grid=pin_grid, t_grid=t_grid, pair_cap=pair_cap, with_rows=with_rows
            )
        else:
            report = check_tree_certificate(cert, depth, seed=seed)
        violations.extend(f"oracle miss at {failure}" for failure in report.failures[:10])
    return CheckOutcome(violations=violations, oracle=report, warnings=warnings)
