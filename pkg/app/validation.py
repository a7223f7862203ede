from __future__ import annotations

from fractions import Fraction
from typing import Any

from schemas.certificate_schema import CertificateFile, IntervalModel, PinPayload, TreePayload


def validate_certificate_payload(document: dict[str, Any]) -> CertificateFile:
    return CertificateFile.model_validate(document)


def _bounds(interval: IntervalModel) -> tuple[Fraction, Fraction]:
    return Fraction(interval.lo), Fraction(interval.hi)


def _pin_rules(payload: PinPayload, prefix: str = "") -> list[dict[str, Any]]:
    violations: list[dict[str, Any]] = []
    for axis, side in enumerate(payload.pin_box, start=1):
        lo, hi = _bounds(side)
        if not lo < hi:
            violations.append(
                {
                    "code": "degenerate_pin_box",
                    "severity": "error",
                    "message": f"{prefix}pin box side {axis} must have positive width",
                }
            )
    t_lo, t_hi = _bounds(payload.t_interval)
    if not t_lo < t_hi:
        violations.append(
            {"code": "empty_target_interval", "severity": "error", "message": f"{prefix}target interval is empty"}
        )
    for axis, window in enumerate(payload.windows, start=1):
        lo, hi = _bounds(window)
        if not lo < hi:
            violations.append(
                {
                    "code": "degenerate_window",
                    "severity": "error",
                    "message": f"{prefix}window {axis} must have positive width",
                }
            )
    eps = payload.witness.epsilon
    if eps is not None and not 0 < Fraction(eps) < 1:
        violations.append(
            {"code": "epsilon_range", "severity": "error", "message": f"{prefix}epsilon must lie in (0,1)"}
        )
    if payload.engine == "thickness" and eps is None:
        violations.append(
            {
                "code": "missing_epsilon",
                "severity": "error",
                "message": f"{prefix}the thickness engine records the ratio epsilon",
            }
        )
    if not payload.limit_valid:
        violations.append(
            {
                "code": "stage_only",
                "severity": "warning",
                "message": f"{prefix}claim holds for the finite stage sets only",
            }
        )
    return violations


def _tree_rules(payload: TreePayload) -> list[dict[str, Any]]:
    violations: list[dict[str, Any]] = []
    if len(payload.edges) != payload.vertex_count - 1:
        violations.append(
            {
                "code": "edge_count",
                "severity": "error",
                "message": "edge count must equal vertex count - 1",
                "expected": payload.vertex_count - 1,
                "actual": len(payload.edges),
            }
        )
    if len(payload.skeleton) != payload.vertex_count:
        violations.append(
            {"code": "skeleton_size", "severity": "error", "message": "skeleton needs one point per vertex"}
        )
    if len(payload.edge_intervals) != len(payload.edges) or len(payload.steps) != len(payload.edges):
        violations.append(
            {"code": "edge_data", "severity": "error", "message": "one interval and one step are needed per edge"}
        )
    if len(payload.radii) != payload.vertex_count:
        violations.append({"code": "radii_size", "severity": "error", "message": "one radius is needed per vertex"})
    for step in payload.steps:
        violations.extend(_pin_rules(step.certificate, prefix=f"step {step.leaf}-{step.pin}: "))
    return violations


def evaluate_certificate_rules(model: CertificateFile) -> list[dict[str, Any]]:
    payload = model.payload
    if isinstance(payload, PinPayload):
        return _pin_rules(payload)
    if isinstance(payload, TreePayload):
        return _tree_rules(payload)
    violations: list[dict[str, Any]] = []
    for axis, side in enumerate(payload.pin_box, start=1):
        lo, hi = _bounds(side)
        if lo > hi:
            violations.append(
                {"code": "degenerate_pin_box", "severity": "error", "message": f"pin box side {axis} is reversed"}
            )
    t_lo, t_hi = _bounds(payload.t_interval)
    if not t_lo < t_hi:
        violations.append({"code": "empty_target_interval", "severity": "error", "message": "target interval is empty"})
    return violations


def validate_and_score(document: dict[str, Any]) -> dict[str, Any]:
    model = validate_certificate_payload(document)
    violations = evaluate_certificate_rules(model)
    is_valid = not any(v["severity"] == "error" for v in violations)
    return {
        "record": model,
        "violations": violations,
        "is_valid": is_valid,
    }
