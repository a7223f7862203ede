from __future__ import annotations

from dataclasses import replace
from fractions import Fraction
from typing import Final, Union

from app.cantor_core import build_set, restrict
from app.geometry import PhiSpec
from app.pin_wiggle import DotPinCertificate, PinCertificate
from app.tree_mechanism import TreeCertificate, stage_resolution

Certificate = Union[PinCertificate, DotPinCertificate, TreeCertificate]

PIN_FIELDS: Final[tuple[str, ...]] = (
    "t_interval",
    "pin_box",
    "anchor",
    "delta",
    "epsilon",
    "image_bound",
    "tau_tilde2",
    "restricted",
)
DOT_FIELDS: Final[tuple[str, ...]] = ("t_interval", "delta", "pin")
TREE_FIELDS: Final[tuple[str, ...]] = ("edge_interval", "radius", "skeleton", "step_target")


class MutationError(ValueError):
    def __init__(self, message: str, code: str = "parse_error") -> None:
        super().__init__(message)
        self.code = code


def fields_for(cert: Certificate) -> tuple[str, ...]:
    if isinstance(cert, PinCertificate):
        return PIN_FIELDS
    if isinstance(cert, DotPinCertificate):
        return DOT_FIELDS
    return TREE_FIELDS


def quantum_for(cert: Certificate) -> Fraction:
    """One stage resolution of the certificate's sets: widest interval times the Lipschitz bound of phi."""
    if isinstance(cert, TreeCertificate):
        return cert.resolution
    k1, k2 = build_set(cert.set1), build_set(cert.set2)
    if isinstance(cert, DotPinCertificate):
        width = max(k1.max_interval_width, k2.max_interval_width)
        return width * PhiSpec("dot").lipschitz_factor(cert.pin_box)
    return stage_resolution(cert.phi, k1, k2)


def _nudged(value: Fraction | None, q: Fraction) -> Fraction:
    return q if value is None else value + q


def _mutate_pin(cert: PinCertificate, name: str, q: Fraction) -> PinCertificate:
    w = cert.witness
    if name == "t_interval":
        return replace(cert, t_interval=cert.t_interval + q)
    if name == "pin_box":
        (a, b), s2 = cert.pin_box
        return replace(cert, pin_box=((a + q, b + q), s2))
    if name == "anchor":
        return replace(cert, witness=replace(w, anchors=(w.anchors[0] + q, w.anchors[1])))
    if name == "delta":
        return replace(cert, witness=replace(w, deltas=(w.deltas[0] + q, w.deltas[1])))
    if name == "epsilon":
        if w.epsilon is None:
            return replace(cert, witness=replace(w, epsilon=q, image_bound=_nudged(w.image_bound, q)))
        eps = w.epsilon - q if w.epsilon > q else w.epsilon + q
        return replace(cert, witness=replace(w, epsilon=eps))
    if name == "image_bound":
        return replace(cert, witness=replace(w, image_bound=_nudged(w.image_bound, q)))
    if name == "tau_tilde2":
        return replace(cert, witness=replace(w, tau_tilde2=_nudged(w.tau_tilde2, q)))
    if name == "restricted":
        lo, hi = cert.windows[0]
        narrowed = restrict(build_set(cert.set1), (lo, hi - min(q, (hi - lo) / 2))).descriptor
        return replace(cert, restricted=(narrowed, cert.restricted[1]))
    raise MutationError(f"unknown pin certificate field {name!r}; expected one of: {', '.join(PIN_FIELDS)}")


def _mutate_dot(cert: DotPinCertificate, name: str, q: Fraction) -> DotPinCertificate:
    if name == "t_interval":
        lo, hi = cert.t_interval
        return replace(cert, t_interval=(lo + q, hi + q))
    if name == "delta":
        return replace(cert, delta=cert.delta + q)
    if name == "pin":
        return replace(cert, pin=(cert.pin[0] + q, cert.pin[1]))
    raise MutationError(f"unknown dot certificate field {name!r}; expected one of: {', '.join(DOT_FIELDS)}")


def _mutate_tree(cert: TreeCertificate, name: str, q: Fraction) -> TreeCertificate:
    if name == "edge_interval":
        first = cert.edge_intervals[0]
        return replace(cert, edge_intervals=(first + q,) + cert.edge_intervals[1:])
    if name == "radius":
        return replace(cert, radii=(cert.radii[0] + q,) + cert.radii[1:])
    if name == "skeleton":
        # the root pin of the last peel step is always some certificate's pin
        root = cert.steps[-1].pin - 1
        x, y = cert.skeleton[root]
        moved = list(cert.skeleton)
        moved[root] = (x + q, y)
        return replace(cert, skeleton=tuple(moved))
    if name == "step_target":
        step = cert.steps[0]
        pin_cert = _mutate_pin(step.certificate, "t_interval", q)
        return replace(cert, steps=(replace(step, certificate=pin_cert),) + cert.steps[1:])
    raise MutationError(f"unknown tree certificate field {name!r}; expected one of: {', '.join(TREE_FIELDS)}")


def mutate_certificate(cert: Certificate, name: str) -> Certificate:
    """Copy of cert with one recorded quantity moved by a single stage-resolution quantum."""
    if isinstance(cert, PinCertificate):
        return _mutate_pin(cert, name, quantum_for(cert))
    if isinstance(cert, DotPinCertificate):
        return _mutate_dot(cert, name, quantum_for(cert))
    return _mutate_tree(cert, name, quantum_for(cert))
