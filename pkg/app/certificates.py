from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Union

from app.geometry import PhiSpec, parse_phi_spec, render_box
from app.intervals import CertifiedInterval
from app.newhouse import IntersectionWitness, TraceStep
from app.pin_wiggle import DotPinCertificate, PinCertificate, PinWitness
from app.tree_mechanism import Tree, TreeCertificate, TreeStep
from schemas.certificate_schema import SCHEMA_VERSION, CertificateFile

Certificate = Union[PinCertificate, DotPinCertificate, TreeCertificate]


class CertificateFormatError(ValueError):
    def __init__(self, message: str, code: str = "schema_mismatch") -> None:
        super().__init__(message)
        self.code = code


def q(value: Fraction | int) -> str:
    return str(Fraction(value))


def parse_q(text: str) -> Fraction:
    return Fraction(text)


def _opt(value: Fraction | None) -> str | None:
    return None if value is None else q(value)


def _opt_q(text: str | None) -> Fraction | None:
    return None if text is None else parse_q(text)


def interval_dict(lo: Fraction, hi: Fraction) -> dict[str, Any]:
    return {"lo": q(lo), "hi": q(hi), "approx": [float(lo), float(hi)]}


def _ci(value: CertifiedInterval) -> dict[str, Any]:
    return interval_dict(value.lo, value.hi)


def _pair_intervals(raw: dict[str, Any]) -> tuple[Fraction, Fraction]:
    return parse_q(raw["lo"]), parse_q(raw["hi"])


def _point(p: tuple[Fraction, Fraction]) -> dict[str, str]:
    return {"x": q(p[0]), "y": q(p[1])}


def _parse_point(raw: dict[str, str]) -> tuple[Fraction, Fraction]:
    return parse_q(raw["x"]), parse_q(raw["y"])


def _box(box: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]) -> list[dict[str, Any]]:
    return [interval_dict(*box[0]), interval_dict(*box[1])]


def _parse_box(raw: list[dict[str, Any]]) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
    return _pair_intervals(raw[0]), _pair_intervals(raw[1])


def _phi_from(payload: dict[str, Any]) -> PhiSpec:
    domain_a = payload.get("domain_a")
    domain_b = payload.get("domain_b")
    return parse_phi_spec(
        payload["phi"],
        render_box(_parse_box(domain_a)) if domain_a else None,
        render_box(_parse_box(domain_b)) if domain_b else None,
    )


# intersection witnesses


def _witness_dict(w: IntersectionWitness) -> dict[str, Any]:
    return {
        "point": _opt(w.point),
        "enclosure": _ci(w.enclosure),
        "trace": [
            {"first_gap": interval_dict(*s.first_gap), "second_gap": interval_dict(*s.second_gap)} for s in w.trace
        ],
        "first_interval": interval_dict(*w.first_interval),
        "second_interval": interval_dict(*w.second_interval),
        "preimage": _opt(w.preimage),
    }


def _witness_from(raw: dict[str, Any]) -> IntersectionWitness:
    return IntersectionWitness(
        point=_opt_q(raw.get("point")),
        enclosure=CertifiedInterval(*_pair_intervals(raw["enclosure"])),
        trace=tuple(
            TraceStep(_pair_intervals(s["first_gap"]), _pair_intervals(s["second_gap"])) for s in raw.get("trace", [])
        ),
        first_interval=_pair_intervals(raw["first_interval"]),
        second_interval=_pair_intervals(raw["second_interval"]),
        preimage=_opt_q(raw.get("preimage")),
    )


# pin certificates


def pin_to_dict(cert: PinCertificate) -> dict[str, Any]:
    w = cert.witness
    return {
        "kind": "pin",
        "phi": cert.phi.render(),
        "domain_a": _box(cert.phi.domain_a) if cert.phi.domain_a else None,
        "domain_b": _box(cert.phi.domain_b) if cert.phi.domain_b else None,
        "engine": cert.engine,
        "set1": cert.set1,
        "set2": cert.set2,
        "pin": _point(cert.pin),
        "pin_box": _box(cert.pin_box),
        "t_interval": _ci(cert.t_interval),
        "windows": _box(cert.windows),
        "restricted": list(cert.restricted),
        "witness": {
            "anchors": _point(w.anchors),
            "deltas": _point(w.deltas),
            "reflections": list(w.reflections),
            "orientation": w.orientation,
            "branch": w.branch,
            "t0": _ci(w.t0),
            "offset": q(w.offset),
            "epsilon": _opt(w.epsilon),
            "tau_tilde1": _opt(w.tau_tilde1),
            "tau_tilde2": _opt(w.tau_tilde2),
            "image_bound": _opt(w.image_bound),
            "bracket": interval_dict(*w.bracket) if w.bracket else None,
        },
        "limit_valid": cert.limit_valid,
        "slope": _ci(cert.slope) if cert.slope is not None else None,
        "intersection": _witness_dict(cert.intersection) if cert.intersection is not None else None,
    }


def pin_from_dict(payload: dict[str, Any]) -> PinCertificate:
    w = payload["witness"]
    return PinCertificate(
        phi=_phi_from(payload),
        engine=payload["engine"],
        set1=payload["set1"],
        set2=payload["set2"],
        pin=_parse_point(payload["pin"]),
        pin_box=_parse_box(payload["pin_box"]),
        t_interval=CertifiedInterval(*_pair_intervals(payload["t_interval"])),
        windows=_parse_box(payload["windows"]),
        restricted=(payload["restricted"][0], payload["restricted"][1]),
        witness=PinWitness(
            anchors=_parse_point(w["anchors"]),
            deltas=_parse_point(w["deltas"]),
            reflections=(int(w["reflections"][0]), int(w["reflections"][1])),
            orientation=w["orientation"],
            branch=int(w["branch"]),
            t0=CertifiedInterval(*_pair_intervals(w["t0"])),
            offset=parse_q(w["offset"]),
            epsilon=_opt_q(w.get("epsilon")),
            tau_tilde1=_opt_q(w.get("tau_tilde1")),
            tau_tilde2=_opt_q(w.get("tau_tilde2")),
            image_bound=_opt_q(w.get("image_bound")),
            bracket=_pair_intervals(w["bracket"]) if w.get("bracket") else None,
        ),
        limit_valid=bool(payload["limit_valid"]),
        slope=CertifiedInterval(*_pair_intervals(payload["slope"])) if payload.get("slope") else None,
        intersection=_witness_from(payload["intersection"]) if payload.get("intersection") else None,
    )


def dot_to_dict(cert: DotPinCertificate) -> dict[str, Any]:
    return {
        "kind": "dot_pin",
        "set1": cert.set1,
        "set2": cert.set2,
        "pin": _point(cert.pin),
        "delta": q(cert.delta),
        "pin_box": _box(cert.pin_box),
        "t_interval": interval_dict(*cert.t_interval),
        "hull_starts": _point(cert.hull_starts),
        "hull_lengths": _point(cert.hull_lengths),
        "branch": cert.branch,
        "formula_length": _opt(cert.formula_length),
        "limit_valid": cert.limit_valid,
    }


def dot_from_dict(payload: dict[str, Any]) -> DotPinCertificate:
    return DotPinCertificate(
        set1=payload["set1"],
        set2=payload["set2"],
        pin=_parse_point(payload["pin"]),
        delta=parse_q(payload["delta"]),
        pin_box=_parse_box(payload["pin_box"]),
        t_interval=_pair_intervals(payload["t_interval"]),
        hull_starts=_parse_point(payload["hull_starts"]),
        hull_lengths=_parse_point(payload["hull_lengths"]),
        branch=payload["branch"],
        formula_length=_opt_q(payload.get("formula_length")),
        limit_valid=bool(payload["limit_valid"]),
    )


def tree_to_dict(cert: TreeCertificate) -> dict[str, Any]:
    return {
        "kind": "tree",
        "mode": cert.mode,
        "phi": cert.phi.render(),
        "set1": cert.set1,
        "set2": cert.set2,
        "vertex_count": cert.tree.vertex_count,
        "edges": [list(e) for e in cert.tree.edges],
        "skeleton": [_point(p) for p in cert.skeleton],
        "epsilon": q(cert.epsilon),
        "resolution": q(cert.resolution),
        "edge_intervals": [_ci(i) for i in cert.edge_intervals],
        "radii": [q(r) for r in cert.radii],
        "steps": [
            {
                "edge_index": s.edge_index,
                "leaf": s.leaf,
                "pin": s.pin,
                "leaf_radius": q(s.leaf_radius),
                "pin_radius": q(s.pin_radius),
                "certificate": pin_to_dict(s.certificate),
            }
            for s in cert.steps
        ],
        "limit_valid": cert.limit_valid,
    }


def tree_from_dict(payload: dict[str, Any]) -> TreeCertificate:
    tree = Tree(
        vertex_count=int(payload["vertex_count"]),
        edges=tuple((int(a), int(b)) for a, b in payload["edges"]),
    )
    return TreeCertificate(
        mode=payload["mode"],
        phi=parse_phi_spec(payload["phi"]),
        set1=payload["set1"],
        set2=payload["set2"],
        tree=tree,
        skeleton=tuple(_parse_point(p) for p in payload["skeleton"]),
        epsilon=parse_q(payload["epsilon"]),
        resolution=parse_q(payload["resolution"]),
        edge_intervals=tuple(CertifiedInterval(*_pair_intervals(i)) for i in payload["edge_intervals"]),
        radii=tuple(parse_q(r) for r in payload["radii"]),
        steps=tuple(
            TreeStep(
                edge_index=int(s["edge_index"]),
                leaf=int(s["leaf"]),
                pin=int(s["pin"]),
                leaf_radius=parse_q(s["leaf_radius"]),
                pin_radius=parse_q(s["pin_radius"]),
                certificate=pin_from_dict(s["certificate"]),
            )
            for s in payload["steps"]
        ),
        limit_valid=bool(payload["limit_valid"]),
    )


def payload_of(cert: Certificate) -> dict[str, Any]:
    if isinstance(cert, PinCertificate):
        return pin_to_dict(cert)
    if isinstance(cert, DotPinCertificate):
        return dot_to_dict(cert)
    return tree_to_dict(cert)


def canonical_json(payload: dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def certificate_id(payload: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def to_document(cert: Certificate) -> dict[str, Any]:
    payload = payload_of(cert)
    return {
        "schema_version": SCHEMA_VERSION,
        "certificate_id": certificate_id(payload),
        "payload": payload,
        "verification": None,
    }


def from_document(document: dict[str, Any]) -> tuple[Certificate, CertificateFile]:
    """Schema-check a certificate document and rebuild the certificate object."""
    try:
        model = CertificateFile.model_validate(document)
    except ValueError as exc:
        raise CertificateFormatError(f"certificate does not match the schema: {exc}") from exc
    payload = document["payload"]
    if certificate_id(payload) != model.certificate_id:
        raise CertificateFormatError("certificate_id does not match the payload", code="descriptor_mismatch")
    kind = payload["kind"]
    try:
        if kind == "pin":
            return pin_from_dict(payload), model
        if kind == "dot_pin":
            return dot_from_dict(payload), model
        return tree_from_dict(payload), model
    except (KeyError, ValueError, ZeroDivisionError) as exc:
        raise CertificateFormatError(f"certificate payload is malformed: {exc}") from exc


def write_document(document: dict[str, Any], path: str | Path) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(document, indent=2, sort_keys=True, ensure_ascii=True) + "\n", encoding="utf-8")


def read_document(path: str | Path) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CertificateFormatError(f"{path} is not valid JSON: {exc}", code="parse_error") from exc
    if not isinstance(data, dict):
        raise CertificateFormatError("certificate file must contain a JSON object")
    return data
