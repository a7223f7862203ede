from __future__ import annotations

import json
from copy import deepcopy
from pathlib import Path

import pytest

from app.certificates import (
    CertificateFormatError,
    certificate_id,
    from_document,
    read_document,
    to_document,
    write_document,
)
from app.pin_wiggle import DotPinCertificate, PinCertificate
from app.tree_mechanism import TreeCertificate


def test_dot_document_round_trip(dot_certificate: DotPinCertificate) -> None:
    document = to_document(dot_certificate)
    assert document["schema_version"] == "1"
    assert document["verification"] is None
    assert document["payload"]["t_interval"]["lo"] == "11/10"
    assert document["payload"]["t_interval"]["approx"] == [1.1, 1.8]
    rebuilt, model = from_document(document)
    assert rebuilt == dot_certificate
    assert model.certificate_id == document["certificate_id"]


def test_certificate_id_is_canonical(dot_certificate: DotPinCertificate) -> None:
    payload = to_document(dot_certificate)["payload"]
    reordered = dict(reversed(list(payload.items())))
    assert certificate_id(reordered) == certificate_id(payload)


def test_edited_payload_fails_id_check(dot_certificate: DotPinCertificate) -> None:
    document = to_document(dot_certificate)
    document["payload"]["delta"] = "1/20"
    with pytest.raises(CertificateFormatError, match="certificate_id") as exc_info:
        from_document(document)
    assert exc_info.value.code == "descriptor_mismatch"


@pytest.mark.parametrize(
    ("path", "value"),
    [
        (("schema_version",), "2"),
        (("certificate_id",), "not-a-digest"),
        (("payload", "kind"), "triangle"),
        (("payload", "delta"), "0.1"),
    ],
)
def test_schema_mismatch(dot_certificate: DotPinCertificate, path: tuple[str, ...], value: str) -> None:
    document = deepcopy(to_document(dot_certificate))
    target = document
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    with pytest.raises(CertificateFormatError, match="schema") as exc_info:
        from_document(document)
    assert exc_info.value.code == "schema_mismatch"


def test_write_and_read_document(tmp_path: Path, dot_certificate: DotPinCertificate) -> None:
    path = tmp_path / "certs" / "dot.json"
    document = to_document(dot_certificate)
    write_document(document, path)
    assert path.read_text(encoding="utf-8").endswith("\n")
    assert read_document(path) == document


def test_read_document_rejects_bad_json(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(CertificateFormatError) as exc_info:
        read_document(path)
    assert exc_info.value.code == "parse_error"
    path.write_text(json.dumps([1, 2]), encoding="utf-8")
    with pytest.raises(CertificateFormatError, match="JSON object"):
        read_document(path)


@pytest.mark.slow
def test_pin_document_round_trip(distance_certificate: PinCertificate) -> None:
    document = to_document(distance_certificate)
    rebuilt, _ = from_document(document)
    assert isinstance(rebuilt, PinCertificate)
    assert to_document(rebuilt) == document


@pytest.mark.slow
def test_tree_document_round_trip(chain_certificate: TreeCertificate) -> None:
    document = to_document(chain_certificate)
    rebuilt, _ = from_document(document)
    assert isinstance(rebuilt, TreeCertificate)
    assert len(document["payload"]["steps"]) == 2
    assert to_document(rebuilt) == document
