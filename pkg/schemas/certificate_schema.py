from __future__ import annotations

from typing import Literal, Union

from pydantic import BaseModel, Field, StringConstraints
from typing_extensions import Annotated

SCHEMA_VERSION = "1"

Rational = Annotated[str, StringConstraints(pattern=r"^-?\d+(/\d+)?$")]
CertificateId = Annotated[str, StringConstraints(pattern=r"^[0-9a-f]{64}$")]
SetDescriptor = Annotated[str, StringConstraints(min_length=1)]


class IntervalModel(BaseModel):
    lo: Rational
    hi: Rational
    approx: tuple[float, float] | None = None


class PointModel(BaseModel):
    x: Rational
    y: Rational


class TraceStepModel(BaseModel):
    first_gap: IntervalModel
    second_gap: IntervalModel


class IntersectionModel(BaseModel):
    point: Rational | None = None
    enclosure: IntervalModel
    trace: list[TraceStepModel] = Field(default_factory=list)
    first_interval: IntervalModel
    second_interval: IntervalModel
    preimage: Rational | None = None


class PinWitnessModel(BaseModel):
    anchors: PointModel
    deltas: PointModel
    reflections: tuple[Literal[-1, 1], Literal[-1, 1]]
    orientation: Literal["image-below", "image-above"]
    branch: Literal[-1, 1]
    t0: IntervalModel
    offset: Rational
    epsilon: Rational | None = None
    tau_tilde1: Rational | None = None
    tau_tilde2: Rational | None = None
    image_bound: Rational | None = None
    bracket: IntervalModel | None = None


class PinPayload(BaseModel):
    kind: Literal["pin"] = "pin"
    phi: str = Field(min_length=1)
    domain_a: tuple[IntervalModel, IntervalModel] | None = None
    domain_b: tuple[IntervalModel, IntervalModel] | None = None
    engine: Literal["thickness", "affine", "middle-thirds"]
    set1: SetDescriptor
    set2: SetDescriptor
    pin: PointModel
    pin_box: tuple[IntervalModel, IntervalModel]
    t_interval: IntervalModel
    windows: tuple[IntervalModel, IntervalModel]
    restricted: tuple[SetDescriptor, SetDescriptor]
    witness: PinWitnessModel
    limit_valid: bool
    slope: IntervalModel | None = None
    intersection: IntersectionModel | None = None


class DotPinPayload(BaseModel):
    kind: Literal["dot_pin"] = "dot_pin"
    set1: SetDescriptor
    set2: SetDescriptor
    pin: PointModel
    delta: Rational
    pin_box: tuple[IntervalModel, IntervalModel]
    t_interval: IntervalModel
    hull_starts: PointModel
    hull_lengths: PointModel
    branch: Literal["upper", "lower"]
    formula_length: Rational | None = None
    limit_valid: bool


class TreeStepModel(BaseModel):
    edge_index: int = Field(ge=0)
    leaf: int = Field(ge=1)
    pin: int = Field(ge=1)
    leaf_radius: Rational
    pin_radius: Rational
    certificate: PinPayload


class TreePayload(BaseModel):
    kind: Literal["tree"] = "tree"
    mode: Literal["phi", "middle-thirds"]
    phi: str = Field(min_length=1)
    set1: SetDescriptor
    set2: SetDescriptor
    vertex_count: int = Field(ge=2)
    edges: list[tuple[int, int]] = Field(min_length=1)
    skeleton: list[PointModel]
    epsilon: Rational
    resolution: Rational
    edge_intervals: list[IntervalModel]
    radii: list[Rational]
    steps: list[TreeStepModel]
    limit_valid: bool


class VerificationStamp(BaseModel):
    verified_at_utc: str
    status: Literal["pass", "fail"]
    violations: list[str] = Field(default_factory=list)
    oracle_depth: int | None = None


class CertificateFile(BaseModel):
    schema_version: Literal["1"] = SCHEMA_VERSION
    certificate_id: CertificateId
    payload: Annotated[Union[PinPayload, DotPinPayload, TreePayload], Field(discriminator="kind")]
    verification: VerificationStamp | None = None
