from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..dataset_io import IdentityAnnotation
from ..features import FeatureVector
from ..protocol import CaptureMeta, FeatureMessage


class Annotation(BaseModel):
    person_id: int = Field(-1, ge=-1)
    camera_id: int = Field(1, ge=1)
    sequence_id: int = Field(1, ge=1)
    frame_index: int = Field(0, ge=0)

    def to_domain(self) -> IdentityAnnotation:
        return IdentityAnnotation(self.person_id, self.camera_id, self.sequence_id, self.frame_index)


class ClassFeatures(BaseModel):
    present: bool
    area_fraction: float = Field(ge=0.0, le=1.0)
    histograms: list[list[float]]


class Features(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config_digest: str = Field(pattern=r"^[0-9a-f]{16}$")
    classes: list[ClassFeatures] = Field(min_length=1)

    def to_domain(self) -> FeatureVector:
        return FeatureVector.from_json_dict(self.model_dump())

    @classmethod
    def from_domain(cls, fv: FeatureVector) -> "Features":
        return cls.model_validate(fv.to_json_dict())


class Message(BaseModel):
    device_id: int = Field(0, ge=0, lt=2**32)
    capture_timestamp: int = Field(0, ge=0, lt=2**64)
    annotation: Annotation = Annotation()
    features: Features

    def to_domain(self) -> FeatureMessage:
        meta = CaptureMeta(self.device_id, self.capture_timestamp, self.annotation.to_domain())
        return FeatureMessage(meta, self.features.to_domain())


class SubmitResponse(BaseModel):
    entry_id: int


class QueryRequest(BaseModel):
    message: Message
    top_k: int | None = Field(None, ge=1)


class Hit(BaseModel):
    entry_id: int
    score: float


class QueryResponse(BaseModel):
    results: list[Hit]


class EvaluateRequest(BaseModel):
    queries: list[Message] = Field(min_length=1)


class Report(BaseModel):
    rank_1: float
    rank_5: float
    rank_10: float
    mAP: float
    query_count: int
    skipped_queries: int


class Health(BaseModel):
    status: str
    gallery_size: int
    config_digest: str | None
