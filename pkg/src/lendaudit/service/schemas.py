"""Request/response models for the audit service.

Binary payloads (APKs) travel base64-encoded inside JSON bodies; text payloads
(policy files, registry CSV, event logs) travel verbatim.
"""

from __future__ import annotations

import base64

from pydantic import BaseModel, Field, field_validator


class NamedText(BaseModel):
    filename: str
    content: str


class ApkPayload(BaseModel):
    filename: str = "app.apk"
    content_b64: str

    def raw(self) -> bytes:
        return base64.b64decode(self.content_b64)

    @field_validator("content_b64")
    @classmethod
    def _decodable(cls, value: str) -> str:
        try:
            base64.b64decode(value, validate=True)
        except Exception as exc:
            raise ValueError(f"content_b64 is not valid base64: {exc}") from exc
        return value


class PolicyOverrides(BaseModel):
    policies: list[NamedText] = Field(default_factory=list)
    mapping: str | None = None


class AuditRequest(PolicyOverrides):
    apk: ApkPayload
    jurisdiction: str


class CorpusRequest(PolicyOverrides):
    registry_csv: str
    apks: list[ApkPayload] = Field(default_factory=list)
    apk_dir: str | None = None  # server-local directory, for co-located runs
    jobs: int = 4


class HooksRequest(PolicyOverrides):
    apk: ApkPayload
    jurisdiction: str


class DynlogRequest(BaseModel):
    events: str
    apk: ApkPayload


class ModelResponse(BaseModel):
    model_id: str
    response_text: str


class MapPolicyRequest(BaseModel):
    jurisdiction: str
    title: str = ""
    body_text: str
    source_citation: str = ""
    responses: list[ModelResponse] = Field(default_factory=list)
    diff_against_shipped: bool = True


class ErrorBody(BaseModel):
    error: str
    detail: str


class PolicyInfo(BaseModel):
    jurisdiction: str
    version: str
    unconditional: list[str]
    conditional: list[str]


class AuditResponse(BaseModel):
    report: dict
    violations_found: bool


class CorpusResponse(BaseModel):
    reports: list[dict]
    summary_cells: dict[str, dict[str, str]]
    summary_table: str
    failures: list[dict]
    missing: list[str]
    violations_found: bool


class HooksResponse(BaseModel):
    empty: bool
    plan: dict | None = None
    reason: str | None = None


class DynlogResponse(BaseModel):
    event_count: int
    findings: list[dict]
    findings_found: bool


class MapPolicyResponse(BaseModel):
    prompt_digest: str
    system_text: str
    proposals_per_model: dict[str, list[dict]]
    warnings: list[dict]
    accepted: list[dict]
    rejected: list[dict]
    review_flags: list[dict]
    draft_policy: str
    diff: dict | None = None
