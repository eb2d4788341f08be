"""FastAPI service wrapping the audit core.

Policies, the API mapping table, and sink patterns load once at startup and
are shared read-only across requests; per-request overrides are supported for
the audit-style endpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..audit import AuditError
from ..axml import AxmlError
from ..container import ContainerError
from ..dex import DexError
from ..dynamic import (
    DynamicError,
    EmptyPlan,
    detect_exfiltration,
    generate_hook_plan,
    ingest_events,
)
from ..mapper import (
    MapperError,
    NoProposalsFound,
    PolicyDocument,
    load_permission_registry,
    merge_model_outputs,
    parse_mapping_response,
    diff_against_ground_truth,
    render_prompt,
    validate_proposals,
)
from ..mapping import MappingError, MappingTable, load_mapping
from ..policy import (
    PolicyError,
    PolicySet,
    conditional_permissions,
    serialize_policy,
    unconditional_permissions,
)
from ..registry import RegistryError, load_registry
from ..report import (
    NoPoliciesLoaded,
    ReportError,
    audit_app,
    manifest_of_apk,
    report_to_dict,
    run_corpus,
)
from ..resources import (
    default_mapping,
    default_permission_registry,
    default_policies,
    default_sinks,
    load_policy_dir,
)
from ..summary import render_summary_table
from .schemas import (
    AuditRequest,
    AuditResponse,
    CorpusRequest,
    CorpusResponse,
    DynlogRequest,
    DynlogResponse,
    HooksRequest,
    HooksResponse,
    MapPolicyRequest,
    MapPolicyResponse,
    PolicyInfo,
)

_DOMAIN_ERRORS = (
    AuditError,
    AxmlError,
    ContainerError,
    DexError,
    DynamicError,
    MapperError,
    MappingError,
    PolicyError,
    RegistryError,
    ReportError,
    ValueError,
)


@dataclass
class ServiceState:
    policies: dict[str, PolicySet]
    mapping: MappingTable
    sinks: tuple
    registry_doc: bytes


def _overridden(state: ServiceState, request) -> tuple[dict[str, PolicySet], MappingTable]:
    policies = state.policies
    if request.policies:
        policies = load_policy_dir([(p.filename, p.content) for p in request.policies])
        # Service defaults fill in whatever the override set omits.
        for jurisdiction, ps in state.policies.items():
            policies.setdefault(jurisdiction, ps)
    mapping = load_mapping(request.mapping) if request.mapping else state.mapping
    return policies, mapping


def create_app(
    policies: dict[str, PolicySet] | None = None,
    mapping: MappingTable | None = None,
) -> FastAPI:
    state = ServiceState(
        policies=policies if policies is not None else default_policies(),
        mapping=mapping if mapping is not None else default_mapping(),
        sinks=default_sinks(),
        registry_doc=default_permission_registry(),
    )

    app = FastAPI(title="lendaudit", version=__version__)

    def fail(exc: Exception) -> HTTPException:
        return HTTPException(
            status_code=422, detail={"error": type(exc).__name__, "detail": str(exc)}
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/policies", response_model=list[PolicyInfo])
    def policies_index() -> list[PolicyInfo]:
        return [
            PolicyInfo(
                jurisdiction=ps.jurisdiction,
                version=ps.version,
                unconditional=sorted(unconditional_permissions(ps)),
                conditional=sorted(conditional_permissions(ps)),
            )
            for ps in sorted(state.policies.values(), key=lambda p: p.jurisdiction)
        ]

    @app.post("/audit", response_model=AuditResponse)
    def audit(request: AuditRequest) -> AuditResponse:
        try:
            policy_sets, mapping_table = _overridden(state, request)
            report = audit_app(
                request.apk.raw(),
                request.jurisdiction,
                policy_sets,
                mapping_table,
                state.sinks,
            )
        except _DOMAIN_ERRORS as exc:
            raise fail(exc) from exc
        verdict = report.verdict
        return AuditResponse(
            report=report_to_dict(report),
            violations_found=verdict.violates_harmonized
            or verdict.violates_country
            or verdict.violates_platform,
        )

    @app.post("/corpus", response_model=CorpusResponse)
    def corpus(request: CorpusRequest) -> CorpusResponse:
        try:
            policy_sets, mapping_table = _overridden(state, request)
            registry = load_registry(request.registry_csv)
            apk_files = {apk.filename: apk.raw() for apk in request.apks}
            if request.apk_dir:
                directory = Path(request.apk_dir)
                if not directory.is_dir():
                    raise NoPoliciesLoaded(f"apk_dir {request.apk_dir!r} is not a directory")
                for path in sorted(directory.glob("*.apk")):
                    apk_files.setdefault(path.name, path.read_bytes())
            result = run_corpus(
                registry, apk_files, policy_sets, mapping_table, state.sinks, request.jobs
            )
        except _DOMAIN_ERRORS as exc:
            raise fail(exc) from exc
        cells: dict[str, dict[str, str]] = {}
        for row in list(result.summary.rows) + [result.summary.total]:
            cells[row.country] = {
                f"{framework}_{status}": row.cells[(framework, status)].render()
                for framework in ("country", "platform", "harmonized")
                for status in ("approved", "delisted")
            }
        return CorpusResponse(
            reports=[report_to_dict(r) for r in result.reports],
            summary_cells=cells,
            summary_table=render_summary_table(result.summary),
            failures=[
                {"package_id": f.package_id, "jurisdiction": f.jurisdiction, "error": f.error}
                for f in result.failures
            ],
            missing=list(result.missing),
            violations_found=any(
                r.verdict.violates_country
                or r.verdict.violates_platform
                or r.verdict.violates_harmonized
                for r in result.reports
            ),
        )

    @app.post("/hooks", response_model=HooksResponse)
    def hooks(request: HooksRequest) -> HooksResponse:
        try:
            policy_sets, mapping_table = _overridden(state, request)
            report = audit_app(
                request.apk.raw(),
                request.jurisdiction,
                policy_sets,
                mapping_table,
                state.sinks,
            )
            manifest = manifest_of_apk(request.apk.raw())
            plan = generate_hook_plan(
                report.verdict.flows,
                report.watch_items,
                manifest,
                mapping_table,
            )
        except EmptyPlan as exc:
            return HooksResponse(empty=True, plan=None, reason=str(exc))
        except _DOMAIN_ERRORS as exc:
            raise fail(exc) from exc
        return HooksResponse(empty=False, plan=json.loads(plan.to_json()))

    @app.post("/dynlog", response_model=DynlogResponse)
    def dynlog(request: DynlogRequest) -> DynlogResponse:
        try:
            manifest = manifest_of_apk(request.apk.raw())
            events = ingest_events(request.events)
            findings = detect_exfiltration(events, manifest, state.mapping)
        except _DOMAIN_ERRORS as exc:
            raise fail(exc) from exc
        return DynlogResponse(
            event_count=len(events),
            findings=[
                {
                    "category": f.category,
                    "pre_registration": f.pre_registration,
                    "launch_time": f.launch_time,
                    "source_event_id": f.source_event_id,
                    "sink_event_id": f.sink_event_id,
                    "endpoint": f.endpoint,
                }
                for f in findings
            ],
            findings_found=bool(findings),
        )

    @app.post("/map-policy", response_model=MapPolicyResponse)
    def map_policy(request: MapPolicyRequest) -> MapPolicyResponse:
        try:
            doc = PolicyDocument(
                jurisdiction=request.jurisdiction,
                title=request.title,
                body_text=request.body_text,
                source_citation=request.source_citation,
            )
            prompt = render_prompt(doc)
            if not request.responses:
                raise MapperError(
                    "no model responses supplied; live completion is configured "
                    "client-side (see README) and replayed responses are passed "
                    "in the request"
                )
            registry = load_permission_registry(state.registry_doc)
            proposals_per_model: dict[str, list[dict]] = {}
            warnings: list[dict] = []
            accepted_lists = []
            rejected: list[dict] = []
            for model in request.responses:
                parsed = parse_mapping_response(model.response_text, model_id=model.model_id)
                proposals_per_model[model.model_id] = [
                    {
                        "data_type": p.data_type,
                        "prohibition": p.prohibition,
                        "permissions": list(p.permissions),
                        "notes": p.notes,
                    }
                    for p in parsed.proposals
                ]
                warnings.extend(
                    {"model_id": model.model_id, "fragment": w.fragment, "reason": w.reason}
                    for w in parsed.warnings
                )
                validated = validate_proposals(list(parsed.proposals), registry)
                accepted_lists.append(list(validated.accepted))
                rejected.extend(
                    {
                        "model_id": model.model_id,
                        "data_type": r.data_type,
                        "permission": r.permission,
                        "reason": r.reason,
                    }
                    for r in validated.rejected
                )
            merged = merge_model_outputs(accepted_lists, jurisdiction=request.jurisdiction)
            diff_payload = None
            if request.diff_against_shipped and request.jurisdiction in state.policies:
                diff = diff_against_ground_truth(
                    merged.draft, state.policies[request.jurisdiction]
                )
                diff_payload = {
                    "missing": sorted(diff.missing),
                    "extra": sorted(diff.extra),
                    "kind_mismatches": sorted(diff.kind_mismatches),
                }
        except NoProposalsFound as exc:
            raise fail(exc) from exc
        except _DOMAIN_ERRORS as exc:
            raise fail(exc) from exc
        accepted_flat = [
            {
                "model_id": p.model_id,
                "data_type": p.data_type,
                "prohibition": p.prohibition,
                "permissions": list(p.permissions),
            }
            for proposals in accepted_lists
            for p in proposals
        ]
        return MapPolicyResponse(
            prompt_digest=prompt.digest(),
            system_text=prompt.system_text,
            proposals_per_model=proposals_per_model,
            warnings=warnings,
            accepted=accepted_flat,
            rejected=rejected,
            review_flags=[
                {"permission": f.permission, "detail": f.detail} for f in merged.review_flags
            ],
            draft_policy=serialize_policy(merged.draft).decode("utf-8"),
            diff=diff_payload,
        )

    app.state.audit_state = state
    return app
