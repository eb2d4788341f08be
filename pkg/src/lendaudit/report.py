"""Per-app audit pipeline, corpus orchestration, and report emission."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import audit as audit_ops
from . import policy as policy_ops
from .axml import decode_axml
from .callgraph import build_call_graph
from .container import extract_bundle, open_archive
from .dex import (
    defined_methods,
    extract_class_references,
    extract_invocations,
    parse_dex,
    reflection_present,
)
from .manifest import ManifestModel, extract_manifest
from .mapping import ApiPattern, MappingTable
from .registry import RegistryTable
from .summary import CountrySummary, aggregate_country, render_summary_table

REPORT_SCHEMA_VERSION = 1


class ReportError(Exception):
    pass


class NoPoliciesLoaded(ReportError):
    pass


class UnwritableDestination(ReportError):
    pass


@dataclass(frozen=True)
class AuditReport:
    schema_version: int
    package_id: str
    version_code: int | None
    apk_digest: str
    jurisdiction: str
    declared_permissions: tuple[str, ...]
    sdk23_permissions: tuple[str, ...]
    verdict: audit_ops.AuditVerdict
    reflection_present: bool
    unresolved_attributes: tuple[dict, ...]
    watch_items: tuple[str, ...]
    created_at: str
    dynamic_findings: tuple[dict, ...] = ()


@dataclass(frozen=True)
class CorpusFailure:
    package_id: str
    jurisdiction: str
    error: str


@dataclass(frozen=True)
class CorpusResult:
    reports: tuple[AuditReport, ...]
    summary: CountrySummary
    failures: tuple[CorpusFailure, ...]
    missing: tuple[str, ...]  # package ids with no APK present


def _require_policy(policies: dict[str, policy_ops.PolicySet], jurisdiction: str):
    if jurisdiction not in policies:
        raise NoPoliciesLoaded(f"no policy set loaded for {jurisdiction!r}")
    return policies[jurisdiction]


def audit_app(
    apk_bytes: bytes,
    jurisdiction: str,
    policies: dict[str, policy_ops.PolicySet],
    mapping: MappingTable,
    sinks: tuple[ApiPattern, ...],
    now: str | None = None,
) -> AuditReport:
    """Run the full static pipeline over one APK and assemble its report."""
    country_set = _require_policy(policies, jurisdiction)
    platform_set = _require_policy(policies, "Platform")
    harmonized = _require_policy(policies, "Harmonized")

    archive = open_archive(apk_bytes)
    bundle = extract_bundle(archive)
    manifest = extract_manifest(decode_axml(bundle.manifest_bytes))
    dex_files = [parse_dex(blob) for _name, blob in bundle.dex_entries]

    invocations = extract_invocations(dex_files)
    class_refs = extract_class_references(dex_files)
    graph = build_call_graph(invocations, manifest, defined_methods(dex_files))

    usage = audit_ops.detect_api_usage(invocations, manifest, mapping, class_refs)
    flows = audit_ops.find_flows(graph, usage, sinks)
    verdict = audit_ops.classify_app(
        audit_ops.check_permissions(manifest, country_set),
        audit_ops.check_permissions(manifest, platform_set),
        audit_ops.check_permissions(manifest, harmonized),
        package_id=manifest.package_id,
        jurisdiction=jurisdiction,
        api_usage=usage,
        flows=flows,
    )

    return AuditReport(
        schema_version=REPORT_SCHEMA_VERSION,
        package_id=manifest.package_id,
        version_code=manifest.version_code,
        apk_digest=bundle.package_digest,
        jurisdiction=jurisdiction,
        declared_permissions=tuple(sorted(manifest.declared_permissions)),
        sdk23_permissions=tuple(sorted(manifest.sdk23_permissions)),
        verdict=verdict,
        reflection_present=reflection_present(dex_files),
        unresolved_attributes=tuple(
            {"element": u.element, "resource_id": u.resource_id}
            for u in manifest.unresolved
        ),
        watch_items=tuple(sorted(audit_ops.watch_items(country_set, manifest))),
        created_at=now if now is not None else _utcnow(),
    )


def manifest_of_apk(apk_bytes: bytes) -> ManifestModel:
    bundle = extract_bundle(open_archive(apk_bytes))
    return extract_manifest(decode_axml(bundle.manifest_bytes))


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---- serialization ----


def _pattern_to_dict(p: ApiPattern) -> dict:
    return {
        "class_descriptor_prefix": p.class_descriptor_prefix,
        "method_name": p.method_name,
        "kind": p.kind,
    }


def _method_to_str(m) -> str:
    return m.signature()


def report_to_dict(report: AuditReport) -> dict:
    v = report.verdict
    return {
        "schema_version": report.schema_version,
        "app": {
            "package_id": report.package_id,
            "version_code": report.version_code,
            "apk_digest": report.apk_digest,
        },
        "jurisdiction": report.jurisdiction,
        "declared_permissions": list(report.declared_permissions),
        "sdk23_permissions": list(report.sdk23_permissions),
        "verdict": {
            "violates_country": v.violates_country,
            "violates_platform": v.violates_platform,
            "violates_harmonized": v.violates_harmonized,
            "asymmetry": v.asymmetry,
            "country_violations": _violations_to_list(v.country_violations),
            "platform_violations": _violations_to_list(v.platform_violations),
            "harmonized_violations": _violations_to_list(v.harmonized_violations),
        },
        "api_usage": [
            {
                "permission": u.permission,
                "pattern": _pattern_to_dict(u.pattern),
                "call_sites": [_method_to_str(m) for m in u.call_sites],
                "declared": u.declared,
                "fallback": u.fallback,
                "provenance": u.provenance,
            }
            for u in v.api_usage
        ],
        "flows": [
            {
                "finding_id": f.finding_id,
                "source_pattern": _pattern_to_dict(f.source_pattern),
                "sink_pattern": _pattern_to_dict(f.sink_pattern),
                "source_method": _method_to_str(f.source_method),
                "sink_method": _method_to_str(f.sink_method),
                "path_length": f.path_length,
                "launcher_reachable": f.launcher_reachable,
                "confidence": "plausible path",
            }
            for f in v.flows
        ],
        "reflection_present": report.reflection_present,
        "unresolved_attributes": list(report.unresolved_attributes),
        "watch_items": list(report.watch_items),
        "dynamic_findings": list(report.dynamic_findings),
        "timestamps": {"created_at": report.created_at},
    }


def _violations_to_list(records) -> list[dict]:
    return [
        {
            "framework": r.framework,
            "permission": r.permission,
            "rule_source_clause": r.rule_source_clause,
        }
        for r in records
    ]


def report_to_json(report: AuditReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def report_from_dict(data: dict) -> AuditReport:
    """Inverse of report_to_dict; structured output round-trips losslessly."""

    def pattern(d: dict) -> ApiPattern:
        return ApiPattern(
            class_descriptor_prefix=d["class_descriptor_prefix"],
            method_name=d["method_name"],
            kind=d["kind"],
        )

    def method(signature: str):
        from .dex import MethodRef

        class_part, rest = signature.split("->", 1)
        name, rest = rest.split("(", 1)
        params_part, ret = rest.rsplit(")", 1)
        return MethodRef(
            class_descriptor=class_part,
            name=name,
            parameter_descriptors=tuple(_split_descriptors(params_part)),
            return_descriptor=ret,
        )

    def violations(items: list[dict]):
        return tuple(
            audit_ops.ViolationRecord(
                framework=i["framework"],
                permission=i["permission"],
                rule_source_clause=i["rule_source_clause"],
            )
            for i in items
        )

    v = data["verdict"]
    usage = tuple(
        audit_ops.ApiUsageRecord(
            permission=u["permission"],
            pattern=pattern(u["pattern"]),
            call_sites=tuple(method(s) for s in u["call_sites"]),
            declared=u["declared"],
            fallback=u["fallback"],
            provenance=u["provenance"],
        )
        for u in data["api_usage"]
    )
    flows = tuple(
        audit_ops.FlowFinding(
            source_pattern=pattern(f["source_pattern"]),
            sink_pattern=pattern(f["sink_pattern"]),
            source_method=method(f["source_method"]),
            sink_method=method(f["sink_method"]),
            path_length=f["path_length"],
            launcher_reachable=f["launcher_reachable"],
        )
        for f in data["flows"]
    )
    verdict = audit_ops.AuditVerdict(
        package_id=data["app"]["package_id"],
        jurisdiction=data["jurisdiction"],
        violates_country=v["violates_country"],
        violates_platform=v["violates_platform"],
        violates_harmonized=v["violates_harmonized"],
        asymmetry=v["asymmetry"],
        country_violations=violations(v["country_violations"]),
        platform_violations=violations(v["platform_violations"]),
        harmonized_violations=violations(v["harmonized_violations"]),
        api_usage=usage,
        flows=flows,
    )
    return AuditReport(
        schema_version=data["schema_version"],
        package_id=data["app"]["package_id"],
        version_code=data["app"]["version_code"],
        apk_digest=data["app"]["apk_digest"],
        jurisdiction=data["jurisdiction"],
        declared_permissions=tuple(data["declared_permissions"]),
        sdk23_permissions=tuple(data["sdk23_permissions"]),
        verdict=verdict,
        reflection_present=data["reflection_present"],
        unresolved_attributes=tuple(data["unresolved_attributes"]),
        watch_items=tuple(data["watch_items"]),
        created_at=data["timestamps"]["created_at"],
        dynamic_findings=tuple(data["dynamic_findings"]),
    )


def _split_descriptors(blob: str) -> list[str]:
    out = []
    i = 0
    while i < len(blob):
        start = i
        while blob[i] == "[":
            i += 1
        if blob[i] == "L":
            i = blob.index(";", i) + 1
        else:
            i += 1
        out.append(blob[start:i])
    return out


# ---- corpus ----


def run_corpus(
    registry: RegistryTable,
    apk_files: dict[str, bytes],
    policies: dict[str, policy_ops.PolicySet],
    mapping: MappingTable,
    sinks: tuple[ApiPattern, ...],
    jobs: int = 4,
) -> CorpusResult:
    """Audit every registry row with an APK present.

    APKs are keyed by file name, expected as <package_id>.apk. One corrupt
    APK never aborts the corpus; it becomes a per-app failure record.
    """
    if "Platform" not in policies or "Harmonized" not in policies:
        raise NoPoliciesLoaded("corpus run requires Platform and Harmonized policy sets")

    work = []
    missing: list[str] = []
    for row in registry.rows:
        blob = apk_files.get(f"{row.package_id}.apk")
        if blob is None:
            missing.append(row.package_id)
            continue
        if row.country not in policies:
            raise NoPoliciesLoaded(f"no policy set loaded for {row.country!r}")
        work.append((row, blob))

    def run_one(item):
        row, blob = item
        try:
            return audit_app(blob, row.country, policies, mapping, sinks), None
        except Exception as exc:  # crash isolation: record and continue
            return None, CorpusFailure(
                package_id=row.package_id, jurisdiction=row.country, error=str(exc)
            )

    reports: list[AuditReport] = []
    failures: list[CorpusFailure] = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for report, failure in pool.map(run_one, work):
            if report is not None:
                reports.append(report)
            else:
                failures.append(failure)

    summary = aggregate_country([r.verdict for r in reports], registry)
    return CorpusResult(
        reports=tuple(reports),
        summary=summary,
        failures=tuple(failures),
        missing=tuple(missing),
    )


def emit_report(
    reports: list[AuditReport] | tuple[AuditReport, ...],
    summary: CountrySummary | None,
    fmt: str,
    destination: Path | str,
) -> list[Path]:
    """Write reports to a directory: 'structured' emits one JSON per report
    (schema verbatim), 'tabular' renders the summary table."""
    if fmt not in ("structured", "tabular"):
        raise ValueError(f"format must be structured or tabular, got {fmt!r}")
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritableDestination(str(exc)) from exc

    written: list[Path] = []
    try:
        if fmt == "structured":
            for report in reports:
                path = dest / f"report-{report.package_id}-{report.jurisdiction}.json"
                path.write_text(report_to_json(report), "utf-8")
                written.append(path)
            if summary is not None:
                path = dest / "summary.txt"
                path.write_text(render_summary_table(summary), "utf-8")
                written.append(path)
        else:
            if summary is None:
                raise ValueError("tabular output requires a summary")
            path = dest / "summary.txt"
            path.write_text(render_summary_table(summary), "utf-8")
            written.append(path)
    except OSError as exc:
        raise UnwritableDestination(str(exc)) from exc
    return written
