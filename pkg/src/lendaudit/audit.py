"""Static audit: permission checks, sensitive-API detection, flow finding,
and per-app asymmetry classification."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Mapping

from .callgraph import CallGraph, reachable_from, shortest_distances
from .dex import Invocation, MethodRef
from .manifest import ManifestModel
from .mapping import (
    CONTENT_RESOLVER_PREFIX,
    ApiPattern,
    MappingTable,
    apis_for_permission,
    entry_for_pattern,
)
from .policy import PolicySet


class AuditError(Exception):
    pass


class InconsistentEvidence(AuditError):
    pass


ASYMMETRY_CLASSES = ("country_only", "platform_only", "both", "neither")


@dataclass(frozen=True)
class ViolationRecord:
    framework: str  # jurisdiction name, "Platform", or "Harmonized"
    permission: str
    rule_source_clause: str


@dataclass(frozen=True)
class ApiUsageRecord:
    permission: str
    pattern: ApiPattern
    call_sites: tuple[MethodRef, ...]
    declared: bool
    fallback: bool  # pattern chosen via nearest-lower-level fallback
    provenance: str


@dataclass(frozen=True)
class FlowFinding:
    source_pattern: ApiPattern
    sink_pattern: ApiPattern
    source_method: MethodRef
    sink_method: MethodRef
    path_length: int
    launcher_reachable: bool

    @property
    def finding_id(self) -> str:
        text = "|".join(
            (
                self.source_pattern.key(),
                self.sink_pattern.key(),
                self.source_method.signature(),
                self.sink_method.signature(),
            )
        )
        return "flow-" + hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class AuditVerdict:
    package_id: str
    jurisdiction: str
    violates_country: bool
    violates_platform: bool
    violates_harmonized: bool
    asymmetry: str
    country_violations: tuple[ViolationRecord, ...]
    platform_violations: tuple[ViolationRecord, ...]
    harmonized_violations: tuple[ViolationRecord, ...]
    api_usage: tuple[ApiUsageRecord, ...] = ()
    flows: tuple[FlowFinding, ...] = ()


def check_permissions(manifest: ManifestModel, policy_set: PolicySet) -> list[ViolationRecord]:
    """One record per declared permission the set unconditionally prohibits.

    Only unconditional rules are evaluated; an empty result means the app is
    compliant with this set.
    """
    framework = policy_set.jurisdiction
    clause_by_permission: dict[str, str] = {}
    for rule in policy_set.rules:
        if rule.prohibition != "unconditional":
            continue
        for permission in rule.permissions:
            clause_by_permission.setdefault(permission, rule.source_clause)
    hits = manifest.declared_permissions & clause_by_permission.keys()
    return [
        ViolationRecord(
            framework=framework,
            permission=permission,
            rule_source_clause=clause_by_permission[permission],
        )
        for permission in sorted(hits)
    ]


def detect_api_usage(
    invocations: Iterable[Invocation],
    manifest: ManifestModel,
    table: MappingTable,
    class_references: Mapping[MethodRef, frozenset[str]] | None = None,
) -> list[ApiUsageRecord]:
    """Match invocations against the mapping table at the manifest's target
    SDK; one record per (permission, pattern) with at least one call site.

    content_uri patterns require a ContentResolver call whose containing
    method also references the provider class; class_references supplies
    those per-method field/type references.
    """
    invocations = list(invocations)
    class_references = class_references or {}

    records: list[ApiUsageRecord] = []
    for permission in sorted(table.permissions()):
        lookup = apis_for_permission(table, permission, manifest.target_sdk)
        for pattern in lookup.patterns:
            call_sites: list[MethodRef] = []
            seen: set[MethodRef] = set()
            if pattern.kind == "method_call":
                for inv in invocations:
                    if inv.caller in seen:
                        continue
                    if pattern.matches_call(inv.callee.class_descriptor, inv.callee.name):
                        call_sites.append(inv.caller)
                        seen.add(inv.caller)
            else:  # content_uri
                for inv in invocations:
                    if inv.caller in seen:
                        continue
                    if not inv.callee.class_descriptor.startswith(CONTENT_RESOLVER_PREFIX):
                        continue
                    if pattern.method_name not in ("*", inv.callee.name):
                        continue
                    refs = class_references.get(inv.caller, frozenset())
                    if any(r.startswith(pattern.class_descriptor_prefix) for r in refs):
                        call_sites.append(inv.caller)
                        seen.add(inv.caller)
            if call_sites:
                entry = entry_for_pattern(table, pattern)
                records.append(
                    ApiUsageRecord(
                        permission=permission,
                        pattern=pattern,
                        call_sites=tuple(call_sites),
                        declared=permission in manifest.declared_permissions,
                        fallback=lookup.fallback,
                        provenance=entry.provenance if entry else "",
                    )
                )
    return records


def find_flows(
    graph: CallGraph,
    usage: Iterable[ApiUsageRecord],
    sinks: Iterable[ApiPattern],
) -> list[FlowFinding]:
    """Source-to-sink reachability at method granularity.

    A finding per (source call site, sink call site) pair where the sink's
    containing method is reachable from the source's containing method;
    path_length is the shortest such path, 0 when they share a method. These
    are plausible paths, never confirmed transfers.
    """
    sink_patterns = list(sinks)
    sink_sites: list[tuple[ApiPattern, MethodRef]] = []
    seen_sites: set[tuple[str, MethodRef]] = set()
    for caller, callee in sorted(
        graph.edges, key=lambda e: (e[0].signature(), e[1].signature())
    ):
        for pattern in sink_patterns:
            if pattern.matches_call(callee.class_descriptor, callee.name):
                key = (pattern.key(), caller)
                if key not in seen_sites:
                    seen_sites.add(key)
                    sink_sites.append((pattern, caller))

    launcher_reach = reachable_from(graph, graph.launcher_entry_points)

    findings: list[FlowFinding] = []
    emitted: set[tuple[str, str, MethodRef, MethodRef]] = set()
    for record in usage:
        for source_method in record.call_sites:
            distances = shortest_distances(graph, source_method)
            for sink_pattern, sink_method in sink_sites:
                if sink_method not in distances:
                    continue
                key = (
                    record.pattern.key(),
                    sink_pattern.key(),
                    source_method,
                    sink_method,
                )
                if key in emitted:
                    continue
                emitted.add(key)
                findings.append(
                    FlowFinding(
                        source_pattern=record.pattern,
                        sink_pattern=sink_pattern,
                        source_method=source_method,
                        sink_method=sink_method,
                        path_length=distances[sink_method],
                        launcher_reachable=source_method in launcher_reach,
                    )
                )
    findings.sort(
        key=lambda f: (
            f.source_pattern.key(),
            f.sink_pattern.key(),
            f.source_method.signature(),
            f.sink_method.signature(),
        )
    )
    return findings


def classify_app(
    country_violations: Iterable[ViolationRecord],
    platform_violations: Iterable[ViolationRecord],
    harmonized_violations: Iterable[ViolationRecord],
    *,
    package_id: str = "",
    jurisdiction: str = "",
    api_usage: Iterable[ApiUsageRecord] = (),
    flows: Iterable[FlowFinding] = (),
) -> AuditVerdict:
    """Fold the three violation lists into a verdict with its asymmetry class.

    Raises InconsistentEvidence when a country or platform violation exists
    without a harmonized one (the harmonized set must dominate).
    """
    country = tuple(country_violations)
    platform = tuple(platform_violations)
    harmonized = tuple(harmonized_violations)
    violates_country = bool(country)
    violates_platform = bool(platform)
    violates_harmonized = bool(harmonized)
    if (violates_country or violates_platform) and not violates_harmonized:
        raise InconsistentEvidence(
            f"{package_id or 'app'}: country/platform violation without a harmonized one"
        )
    if violates_country and violates_platform:
        asymmetry = "both"
    elif violates_country:
        asymmetry = "country_only"
    elif violates_platform:
        asymmetry = "platform_only"
    else:
        asymmetry = "neither"
    return AuditVerdict(
        package_id=package_id,
        jurisdiction=jurisdiction,
        violates_country=violates_country,
        violates_platform=violates_platform,
        violates_harmonized=violates_harmonized,
        asymmetry=asymmetry,
        country_violations=country,
        platform_violations=platform,
        harmonized_violations=harmonized,
        api_usage=tuple(api_usage),
        flows=tuple(flows),
    )


def verdict_for_manifest(
    manifest: ManifestModel,
    country_set: PolicySet,
    platform_set: PolicySet,
    harmonized_set: PolicySet,
    **extra,
) -> AuditVerdict:
    """Convenience wrapper: run the three permission checks and classify."""
    return classify_app(
        check_permissions(manifest, country_set),
        check_permissions(manifest, platform_set),
        check_permissions(manifest, harmonized_set),
        package_id=manifest.package_id,
        jurisdiction=country_set.jurisdiction,
        **extra,
    )


def watch_items(country_set: PolicySet, manifest: ManifestModel) -> frozenset[str]:
    """Conditional-rule permissions the app declares: no static violation,
    forwarded to the dynamic phase as timing-sensitive watch items."""
    conditional: set[str] = set()
    for rule in country_set.rules:
        if rule.prohibition == "conditional":
            conditional |= rule.permissions
    return frozenset(conditional & manifest.declared_permissions)
