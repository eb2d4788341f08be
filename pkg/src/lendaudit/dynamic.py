"""Hook-plan generation and runtime event-log analysis.

The instrumentation agent is external: this side emits declarative hook plans
and consumes its newline-delimited event logs, looking for source-to-sink
pairs that complete before the first registration milestone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .audit import FlowFinding
from .manifest import ManifestModel
from .mapping import MappingTable, UnknownPermission, apis_for_permission


class DynamicError(Exception):
    pass


class MalformedRecord(DynamicError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class NonMonotonicTimestamp(DynamicError):
    pass


class EmptyPlan(DynamicError):
    """No flows and no watch items: a signal that there is nothing to hook."""


EVENT_SCHEMA_VERSION = 1
PLAN_SCHEMA_VERSION = 1

PAIRING_WINDOW_MS = 60_000

TAGS = ("source", "sink", "marker")
MARKER_KINDS = ("APP_LAUNCH", "REGISTRATION_MILESTONE")

CATEGORIES = (
    "contacts",
    "sms",
    "call_log",
    "media",
    "location",
    "packages",
    "identifiers",
    "storage",
)

# Permission family -> evidence category.
PERMISSION_CATEGORIES = {
    "android.permission.READ_CONTACTS": "contacts",
    "android.permission.WRITE_CONTACTS": "contacts",
    "android.permission.GET_ACCOUNTS": "contacts",
    "android.permission.READ_SMS": "sms",
    "android.permission.SEND_SMS": "sms",
    "android.permission.RECEIVE_SMS": "sms",
    "android.permission.READ_CALL_LOG": "call_log",
    "android.permission.WRITE_CALL_LOG": "call_log",
    "android.permission.PROCESS_OUTGOING_CALLS": "call_log",
    "android.permission.READ_MEDIA_IMAGES": "media",
    "android.permission.READ_MEDIA_VIDEO": "media",
    "android.permission.READ_MEDIA_AUDIO": "media",
    "android.permission.CAMERA": "media",
    "android.permission.RECORD_AUDIO": "media",
    "android.permission.ACCESS_FINE_LOCATION": "location",
    "android.permission.ACCESS_COARSE_LOCATION": "location",
    "android.permission.ACCESS_BACKGROUND_LOCATION": "location",
    "android.permission.QUERY_ALL_PACKAGES": "packages",
    "android.permission.READ_PHONE_NUMBERS": "identifiers",
    "android.permission.READ_PHONE_STATE": "identifiers",
    "android.permission.READ_EXTERNAL_STORAGE": "storage",
    "android.permission.WRITE_EXTERNAL_STORAGE": "storage",
    "android.permission.MANAGE_EXTERNAL_STORAGE": "storage",
}


@dataclass(frozen=True)
class Hook:
    class_descriptor: str
    method_name: str
    capture: str  # args | return | both
    tag: str  # source | sink


@dataclass(frozen=True)
class HookPlan:
    package_id: str
    hooks: tuple[Hook, ...]
    derived_from: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": PLAN_SCHEMA_VERSION,
                "package_id": self.package_id,
                "hooks": [
                    {
                        "class_descriptor": h.class_descriptor,
                        "method_name": h.method_name,
                        "capture": h.capture,
                        "tag": h.tag,
                    }
                    for h in self.hooks
                ],
                "derived_from": list(self.derived_from),
            },
            indent=2,
            sort_keys=True,
        )


@dataclass(frozen=True)
class ApiIdentity:
    class_descriptor: str
    method_name: str


@dataclass(frozen=True)
class RuntimeEvent:
    event_id: str
    timestamp_ms: int
    tag: str
    api: ApiIdentity | None
    activity: str | None
    payload_digest: str | None
    endpoint: str | None
    marker_kind: str | None


@dataclass(frozen=True)
class ExfiltrationFinding:
    category: str
    pre_registration: bool
    launch_time: bool
    source_event_id: str
    sink_event_id: str
    endpoint: str | None


def generate_hook_plan(
    flows: Iterable[FlowFinding],
    watch_items: Iterable[str],
    manifest: ManifestModel,
    table: MappingTable,
) -> HookPlan:
    """One source hook per distinct source pattern in the flows and watch
    items, one sink hook per distinct sink pattern; every hook traces back to
    the findings or watch items that demanded it.

    Raises EmptyPlan when there is nothing to hook.
    """
    hooks: dict[tuple[str, str, str], Hook] = {}
    derived: list[str] = []

    def add(class_descriptor: str, method: str, capture: str, tag: str) -> None:
        key = (class_descriptor, method, tag)
        if key not in hooks:
            hooks[key] = Hook(
                class_descriptor=class_descriptor,
                method_name=method,
                capture=capture,
                tag=tag,
            )

    for flow in flows:
        derived.append(flow.finding_id)
        add(
            flow.source_pattern.class_descriptor_prefix,
            flow.source_pattern.method_name,
            "both",
            "source",
        )
        add(
            flow.sink_pattern.class_descriptor_prefix,
            flow.sink_pattern.method_name,
            "args",
            "sink",
        )

    for permission in sorted(set(watch_items)):
        try:
            lookup = apis_for_permission(table, permission, manifest.target_sdk)
        except UnknownPermission:
            continue  # nothing hookable in the seed table for this permission
        if not lookup.patterns:
            continue
        derived.append(f"watch:{permission}")
        for pattern in lookup.patterns:
            add(pattern.class_descriptor_prefix, pattern.method_name, "both", "source")

    if not hooks:
        raise EmptyPlan(f"{manifest.package_id}: no flows and no watch items")

    ordered = tuple(
        hooks[key] for key in sorted(hooks, key=lambda k: (k[2], k[0], k[1]))
    )
    return HookPlan(
        package_id=manifest.package_id,
        hooks=ordered,
        derived_from=tuple(dict.fromkeys(derived)),
    )


def _parse_record(line_no: int, raw: dict) -> RuntimeEvent:
    def need(key: str):
        if key not in raw:
            raise MalformedRecord(line_no, f"missing field {key!r}")
        return raw[key]

    schema = need("schema_version")
    if schema != EVENT_SCHEMA_VERSION:
        raise MalformedRecord(line_no, f"unsupported schema_version {schema!r}")
    event_id = str(need("event_id"))
    timestamp = need("timestamp_ms")
    if not isinstance(timestamp, int):
        raise MalformedRecord(line_no, "timestamp_ms must be an integer")
    tag = need("tag")
    if tag not in TAGS:
        raise MalformedRecord(line_no, f"tag must be one of {TAGS}, got {tag!r}")

    api = None
    if tag in ("source", "sink"):
        api_raw = need("api")
        if not isinstance(api_raw, dict) or "class_descriptor" not in api_raw:
            raise MalformedRecord(line_no, "api must carry class_descriptor/method_name")
        api = ApiIdentity(
            class_descriptor=str(api_raw["class_descriptor"]),
            method_name=str(api_raw.get("method_name", "")),
        )

    marker_kind = raw.get("marker_kind")
    if tag == "marker":
        if marker_kind not in MARKER_KINDS:
            raise MalformedRecord(line_no, f"marker needs marker_kind in {MARKER_KINDS}")
    endpoint = raw.get("endpoint")
    if tag == "sink" and not endpoint:
        raise MalformedRecord(line_no, "sink events must carry an endpoint")

    return RuntimeEvent(
        event_id=event_id,
        timestamp_ms=timestamp,
        tag=tag,
        api=api,
        activity=raw.get("activity"),
        payload_digest=raw.get("payload_digest"),
        endpoint=endpoint,
        marker_kind=marker_kind,
    )


def ingest_events(log: bytes | str) -> list[RuntimeEvent]:
    """Parse a newline-delimited event log, enforcing per-session timestamp
    monotonicity. Malformed lines fail with their line number."""
    if isinstance(log, bytes):
        log = log.decode("utf-8")
    events: list[RuntimeEvent] = []
    last_ts: int | None = None
    for line_no, line in enumerate(log.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise MalformedRecord(line_no, "record must be a JSON object")
        event = _parse_record(line_no, raw)
        if last_ts is not None and event.timestamp_ms < last_ts:
            raise NonMonotonicTimestamp(
                f"line {line_no}: timestamp {event.timestamp_ms} after {last_ts}"
            )
        last_ts = event.timestamp_ms
        events.append(event)
    return events


def _source_category(event: RuntimeEvent, table: MappingTable) -> str | None:
    if event.api is None:
        return None
    for entry in table.entries:
        if event.api.class_descriptor.startswith(entry.pattern.class_descriptor_prefix):
            if entry.pattern.method_name in ("*", event.api.method_name):
                return PERMISSION_CATEGORIES.get(entry.permission)
    return None


def detect_exfiltration(
    events: Sequence[RuntimeEvent],
    manifest: ManifestModel,
    table: MappingTable,
) -> list[ExfiltrationFinding]:
    """Pair sources with subsequent sinks and classify the timing.

    A sink pairs with the latest unpaired source whose payload digest matches
    (digest equality wins regardless of age), else with the most recent
    unpaired source within the 60 s window. pre_registration is computed
    against the first REGISTRATION_MILESTONE; with no marker the whole session
    counts as pre-registration. launch_time marks sources observed inside a
    launcher activity.
    """
    marker_ts: int | None = None
    for event in events:
        if event.tag == "marker" and event.marker_kind == "REGISTRATION_MILESTONE":
            marker_ts = event.timestamp_ms
            break

    findings: list[ExfiltrationFinding] = []
    unpaired: list[RuntimeEvent] = []
    for event in events:
        if event.tag == "source":
            unpaired.append(event)
            continue
        if event.tag != "sink":
            continue
        source = None
        if event.payload_digest:
            for candidate in reversed(unpaired):
                if candidate.payload_digest == event.payload_digest:
                    source = candidate
                    break
        if source is None:
            for candidate in reversed(unpaired):
                if event.timestamp_ms - candidate.timestamp_ms <= PAIRING_WINDOW_MS:
                    source = candidate
                    break
        if source is None:
            continue
        unpaired.remove(source)
        category = _source_category(source, table)
        if category is None:
            continue  # source api not in the mapping table; cannot classify
        pre_registration = marker_ts is None or (
            source.timestamp_ms < marker_ts and event.timestamp_ms < marker_ts
        )
        launch_time = (
            source.activity is not None and source.activity in manifest.launcher_activities
        )
        findings.append(
            ExfiltrationFinding(
                category=category,
                pre_registration=pre_registration,
                launch_time=launch_time,
                source_event_id=source.event_id,
                sink_event_id=event.event_id,
                endpoint=event.endpoint,
            )
        )
    return findings


@dataclass(frozen=True)
class DynamicSummary:
    total_apps: int
    apps_with_pre_registration: int
    category_app_counts: dict[str, int]  # apps with >=1 pre-registration finding
    apps_with_launch_time: int
    launcher_categories_per_app: dict[str, tuple[str, ...]]

    def headline(self) -> str:
        return f"{self.apps_with_pre_registration}/{self.total_apps}"


def summarize_dynamic(
    findings_per_app: Mapping[str, Sequence[ExfiltrationFinding]],
    functioning_apps: Iterable[str],
) -> DynamicSummary:
    """Corpus-level counts: apps with pre-registration exfiltration, the same
    per category, and per-app category lists for launcher-activity findings."""
    apps = list(dict.fromkeys(functioning_apps))
    pre_reg_apps = 0
    launch_apps = 0
    category_counts = {c: 0 for c in CATEGORIES}
    launcher_categories: dict[str, tuple[str, ...]] = {}
    for app in apps:
        findings = findings_per_app.get(app, ())
        pre = [f for f in findings if f.pre_registration]
        if pre:
            pre_reg_apps += 1
            for category in sorted({f.category for f in pre}):
                category_counts[category] += 1
        launcher = sorted({f.category for f in findings if f.launch_time})
        if launcher:
            launch_apps += 1
            launcher_categories[app] = tuple(launcher)
    return DynamicSummary(
        total_apps=len(apps),
        apps_with_pre_registration=pre_reg_apps,
        category_app_counts=category_counts,
        apps_with_launch_time=launch_apps,
        launcher_categories_per_app=launcher_categories,
    )


def event_digest(payload: bytes) -> str:
    """Digest convention shared with the external agent's log writer."""
    return hashlib.sha256(payload).hexdigest()
