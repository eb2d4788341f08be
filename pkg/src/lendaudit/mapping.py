"""Permission-to-API mapping tables, versioned by API level range."""

from __future__ import annotations

from dataclasses import dataclass

import yaml


class MappingError(Exception):
    pass


class SchemaViolation(MappingError):
    pass


class InvertedRange(MappingError):
    pass


class UnknownPermission(MappingError):
    pass


PATTERN_KINDS = ("method_call", "content_uri")

WILDCARD = "*"

# content_uri patterns match provider reads: a ContentResolver call whose
# containing method also references the provider class (URI constants).
CONTENT_RESOLVER_PREFIX = "Landroid/content/ContentResolver;"


@dataclass(frozen=True)
class ApiPattern:
    class_descriptor_prefix: str
    method_name: str
    kind: str

    def matches_call(self, class_descriptor: str, method_name: str) -> bool:
        if not class_descriptor.startswith(self.class_descriptor_prefix):
            return False
        return self.method_name == WILDCARD or self.method_name == method_name

    def key(self) -> str:
        return f"{self.kind}:{self.class_descriptor_prefix}:{self.method_name}"


@dataclass(frozen=True)
class MappingEntry:
    permission: str
    pattern: ApiPattern
    min_api: int
    max_api: int
    provenance: str


@dataclass(frozen=True)
class MappingTable:
    entries: tuple[MappingEntry, ...]

    def permissions(self) -> frozenset[str]:
        return frozenset(e.permission for e in self.entries)


@dataclass(frozen=True)
class PatternLookup:
    """apis_for_permission result: patterns plus the fallback marker."""

    patterns: tuple[ApiPattern, ...]
    fallback: bool


def load_mapping(document: bytes | str) -> MappingTable:
    """Load a mapping file: entries of
    {permission, class_prefix, method, kind, min_api, max_api, provenance}."""
    try:
        raw = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise SchemaViolation(f"unparseable mapping document: {exc}") from exc
    if raw is None:
        return MappingTable(entries=())
    if not isinstance(raw, dict) or not isinstance(raw.get("entries"), list):
        raise SchemaViolation("mapping document must be a mapping with an entries list")

    entries = []
    for i, item in enumerate(raw["entries"]):
        context = f"entries[{i}]"
        if not isinstance(item, dict):
            raise SchemaViolation(f"{context}: entry must be a mapping")
        try:
            permission = item["permission"]
            class_prefix = item["class_prefix"]
            method = item["method"]
            kind = item["kind"]
            min_api = item["min_api"]
            max_api = item["max_api"]
            provenance = item["provenance"]
        except KeyError as exc:
            raise SchemaViolation(f"{context}: missing field {exc.args[0]!r}") from exc
        if kind not in PATTERN_KINDS:
            raise SchemaViolation(f"{context}: kind must be one of {PATTERN_KINDS}")
        if not isinstance(class_prefix, str) or not class_prefix:
            raise SchemaViolation(f"{context}: class_prefix must be a non-empty string")
        if not isinstance(min_api, int) or not isinstance(max_api, int):
            raise SchemaViolation(f"{context}: min_api/max_api must be integers")
        if min_api > max_api:
            raise InvertedRange(f"{context}: range [{min_api},{max_api}] is inverted")
        entries.append(
            MappingEntry(
                permission=str(permission),
                pattern=ApiPattern(
                    class_descriptor_prefix=class_prefix,
                    method_name=str(method),
                    kind=kind,
                ),
                min_api=min_api,
                max_api=max_api,
                provenance=str(provenance),
            )
        )
    return MappingTable(entries=tuple(entries))


def apis_for_permission(table: MappingTable, permission: str, api_level: int) -> PatternLookup:
    """Patterns for a permission at the given API level.

    When no loaded range contains the level, falls back to the nearest lower
    covered level and marks the result; raises UnknownPermission when the
    permission has no entries at all.
    """
    if api_level < 1:
        raise ValueError(f"api_level must be >= 1, got {api_level}")
    relevant = [e for e in table.entries if e.permission == permission]
    if not relevant:
        raise UnknownPermission(permission)
    exact = [e for e in relevant if e.min_api <= api_level <= e.max_api]
    if exact:
        return PatternLookup(patterns=tuple(e.pattern for e in exact), fallback=False)
    lower_levels = [e.max_api for e in relevant if e.max_api < api_level]
    if not lower_levels:
        return PatternLookup(patterns=(), fallback=True)
    nearest = max(lower_levels)
    chosen = [e for e in relevant if e.min_api <= nearest <= e.max_api]
    return PatternLookup(patterns=tuple(e.pattern for e in chosen), fallback=True)


def entry_for_pattern(table: MappingTable, pattern: ApiPattern) -> MappingEntry | None:
    for entry in table.entries:
        if entry.pattern == pattern:
            return entry
    return None


def load_sink_patterns(document: bytes | str) -> tuple[ApiPattern, ...]:
    """Network sink patterns: connection-open/read calls plus the common
    third-party HTTP client libraries."""
    try:
        raw = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise SchemaViolation(f"unparseable sink document: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("patterns"), list):
        raise SchemaViolation("sink document must be a mapping with a patterns list")
    patterns = []
    for i, item in enumerate(raw["patterns"]):
        if not isinstance(item, dict) or "class_prefix" not in item:
            raise SchemaViolation(f"patterns[{i}]: needs class_prefix")
        patterns.append(
            ApiPattern(
                class_descriptor_prefix=item["class_prefix"],
                method_name=str(item.get("method", WILDCARD)),
                kind="method_call",
            )
        )
    return tuple(patterns)
