"""Declarative prohibition rule sets: loading, querying, harmonized union."""

from __future__ import annotations

import re
from dataclasses import dataclass

import yaml


class PolicyError(Exception):
    """Base class for policy loading/consistency failures."""


class SchemaViolation(PolicyError):
    pass


class ConflictingProhibitionKind(PolicyError):
    pass


class UnknownJurisdiction(PolicyError):
    pass


JURISDICTIONS = (
    "Indonesia",
    "Kenya",
    "Nigeria",
    "Pakistan",
    "Philippines",
    "India",
    "Thailand",
    "Platform",
    "Harmonized",
)

# Shipped country files present in Table-1-style data; India and Thailand are
# loaded but excluded from corpus defaults.
DEFAULT_COUNTRIES = ("Indonesia", "Kenya", "Nigeria", "Pakistan", "Philippines")

PROHIBITION_KINDS = ("unconditional", "conditional")

# Fully-qualified permission names: at least one dot-separated package segment.
_PERMISSION_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9_]*(\.[A-Za-z][A-Za-z0-9_]*)+$")


@dataclass(frozen=True)
class PolicyRule:
    data_type: str
    prohibition: str
    permissions: frozenset[str]
    source_clause: str


@dataclass(frozen=True)
class PolicySet:
    jurisdiction: str
    version: str
    rules: tuple[PolicyRule, ...]


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise SchemaViolation(f"{context}: missing required field {key!r}")
    return mapping[key]


def load_policy(document: bytes | str) -> PolicySet:
    """Load and validate one jurisdiction's rule file.

    Permission names are checked for fully-qualified syntax and passed through
    the file's alias table (used to record historical spellings of media
    permissions against the official platform names).
    """
    try:
        raw = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise SchemaViolation(f"unparseable policy document: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaViolation("policy document must be a mapping")

    jurisdiction = _require(raw, "jurisdiction", "policy")
    if jurisdiction not in JURISDICTIONS:
        raise UnknownJurisdiction(f"unknown jurisdiction {jurisdiction!r}")
    version = str(_require(raw, "version", "policy"))

    aliases = raw.get("aliases") or {}
    if not isinstance(aliases, dict):
        raise SchemaViolation("aliases must be a mapping of name -> canonical name")

    rules_raw = _require(raw, "rules", "policy")
    if not isinstance(rules_raw, list):
        raise SchemaViolation("rules must be a list")

    rules: list[PolicyRule] = []
    seen: dict[str, str] = {}  # permission -> prohibition kind
    for i, rule_raw in enumerate(rules_raw):
        context = f"rules[{i}]"
        if not isinstance(rule_raw, dict):
            raise SchemaViolation(f"{context}: rule must be a mapping")
        data_type = str(_require(rule_raw, "data_type", context))
        prohibition = _require(rule_raw, "prohibition", context)
        if prohibition not in PROHIBITION_KINDS:
            raise SchemaViolation(
                f"{context}: prohibition must be one of {PROHIBITION_KINDS}, got {prohibition!r}"
            )
        permissions_raw = _require(rule_raw, "permissions", context)
        if not isinstance(permissions_raw, list) or not permissions_raw:
            raise SchemaViolation(f"{context}: permissions must be a non-empty list")
        source_clause = str(_require(rule_raw, "source_clause", context))

        permissions = set()
        for name in permissions_raw:
            if not isinstance(name, str) or not _PERMISSION_NAME.match(name):
                raise SchemaViolation(
                    f"{context}: {name!r} is not a fully-qualified permission name"
                )
            permissions.add(aliases.get(name, name))

        for name in sorted(permissions):
            kind = seen.get(name)
            if kind is not None and kind != prohibition:
                raise ConflictingProhibitionKind(
                    f"{name} declared both {kind} and {prohibition} in {jurisdiction}"
                )
            seen[name] = prohibition

        rules.append(
            PolicyRule(
                data_type=data_type,
                prohibition=prohibition,
                permissions=frozenset(permissions),
                source_clause=source_clause,
            )
        )

    return PolicySet(jurisdiction=jurisdiction, version=version, rules=tuple(rules))


def unconditional_permissions(policy_set: PolicySet) -> frozenset[str]:
    """Union of permissions across unconditional rules; the only prohibitions
    the static audit evaluates."""
    out: set[str] = set()
    for rule in policy_set.rules:
        if rule.prohibition == "unconditional":
            out |= rule.permissions
    return frozenset(out)


def conditional_permissions(policy_set: PolicySet) -> frozenset[str]:
    """Permissions under consent/timing conditions; forwarded to the dynamic
    phase as watch items, never flagged statically."""
    out: set[str] = set()
    for rule in policy_set.rules:
        if rule.prohibition == "conditional":
            out |= rule.permissions
    return frozenset(out)


def harmonized_set(platform: PolicySet, countries: list[PolicySet]) -> PolicySet:
    """Union of the platform's prohibited permissions with every country's
    unconditional prohibitions. Conditional rules are not merged in."""
    rules: list[PolicyRule] = []
    for rule in platform.rules:
        if rule.prohibition == "unconditional":
            rules.append(rule)
    for country in sorted(countries, key=lambda ps: ps.jurisdiction):
        for rule in country.rules:
            if rule.prohibition != "unconditional":
                continue
            rules.append(
                PolicyRule(
                    data_type=rule.data_type,
                    prohibition="unconditional",
                    permissions=rule.permissions,
                    source_clause=f"{country.jurisdiction}: {rule.source_clause}",
                )
            )
    return PolicySet(jurisdiction="Harmonized", version=f"union:{platform.version}", rules=tuple(rules))


def serialize_policy(policy_set: PolicySet) -> bytes:
    """Serialize to the policy file schema; load(serialize(ps)) == ps."""
    doc = {
        "jurisdiction": policy_set.jurisdiction,
        "version": policy_set.version,
        "rules": [
            {
                "data_type": rule.data_type,
                "prohibition": rule.prohibition,
                "permissions": sorted(rule.permissions),
                "source_clause": rule.source_clause,
            }
            for rule in policy_set.rules
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True).encode("utf-8")
