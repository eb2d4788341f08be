"""Model-assisted policy-to-permission mapping: prompt rendering, response
parsing, registry validation, and union merge of multiple model outputs.

The completion client is an interface; the replay implementation reads
recorded request/response pairs so everything runs offline. Prohibition-kind
conflicts between models are escalated for human review, never auto-resolved.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx
import yaml

from .policy import PolicyRule, PolicySet
from .resources import prompt_texts


class MapperError(Exception):
    pass


class TransportFailure(MapperError):
    pass


class EmptyResponse(MapperError):
    pass


class NoProposalsFound(MapperError):
    pass


class JurisdictionMismatch(MapperError):
    pass


PLACEHOLDER = "[POLICY_TEXT_PLACEHOLDER]"

PERMISSION_PREFIX = "android.permission."

_NAME_TOKEN = re.compile(r"^[A-Za-z][A-Za-z0-9_.]*$")


@dataclass(frozen=True)
class PolicyDocument:
    jurisdiction: str
    title: str
    body_text: str
    source_citation: str

    def __post_init__(self) -> None:
        if not self.body_text.strip():
            raise ValueError("policy document body_text must be non-empty")


@dataclass(frozen=True)
class PromptPair:
    system_text: str
    user_text: str

    def digest(self) -> str:
        joined = self.system_text + "\x00" + self.user_text
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MappingProposal:
    data_type: str
    prohibition: str  # unconditional | conditional
    permissions: tuple[str, ...]
    notes: str
    model_id: str


@dataclass(frozen=True)
class ParseWarning:
    fragment: str
    reason: str


@dataclass(frozen=True)
class ParsedResponse:
    proposals: tuple[MappingProposal, ...]
    warnings: tuple[ParseWarning, ...]


@dataclass(frozen=True)
class PermissionRegistry:
    valid_names: frozenset[str]
    version: str
    aliases: dict[str, str] = field(default_factory=dict)


def load_permission_registry(document: bytes | str) -> PermissionRegistry:
    raw = yaml.safe_load(document)
    if not isinstance(raw, dict) or not isinstance(raw.get("valid_names"), list):
        raise MapperError("permission registry needs a valid_names list")
    return PermissionRegistry(
        valid_names=frozenset(raw["valid_names"]),
        version=str(raw.get("version", "unversioned")),
        aliases=dict(raw.get("aliases") or {}),
    )


def render_prompt(doc: PolicyDocument) -> PromptPair:
    """Expert persona plus the structured instruction template with the
    document body substituted at the placeholder."""
    system_text, user_template = prompt_texts()
    return PromptPair(
        system_text=system_text.strip(),
        user_text=user_template.replace(PLACEHOLDER, doc.body_text),
    )


class CompletionClient(Protocol):
    def complete(self, system_text: str, user_text: str) -> str: ...


@dataclass
class ReplayClient:
    """Serves the recorded response for one (jurisdiction, model) directory."""

    directory: Path

    def complete(self, system_text: str, user_text: str) -> str:
        path = Path(self.directory) / "response.txt"
        try:
            return path.read_text("utf-8")
        except OSError as exc:
            raise TransportFailure(f"no recorded response at {path}") from exc


@dataclass
class HttpCompletionClient:
    """Chat-completions client; endpoint and credential come from config."""

    endpoint: str
    model: str
    api_key: str = ""
    timeout: float = 60.0
    transport: httpx.BaseTransport | None = None

    def complete(self, system_text: str, user_text: str) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        }
        try:
            with httpx.Client(transport=self.transport, timeout=self.timeout) as client:
                response = client.post(self.endpoint, json=payload, headers=headers)
                response.raise_for_status()
                body = response.json()
            return body["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise TransportFailure(f"completion request failed: {exc}") from exc


def http_client_from_config(document: bytes | str) -> HttpCompletionClient:
    """Build a live client from a YAML config: endpoint, model, api_key or
    api_key_env. Credentials are configuration, never constants."""
    import os

    raw = yaml.safe_load(document)
    if not isinstance(raw, dict) or "endpoint" not in raw or "model" not in raw:
        raise MapperError("client config needs endpoint and model")
    api_key = raw.get("api_key", "")
    if not api_key and raw.get("api_key_env"):
        api_key = os.environ.get(raw["api_key_env"], "")
    return HttpCompletionClient(endpoint=raw["endpoint"], model=raw["model"], api_key=api_key)


def complete(
    prompt: PromptPair, client: CompletionClient, archive_dir: Path | str | None = None
) -> str:
    """Run one completion; archive the exchange keyed by the request digest."""
    text = client.complete(prompt.system_text, prompt.user_text)
    if not text or not text.strip():
        raise EmptyResponse("completion returned no text")
    if archive_dir is not None:
        directory = Path(archive_dir)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "request.txt").write_text(
            prompt.system_text + "\n\n" + prompt.user_text, "utf-8"
        )
        (directory / "response.txt").write_text(text, "utf-8")
        (directory / "request.digest").write_text(prompt.digest() + "\n", "utf-8")
    return text


def _parse_prohibition(cell: str) -> str | None:
    lowered = cell.strip().lower()
    if lowered.startswith("uncond"):
        return "unconditional"
    if lowered.startswith("cond"):
        return "conditional"
    return None


def _parse_permission_cell(cell: str) -> tuple[list[str], list[str]]:
    names: list[str] = []
    rejects: list[str] = []
    cleaned = cell.replace("`", " ")
    for token in re.split(r"[,;]", cleaned):
        token = token.strip().strip(".")
        if not token or token.lower() in ("none", "n/a", "-"):
            continue
        if _NAME_TOKEN.match(token):
            names.append(token)
        else:
            rejects.append(token)
    return names, rejects


def _strip_md(text: str) -> str:
    return text.replace("**", "").strip()


def parse_mapping_response(text: str, model_id: str = "") -> ParsedResponse:
    """Parse a model response into proposals.

    Accepts the markdown-table rendering and the labeled-list rendering of the
    output format; fragments that fail to parse become warnings, never silent
    drops. Raises NoProposalsFound when nothing parseable remains.
    """
    proposals: list[MappingProposal] = []
    warnings: list[ParseWarning] = []

    table_rows = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("|") and stripped.endswith("|"):
            cells = [_strip_md(c) for c in stripped.strip("|").split("|")]
            table_rows.append(cells)

    for cells in table_rows:
        if len(cells) < 3:
            warnings.append(ParseWarning("|".join(cells), "table row with fewer than 3 cells"))
            continue
        if set("".join(cells)) <= set("-: "):
            continue  # separator row
        if cells[0].lower().replace(" ", "") in ("datatype", "data_type"):
            continue  # header row
        prohibition = _parse_prohibition(cells[1])
        if prohibition is None:
            warnings.append(ParseWarning("|".join(cells), f"unrecognized prohibition {cells[1]!r}"))
            continue
        names, bad = _parse_permission_cell(cells[2])
        for token in bad:
            warnings.append(ParseWarning(token, "not a permission name"))
        notes = cells[3] if len(cells) > 3 else ""
        if not names and not notes:
            warnings.append(ParseWarning("|".join(cells), "row without permissions or notes"))
            continue
        proposals.append(
            MappingProposal(
                data_type=cells[0],
                prohibition=prohibition,
                permissions=tuple(names),
                notes=notes,
                model_id=model_id,
            )
        )

    if not proposals:
        # Labeled-list rendering: "Data Type: ..." blocks.
        block: dict[str, str] = {}

        def flush() -> None:
            if not block:
                return
            data_type = block.get("data type")
            prohibition = _parse_prohibition(block.get("prohibition type", ""))
            if not data_type or prohibition is None:
                warnings.append(ParseWarning(str(dict(block)), "incomplete labeled block"))
                block.clear()
                return
            names, bad = _parse_permission_cell(block.get("android permissions", ""))
            for token in bad:
                warnings.append(ParseWarning(token, "not a permission name"))
            proposals.append(
                MappingProposal(
                    data_type=data_type,
                    prohibition=prohibition,
                    permissions=tuple(names),
                    notes=block.get("notes", ""),
                    model_id=model_id,
                )
            )
            block.clear()

        for line in text.splitlines():
            m = re.match(
                r"^[-*\s]*(Data Type|Prohibition Type|Android Permissions?|Notes)\s*:\s*(.*)$",
                _strip_md(line),
                re.IGNORECASE,
            )
            if not m:
                continue
            label = m.group(1).lower()
            if label.startswith("android permission"):
                label = "android permissions"
            if label == "data type" and block:
                flush()
            block[label] = m.group(2)
        flush()

    if not proposals:
        raise NoProposalsFound("no recognizable mapping rows in response")
    return ParsedResponse(proposals=tuple(proposals), warnings=tuple(warnings))


@dataclass(frozen=True)
class RejectedName:
    data_type: str
    permission: str
    reason: str


@dataclass(frozen=True)
class ValidationResult:
    accepted: tuple[MappingProposal, ...]
    rejected: tuple[RejectedName, ...]


def normalize_permission(name: str, registry: PermissionRegistry) -> str:
    qualified = name if "." in name else PERMISSION_PREFIX + name
    return registry.aliases.get(qualified, qualified)


def validate_proposals(
    proposals: list[MappingProposal] | tuple[MappingProposal, ...],
    registry: PermissionRegistry,
) -> ValidationResult:
    """Check every proposed name against the platform registry after alias
    normalization; proposals are split, keeping valid names and rejecting the
    rest with reasons."""
    accepted: list[MappingProposal] = []
    rejected: list[RejectedName] = []
    for proposal in proposals:
        valid: list[str] = []
        for name in proposal.permissions:
            normalized = normalize_permission(name, registry)
            if normalized in registry.valid_names:
                if normalized not in valid:
                    valid.append(normalized)
            else:
                rejected.append(
                    RejectedName(
                        data_type=proposal.data_type,
                        permission=name,
                        reason="not in platform registry",
                    )
                )
        if valid:
            accepted.append(
                MappingProposal(
                    data_type=proposal.data_type,
                    prohibition=proposal.prohibition,
                    permissions=tuple(valid),
                    notes=proposal.notes,
                    model_id=proposal.model_id,
                )
            )
    return ValidationResult(accepted=tuple(accepted), rejected=tuple(rejected))


@dataclass(frozen=True)
class ReviewFlag:
    permission: str
    detail: str


@dataclass(frozen=True)
class MergeResult:
    draft: PolicySet
    review_flags: tuple[ReviewFlag, ...]


def merge_model_outputs(
    per_model: list[list[MappingProposal]] | list[tuple[MappingProposal, ...]],
    jurisdiction: str = "Platform",
    version: str = "draft",
) -> MergeResult:
    """Union the accepted proposals of several models into a draft rule set.

    Permission sets are unioned per (data_type, prohibition). A permission
    proposed with both prohibition kinds raises a review flag and is withheld
    from the draft until a human resolves it.
    """
    if not per_model:
        raise MapperError("merge requires at least one model output")

    grouped: dict[tuple[str, str], set[str]] = {}
    models_for_group: dict[tuple[str, str], set[str]] = {}
    kind_by_permission: dict[str, set[str]] = {}
    for proposals in per_model:
        for proposal in proposals:
            key = (proposal.data_type, proposal.prohibition)
            grouped.setdefault(key, set()).update(proposal.permissions)
            models_for_group.setdefault(key, set()).add(proposal.model_id)
            for permission in proposal.permissions:
                kind_by_permission.setdefault(permission, set()).add(proposal.prohibition)

    conflicted = {p for p, kinds in kind_by_permission.items() if len(kinds) > 1}
    flags = tuple(
        ReviewFlag(
            permission=p,
            detail="proposed with both prohibition kinds; human review required",
        )
        for p in sorted(conflicted)
    )

    rules = []
    for (data_type, prohibition), permissions in sorted(grouped.items()):
        kept = frozenset(permissions - conflicted)
        if not kept:
            continue
        contributors = ",".join(sorted(m for m in models_for_group[(data_type, prohibition)] if m))
        rules.append(
            PolicyRule(
                data_type=data_type,
                prohibition=prohibition,
                permissions=kept,
                source_clause=f"model union ({contributors or 'unattributed'})",
            )
        )
    draft = PolicySet(jurisdiction=jurisdiction, version=version, rules=tuple(rules))
    return MergeResult(draft=draft, review_flags=flags)


@dataclass(frozen=True)
class PolicyDiff:
    missing: frozenset[str]  # in expert set, absent from draft
    extra: frozenset[str]  # in draft, absent from expert set
    kind_mismatches: frozenset[str]

    def is_empty(self) -> bool:
        return not (self.missing or self.extra or self.kind_mismatches)


def diff_against_ground_truth(draft: PolicySet, expert: PolicySet) -> PolicyDiff:
    """Coverage report of a drafted rule set against the expert-derived one."""
    if draft.jurisdiction != expert.jurisdiction:
        raise JurisdictionMismatch(
            f"draft is {draft.jurisdiction!r}, expert set is {expert.jurisdiction!r}"
        )

    def kinds(ps: PolicySet) -> dict[str, str]:
        out: dict[str, str] = {}
        for rule in ps.rules:
            for permission in rule.permissions:
                out[permission] = rule.prohibition
        return out

    draft_kinds = kinds(draft)
    expert_kinds = kinds(expert)
    missing = frozenset(expert_kinds.keys() - draft_kinds.keys())
    extra = frozenset(draft_kinds.keys() - expert_kinds.keys())
    mismatched = frozenset(
        p
        for p in draft_kinds.keys() & expert_kinds.keys()
        if draft_kinds[p] != expert_kinds[p]
    )
    return PolicyDiff(missing=missing, extra=extra, kind_mismatches=mismatched)
