"""Access to the data files shipped inside the package."""

from __future__ import annotations

from importlib import resources

from .mapping import ApiPattern, MappingTable, load_mapping, load_sink_patterns
from .policy import DEFAULT_COUNTRIES, PolicySet, harmonized_set, load_policy

_POLICY_FILES = {
    "Platform": "platform.yaml",
    "Indonesia": "indonesia.yaml",
    "Kenya": "kenya.yaml",
    "Nigeria": "nigeria.yaml",
    "Pakistan": "pakistan.yaml",
    "Philippines": "philippines.yaml",
    "India": "india.yaml",
    "Thailand": "thailand.yaml",
}


def _read(relative: str) -> bytes:
    return resources.files("lendaudit.data").joinpath(relative).read_bytes()


def default_policies() -> dict[str, PolicySet]:
    """All shipped policy sets plus the computed harmonized union.

    The harmonized set unions the platform set with the unconditional rules of
    the default country list (India and Thailand are shipped but excluded).
    """
    sets = {
        jurisdiction: load_policy(_read(f"policies/{filename}"))
        for jurisdiction, filename in _POLICY_FILES.items()
    }
    countries = [sets[c] for c in DEFAULT_COUNTRIES]
    sets["Harmonized"] = harmonized_set(sets["Platform"], countries)
    return sets


def load_policy_dir(paths: list[tuple[str, bytes]]) -> dict[str, PolicySet]:
    """Build a policy collection from (filename, content) pairs, recomputing
    the harmonized union when a Platform set is present."""
    sets: dict[str, PolicySet] = {}
    for _name, content in paths:
        ps = load_policy(content)
        sets[ps.jurisdiction] = ps
    if "Platform" in sets and "Harmonized" not in sets:
        countries = [sets[c] for c in DEFAULT_COUNTRIES if c in sets]
        sets["Harmonized"] = harmonized_set(sets["Platform"], countries)
    return sets


def default_mapping() -> MappingTable:
    return load_mapping(_read("api_mapping.yaml"))


def default_sinks() -> tuple[ApiPattern, ...]:
    return load_sink_patterns(_read("network_sinks.yaml"))


def default_permission_registry() -> bytes:
    return _read("permission_registry.yaml")


def prompt_texts() -> tuple[str, str]:
    system = resources.files("lendaudit.data").joinpath("prompts/system.txt").read_text("utf-8")
    user = resources.files("lendaudit.data").joinpath("prompts/user_template.txt").read_text("utf-8")
    return system, user
