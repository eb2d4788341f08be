import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lendaudit.policy import (
    ConflictingProhibitionKind,
    SchemaViolation,
    UnknownJurisdiction,
    conditional_permissions,
    harmonized_set,
    load_policy,
    serialize_policy,
    unconditional_permissions,
)

P = "android.permission."


def doc(jurisdiction="Kenya", rules=None, aliases=None):
    lines = [f"jurisdiction: {jurisdiction}", 'version: "1"']
    if aliases:
        lines.append("aliases:")
        for src, dst in aliases.items():
            lines.append(f"  {src}: {dst}")
    lines.append("rules:")
    for rule in rules or []:
        lines.append(f"  - data_type: {rule[0]}")
        lines.append(f"    prohibition: {rule[1]}")
        lines.append("    permissions:")
        for perm in rule[2]:
            lines.append(f"      - {perm}")
        lines.append("    source_clause: test clause")
    if not rules:
        lines.append("  []")
    return "\n".join(lines)


def test_kenya_shipped_set(policies):
    expected = {
        P + "READ_CONTACTS",
        P + "WRITE_CONTACTS",
        P + "GET_ACCOUNTS",
        P + "READ_CALL_LOG",
        P + "WRITE_CALL_LOG",
    }
    assert unconditional_permissions(policies["Kenya"]) == expected


def test_platform_shipped_set_is_exactly_eight(policies):
    expected = {
        P + "READ_EXTERNAL_STORAGE",
        P + "WRITE_EXTERNAL_STORAGE",
        P + "READ_MEDIA_IMAGES",
        P + "READ_MEDIA_VIDEO",
        P + "READ_CONTACTS",
        P + "READ_PHONE_NUMBERS",
        P + "ACCESS_FINE_LOCATION",
        P + "QUERY_ALL_PACKAGES",
    }
    assert unconditional_permissions(policies["Platform"]) == expected


def test_indonesia_has_no_unconditional_rules(policies):
    assert unconditional_permissions(policies["Indonesia"]) == frozenset()
    assert conditional_permissions(policies["Indonesia"])


def test_pakistan_includes_sms(policies):
    unconditional = unconditional_permissions(policies["Pakistan"])
    assert P + "READ_SMS" in unconditional
    assert P + "SEND_SMS" in unconditional


def test_conflicting_kind_rejected():
    text = doc(
        rules=[
            ("Camera", "conditional", [P + "CAMERA"]),
            ("Camera again", "unconditional", [P + "CAMERA"]),
        ]
    )
    with pytest.raises(ConflictingProhibitionKind):
        load_policy(text)


def test_unknown_jurisdiction():
    with pytest.raises(UnknownJurisdiction):
        load_policy(doc(jurisdiction="Atlantis", rules=[("X", "unconditional", [P + "CAMERA"])]))


def test_unqualified_name_rejected():
    with pytest.raises(SchemaViolation):
        load_policy(doc(rules=[("X", "unconditional", ["READ_CONTACTS"])]))


def test_empty_permission_list_rejected():
    text = "\n".join(
        [
            "jurisdiction: Kenya",
            'version: "1"',
            "rules:",
            "  - data_type: X",
            "    prohibition: unconditional",
            "    permissions: []",
            "    source_clause: c",
        ]
    )
    with pytest.raises(SchemaViolation):
        load_policy(text)


def test_alias_normalization():
    text = doc(
        rules=[("Media", "unconditional", [P + "READ_MEDIA_IMAGE"])],
        aliases={P + "READ_MEDIA_IMAGE": P + "READ_MEDIA_IMAGES"},
    )
    ps = load_policy(text)
    assert unconditional_permissions(ps) == frozenset({P + "READ_MEDIA_IMAGES"})


def test_harmonized_includes_country_only_permission(policies):
    harmonized = unconditional_permissions(policies["Harmonized"])
    assert P + "READ_CALL_LOG" in harmonized  # Nigeria bans it, the platform does not
    assert P + "ACCESS_FINE_LOCATION" in harmonized


def test_harmonized_of_platform_alone(policies):
    merged = harmonized_set(policies["Platform"], [])
    assert unconditional_permissions(merged) == unconditional_permissions(policies["Platform"])


def test_harmonized_excludes_conditional(policies):
    merged = harmonized_set(policies["Platform"], [policies["Pakistan"]])
    assert P + "CAMERA" not in unconditional_permissions(merged)


def test_country_subset_of_harmonized(policies):
    harmonized = unconditional_permissions(policies["Harmonized"])
    for country in ("Indonesia", "Kenya", "Nigeria", "Pakistan", "Philippines"):
        assert unconditional_permissions(policies[country]) <= harmonized


def test_harmonized_order_independent(policies):
    countries = [policies[c] for c in ("Kenya", "Nigeria", "Pakistan")]
    fwd = harmonized_set(policies["Platform"], countries)
    rev = harmonized_set(policies["Platform"], list(reversed(countries)))
    assert unconditional_permissions(fwd) == unconditional_permissions(rev)


def test_load_serialize_load_round_trip(policies):
    for ps in policies.values():
        again = load_policy(serialize_policy(ps))
        assert again == ps


_PERM_NAMES = st.sets(
    st.sampled_from([P + n for n in ("A_ONE", "B_TWO", "C_THREE", "D_FOUR", "E_FIVE")]),
    min_size=1,
    max_size=5,
)


@settings(max_examples=50, deadline=None)
@given(sets=st.lists(_PERM_NAMES, min_size=0, max_size=4))
def test_harmonized_union_laws(policies, sets):
    from lendaudit.policy import PolicyRule, PolicySet

    countries = [
        PolicySet(
            jurisdiction="Kenya",
            version="t",
            rules=(
                PolicyRule(
                    data_type="t", prohibition="unconditional",
                    permissions=frozenset(perms), source_clause="c",
                ),
            ),
        )
        for perms in sets
    ]
    merged = harmonized_set(policies["Platform"], countries)
    expected = unconditional_permissions(policies["Platform"]).union(*sets) if sets else unconditional_permissions(policies["Platform"])
    assert unconditional_permissions(merged) == expected
    # idempotence: merging the merge changes nothing
    again = harmonized_set(policies["Platform"], countries + countries)
    assert unconditional_permissions(again) == unconditional_permissions(merged)
