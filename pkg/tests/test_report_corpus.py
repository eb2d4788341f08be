import json

import pytest

from lendaudit.registry import DuplicateRow, SchemaViolation, load_registry
from lendaudit.report import (
    NoPoliciesLoaded,
    audit_app,
    emit_report,
    report_from_dict,
    report_to_dict,
    report_to_json,
    run_corpus,
)
from support.corpus import APP_PLANS, registry_csv

P = "android.permission."


# ---- registry ----


def test_load_registry_row():
    table = load_registry(
        "country,status,package_id,app_name,registry_source\n"
        "NG,approved,com.example.loan,ExampleLoan,FCCPC\n"
    )
    assert len(table.rows) == 1
    assert table.rows[0].country == "Nigeria"  # code canonicalized


def test_duplicate_row_rejected():
    text = (
        "country,status,package_id,app_name,registry_source\n"
        "NG,approved,com.example.loan,A,FCCPC\n"
        "NG,delisted,com.example.loan,B,FCCPC\n"
    )
    with pytest.raises(DuplicateRow):
        load_registry(text)


def test_non_collapsed_status_rejected():
    text = (
        "country,status,package_id,app_name,registry_source\n"
        "NG,watchlist,com.example.loan,A,FCCPC\n"
    )
    with pytest.raises(SchemaViolation):
        load_registry(text)


def test_unknown_country_rejected():
    text = "country,status,package_id,app_name,registry_source\nZZ,approved,a.b,A,X\n"
    with pytest.raises(SchemaViolation):
        load_registry(text)


def test_bad_header_rejected():
    with pytest.raises(SchemaViolation):
        load_registry("package,country\nx,y\n")


# ---- single-app audit ----


def test_audit_app_nigeria_call_log(policies, mapping_table, sink_patterns, fixture_apks):
    report = audit_app(
        fixture_apks["ng.kudi.cash.apk"], "Nigeria", policies, mapping_table, sink_patterns
    )
    assert report.package_id == "ng.kudi.cash"
    assert report.verdict.asymmetry == "country_only"
    assert report.verdict.violates_harmonized
    assert any(f.path_length == 0 for f in report.verdict.flows)


def test_audit_requires_policies(mapping_table, sink_patterns, fixture_apks, policies):
    with pytest.raises(NoPoliciesLoaded):
        audit_app(fixture_apks["ng.kudi.cash.apk"], "Nigeria", {}, mapping_table, sink_patterns)
    partial = {"Nigeria": policies["Nigeria"]}
    with pytest.raises(NoPoliciesLoaded):
        audit_app(fixture_apks["ng.kudi.cash.apk"], "Nigeria", partial, mapping_table, sink_patterns)


def test_report_round_trip(policies, mapping_table, sink_patterns, fixture_apks):
    report = audit_app(
        fixture_apks["pk.paisa.now.apk"], "Pakistan", policies, mapping_table, sink_patterns
    )
    data = json.loads(report_to_json(report))
    assert report_from_dict(data) == report


def test_report_determinism_modulo_timestamp(policies, mapping_table, sink_patterns, fixture_apks):
    blob = fixture_apks["ke.okoa.pesa.apk"]
    a = audit_app(blob, "Kenya", policies, mapping_table, sink_patterns, now="T")
    b = audit_app(blob, "Kenya", policies, mapping_table, sink_patterns, now="T")
    assert report_to_json(a) == report_to_json(b)


def test_reflection_and_unresolved_surfaced(policies, mapping_table, sink_patterns, fixture_apks):
    reflective = audit_app(
        fixture_apks["ph.agila.pay.apk"], "Philippines", policies, mapping_table, sink_patterns
    )
    assert reflective.reflection_present is True
    unresolved = audit_app(
        fixture_apks["pk.qarz.app.apk"], "Pakistan", policies, mapping_table, sink_patterns
    )
    assert len(unresolved.unresolved_attributes) == 1


def test_fallback_usage_flagged(policies, mapping_table, sink_patterns, fixture_apks):
    report = audit_app(
        fixture_apks["ng.padi.fund.apk"], "Nigeria", policies, mapping_table, sink_patterns
    )
    packages_usage = [
        u for u in report.verdict.api_usage if u.permission == P + "QUERY_ALL_PACKAGES"
    ]
    assert packages_usage and all(u.fallback for u in packages_usage)


def test_watch_items_in_report(policies, mapping_table, sink_patterns, fixture_apks):
    report = audit_app(
        fixture_apks["pk.paisa.now.apk"], "Pakistan", policies, mapping_table, sink_patterns
    )
    assert report.watch_items == (P + "CAMERA",)


# ---- corpus ----


@pytest.fixture(scope="module")
def corpus_result(policies, mapping_table, sink_patterns, fixture_apks, registry_csv_text):
    registry = load_registry(registry_csv_text)
    return run_corpus(registry, dict(fixture_apks), policies, mapping_table, sink_patterns, jobs=4)


def test_corpus_report_per_present_apk(corpus_result):
    assert len(corpus_result.reports) == len(APP_PLANS)
    assert corpus_result.missing == ("ke.ghost.app",)
    assert corpus_result.failures == ()


def test_corpus_crash_isolation(policies, mapping_table, sink_patterns, fixture_apks):
    text = registry_csv(include_missing=False) + "Nigeria,approved,ng.broken.apk,Broken,FCCPC\n"
    registry = load_registry(text)
    result = run_corpus(registry, dict(fixture_apks), policies, mapping_table, sink_patterns)
    assert len(result.reports) == len(APP_PLANS)
    assert len(result.failures) == 1
    assert result.failures[0].package_id == "ng.broken.apk"


def test_corpus_summary_denominators(corpus_result):
    summary = corpus_result.summary
    by_country = {row.country: row for row in summary.rows}
    pakistan = by_country["Pakistan"]
    assert pakistan.cells[("country", "approved")].audited == 2
    assert pakistan.cells[("country", "delisted")].audited == 1


def test_corpus_asymmetry_expectations(corpus_result):
    verdicts = {r.package_id: r.verdict for r in corpus_result.reports}
    assert verdicts["com.luna.credit"].asymmetry == "platform_only"
    assert verdicts["ng.kudi.cash"].asymmetry == "country_only"
    assert verdicts["ke.tala.save"].asymmetry == "neither"
    assert verdicts["pk.paisa.now"].asymmetry == "both"
    assert verdicts["ph.peso.quick"].asymmetry == "country_only"
    assert verdicts["ng.padi.fund"].asymmetry == "platform_only"


def test_emit_structured_round_trips(tmp_path, corpus_result):
    written = emit_report(corpus_result.reports, corpus_result.summary, "structured", tmp_path)
    json_files = [p for p in written if p.suffix == ".json"]
    assert len(json_files) == len(corpus_result.reports)
    reparsed = [report_from_dict(json.loads(p.read_text("utf-8"))) for p in json_files]
    assert sorted(r.package_id for r in reparsed) == sorted(
        r.package_id for r in corpus_result.reports
    )


def test_emit_tabular_renders_cells(tmp_path, corpus_result):
    written = emit_report([], corpus_result.summary, "tabular", tmp_path)
    text = written[0].read_text("utf-8")
    assert "Country" in text and "Total" in text
    assert "0/0 (N/A)" in text  # Indonesia has no delisted slice
