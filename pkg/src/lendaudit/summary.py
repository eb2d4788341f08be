"""Corpus aggregation into the per-country violation summary table."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

from .audit import AuditError, AuditVerdict
from .registry import RegistryTable


class UnmatchedVerdict(AuditError):
    pass


FRAMEWORK_COLUMNS = ("country", "platform", "harmonized")


def format_cell(violating: int, total: int) -> str:
    """Render one summary cell as "v/n (p%)".

    Percentages carry one decimal, rounded half-up; a zero numerator renders
    "(0%)" and an empty slice "0/0 (N/A)".
    """
    if total == 0:
        return "0/0 (N/A)"
    if violating == 0:
        return f"0/{total} (0%)"
    pct = (Decimal(violating) * 100 / Decimal(total)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return f"{violating}/{total} ({pct}%)"


@dataclass(frozen=True)
class SummaryCell:
    violating: int
    audited: int

    def render(self) -> str:
        return format_cell(self.violating, self.audited)


@dataclass(frozen=True)
class CountrySummaryRow:
    country: str
    registered: dict[str, int]  # status -> registry row count
    cells: dict[tuple[str, str], SummaryCell]  # (framework, status) -> cell


@dataclass(frozen=True)
class CountrySummary:
    rows: tuple[CountrySummaryRow, ...]
    total: CountrySummaryRow

    def cell(self, country: str, framework: str, status: str) -> str:
        for row in self.rows:
            if row.country == country:
                return row.cells[(framework, status)].render()
        raise KeyError(country)


def aggregate_country(
    verdicts: Iterable[AuditVerdict], registry: RegistryTable
) -> CountrySummary:
    """Fold verdicts into per-(country, status) violation counts.

    Every verdict must join a registry row on (package_id, jurisdiction);
    denominators are counts of completed audits, not raw registry rows.
    """
    row_index = {(r.country, r.package_id): r for r in registry.rows}
    counts: dict[tuple[str, str], dict[str, int]] = {}
    for verdict in verdicts:
        row = row_index.get((verdict.jurisdiction, verdict.package_id))
        if row is None:
            raise UnmatchedVerdict(
                f"verdict for {verdict.package_id!r} in {verdict.jurisdiction!r} "
                "matches no registry row"
            )
        bucket = counts.setdefault(
            (row.country, row.status),
            {"n": 0, "country": 0, "platform": 0, "harmonized": 0},
        )
        bucket["n"] += 1
        bucket["country"] += verdict.violates_country
        bucket["platform"] += verdict.violates_platform
        bucket["harmonized"] += verdict.violates_harmonized

    rows = []
    totals = {
        (fw, status): [0, 0] for fw in FRAMEWORK_COLUMNS for status in ("approved", "delisted")
    }
    total_registered = {"approved": 0, "delisted": 0}
    for country in registry.countries():
        registered = {
            status: len(registry.slice(country, status))
            for status in ("approved", "delisted")
        }
        cells = {}
        for framework in FRAMEWORK_COLUMNS:
            for status in ("approved", "delisted"):
                bucket = counts.get((country, status), {"n": 0, framework: 0})
                cell = SummaryCell(
                    violating=bucket.get(framework, 0), audited=bucket.get("n", 0)
                )
                cells[(framework, status)] = cell
                totals[(framework, status)][0] += cell.violating
                totals[(framework, status)][1] += cell.audited
        for status in ("approved", "delisted"):
            total_registered[status] += registered[status]
        rows.append(CountrySummaryRow(country=country, registered=registered, cells=cells))

    total_row = CountrySummaryRow(
        country="Total",
        registered=total_registered,
        cells={
            key: SummaryCell(violating=v, audited=n) for key, (v, n) in totals.items()
        },
    )
    return CountrySummary(rows=tuple(rows), total=total_row)


def render_summary_table(summary: CountrySummary) -> str:
    """Plain-text rendering with one line per country and the v/n (p%) cells."""
    headers = [
        "Country",
        "Approved",
        "Delisted",
        "Country policy (appr)",
        "Country policy (del)",
        "Platform policy (appr)",
        "Platform policy (del)",
        "Harmonized (appr)",
        "Harmonized (del)",
    ]
    lines = []
    all_rows = list(summary.rows) + [summary.total]
    table = [headers]
    for row in all_rows:
        table.append(
            [
                row.country,
                str(row.registered.get("approved", 0)),
                str(row.registered.get("delisted", 0)),
                row.cells[("country", "approved")].render(),
                row.cells[("country", "delisted")].render(),
                row.cells[("platform", "approved")].render(),
                row.cells[("platform", "delisted")].render(),
                row.cells[("harmonized", "approved")].render(),
                row.cells[("harmonized", "delisted")].render(),
            ]
        )
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    for i, row_values in enumerate(table):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row_values, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
