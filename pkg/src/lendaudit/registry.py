"""National registry ingestion: approved/delisted provider lists as CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass


class RegistryError(Exception):
    pass


class SchemaViolation(RegistryError):
    pass


class DuplicateRow(RegistryError):
    pass


HEADER = ("country", "status", "package_id", "app_name", "registry_source")

# Upstream registries use four or more lifecycle categories; rows must arrive
# pre-collapsed to these two.
STATUSES = ("approved", "delisted")

COUNTRY_CODES = {
    "ID": "Indonesia",
    "KE": "Kenya",
    "NG": "Nigeria",
    "PK": "Pakistan",
    "PH": "Philippines",
    "IN": "India",
    "TH": "Thailand",
}

_KNOWN_COUNTRIES = set(COUNTRY_CODES) | set(COUNTRY_CODES.values())


@dataclass(frozen=True)
class RegistryRow:
    country: str  # canonical jurisdiction name
    status: str
    package_id: str
    app_name: str
    registry_source: str


@dataclass(frozen=True)
class RegistryTable:
    rows: tuple[RegistryRow, ...]

    def slice(self, country: str, status: str) -> tuple[RegistryRow, ...]:
        return tuple(r for r in self.rows if r.country == country and r.status == status)

    def countries(self) -> tuple[str, ...]:
        seen: list[str] = []
        for row in self.rows:
            if row.country not in seen:
                seen.append(row.country)
        return tuple(seen)


def canonical_country(value: str) -> str:
    name = value.strip()
    if name in COUNTRY_CODES:
        return COUNTRY_CODES[name]
    return name


def load_registry(document: bytes | str) -> RegistryTable:
    """Parse a registry CSV with header country,status,package_id,app_name,
    registry_source. Unknown countries or non-collapsed statuses are rejected;
    (country, package_id) pairs must be unique."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    reader = csv.reader(io.StringIO(document))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaViolation("registry CSV is empty") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise SchemaViolation(f"registry header must be {','.join(HEADER)}")

    rows: list[RegistryRow] = []
    seen: set[tuple[str, str]] = set()
    for line_no, record in enumerate(reader, start=2):
        if not record or (len(record) == 1 and not record[0].strip()):
            continue
        if len(record) != len(HEADER):
            raise SchemaViolation(f"line {line_no}: expected {len(HEADER)} fields")
        country_raw, status, package_id, app_name, registry_source = (
            value.strip() for value in record
        )
        if country_raw not in _KNOWN_COUNTRIES:
            raise SchemaViolation(f"line {line_no}: unknown country {country_raw!r}")
        if status not in STATUSES:
            raise SchemaViolation(
                f"line {line_no}: status must be approved or delisted, got {status!r}"
            )
        if not package_id:
            raise SchemaViolation(f"line {line_no}: empty package_id")
        country = canonical_country(country_raw)
        key = (country, package_id)
        if key in seen:
            raise DuplicateRow(f"line {line_no}: duplicate registry row {key}")
        seen.add(key)
        rows.append(
            RegistryRow(
                country=country,
                status=status,
                package_id=package_id,
                app_name=app_name,
                registry_source=registry_source,
            )
        )
    return RegistryTable(rows=tuple(rows))
