"""Helpers for composing runtime event logs in tests."""

from __future__ import annotations

import json

CONTACTS_API = {"class_descriptor": "Landroid/provider/ContactsContract", "method_name": "query"}
SMS_API = {"class_descriptor": "Landroid/provider/Telephony$Sms", "method_name": "query"}
LOCATION_API = {
    "class_descriptor": "Landroid/location/LocationManager;",
    "method_name": "getLastKnownLocation",
}
PACKAGES_API = {
    "class_descriptor": "Landroid/content/pm/PackageManager;",
    "method_name": "getInstalledPackages",
}
SINK_API = {"class_descriptor": "Lokhttp3/OkHttpClient;", "method_name": "newCall"}


class LogBuilder:
    def __init__(self):
        self._lines: list[str] = []
        self._n = 0

    def _next_id(self) -> str:
        self._n += 1
        return f"e{self._n:04d}"

    def add(self, **fields) -> str:
        record = {"schema_version": 1, "event_id": fields.pop("event_id", self._next_id())}
        record.update(fields)
        self._lines.append(json.dumps(record))
        return record["event_id"]

    def marker(self, ts: int, kind: str = "REGISTRATION_MILESTONE") -> str:
        return self.add(timestamp_ms=ts, tag="marker", marker_kind=kind)

    def source(self, ts: int, api=CONTACTS_API, activity=None, digest=None) -> str:
        return self.add(
            timestamp_ms=ts, tag="source", api=api, activity=activity, payload_digest=digest
        )

    def sink(self, ts: int, endpoint="api.collector.example", digest=None) -> str:
        return self.add(
            timestamp_ms=ts, tag="sink", api=SINK_API, endpoint=endpoint, payload_digest=digest
        )

    def raw(self, line: str) -> None:
        self._lines.append(line)

    def text(self) -> str:
        return "\n".join(self._lines) + "\n"
