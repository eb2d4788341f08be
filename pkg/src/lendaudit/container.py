"""APK container access: enumerate ZIP entries, pull out the manifest and bytecode."""

from __future__ import annotations

import hashlib
import io
import re
import zipfile
import zlib
from dataclasses import dataclass, field


class ContainerError(Exception):
    """Base class for APK container failures."""


class MalformedArchive(ContainerError):
    pass


class DuplicateEntry(ContainerError):
    pass


class MissingManifest(ContainerError):
    pass


class MissingDex(ContainerError):
    pass


class DecompressionFailure(ContainerError):
    pass


MANIFEST_ENTRY = "AndroidManifest.xml"

# classes.dex, classes2.dex, classes3.dex ... (no classes1.dex in the format)
_DEX_NAME = re.compile(r"^classes(\d*)\.dex$")

_SUPPORTED_METHODS = {zipfile.ZIP_STORED, zipfile.ZIP_DEFLATED}


@dataclass(frozen=True)
class EntryInfo:
    compressed_size: int
    uncompressed_size: int
    compression_method: int
    offset: int


@dataclass(frozen=True)
class ApkArchive:
    entries: dict[str, EntryInfo]
    source_digest: str
    _raw: bytes = field(repr=False)

    def entry_names(self) -> list[str]:
        return sorted(self.entries)


@dataclass(frozen=True)
class ArtifactBundle:
    manifest_bytes: bytes
    dex_entries: tuple[tuple[str, bytes], ...]
    package_digest: str


def _dex_sort_key(name: str) -> int:
    suffix = _DEX_NAME.match(name).group(1)
    return 1 if suffix == "" else int(suffix)


def open_archive(data: bytes) -> ApkArchive:
    """Enumerate the central directory of an APK (a standard ZIP archive).

    Raises MalformedArchive for unreadable containers and DuplicateEntry when
    two central-directory records share a name (a known manifest-swap trick).
    """
    digest = hashlib.sha256(data).hexdigest()
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, ValueError, OSError) as exc:
        raise MalformedArchive(f"not a readable ZIP archive: {exc}") from exc

    entries: dict[str, EntryInfo] = {}
    with zf:
        for info in zf.infolist():
            if info.filename in entries:
                raise DuplicateEntry(f"duplicate central-directory entry: {info.filename!r}")
            entries[info.filename] = EntryInfo(
                compressed_size=info.compress_size,
                uncompressed_size=info.file_size,
                compression_method=info.compress_type,
                offset=info.header_offset,
            )
    return ApkArchive(entries=entries, source_digest=digest, _raw=data)


def read_entry(archive: ApkArchive, name: str) -> bytes:
    """Decompress one entry, enforcing the stored/deflate whitelist."""
    info = archive.entries[name]
    if info.compression_method not in _SUPPORTED_METHODS:
        raise DecompressionFailure(
            f"{name!r}: unsupported compression method {info.compression_method}"
        )
    try:
        with zipfile.ZipFile(io.BytesIO(archive._raw)) as zf:
            data = zf.read(name)
    except (zipfile.BadZipFile, zlib.error, ValueError) as exc:
        raise DecompressionFailure(f"{name!r}: {exc}") from exc
    if len(data) != info.uncompressed_size:
        raise DecompressionFailure(
            f"{name!r}: extracted {len(data)} bytes, central directory declares "
            f"{info.uncompressed_size}"
        )
    return data


def extract_bundle(archive: ApkArchive) -> ArtifactBundle:
    """Pull the manifest and every classes*.dex entry out of the archive.

    Dex entries come back ordered by their numeric suffix (classes.dex first).
    Absent artefacts raise rather than producing an empty bundle.
    """
    if MANIFEST_ENTRY not in archive.entries:
        raise MissingManifest(f"archive has no {MANIFEST_ENTRY}")

    dex_names = [name for name in archive.entries if _DEX_NAME.match(name)]
    if not dex_names:
        raise MissingDex("archive has no classes.dex")
    dex_names.sort(key=_dex_sort_key)

    manifest = read_entry(archive, MANIFEST_ENTRY)
    if not manifest:
        raise MissingManifest(f"{MANIFEST_ENTRY} is empty")
    dex_entries = tuple((name, read_entry(archive, name)) for name in dex_names)
    return ArtifactBundle(
        manifest_bytes=manifest,
        dex_entries=dex_entries,
        package_digest=archive.source_digest,
    )
