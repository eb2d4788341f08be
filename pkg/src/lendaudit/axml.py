"""Decoder for the Android binary XML format used by compiled manifests.

The format is a sequence of little-endian chunks: a file header (type 0x0003),
a string pool, an optional attribute-resource-id map, then namespace/element
chunks describing the document tree. See frameworks/base ResourceTypes.h.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, Union


class AxmlError(Exception):
    """Base class for binary-XML decoding failures."""


class NotBinaryXml(AxmlError):
    pass


class TruncatedChunk(AxmlError):
    pass


class BadStringIndex(AxmlError):
    pass


# Chunk types
RES_STRING_POOL_TYPE = 0x0001
RES_XML_TYPE = 0x0003
RES_XML_START_NAMESPACE_TYPE = 0x0100
RES_XML_END_NAMESPACE_TYPE = 0x0101
RES_XML_START_ELEMENT_TYPE = 0x0102
RES_XML_END_ELEMENT_TYPE = 0x0103
RES_XML_CDATA_TYPE = 0x0104
RES_XML_RESOURCE_MAP_TYPE = 0x0180

UTF8_FLAG = 1 << 8
NO_INDEX = 0xFFFFFFFF

# Typed-value dataTypes we resolve; everything else is kept raw.
TYPE_NULL = 0x00
TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03
TYPE_FLOAT = 0x04
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12
TYPE_FIRST_INT = 0x10
TYPE_LAST_INT = 0x1F


@dataclass(frozen=True)
class ResourceRef:
    """An attribute value referencing a resource table entry (unresolved here)."""

    resource_id: int


@dataclass(frozen=True)
class RawValue:
    """A typed value this decoder does not interpret (dimensions, fractions...)."""

    data_type: int
    data: int


AttrValue = Union[str, int, bool, None, ResourceRef, RawValue]


@dataclass(frozen=True)
class AxmlAttribute:
    namespace: str | None
    name: str
    value: AttrValue


@dataclass
class AxmlElement:
    namespace: str | None
    name: str
    attributes: tuple[AxmlAttribute, ...]
    children: tuple["AxmlElement", ...] = ()

    def attr(self, name: str, namespace: str | None = None) -> AttrValue:
        for a in self.attributes:
            if a.name == name and (namespace is None or a.namespace == namespace):
                return a.value
        return None

    def find_all(self, name: str) -> Iterator["AxmlElement"]:
        for child in self.children:
            if child.name == name:
                yield child

    def walk(self) -> Iterator["AxmlElement"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class AxmlDocument:
    string_pool: tuple[str, ...]
    root: AxmlElement
    resource_ids: tuple[int, ...]


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def u16(self) -> int:
        return self.read("<H", 2)

    def u32(self) -> int:
        return self.read("<I", 4)

    def read(self, fmt: str, size: int) -> int:
        if self.pos + size > len(self.data):
            raise TruncatedChunk(f"read past end of buffer at offset {self.pos}")
        (value,) = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return value

    def seek(self, pos: int) -> None:
        if pos > len(self.data):
            raise TruncatedChunk(f"seek past end of buffer ({pos} > {len(self.data)})")
        self.pos = pos


def _decode_string_pool(r: _Reader, chunk_start: int, chunk_size: int) -> tuple[str, ...]:
    string_count = r.u32()
    style_count = r.u32()
    flags = r.u32()
    strings_start = r.u32()
    r.u32()  # styles_start, unused here
    offsets = [r.u32() for _ in range(string_count)]
    for _ in range(style_count):
        r.u32()

    is_utf8 = bool(flags & UTF8_FLAG)
    base = chunk_start + strings_start
    end = chunk_start + chunk_size
    if base > len(r.data) or end > len(r.data):
        raise TruncatedChunk("string pool data extends past the chunk")
    blob = r.data[base:end]

    strings = []
    for off in offsets:
        if off >= len(blob):
            raise TruncatedChunk(f"string offset {off} outside pool data")
        strings.append(_decode_pool_string(blob, off, is_utf8))
    return tuple(strings)


def _decode_varlen(blob: bytes, off: int, wide: bool) -> tuple[int, int]:
    # Lengths use a 1-or-2 unit encoding; the high bit of the first unit
    # signals a second unit carrying the low-order part.
    if wide:
        (first,) = struct.unpack_from("<H", blob, off)
        if first & 0x8000:
            (second,) = struct.unpack_from("<H", blob, off + 2)
            return ((first & 0x7FFF) << 16) | second, 4
        return first, 2
    first = blob[off]
    if first & 0x80:
        second = blob[off + 1]
        return ((first & 0x7F) << 8) | second, 2
    return first, 1


def _decode_pool_string(blob: bytes, off: int, is_utf8: bool) -> str:
    try:
        if is_utf8:
            _, skip = _decode_varlen(blob, off, wide=False)
            off += skip
            byte_len, skip = _decode_varlen(blob, off, wide=False)
            off += skip
            return blob[off : off + byte_len].decode("utf-8", "replace")
        char_len, skip = _decode_varlen(blob, off, wide=True)
        off += skip
        return blob[off : off + 2 * char_len].decode("utf-16-le", "replace")
    except (IndexError, struct.error) as exc:
        raise TruncatedChunk(f"string data truncated at pool offset {off}") from exc


def _typed_value(pool: tuple[str, ...], data_type: int, data: int) -> AttrValue:
    if data_type == TYPE_STRING:
        if data >= len(pool):
            raise BadStringIndex(f"attribute value string index {data} outside pool of {len(pool)}")
        return pool[data]
    if data_type == TYPE_INT_BOOLEAN:
        return data != 0
    if data_type == TYPE_REFERENCE:
        return ResourceRef(data)
    if data_type == TYPE_NULL:
        return None
    if TYPE_FIRST_INT <= data_type <= TYPE_LAST_INT:
        return data - 0x100000000 if data > 0x7FFFFFFF else data
    if data_type == TYPE_FLOAT:
        return struct.unpack("<f", struct.pack("<I", data))[0]
    return RawValue(data_type, data)


def decode_axml(data: bytes) -> AxmlDocument:
    """Decode compiled binary XML into a document tree with typed attributes.

    Raises NotBinaryXml for plain-text XML or unrelated bytes, TruncatedChunk
    when declared chunk sizes overrun the buffer, and BadStringIndex when a
    string reference points outside the pool.
    """
    if len(data) < 8:
        raise NotBinaryXml("input shorter than a chunk header")
    file_type, header_size, file_size = struct.unpack_from("<HHI", data, 0)
    if file_type != RES_XML_TYPE or header_size != 8:
        raise NotBinaryXml(
            f"expected binary-XML header (type 0x0003/size 8), got type "
            f"0x{file_type:04x}/size {header_size}"
        )
    if file_size > len(data):
        raise TruncatedChunk(f"declared file size {file_size} exceeds input of {len(data)}")

    r = _Reader(data[:file_size])
    r.seek(8)

    pool: tuple[str, ...] | None = None
    resource_ids: list[int] = []
    root: AxmlElement | None = None
    # Stack entries: (element fields, mutable child list)
    stack: list[tuple[AxmlElement, list[AxmlElement]]] = []
    finished: AxmlElement | None = None
    ns_stack: list[tuple[int, int]] = []

    def pool_str(idx: int, what: str) -> str:
        if pool is None:
            raise TruncatedChunk("element chunk before string pool")
        if idx >= len(pool):
            raise BadStringIndex(f"{what} string index {idx} outside pool of {len(pool)}")
        return pool[idx]

    def opt_pool_str(idx: int, what: str) -> str | None:
        if idx == NO_INDEX:
            return None
        return pool_str(idx, what)

    while r.pos < file_size:
        chunk_start = r.pos
        chunk_type = r.u16()
        chunk_header = r.u16()
        chunk_size = r.u32()
        if chunk_size < 8 or chunk_start + chunk_size > file_size:
            raise TruncatedChunk(
                f"chunk 0x{chunk_type:04x} at {chunk_start} declares size {chunk_size}"
            )
        chunk_end = chunk_start + chunk_size

        if chunk_type == RES_STRING_POOL_TYPE:
            if chunk_header != 0x1C:
                raise TruncatedChunk(f"string pool header size {chunk_header}, expected 28")
            pool = _decode_string_pool(r, chunk_start, chunk_size)
        elif chunk_type == RES_XML_RESOURCE_MAP_TYPE:
            count = (chunk_size - chunk_header) // 4
            r.seek(chunk_start + chunk_header)
            resource_ids.extend(r.u32() for _ in range(count))
        elif chunk_type == RES_XML_START_NAMESPACE_TYPE:
            r.u32()  # line
            r.u32()  # comment
            ns_stack.append((r.u32(), r.u32()))
        elif chunk_type == RES_XML_END_NAMESPACE_TYPE:
            r.u32()
            r.u32()
            r.u32()
            r.u32()
            if ns_stack:
                ns_stack.pop()
        elif chunk_type == RES_XML_START_ELEMENT_TYPE:
            r.u32()  # line
            r.u32()  # comment
            ns_idx = r.u32()
            name_idx = r.u32()
            attr_start = r.u16()
            attr_size = r.u16()
            attr_count = r.u16()
            r.u16()  # id attribute index
            r.u32()  # class/style attribute words
            r.seek(chunk_start + 16 + attr_start)
            attributes = []
            for i in range(attr_count):
                record = chunk_start + 16 + attr_start + i * attr_size
                r.seek(record)
                a_ns = r.u32()
                a_name = r.u32()
                r.u32()  # raw string index; the typed value is authoritative
                r.u16()  # value size (always 8)
                r.read("<B", 1)  # res0
                data_type = r.read("<B", 1)
                value_data = r.u32()
                attributes.append(
                    AxmlAttribute(
                        namespace=opt_pool_str(a_ns, "attribute namespace"),
                        name=pool_str(a_name, "attribute name"),
                        value=_typed_value(pool or (), data_type, value_data),
                    )
                )
            elem = AxmlElement(
                namespace=opt_pool_str(ns_idx, "element namespace"),
                name=pool_str(name_idx, "element name"),
                attributes=tuple(attributes),
            )
            stack.append((elem, []))
        elif chunk_type == RES_XML_END_ELEMENT_TYPE:
            r.u32()
            r.u32()
            r.u32()
            name_idx = r.u32()
            if not stack:
                raise TruncatedChunk("end-element chunk without a matching start")
            elem, children = stack.pop()
            closing = pool_str(name_idx, "closing element name")
            if closing != elem.name:
                raise TruncatedChunk(
                    f"mismatched end element: expected </{elem.name}>, got </{closing}>"
                )
            elem.children = tuple(children)
            if stack:
                stack[-1][1].append(elem)
            else:
                if finished is not None:
                    raise TruncatedChunk("multiple root elements")
                finished = elem
        elif chunk_type == RES_XML_CDATA_TYPE:
            pass  # text nodes carry nothing the manifest projection needs
        # Unknown chunk types are skipped via chunk_end below.
        r.seek(chunk_end)

    if pool is None:
        raise NotBinaryXml("no string pool chunk present")
    if stack:
        raise TruncatedChunk(f"document ended with {len(stack)} unclosed element(s)")
    if finished is None:
        raise TruncatedChunk("document contains no elements")
    root = finished
    return AxmlDocument(string_pool=pool, root=root, resource_ids=tuple(resource_ids))
