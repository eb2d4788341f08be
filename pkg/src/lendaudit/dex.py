"""DEX bytecode parsing: id tables, code items, and invoked-method extraction.

Covers what the audit needs from the format: string/type/proto/field/method id
tables, class definitions with their code items, and a decoded view of each
instruction stream sufficient to enumerate invoke instructions plus the field
and type references used for content-provider matching.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass


class DexError(Exception):
    """Base class for DEX parsing failures."""


class BadMagic(DexError):
    pass


class IndexOutOfRange(DexError):
    pass


class TruncatedFile(DexError):
    pass


NO_INDEX = 0xFFFFFFFF

ENDIAN_CONSTANT = 0x12345678

_MAGIC = re.compile(rb"^dex\n03[5-9]\x00|^dex\n04[0-1]\x00")

_TYPE_DESCRIPTOR = re.compile(r"^\[*(V|Z|B|S|C|I|J|F|D|L[^;]+;)$")


def is_valid_descriptor(descriptor: str, allow_void: bool = False) -> bool:
    if not _TYPE_DESCRIPTOR.match(descriptor):
        return False
    if descriptor.lstrip("[") == "V":
        return allow_void and descriptor == "V"
    return True


@dataclass(frozen=True)
class MethodRef:
    class_descriptor: str
    name: str
    parameter_descriptors: tuple[str, ...]
    return_descriptor: str

    def __post_init__(self) -> None:
        if not is_valid_descriptor(self.class_descriptor):
            raise ValueError(f"invalid class descriptor {self.class_descriptor!r}")
        if not is_valid_descriptor(self.return_descriptor, allow_void=True):
            raise ValueError(f"invalid return descriptor {self.return_descriptor!r}")
        for p in self.parameter_descriptors:
            if not is_valid_descriptor(p):
                raise ValueError(f"invalid parameter descriptor {p!r}")

    def signature(self) -> str:
        params = "".join(self.parameter_descriptors)
        return f"{self.class_descriptor}->{self.name}({params}){self.return_descriptor}"


@dataclass(frozen=True)
class FieldRef:
    class_descriptor: str
    type_descriptor: str
    name: str


@dataclass(frozen=True)
class CodeItem:
    registers: int
    # (method_index, mnemonic) in instruction-stream order
    invocations: tuple[tuple[int, str], ...]
    referenced_fields: tuple[int, ...]
    referenced_types: tuple[int, ...]


@dataclass(frozen=True)
class EncodedMethod:
    method_index: int
    access_flags: int
    code: CodeItem | None


@dataclass(frozen=True)
class ClassDef:
    descriptor: str
    superclass: str | None
    methods: tuple[EncodedMethod, ...]


@dataclass(frozen=True)
class DexFile:
    strings: tuple[str, ...]
    types: tuple[str, ...]
    protos: tuple[tuple[str, tuple[str, ...]], ...]  # (return, params)
    fields: tuple[FieldRef, ...]
    methods: tuple[MethodRef, ...]
    classes: tuple[ClassDef, ...]


@dataclass(frozen=True)
class Invocation:
    caller: MethodRef
    callee: MethodRef
    invoke_kind: str


# opcode -> (code units, reference kind or None). Reference kinds name the id
# table the 16-bit index selects. Formats per the Dalvik instruction set.
def _build_opcode_table() -> dict[int, tuple[int, str | None]]:
    t: dict[int, tuple[int, str | None]] = {}

    def fill(lo: int, hi: int, units: int, ref: str | None = None) -> None:
        for op in range(lo, hi + 1):
            t[op] = (units, ref)

    t[0x00] = (1, None)  # nop (payloads special-cased by the walker)
    fill(0x01, 0x01, 1)
    fill(0x02, 0x02, 2)
    fill(0x03, 0x03, 3)
    fill(0x04, 0x04, 1)
    fill(0x05, 0x05, 2)
    fill(0x06, 0x06, 3)
    fill(0x07, 0x07, 1)
    fill(0x08, 0x08, 2)
    fill(0x09, 0x09, 3)
    fill(0x0A, 0x11, 1)  # move-result*/return*
    fill(0x12, 0x12, 1)  # const/4
    fill(0x13, 0x13, 2)
    fill(0x14, 0x14, 3)
    fill(0x15, 0x16, 2)
    fill(0x17, 0x17, 3)
    fill(0x18, 0x18, 5)  # const-wide
    fill(0x19, 0x19, 2)
    t[0x1A] = (2, "string")  # const-string
    t[0x1B] = (3, "string")  # const-string/jumbo
    t[0x1C] = (2, "type")  # const-class
    fill(0x1D, 0x1E, 1)  # monitor
    t[0x1F] = (2, "type")  # check-cast
    t[0x20] = (2, "type")  # instance-of
    fill(0x21, 0x21, 1)  # array-length
    t[0x22] = (2, "type")  # new-instance
    t[0x23] = (2, "type")  # new-array
    t[0x24] = (3, "type")  # filled-new-array
    t[0x25] = (3, "type")  # filled-new-array/range
    fill(0x26, 0x26, 3)  # fill-array-data
    fill(0x27, 0x27, 1)  # throw
    fill(0x28, 0x28, 1)  # goto
    fill(0x29, 0x29, 2)
    fill(0x2A, 0x2A, 3)
    fill(0x2B, 0x2C, 3)  # switches
    fill(0x2D, 0x31, 2)  # cmp
    fill(0x32, 0x37, 2)  # if-test
    fill(0x38, 0x3D, 2)  # if-testz
    fill(0x3E, 0x43, 1)  # unused
    fill(0x44, 0x51, 2)  # aget/aput
    for op in range(0x52, 0x60):
        t[op] = (2, "field")  # iget/iput
    for op in range(0x60, 0x6E):
        t[op] = (2, "field")  # sget/sput
    for op in range(0x6E, 0x73):
        t[op] = (3, "method")  # invoke-kind
    t[0x73] = (1, None)  # unused
    for op in range(0x74, 0x79):
        t[op] = (3, "method")  # invoke-kind/range
    fill(0x79, 0x7A, 1)  # unused
    fill(0x7B, 0x8F, 1)  # unops
    fill(0x90, 0xAF, 2)  # binops
    fill(0xB0, 0xCF, 1)  # binop/2addr
    fill(0xD0, 0xD7, 2)  # binop/lit16
    fill(0xD8, 0xE2, 2)  # binop/lit8
    fill(0xE3, 0xF9, 1)  # unused
    t[0xFA] = (4, "method")  # invoke-polymorphic
    t[0xFB] = (4, "method")  # invoke-polymorphic/range
    t[0xFC] = (3, None)  # invoke-custom (call-site, not a method id)
    t[0xFD] = (3, None)
    t[0xFE] = (2, None)  # const-method-handle
    t[0xFF] = (2, None)  # const-method-type
    return t


_OPCODES = _build_opcode_table()

_INVOKE_MNEMONICS = {
    0x6E: "invoke-virtual",
    0x6F: "invoke-super",
    0x70: "invoke-direct",
    0x71: "invoke-static",
    0x72: "invoke-interface",
    0x74: "invoke-virtual/range",
    0x75: "invoke-super/range",
    0x76: "invoke-direct/range",
    0x77: "invoke-static/range",
    0x78: "invoke-interface/range",
    0xFA: "invoke-polymorphic",
    0xFB: "invoke-polymorphic/range",
}

_FIELD_OPS = set(range(0x52, 0x6E))
_TYPE_OPS = {0x1C, 0x1F, 0x20, 0x22, 0x23, 0x24, 0x25}


def _uleb128(data: bytes, off: int) -> tuple[int, int]:
    result = 0
    shift = 0
    pos = off
    while True:
        if pos >= len(data):
            raise TruncatedFile(f"uleb128 runs past end of file at offset {off}")
        byte = data[pos]
        result |= (byte & 0x7F) << shift
        pos += 1
        if not byte & 0x80:
            return result, pos - off
        shift += 7
        if shift > 35:
            raise TruncatedFile(f"uleb128 too long at offset {off}")


def _decode_mutf8(raw: bytes) -> str:
    # MUTF-8: embedded nulls as C0 80, supplementary chars as CESU-8 pairs.
    text = raw.replace(b"\xc0\x80", b"\x00").decode("utf-8", "surrogatepass")
    return text.encode("utf-16", "surrogatepass").decode("utf-16")


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data

    def u16(self, off: int) -> int:
        return self._unpack("<H", off, 2)

    def u32(self, off: int) -> int:
        return self._unpack("<I", off, 4)

    def _unpack(self, fmt: str, off: int, size: int) -> int:
        if off < 0 or off + size > len(self.data):
            raise TruncatedFile(f"read of {size} bytes at offset {off} exceeds file")
        return struct.unpack_from(fmt, self.data, off)[0]


def _walk_code(
    cur: _Cursor, insns_off: int, insns_size: int
) -> tuple[list[tuple[int, str]], list[int], list[int]]:
    """Decode one instruction stream, collecting method/field/type references."""
    invocations: list[tuple[int, str]] = []
    fields: list[int] = []
    types: list[int] = []
    unit = 0
    while unit < insns_size:
        off = insns_off + 2 * unit
        word = cur.u16(off)
        opcode = word & 0xFF
        if opcode == 0x00 and word in (0x0100, 0x0200, 0x0300):
            # switch/array payload pseudo-instructions
            if word == 0x0100:  # packed-switch-payload
                size = cur.u16(off + 2)
                units = size * 2 + 4
            elif word == 0x0200:  # sparse-switch-payload
                size = cur.u16(off + 2)
                units = size * 4 + 2
            else:  # fill-array-data-payload
                width = cur.u16(off + 2)
                count = cur.u32(off + 4)
                units = (width * count + 1) // 2 + 4
            unit += units
            continue
        entry = _OPCODES.get(opcode)
        if entry is None:
            raise TruncatedFile(f"undecodable opcode 0x{opcode:02x} at offset {off}")
        units, ref_kind = entry
        if unit + units > insns_size:
            raise TruncatedFile(
                f"instruction at offset {off} overruns its code item"
            )
        if ref_kind is not None:
            index = cur.u16(off + 2)
            if opcode in _INVOKE_MNEMONICS:
                invocations.append((index, _INVOKE_MNEMONICS[opcode]))
            elif opcode in _FIELD_OPS:
                fields.append(index)
            elif opcode in _TYPE_OPS:
                types.append(index)
        unit += units
    return invocations, fields, types


def _parse_code_item(cur: _Cursor, off: int) -> CodeItem:
    registers = cur.u16(off)
    insns_size = cur.u32(off + 12)
    insns_off = off + 16
    if insns_off + 2 * insns_size > len(cur.data):
        raise TruncatedFile(f"code item at {off} declares {insns_size} units past end of file")
    invocations, fields, types = _walk_code(cur, insns_off, insns_size)
    return CodeItem(
        registers=registers,
        invocations=tuple(invocations),
        referenced_fields=tuple(fields),
        referenced_types=tuple(types),
    )


def parse_dex(data: bytes) -> DexFile:
    """Parse one DEX file into fully indexed id tables and code items.

    Raises BadMagic for a wrong magic/endianness, TruncatedFile when declared
    offsets or counts overrun the input, IndexOutOfRange when cross-table
    indices do not resolve.
    """
    if len(data) < 8 or not _MAGIC.match(data[:8]):
        raise BadMagic(f"not a DEX header: {data[:8]!r}")
    if len(data) < 0x70:
        raise TruncatedFile(f"file of {len(data)} bytes cannot hold a DEX header")

    cur = _Cursor(data)
    file_size = cur.u32(0x20)
    endian_tag = cur.u32(0x28)
    if endian_tag != ENDIAN_CONSTANT:
        raise BadMagic(f"unsupported endian tag 0x{endian_tag:08x}")
    if file_size != len(data):
        raise TruncatedFile(f"header declares {file_size} bytes, file has {len(data)}")

    string_ids_size, string_ids_off = cur.u32(0x38), cur.u32(0x3C)
    type_ids_size, type_ids_off = cur.u32(0x40), cur.u32(0x44)
    proto_ids_size, proto_ids_off = cur.u32(0x48), cur.u32(0x4C)
    field_ids_size, field_ids_off = cur.u32(0x50), cur.u32(0x54)
    method_ids_size, method_ids_off = cur.u32(0x58), cur.u32(0x5C)
    class_defs_size, class_defs_off = cur.u32(0x60), cur.u32(0x64)

    strings = []
    for i in range(string_ids_size):
        data_off = cur.u32(string_ids_off + 4 * i)
        _, skip = _uleb128(data, data_off)
        end = data.find(b"\x00", data_off + skip)
        if end == -1:
            raise TruncatedFile(f"unterminated string data at offset {data_off}")
        strings.append(_decode_mutf8(data[data_off + skip : end]))
    strings_t = tuple(strings)

    def string_at(idx: int, what: str) -> str:
        if idx >= len(strings_t):
            raise IndexOutOfRange(f"{what} string index {idx} >= {len(strings_t)}")
        return strings_t[idx]

    types = tuple(
        string_at(cur.u32(type_ids_off + 4 * i), "type descriptor")
        for i in range(type_ids_size)
    )

    def type_at(idx: int, what: str) -> str:
        if idx >= len(types):
            raise IndexOutOfRange(f"{what} type index {idx} >= {len(types)}")
        return types[idx]

    protos = []
    for i in range(proto_ids_size):
        base = proto_ids_off + 12 * i
        return_idx = cur.u32(base + 4)
        params_off = cur.u32(base + 8)
        params: tuple[str, ...] = ()
        if params_off:
            count = cur.u32(params_off)
            params = tuple(
                type_at(cur.u16(params_off + 4 + 2 * j), "parameter") for j in range(count)
            )
        protos.append((type_at(return_idx, "return"), params))
    protos_t = tuple(protos)

    fields = []
    for i in range(field_ids_size):
        base = field_ids_off + 8 * i
        fields.append(
            FieldRef(
                class_descriptor=type_at(cur.u16(base), "field class"),
                type_descriptor=type_at(cur.u16(base + 2), "field type"),
                name=string_at(cur.u32(base + 4), "field name"),
            )
        )
    fields_t = tuple(fields)

    methods = []
    for i in range(method_ids_size):
        base = method_ids_off + 8 * i
        proto_idx = cur.u16(base + 2)
        if proto_idx >= len(protos_t):
            raise IndexOutOfRange(f"method proto index {proto_idx} >= {len(protos_t)}")
        ret, params = protos_t[proto_idx]
        try:
            methods.append(
                MethodRef(
                    class_descriptor=type_at(cur.u16(base), "method class"),
                    name=string_at(cur.u32(base + 4), "method name"),
                    parameter_descriptors=params,
                    return_descriptor=ret,
                )
            )
        except ValueError as exc:
            raise IndexOutOfRange(str(exc)) from exc
    methods_t = tuple(methods)

    classes = []
    for i in range(class_defs_size):
        base = class_defs_off + 32 * i
        class_idx = cur.u32(base)
        superclass_idx = cur.u32(base + 4)
        class_data_off = cur.u32(base + 24)
        encoded: list[EncodedMethod] = []
        if class_data_off:
            off = class_data_off
            static_fields, skip = _uleb128(data, off)
            off += skip
            instance_fields, skip = _uleb128(data, off)
            off += skip
            direct_methods, skip = _uleb128(data, off)
            off += skip
            virtual_methods, skip = _uleb128(data, off)
            off += skip
            for _ in range(static_fields + instance_fields):
                _, skip = _uleb128(data, off)  # field_idx_diff
                off += skip
                _, skip = _uleb128(data, off)  # access_flags
                off += skip
            for count in (direct_methods, virtual_methods):
                method_idx = 0
                for j in range(count):
                    diff, skip = _uleb128(data, off)
                    off += skip
                    access, skip = _uleb128(data, off)
                    off += skip
                    code_off, skip = _uleb128(data, off)
                    off += skip
                    method_idx = diff if j == 0 else method_idx + diff
                    if method_idx >= len(methods_t):
                        raise IndexOutOfRange(
                            f"encoded method index {method_idx} >= {len(methods_t)}"
                        )
                    code = _parse_code_item(cur, code_off) if code_off else None
                    encoded.append(EncodedMethod(method_idx, access, code))
        classes.append(
            ClassDef(
                descriptor=type_at(class_idx, "class_def class"),
                superclass=None
                if superclass_idx == NO_INDEX
                else type_at(superclass_idx, "superclass"),
                methods=tuple(encoded),
            )
        )

    return DexFile(
        strings=strings_t,
        types=types,
        protos=protos_t,
        fields=fields_t,
        methods=methods_t,
        classes=tuple(classes),
    )


def extract_invocations(dex_files: list[DexFile]) -> list[Invocation]:
    """One record per invoke-family instruction across all multidex entries.

    Methods without code items (abstract/native) contribute nothing. Files are
    merged in the order given, matching the container's dex-suffix ordering.
    """
    records: list[Invocation] = []
    for dex in dex_files:
        for class_def in dex.classes:
            for encoded in class_def.methods:
                if encoded.code is None:
                    continue
                caller = dex.methods[encoded.method_index]
                for method_idx, mnemonic in encoded.code.invocations:
                    if method_idx >= len(dex.methods):
                        raise IndexOutOfRange(
                            f"invoke target index {method_idx} >= {len(dex.methods)}"
                        )
                    records.append(Invocation(caller, dex.methods[method_idx], mnemonic))
    return records


def extract_class_references(dex_files: list[DexFile]) -> dict[MethodRef, frozenset[str]]:
    """Class descriptors each method references through field or type use.

    This is what ties a ContentResolver call to the provider whose URI
    constants the method reads (sget on CONTENT_URI and friends).
    """
    refs: dict[MethodRef, set[str]] = {}
    for dex in dex_files:
        for class_def in dex.classes:
            for encoded in class_def.methods:
                if encoded.code is None:
                    continue
                method = dex.methods[encoded.method_index]
                bucket = refs.setdefault(method, set())
                for field_idx in encoded.code.referenced_fields:
                    if field_idx >= len(dex.fields):
                        raise IndexOutOfRange(
                            f"field reference index {field_idx} >= {len(dex.fields)}"
                        )
                    bucket.add(dex.fields[field_idx].class_descriptor)
                for type_idx in encoded.code.referenced_types:
                    if type_idx >= len(dex.types):
                        raise IndexOutOfRange(
                            f"type reference index {type_idx} >= {len(dex.types)}"
                        )
                    bucket.add(dex.types[type_idx])
    return {method: frozenset(classes) for method, classes in refs.items()}


def defined_methods(dex_files: list[DexFile]) -> list[MethodRef]:
    """Methods carrying code in any of the given files (the app's own code)."""
    out = []
    for dex in dex_files:
        for class_def in dex.classes:
            for encoded in class_def.methods:
                if encoded.code is not None:
                    out.append(dex.methods[encoded.method_index])
    return out


def reflection_present(dex_files: list[DexFile]) -> bool:
    """True when any invocation targets java.lang.reflect (flagged, not analyzed)."""
    return any(
        inv.callee.class_descriptor.startswith("Ljava/lang/reflect/")
        for inv in extract_invocations(dex_files)
    )
