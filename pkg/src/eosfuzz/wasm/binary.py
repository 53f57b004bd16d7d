"""Decoder for the WASM binary format (MVP)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import opcodes as op

MAGIC = b"\x00asm"
VERSION = b"\x01\x00\x00\x00"

VALTYPES = {0x7F: "i32", 0x7E: "i64", 0x7D: "f32", 0x7C: "f64"}


class WasmError(Exception):
    pass


class WasmParseError(WasmError):
    pass


class UnsupportedFeatureError(WasmError):
    pass


@dataclass(frozen=True)
class FuncType:
    params: tuple[str, ...]
    results: tuple[str, ...] = ()

    def __str__(self) -> str:
        p = " ".join(self.params)
        r = " ".join(self.results)
        return f"(param {p})" + (f" (result {r})" if r else "")


@dataclass
class Import:
    module: str
    name: str
    kind: str  # func | table | memory | global
    desc: object  # type index for funcs


@dataclass
class Function:
    index: int
    type_index: int
    locals: list[str]
    body: list[tuple[int, object]]


@dataclass
class Global:
    valtype: str
    mutable: bool
    init: int | float


@dataclass
class DataSegment:
    offset: int
    data: bytes

    def contains(self, addr: int) -> bool:
        return self.offset <= addr < self.offset + len(self.data)


@dataclass
class ElementSegment:
    table: int
    offset: int
    funcs: list[int]


@dataclass
class WasmModule:
    types: list[FuncType] = field(default_factory=list)
    imports: list[Import] = field(default_factory=list)
    functions: list[Function] = field(default_factory=list)
    tables: list[tuple[int, int | None]] = field(default_factory=list)
    memories: list[tuple[int, int | None]] = field(default_factory=list)
    globals: list[Global] = field(default_factory=list)
    exports: dict[str, tuple[str, int]] = field(default_factory=dict)
    start: int | None = None
    elements: list[ElementSegment] = field(default_factory=list)
    data_segments: list[DataSegment] = field(default_factory=list)

    @property
    def func_imports(self) -> list[Import]:
        return [i for i in self.imports if i.kind == "func"]

    def func_type(self, func_index: int) -> FuncType:
        imported = self.func_imports
        if func_index < len(imported):
            return self.types[imported[func_index].desc]
        return self.types[self.functions[func_index - len(imported)].type_index]

    @property
    def indirect_table(self) -> dict[int, int]:
        """Table slot -> function index, after applying element segments."""
        table: dict[int, int] = {}
        for seg in self.elements:
            for i, f in enumerate(seg.funcs):
                table[seg.offset + i] = f
        return table


# alias used by the static-analysis API
WasmModuleInfo = WasmModule


class _Reader:
    __slots__ = ("data", "pos", "end")

    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def eof(self) -> bool:
        return self.pos >= self.end

    def byte(self) -> int:
        if self.pos >= self.end:
            raise WasmParseError(f"unexpected end of data at offset {self.pos}")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def bytes(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise WasmParseError(f"unexpected end of data reading {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def uleb(self, bits: int = 32) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift > bits + 6:
                raise WasmParseError("LEB128 integer too long")
        if result >= 1 << bits:
            raise WasmParseError("LEB128 integer out of range")
        return result

    def sleb(self, bits: int) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift > bits + 6:
                raise WasmParseError("LEB128 integer too long")
        if b & 0x40:
            result -= 1 << shift
        if not -(1 << (bits - 1)) <= result < 1 << (bits - 1):
            raise WasmParseError("signed LEB128 out of range")
        return result

    def name(self) -> str:
        n = self.uleb()
        try:
            return self.bytes(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise WasmParseError(f"invalid utf-8 name: {e}") from e

    def valtype(self) -> str:
        b = self.byte()
        if b == 0x7B:
            raise UnsupportedFeatureError("v128 value type (simd)")
        if b not in VALTYPES:
            raise WasmParseError(f"invalid value type {b:#x}")
        return VALTYPES[b]

    def limits(self) -> tuple[int, int | None]:
        flag = self.byte()
        if flag == 0:
            return self.uleb(), None
        if flag == 1:
            return self.uleb(), self.uleb()
        if flag in (2, 3):
            raise UnsupportedFeatureError("shared memory (threads)")
        raise WasmParseError(f"invalid limits flag {flag:#x}")


def _const_expr(r: _Reader, globals_: list[Global], allow_global: bool = True) -> int | float:
    opcode = r.byte()
    if opcode == op.I32_CONST:
        v = r.sleb(32)
    elif opcode == op.I64_CONST:
        v = r.sleb(64)
    elif opcode == op.F32_CONST:
        v = struct.unpack("<f", r.bytes(4))[0]
    elif opcode == op.F64_CONST:
        v = struct.unpack("<d", r.bytes(8))[0]
    elif opcode == op.GLOBAL_GET and allow_global:
        idx = r.uleb()
        if idx >= len(globals_):
            raise WasmParseError(f"constant expression references unknown global {idx}")
        v = globals_[idx].init
    else:
        raise WasmParseError(f"unsupported constant expression opcode {opcode:#x}")
    if r.byte() != op.END:
        raise WasmParseError("constant expression not terminated by end")
    return v


def decode_body(r: _Reader) -> list[tuple[int, object]]:
    """Decode an instruction sequence up to and including the final ``end``."""
    body: list[tuple[int, object]] = []
    depth = 0
    while True:
        code = r.byte()
        if code in op.UNSUPPORTED_PREFIXES:
            raise UnsupportedFeatureError(f"{op.UNSUPPORTED_PREFIXES[code]} opcode prefix {code:#x}")
        try:
            _, kind = op.OPCODES[code]
        except KeyError:
            raise WasmParseError(f"unknown opcode {code:#x} at offset {r.pos - 1}") from None
        imm: object = None
        if kind == op.NONE:
            pass
        elif kind == op.BLOCK:
            b = r.data[r.pos] if r.pos < r.end else None
            if b == 0x40:
                r.pos += 1
                imm = None
            elif b in VALTYPES:
                r.pos += 1
                imm = VALTYPES[b]
            else:
                raise UnsupportedFeatureError("multi-value block type")
        elif kind == op.LABEL or kind == op.FUNC or kind == op.LOCAL or kind == op.GLOBAL:
            imm = r.uleb()
        elif kind == op.BR_TABLE:
            n = r.uleb()
            targets = tuple(r.uleb() for _ in range(n))
            imm = (targets, r.uleb())
        elif kind == op.CALL_INDIRECT:
            type_idx = r.uleb()
            table = r.byte()
            if table != 0:
                raise UnsupportedFeatureError("multiple tables (reference types)")
            imm = type_idx
        elif kind == op.MEMARG:
            align = r.uleb()
            imm = r.uleb()  # offset
            _ = align
        elif kind == op.MEMIDX:
            if r.byte() != 0:
                raise UnsupportedFeatureError("multiple memories")
        elif kind == op.I32:
            imm = r.sleb(32)
        elif kind == op.I64:
            imm = r.sleb(64)
        elif kind == op.F32:
            imm = struct.unpack("<f", r.bytes(4))[0]
        elif kind == op.F64:
            imm = struct.unpack("<d", r.bytes(8))[0]
        body.append((code, imm))
        if code in (op.BLOCK_OP, op.LOOP, op.IF):
            depth += 1
        elif code == op.END:
            if depth == 0:
                return body
            depth -= 1


def parse_wasm(data: bytes) -> WasmModule:
    data = bytes(data)
    if len(data) < 8 or data[:4] != MAGIC:
        raise WasmParseError("bad magic: not a WASM module")
    if data[4:8] != VERSION:
        raise WasmParseError(f"unsupported WASM version {data[4:8].hex()}")

    m = WasmModule()
    func_type_indices: list[int] = []
    r = _Reader(data, 8)
    last_id = 0
    while not r.eof():
        sid = r.byte()
        size = r.uleb()
        if r.pos + size > len(data):
            raise WasmParseError(f"section {sid} overruns module")
        s = _Reader(data, r.pos, r.pos + size)
        r.pos += size
        if sid == 0:
            continue  # custom section
        if sid > 12:
            raise WasmParseError(f"unknown section id {sid}")
        if sid != 12 and sid <= last_id:
            raise WasmParseError(f"section {sid} out of order")
        last_id = max(last_id, sid)
        try:
            _parse_section(sid, s, m, func_type_indices)
        except WasmError:
            raise
        except (IndexError, ValueError, struct.error) as e:
            raise WasmParseError(f"malformed section {sid}: {e}") from e
        if not s.eof():
            raise WasmParseError(f"section {sid} has {s.end - s.pos} trailing bytes")

    if len(func_type_indices) != len(m.functions):
        raise WasmParseError("function and code section sizes differ")
    _validate_indices(m)
    return m


def _parse_section(sid: int, s: _Reader, m: WasmModule, func_type_indices: list[int]) -> None:
    if sid == 1:
        for _ in range(s.uleb()):
            if s.byte() != 0x60:
                raise WasmParseError("expected func type 0x60")
            params = tuple(s.valtype() for _ in range(s.uleb()))
            results = tuple(s.valtype() for _ in range(s.uleb()))
            if len(results) > 1:
                raise UnsupportedFeatureError("multi-value function results")
            m.types.append(FuncType(params, results))
    elif sid == 2:
        for _ in range(s.uleb()):
            mod, name, kind = s.name(), s.name(), s.byte()
            if kind == 0:
                m.imports.append(Import(mod, name, "func", s.uleb()))
            elif kind == 1:
                s.byte()
                m.imports.append(Import(mod, name, "table", s.limits()))
            elif kind == 2:
                m.imports.append(Import(mod, name, "memory", s.limits()))
            elif kind == 3:
                vt = s.valtype()
                m.imports.append(Import(mod, name, "global", (vt, bool(s.byte()))))
            else:
                raise WasmParseError(f"invalid import kind {kind}")
    elif sid == 3:
        func_type_indices.extend(s.uleb() for _ in range(s.uleb()))
    elif sid == 4:
        for _ in range(s.uleb()):
            if s.byte() != 0x70:
                raise UnsupportedFeatureError("non-funcref table (reference types)")
            m.tables.append(s.limits())
    elif sid == 5:
        for _ in range(s.uleb()):
            m.memories.append(s.limits())
    elif sid == 6:
        for _ in range(s.uleb()):
            vt = s.valtype()
            mutable = bool(s.byte())
            m.globals.append(Global(vt, mutable, _const_expr(s, m.globals)))
    elif sid == 7:
        kinds = {0: "func", 1: "table", 2: "memory", 3: "global"}
        for _ in range(s.uleb()):
            name = s.name()
            kind = s.byte()
            if kind not in kinds:
                raise WasmParseError(f"invalid export kind {kind}")
            m.exports[name] = (kinds[kind], s.uleb())
    elif sid == 8:
        m.start = s.uleb()
    elif sid == 9:
        for _ in range(s.uleb()):
            flag = s.uleb()
            if flag != 0:
                raise UnsupportedFeatureError(f"element segment flag {flag} (bulk memory / reference types)")
            offset = _const_expr(s, m.globals)
            funcs = [s.uleb() for _ in range(s.uleb())]
            m.elements.append(ElementSegment(0, int(offset), funcs))
    elif sid == 10:
        n_imported = sum(1 for i in m.imports if i.kind == "func")
        count = s.uleb()
        if count != len(func_type_indices):
            raise WasmParseError("function and code section sizes differ")
        for i in range(count):
            size = s.uleb()
            body_end = s.pos + size
            b = _Reader(s.data, s.pos, body_end)
            locals_: list[str] = []
            for _ in range(b.uleb()):
                n = b.uleb()
                vt = b.valtype()
                if len(locals_) + n > 50000:
                    raise WasmParseError("too many locals")
                locals_.extend([vt] * n)
            body = decode_body(b)
            if not b.eof():
                raise WasmParseError(f"function {n_imported + i} body has trailing bytes")
            s.pos = body_end
            m.functions.append(Function(n_imported + i, func_type_indices[i], locals_, body))
    elif sid == 11:
        for _ in range(s.uleb()):
            flag = s.uleb()
            if flag != 0:
                raise UnsupportedFeatureError(f"data segment flag {flag} (bulk memory)")
            offset = _const_expr(s, m.globals, allow_global=False)
            m.data_segments.append(DataSegment(int(offset) & 0xFFFFFFFF, s.bytes(s.uleb())))
    elif sid == 12:
        raise UnsupportedFeatureError("data count section (bulk memory)")


def _validate_indices(m: WasmModule) -> None:
    n_funcs = len(m.func_imports) + len(m.functions)
    for imp in m.func_imports:
        if imp.desc >= len(m.types):
            raise WasmParseError(f"import {imp.module}.{imp.name} references unknown type {imp.desc}")
    for f in m.functions:
        if f.type_index >= len(m.types):
            raise WasmParseError(f"function {f.index} references unknown type {f.type_index}")
    for name, (kind, idx) in m.exports.items():
        if kind == "func" and idx >= n_funcs:
            raise WasmParseError(f"export {name!r} references unknown function {idx}")
    for seg in m.elements:
        for fi in seg.funcs:
            if fi >= n_funcs:
                raise WasmParseError(f"element segment references unknown function {fi}")
