"""Instrumented WASM interpreter.

Functions are pre-compiled into flat ``(opcode, immediate)`` lists with block
targets resolved, then run by a single dispatch loop.  i32/i64 values live on
the stack as unsigned Python ints; floats as Python floats.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable

from .. import trace as tr
from . import opcodes as op
from .binary import FuncType, WasmError, WasmModule, UnsupportedFeatureError

M32 = 0xFFFFFFFF
M64 = 0xFFFFFFFFFFFFFFFF
PAGE = 65536
DEFAULT_MAX_PAGES = 64
MAX_CALL_DEPTH = 200

APPLY_TYPE = FuncType(("i64", "i64", "i64"), ())


class LinkError(WasmError):
    pass


class Trap(Exception):
    """A WASM runtime trap."""


class BudgetExceeded(Exception):
    pass


class ContractExit(Exception):
    """eosio_exit: stop the action successfully."""


class ContractAbort(Exception):
    """Raised by eosio_assert with a false condition."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def _s32(x: int) -> int:
    return x - 0x100000000 if x & 0x80000000 else x


def _s64(x: int) -> int:
    return x - 0x10000000000000000 if x & 0x8000000000000000 else x


def _f32(x: float) -> float:
    try:
        return struct.unpack("<f", struct.pack("<f", x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def _div_s(a: int, b: int, bits: int) -> int:
    if b == 0:
        raise Trap("integer divide by zero")
    if a == -(1 << (bits - 1)) and b == -1:
        raise Trap("integer overflow")
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def _rem_s(a: int, b: int) -> int:
    if b == 0:
        raise Trap("integer divide by zero")
    r = abs(a) % abs(b)
    return -r if a < 0 else r


def _div_u(a: int, b: int) -> int:
    if b == 0:
        raise Trap("integer divide by zero")
    return a // b


def _rem_u(a: int, b: int) -> int:
    if b == 0:
        raise Trap("integer divide by zero")
    return a % b


def _clz(x: int, bits: int) -> int:
    return bits - x.bit_length()


def _ctz(x: int, bits: int) -> int:
    if x == 0:
        return bits
    return (x & -x).bit_length() - 1


def _fmin(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        return math.nan
    if a == b == 0:
        return a if math.copysign(1, a) < 0 else b
    return min(a, b)


def _fmax(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        return math.nan
    if a == b == 0:
        return b if math.copysign(1, a) < 0 else a
    return max(a, b)


def _fdiv(a: float, b: float) -> float:
    if b == 0:
        if math.isnan(a) or a == 0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1, b)
    return a / b


def _nearest(x: float) -> float:
    if math.isnan(x) or math.isinf(x):
        return x
    return math.copysign(float(round(x)), x)


def _ftrunc(x: float) -> float:
    if math.isnan(x) or math.isinf(x):
        return x
    return math.copysign(float(math.trunc(x)), x)


def _fceil(x: float) -> float:
    if math.isnan(x) or math.isinf(x):
        return x
    return math.copysign(float(math.ceil(x)), x)


def _ffloor(x: float) -> float:
    if math.isnan(x) or math.isinf(x):
        return x
    return float(math.floor(x))


def _trunc_to_int(x: float, lo: int, hi: int, mask: int) -> int:
    if math.isnan(x) or math.isinf(x):
        raise Trap("invalid conversion to integer")
    t = math.trunc(x)
    if not lo <= t <= hi:
        raise Trap("integer overflow")
    return t & mask


def _reinterpret(fmt_in: str, fmt_out: str) -> Callable:
    def f(x):
        return struct.unpack(fmt_out, struct.pack(fmt_in, x))[0]
    return f


def _sx(bits: int, mask: int) -> Callable[[int], int]:
    sign = 1 << (bits - 1)
    low = (1 << bits) - 1

    def f(x: int) -> int:
        x &= low
        return ((x ^ sign) - sign) & mask
    return f


def _fcmp(f):
    return lambda a, b: 1 if f(a, b) else 0


B = op.BY_NAME
BINOPS: dict[int, Callable[[int, int], int]] = {
    B["i32.add"]: lambda a, b: (a + b) & M32,
    B["i32.sub"]: lambda a, b: (a - b) & M32,
    B["i32.mul"]: lambda a, b: (a * b) & M32,
    B["i32.div_s"]: lambda a, b: _div_s(_s32(a), _s32(b), 32) & M32,
    B["i32.div_u"]: _div_u,
    B["i32.rem_s"]: lambda a, b: _rem_s(_s32(a), _s32(b)) & M32,
    B["i32.rem_u"]: _rem_u,
    B["i32.and"]: lambda a, b: a & b,
    B["i32.or"]: lambda a, b: a | b,
    B["i32.xor"]: lambda a, b: a ^ b,
    B["i32.shl"]: lambda a, b: (a << (b & 31)) & M32,
    B["i32.shr_s"]: lambda a, b: (_s32(a) >> (b & 31)) & M32,
    B["i32.shr_u"]: lambda a, b: a >> (b & 31),
    B["i32.rotl"]: lambda a, b: ((a << (b & 31)) | (a >> ((32 - (b & 31)) & 31))) & M32,
    B["i32.rotr"]: lambda a, b: ((a >> (b & 31)) | (a << ((32 - (b & 31)) & 31))) & M32,
    B["i32.lt_s"]: lambda a, b: 1 if _s32(a) < _s32(b) else 0,
    B["i32.lt_u"]: lambda a, b: 1 if a < b else 0,
    B["i32.gt_s"]: lambda a, b: 1 if _s32(a) > _s32(b) else 0,
    B["i32.gt_u"]: lambda a, b: 1 if a > b else 0,
    B["i32.le_s"]: lambda a, b: 1 if _s32(a) <= _s32(b) else 0,
    B["i32.le_u"]: lambda a, b: 1 if a <= b else 0,
    B["i32.ge_s"]: lambda a, b: 1 if _s32(a) >= _s32(b) else 0,
    B["i32.ge_u"]: lambda a, b: 1 if a >= b else 0,
    B["i64.add"]: lambda a, b: (a + b) & M64,
    B["i64.sub"]: lambda a, b: (a - b) & M64,
    B["i64.mul"]: lambda a, b: (a * b) & M64,
    B["i64.div_s"]: lambda a, b: _div_s(_s64(a), _s64(b), 64) & M64,
    B["i64.div_u"]: _div_u,
    B["i64.rem_s"]: lambda a, b: _rem_s(_s64(a), _s64(b)) & M64,
    B["i64.rem_u"]: _rem_u,
    B["i64.and"]: lambda a, b: a & b,
    B["i64.or"]: lambda a, b: a | b,
    B["i64.xor"]: lambda a, b: a ^ b,
    B["i64.shl"]: lambda a, b: (a << (b & 63)) & M64,
    B["i64.shr_s"]: lambda a, b: (_s64(a) >> (b & 63)) & M64,
    B["i64.shr_u"]: lambda a, b: a >> (b & 63),
    B["i64.rotl"]: lambda a, b: ((a << (b & 63)) | (a >> ((64 - (b & 63)) & 63))) & M64,
    B["i64.rotr"]: lambda a, b: ((a >> (b & 63)) | (a << ((64 - (b & 63)) & 63))) & M64,
    B["i64.lt_s"]: lambda a, b: 1 if _s64(a) < _s64(b) else 0,
    B["i64.lt_u"]: lambda a, b: 1 if a < b else 0,
    B["i64.gt_s"]: lambda a, b: 1 if _s64(a) > _s64(b) else 0,
    B["i64.gt_u"]: lambda a, b: 1 if a > b else 0,
    B["i64.le_s"]: lambda a, b: 1 if _s64(a) <= _s64(b) else 0,
    B["i64.le_u"]: lambda a, b: 1 if a <= b else 0,
    B["i64.ge_s"]: lambda a, b: 1 if _s64(a) >= _s64(b) else 0,
    B["i64.ge_u"]: lambda a, b: 1 if a >= b else 0,
    # floats
    B["f32.eq"]: _fcmp(lambda a, b: a == b),
    B["f32.ne"]: _fcmp(lambda a, b: a != b),
    B["f32.lt"]: _fcmp(lambda a, b: a < b),
    B["f32.gt"]: _fcmp(lambda a, b: a > b),
    B["f32.le"]: _fcmp(lambda a, b: a <= b),
    B["f32.ge"]: _fcmp(lambda a, b: a >= b),
    B["f64.eq"]: _fcmp(lambda a, b: a == b),
    B["f64.ne"]: _fcmp(lambda a, b: a != b),
    B["f64.lt"]: _fcmp(lambda a, b: a < b),
    B["f64.gt"]: _fcmp(lambda a, b: a > b),
    B["f64.le"]: _fcmp(lambda a, b: a <= b),
    B["f64.ge"]: _fcmp(lambda a, b: a >= b),
    B["f32.add"]: lambda a, b: _f32(a + b),
    B["f32.sub"]: lambda a, b: _f32(a - b),
    B["f32.mul"]: lambda a, b: _f32(a * b),
    B["f32.div"]: lambda a, b: _f32(_fdiv(a, b)),
    B["f32.min"]: _fmin,
    B["f32.max"]: _fmax,
    B["f32.copysign"]: math.copysign,
    B["f64.add"]: lambda a, b: a + b,
    B["f64.sub"]: lambda a, b: a - b,
    B["f64.mul"]: lambda a, b: a * b,
    B["f64.div"]: _fdiv,
    B["f64.min"]: _fmin,
    B["f64.max"]: _fmax,
    B["f64.copysign"]: math.copysign,
}

UNOPS: dict[int, Callable] = {
    B["i32.eqz"]: lambda a: 1 if a == 0 else 0,
    B["i64.eqz"]: lambda a: 1 if a == 0 else 0,
    B["i32.clz"]: lambda a: _clz(a, 32),
    B["i32.ctz"]: lambda a: _ctz(a, 32),
    B["i32.popcnt"]: lambda a: bin(a).count("1"),
    B["i64.clz"]: lambda a: _clz(a, 64),
    B["i64.ctz"]: lambda a: _ctz(a, 64),
    B["i64.popcnt"]: lambda a: bin(a).count("1"),
    B["i32.wrap_i64"]: lambda a: a & M32,
    B["i64.extend_i32_s"]: lambda a: _s32(a) & M64,
    B["i64.extend_i32_u"]: lambda a: a,
    B["i32.extend8_s"]: _sx(8, M32),
    B["i32.extend16_s"]: _sx(16, M32),
    B["i64.extend8_s"]: _sx(8, M64),
    B["i64.extend16_s"]: _sx(16, M64),
    B["i64.extend32_s"]: _sx(32, M64),
    B["f32.abs"]: abs,
    B["f32.neg"]: lambda a: -a,
    B["f32.ceil"]: _fceil,
    B["f32.floor"]: _ffloor,
    B["f32.trunc"]: _ftrunc,
    B["f32.nearest"]: _nearest,
    B["f32.sqrt"]: lambda a: _f32(math.sqrt(a)) if a >= 0 else math.nan,
    B["f64.abs"]: abs,
    B["f64.neg"]: lambda a: -a,
    B["f64.ceil"]: _fceil,
    B["f64.floor"]: _ffloor,
    B["f64.trunc"]: _ftrunc,
    B["f64.nearest"]: _nearest,
    B["f64.sqrt"]: lambda a: math.sqrt(a) if a >= 0 else math.nan,
    B["i32.trunc_f32_s"]: lambda a: _trunc_to_int(a, -(1 << 31), (1 << 31) - 1, M32),
    B["i32.trunc_f32_u"]: lambda a: _trunc_to_int(a, 0, M32, M32),
    B["i32.trunc_f64_s"]: lambda a: _trunc_to_int(a, -(1 << 31), (1 << 31) - 1, M32),
    B["i32.trunc_f64_u"]: lambda a: _trunc_to_int(a, 0, M32, M32),
    B["i64.trunc_f32_s"]: lambda a: _trunc_to_int(a, -(1 << 63), (1 << 63) - 1, M64),
    B["i64.trunc_f32_u"]: lambda a: _trunc_to_int(a, 0, M64, M64),
    B["i64.trunc_f64_s"]: lambda a: _trunc_to_int(a, -(1 << 63), (1 << 63) - 1, M64),
    B["i64.trunc_f64_u"]: lambda a: _trunc_to_int(a, 0, M64, M64),
    B["f32.convert_i32_s"]: lambda a: _f32(float(_s32(a))),
    B["f32.convert_i32_u"]: lambda a: _f32(float(a)),
    B["f32.convert_i64_s"]: lambda a: _f32(float(_s64(a))),
    B["f32.convert_i64_u"]: lambda a: _f32(float(a)),
    B["f32.demote_f64"]: _f32,
    B["f64.convert_i32_s"]: lambda a: float(_s32(a)),
    B["f64.convert_i32_u"]: float,
    B["f64.convert_i64_s"]: lambda a: float(_s64(a)),
    B["f64.convert_i64_u"]: float,
    B["f64.promote_f32"]: lambda a: a,
    B["i32.reinterpret_f32"]: _reinterpret("<f", "<I"),
    B["i64.reinterpret_f64"]: _reinterpret("<d", "<Q"),
    B["f32.reinterpret_i32"]: _reinterpret("<I", "<f"),
    B["f64.reinterpret_i64"]: _reinterpret("<Q", "<d"),
}

# opcode -> (struct.Struct, post-processing)
_U8, _S8 = struct.Struct("<B"), struct.Struct("<b")
_U16, _S16 = struct.Struct("<H"), struct.Struct("<h")
_U32, _S32 = struct.Struct("<I"), struct.Struct("<i")
_U64 = struct.Struct("<Q")
_F32, _F64 = struct.Struct("<f"), struct.Struct("<d")

LOADS = {
    B["i32.load"]: (_U32, None),
    B["i64.load"]: (_U64, None),
    B["f32.load"]: (_F32, None),
    B["f64.load"]: (_F64, None),
    B["i32.load8_s"]: (_S8, M32),
    B["i32.load8_u"]: (_U8, None),
    B["i32.load16_s"]: (_S16, M32),
    B["i32.load16_u"]: (_U16, None),
    B["i64.load8_s"]: (_S8, M64),
    B["i64.load8_u"]: (_U8, None),
    B["i64.load16_s"]: (_S16, M64),
    B["i64.load16_u"]: (_U16, None),
    B["i64.load32_s"]: (_S32, M64),
    B["i64.load32_u"]: (_U32, None),
}
STORES = {
    B["i32.store"]: (_U32, M32),
    B["i64.store"]: (_U64, M64),
    B["f32.store"]: (_F32, None),
    B["f64.store"]: (_F64, None),
    B["i32.store8"]: (_U8, 0xFF),
    B["i32.store16"]: (_U16, 0xFFFF),
    B["i64.store8"]: (_U8, 0xFF),
    B["i64.store16"]: (_U16, 0xFFFF),
    B["i64.store32"]: (_U32, M32),
}
del B

COMPARE_OPS = {op.I32_EQ: "i32.eq", op.I32_NE: "i32.ne", op.I64_EQ: "i64.eq", op.I64_NE: "i64.ne"}


@dataclass
class CompiledFunction:
    index: int
    type: FuncType
    n_params: int
    local_defaults: list
    code: list[tuple[int, object]]
    n_results: int


@dataclass
class HostFunction:
    index: int
    name: str
    type: FuncType


@dataclass
class CompiledModule:
    """A validated, pre-compiled module ready for repeated instantiation."""

    module: WasmModule
    funcs: list  # HostFunction | CompiledFunction, by function index
    memory_image: bytes
    max_pages: int
    globals_init: list
    table: list[int | None]
    apply_index: int
    floats: bool


def _default(vt: str):
    return 0.0 if vt in ("f32", "f64") else 0


def _compile_body(body: list[tuple[int, object]], floats: bool, func_index: int) -> list[tuple[int, object]]:
    """Resolve structured control flow into jump targets.

    block/loop/if immediates become ``(end_pc, arity, else_pc)``; ``else``
    carries its matching ``end`` pc.  Integer constants are made unsigned.
    """
    code: list[list] = [[o, imm] for o, imm in body]
    stack: list[int] = []
    for pc, (o, imm) in enumerate(body):
        if not floats and o in op.FLOAT_OPCODES:
            raise UnsupportedFeatureError(
                f"float opcode {op.NAMES[o]} in function {func_index} (floats disabled)"
            )
        if o in (op.BLOCK_OP, op.LOOP, op.IF):
            stack.append(pc)
            code[pc][1] = [None, 0 if imm is None else 1, None]
        elif o == op.ELSE:
            opener = stack[-1]
            code[opener][1][2] = pc
        elif o == op.END:
            if stack:
                opener = stack.pop()
                code[opener][1][0] = pc
                else_pc = code[opener][1][2]
                if else_pc is not None:
                    code[else_pc][1] = pc
        elif o == op.I32_CONST:
            code[pc][1] = imm & M32
        elif o == op.I64_CONST:
            code[pc][1] = imm & M64
        elif o == op.F32_CONST:
            code[pc][1] = _f32(imm)
    out = []
    for o, imm in code:
        if isinstance(imm, list):
            imm = tuple(imm)
        out.append((o, imm))
    return out


def prepare(module: WasmModule, env_names: set[str] | None = None, *, floats: bool = False,
            max_pages: int = DEFAULT_MAX_PAGES) -> CompiledModule:
    """Validate linkage and compile every function body.

    ``env_names`` is the set of host intrinsics available for import; when
    given, an import outside it is a LinkError.
    """
    if "apply" not in module.exports or module.exports["apply"][0] != "func":
        raise LinkError("module does not export an apply function")
    apply_index = module.exports["apply"][1]
    if module.func_type(apply_index) != APPLY_TYPE:
        raise LinkError(f"apply has signature {module.func_type(apply_index)}, expected (i64 i64 i64)")

    funcs: list = []
    for imp in module.imports:
        if imp.kind != "func":
            raise LinkError(f"unsupported import kind {imp.kind} for {imp.module}.{imp.name}")
        if env_names is not None and imp.name not in env_names:
            raise LinkError(f"unresolved import {imp.module}.{imp.name}")
        funcs.append(HostFunction(len(funcs), imp.name, module.types[imp.desc]))
    for f in module.functions:
        ft = module.types[f.type_index]
        if not floats and any(t in ("f32", "f64") for t in ft.params + ft.results + tuple(f.locals)):
            raise UnsupportedFeatureError(f"function {f.index} uses float types (floats disabled)")
        code = _compile_body(f.body, floats, f.index)
        defaults = [_default(t) for t in f.locals]
        funcs.append(CompiledFunction(f.index, ft, len(ft.params), defaults, code, len(ft.results)))

    if len(module.memories) > 1:
        raise UnsupportedFeatureError("multiple memories")
    pages = module.memories[0][0] if module.memories else 0
    mem_max = module.memories[0][1] if module.memories else 0
    cap = max_pages if mem_max is None else min(max_pages, mem_max)
    if pages > cap:
        raise LinkError(f"initial memory of {pages} pages exceeds cap {cap}")
    image = bytearray(pages * PAGE)
    for seg in module.data_segments:
        end = seg.offset + len(seg.data)
        if end > len(image):
            raise LinkError(f"data segment at {seg.offset} does not fit in memory")
        image[seg.offset:end] = seg.data

    size = module.tables[0][0] if module.tables else 0
    table: list[int | None] = [None] * size
    for seg in module.elements:
        if seg.offset + len(seg.funcs) > size:
            raise LinkError("element segment does not fit in table")
        table[seg.offset:seg.offset + len(seg.funcs)] = seg.funcs

    globals_init = []
    for g in module.globals:
        if not floats and g.valtype in ("f32", "f64"):
            raise UnsupportedFeatureError("float global (floats disabled)")
        v = g.init
        if g.valtype == "i32":
            v = int(v) & M32
        elif g.valtype == "i64":
            v = int(v) & M64
        globals_init.append(v)

    return CompiledModule(module, funcs, bytes(image), cap, globals_init, table, apply_index, floats)


class Instance:
    """One live module instance: memory, globals and host bindings."""

    def __init__(self, compiled: CompiledModule, host: dict[str, Callable], sink: tr.TraceSink | None = None):
        self.compiled = compiled
        self.funcs = compiled.funcs
        self.types = compiled.module.types
        self.memory = bytearray(compiled.memory_image)
        self.max_pages = compiled.max_pages
        self.globals = list(compiled.globals_init)
        self.table = compiled.table
        self.host = host
        for f in self.funcs:
            if isinstance(f, HostFunction) and f.name not in host:
                raise LinkError(f"unresolved import env.{f.name}")
        self.sink = sink if sink is not None else tr.TraceSink()
        self.steps = 0
        self.limit = 1 << 62
        self.depth = 0

    # -- memory helpers used by host functions
    def read(self, addr: int, n: int) -> bytes:
        if addr + n > len(self.memory):
            raise Trap(f"out of bounds memory access at {addr}+{n}")
        return bytes(self.memory[addr:addr + n])

    def write(self, addr: int, data: bytes) -> None:
        if addr + len(data) > len(self.memory):
            raise Trap(f"out of bounds memory access at {addr}+{len(data)}")
        self.memory[addr:addr + len(data)] = data

    def read_cstr(self, addr: int, limit: int = 1024) -> str:
        mem = self.memory
        end = addr
        stop = min(len(mem), addr + limit)
        while end < stop and mem[end] != 0:
            end += 1
        if addr >= len(mem):
            raise Trap(f"out of bounds string at {addr}")
        return bytes(mem[addr:end]).decode("utf-8", errors="replace")

    def invoke(self, func_index: int, args: list, budget: int | None = None) -> list:
        if budget is not None:
            self.limit = self.steps + budget
        return self._call(func_index, list(args))

    def _call(self, idx: int, args: list) -> list:
        f = self.funcs[idx]
        if isinstance(f, HostFunction):
            sink = self.sink
            sink.emit(tr.HOST_CALL, name=f.name, args=list(args))
            res = self.host[f.name](self, *args)
            if f.type.results:
                return [res]
            return []
        self.depth += 1
        if self.depth > MAX_CALL_DEPTH:
            self.depth -= 1
            raise Trap("call stack exhausted")
        try:
            return self._run(f, args)
        finally:
            self.depth -= 1

    def _run(self, fn: CompiledFunction, args: list) -> list:  # noqa: C901 - one dispatch loop
        code = fn.code
        locals_ = args + fn.local_defaults
        stack: list = []
        push = stack.append
        pop = stack.pop
        mem = self.memory
        sink = self.sink
        verbose = sink.verbose
        names = op.NAMES
        binops = BINOPS
        unops = UNOPS
        loads = LOADS
        stores = STORES
        # label: (continuation pc, stack height, arity, is_loop)
        labels: list[tuple[int, int, int, bool]] = [(len(code), 0, fn.n_results, False)]
        pc = 0
        count = self.steps
        limit = self.limit
        try:
            while True:
                o, imm = code[pc]
                pc += 1
                count += 1
                if count > limit:
                    raise BudgetExceeded(f"instruction budget of {limit} exhausted")
                if verbose:
                    sink.emit(tr.INSTR, opcode=names[o], func=fn.index)

                if o == 0x20:  # local.get
                    push(locals_[imm])
                    continue
                if o == 0x41 or o == 0x42:  # i32.const / i64.const
                    push(imm)
                    continue
                if o == 0x21:  # local.set
                    locals_[imm] = pop()
                    continue
                if o == 0x22:  # local.tee
                    locals_[imm] = stack[-1]
                    continue
                f2 = binops.get(o)
                if f2 is not None:
                    b = pop()
                    stack[-1] = f2(stack[-1], b)
                    continue
                ld = loads.get(o)
                if ld is not None:
                    ea = pop() + imm
                    s, mask = ld
                    if ea + s.size > len(mem):
                        raise Trap(f"out of bounds memory load at {ea}")
                    v = s.unpack_from(mem, ea)[0]
                    push(v & mask if mask is not None and v < 0 else v)
                    continue
                st = stores.get(o)
                if st is not None:
                    v = pop()
                    ea = pop() + imm
                    s, mask = st
                    if ea + s.size > len(mem):
                        raise Trap(f"out of bounds memory store at {ea}")
                    s.pack_into(mem, ea, v & mask if mask is not None else v)
                    continue
                if o in COMPARE_OPS:
                    b = pop()
                    a = stack[-1]
                    sink.emit(tr.COMPARE, opcode=COMPARE_OPS[o], lhs=a, rhs=b)
                    if o == 0x46 or o == 0x51:
                        stack[-1] = 1 if a == b else 0
                    else:
                        stack[-1] = 1 if a != b else 0
                    continue
                f1 = unops.get(o)
                if f1 is not None:
                    stack[-1] = f1(stack[-1])
                    continue

                if o == 0x0D:  # br_if
                    if not pop():
                        continue
                    depth = imm
                elif o == 0x0C:  # br
                    depth = imm
                elif o == 0x0E:  # br_table
                    targets, default = imm
                    i = pop()
                    depth = targets[i] if i < len(targets) else default
                elif o == 0x02:  # block
                    end_pc, arity, _ = imm
                    labels.append((end_pc + 1, len(stack), arity, False))
                    continue
                elif o == 0x03:  # loop
                    labels.append((pc, len(stack), 0, True))
                    continue
                elif o == 0x04:  # if
                    end_pc, arity, else_pc = imm
                    if pop():
                        labels.append((end_pc + 1, len(stack), arity, False))
                    elif else_pc is not None:
                        labels.append((end_pc + 1, len(stack), arity, False))
                        pc = else_pc + 1
                    else:
                        pc = end_pc + 1
                    continue
                elif o == 0x05:  # else: then-arm finished, skip to end
                    labels.pop()
                    pc = imm + 1
                    continue
                elif o == 0x0B:  # end
                    labels.pop()
                    if not labels:
                        n = fn.n_results
                        return stack[-n:] if n else []
                    continue
                elif o == 0x0F:  # return
                    n = fn.n_results
                    return stack[-n:] if n else []
                elif o == 0x10:  # call
                    callee = self.funcs[imm]
                    n = len(callee.type.params)
                    if n:
                        call_args = stack[-n:]
                        del stack[-n:]
                    else:
                        call_args = []
                    self.steps = count
                    stack.extend(self._call(imm, call_args))
                    count = self.steps
                    mem = self.memory
                    continue
                elif o == 0x11:  # call_indirect
                    i = pop()
                    table = self.table
                    target = table[i] if i < len(table) else None
                    sink.emit(tr.CALL_INDIRECT, table_index=i, function=-1 if target is None else target)
                    if target is None:
                        raise Trap(f"undefined table element {i}")
                    callee = self.funcs[target]
                    if callee.type != self.types[imm]:
                        raise Trap("indirect call type mismatch")
                    n = len(callee.type.params)
                    if n:
                        call_args = stack[-n:]
                        del stack[-n:]
                    else:
                        call_args = []
                    self.steps = count
                    stack.extend(self._call(target, call_args))
                    count = self.steps
                    mem = self.memory
                    continue
                elif o == 0x1A:  # drop
                    pop()
                    continue
                elif o == 0x1B:  # select
                    c = pop()
                    b = pop()
                    if not c:
                        stack[-1] = b
                    continue
                elif o == 0x23:  # global.get
                    push(self.globals[imm])
                    continue
                elif o == 0x24:  # global.set
                    self.globals[imm] = pop()
                    continue
                elif o == 0x43 or o == 0x44:
                    push(imm)
                    continue
                elif o == 0x3F:  # memory.size
                    push(len(mem) // PAGE)
                    continue
                elif o == 0x40:  # memory.grow
                    delta = pop()
                    old = len(mem) // PAGE
                    if old + delta > self.max_pages:
                        raise Trap(f"memory growth beyond cap of {self.max_pages} pages")
                    mem.extend(bytes(delta * PAGE))
                    push(old)
                    continue
                elif o == 0x01:  # nop
                    continue
                elif o == 0x00:
                    raise Trap("unreachable executed")
                else:  # pragma: no cover - decoder rejects unknown opcodes
                    raise Trap(f"unimplemented opcode {o:#x}")

                # taken branch
                target_pc, height, arity, is_loop = labels[-1 - depth]
                if arity:
                    vals = stack[-arity:]
                    del stack[height:]
                    stack.extend(vals)
                else:
                    del stack[height:]
                if is_loop:
                    del labels[len(labels) - depth:]
                else:
                    del labels[len(labels) - 1 - depth:]
                    if not labels:
                        n = fn.n_results
                        return stack[-n:] if n else []
                pc = target_pc
        except IndexError as e:
            if pc - 1 < len(code) and code[pc - 1][0] == 0x11:
                raise Trap(f"undefined table element: {e}") from e
            raise Trap(f"stack or index fault at pc {pc - 1}: {e}") from e
        finally:
            self.steps = count


def instantiate(module: WasmModule | CompiledModule, env: dict[str, Callable], *,
                floats: bool = False, sink: tr.TraceSink | None = None) -> Instance:
    compiled = module if isinstance(module, CompiledModule) else prepare(module, set(env), floats=floats)
    return Instance(compiled, env, sink)


@dataclass
class ApplyResult:
    status: str  # applied | aborted | error
    message: str = ""
    error_kind: str = ""
    steps: int = 0
    events: list = field(default_factory=list)


def call_apply(instance: Instance, receiver: int, code: int, action: int, budget: int) -> ApplyResult:
    """Run ``apply(receiver, code, action)`` under an instruction budget.

    Host-side exceptions other than the ones mapped here propagate, so the
    chain can surface its own errors (inline dispatch failures and so on).
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    start = len(instance.sink.events)
    before = instance.steps
    try:
        instance.invoke(instance.compiled.apply_index, [receiver & M64, code & M64, action & M64], budget)
        res = ApplyResult("applied")
    except ContractExit:
        res = ApplyResult("applied")
    except ContractAbort as e:
        res = ApplyResult("aborted", message=e.message)
    except BudgetExceeded as e:
        res = ApplyResult("error", message=str(e), error_kind="Budget")
    except Trap as e:
        res = ApplyResult("error", message=str(e), error_kind="Trap")
    except RecursionError as e:
        res = ApplyResult("error", message=str(e), error_kind="Trap")
    res.steps = instance.steps - before
    res.events = instance.sink.events[start:]
    return res
