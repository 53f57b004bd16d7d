"""WASM MVP opcode table: byte value -> (mnemonic, immediate kind)."""

# immediate kinds
NONE = 0
BLOCK = 1
LABEL = 2
BR_TABLE = 3
FUNC = 4
CALL_INDIRECT = 5
LOCAL = 6
GLOBAL = 7
MEMARG = 8
MEMIDX = 9
I32 = 10
I64 = 11
F32 = 12
F64 = 13

UNREACHABLE = 0x00
NOP = 0x01
BLOCK_OP = 0x02
LOOP = 0x03
IF = 0x04
ELSE = 0x05
END = 0x0B
BR = 0x0C
BR_IF = 0x0D
BR_TABLE_OP = 0x0E
RETURN = 0x0F
CALL = 0x10
CALL_INDIRECT_OP = 0x11
DROP = 0x1A
SELECT = 0x1B
LOCAL_GET = 0x20
LOCAL_SET = 0x21
LOCAL_TEE = 0x22
GLOBAL_GET = 0x23
GLOBAL_SET = 0x24
I32_CONST = 0x41
I64_CONST = 0x42
F32_CONST = 0x43
F64_CONST = 0x44
I32_EQ = 0x46
I32_NE = 0x47
I64_EQ = 0x51
I64_NE = 0x52

OPCODES: dict[int, tuple[str, int]] = {
    0x00: ("unreachable", NONE),
    0x01: ("nop", NONE),
    0x02: ("block", BLOCK),
    0x03: ("loop", BLOCK),
    0x04: ("if", BLOCK),
    0x05: ("else", NONE),
    0x0B: ("end", NONE),
    0x0C: ("br", LABEL),
    0x0D: ("br_if", LABEL),
    0x0E: ("br_table", BR_TABLE),
    0x0F: ("return", NONE),
    0x10: ("call", FUNC),
    0x11: ("call_indirect", CALL_INDIRECT),
    0x1A: ("drop", NONE),
    0x1B: ("select", NONE),
    0x20: ("local.get", LOCAL),
    0x21: ("local.set", LOCAL),
    0x22: ("local.tee", LOCAL),
    0x23: ("global.get", GLOBAL),
    0x24: ("global.set", GLOBAL),
    0x28: ("i32.load", MEMARG),
    0x29: ("i64.load", MEMARG),
    0x2A: ("f32.load", MEMARG),
    0x2B: ("f64.load", MEMARG),
    0x2C: ("i32.load8_s", MEMARG),
    0x2D: ("i32.load8_u", MEMARG),
    0x2E: ("i32.load16_s", MEMARG),
    0x2F: ("i32.load16_u", MEMARG),
    0x30: ("i64.load8_s", MEMARG),
    0x31: ("i64.load8_u", MEMARG),
    0x32: ("i64.load16_s", MEMARG),
    0x33: ("i64.load16_u", MEMARG),
    0x34: ("i64.load32_s", MEMARG),
    0x35: ("i64.load32_u", MEMARG),
    0x36: ("i32.store", MEMARG),
    0x37: ("i64.store", MEMARG),
    0x38: ("f32.store", MEMARG),
    0x39: ("f64.store", MEMARG),
    0x3A: ("i32.store8", MEMARG),
    0x3B: ("i32.store16", MEMARG),
    0x3C: ("i64.store8", MEMARG),
    0x3D: ("i64.store16", MEMARG),
    0x3E: ("i64.store32", MEMARG),
    0x3F: ("memory.size", MEMIDX),
    0x40: ("memory.grow", MEMIDX),
    0x41: ("i32.const", I32),
    0x42: ("i64.const", I64),
    0x43: ("f32.const", F32),
    0x44: ("f64.const", F64),
}

_simple = """
45 i32.eqz 46 i32.eq 47 i32.ne 48 i32.lt_s 49 i32.lt_u 4A i32.gt_s 4B i32.gt_u
4C i32.le_s 4D i32.le_u 4E i32.ge_s 4F i32.ge_u
50 i64.eqz 51 i64.eq 52 i64.ne 53 i64.lt_s 54 i64.lt_u 55 i64.gt_s 56 i64.gt_u
57 i64.le_s 58 i64.le_u 59 i64.ge_s 5A i64.ge_u
5B f32.eq 5C f32.ne 5D f32.lt 5E f32.gt 5F f32.le 60 f32.ge
61 f64.eq 62 f64.ne 63 f64.lt 64 f64.gt 65 f64.le 66 f64.ge
67 i32.clz 68 i32.ctz 69 i32.popcnt 6A i32.add 6B i32.sub 6C i32.mul 6D i32.div_s
6E i32.div_u 6F i32.rem_s 70 i32.rem_u 71 i32.and 72 i32.or 73 i32.xor 74 i32.shl
75 i32.shr_s 76 i32.shr_u 77 i32.rotl 78 i32.rotr
79 i64.clz 7A i64.ctz 7B i64.popcnt 7C i64.add 7D i64.sub 7E i64.mul 7F i64.div_s
80 i64.div_u 81 i64.rem_s 82 i64.rem_u 83 i64.and 84 i64.or 85 i64.xor 86 i64.shl
87 i64.shr_s 88 i64.shr_u 89 i64.rotl 8A i64.rotr
8B f32.abs 8C f32.neg 8D f32.ceil 8E f32.floor 8F f32.trunc 90 f32.nearest 91 f32.sqrt
92 f32.add 93 f32.sub 94 f32.mul 95 f32.div 96 f32.min 97 f32.max 98 f32.copysign
99 f64.abs 9A f64.neg 9B f64.ceil 9C f64.floor 9D f64.trunc 9E f64.nearest 9F f64.sqrt
A0 f64.add A1 f64.sub A2 f64.mul A3 f64.div A4 f64.min A5 f64.max A6 f64.copysign
A7 i32.wrap_i64 A8 i32.trunc_f32_s A9 i32.trunc_f32_u AA i32.trunc_f64_s AB i32.trunc_f64_u
AC i64.extend_i32_s AD i64.extend_i32_u AE i64.trunc_f32_s AF i64.trunc_f32_u
B0 i64.trunc_f64_s B1 i64.trunc_f64_u B2 f32.convert_i32_s B3 f32.convert_i32_u
B4 f32.convert_i64_s B5 f32.convert_i64_u B6 f32.demote_f64 B7 f64.convert_i32_s
B8 f64.convert_i32_u B9 f64.convert_i64_s BA f64.convert_i64_u BB f64.promote_f32
BC i32.reinterpret_f32 BD i64.reinterpret_f64 BE f32.reinterpret_i32 BF f64.reinterpret_i64
C0 i32.extend8_s C1 i32.extend16_s C2 i64.extend8_s C3 i64.extend16_s C4 i64.extend32_s
"""
_tokens = _simple.split()
for _code, _name in zip(_tokens[::2], _tokens[1::2]):
    OPCODES[int(_code, 16)] = (_name, NONE)
del _tokens, _code, _name

NAMES = {op: name for op, (name, _) in OPCODES.items()}
BY_NAME = {name: op for op, name in NAMES.items()}

FLOAT_OPCODES = frozenset(
    op for op, name in NAMES.items()
    if name.startswith(("f32", "f64")) or "_f32" in name or "_f64" in name
)

# prefixed opcodes that belong to post-MVP proposals
UNSUPPORTED_PREFIXES = {0xFC: "bulk-memory/saturating-truncation", 0xFD: "simd", 0xFE: "threads"}
