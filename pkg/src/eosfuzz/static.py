"""Constant-string extraction from a contract binary.

Two views of the data section are offered: every printable string stored
there (the generic pool) and the strings whose addresses are loaded as
``i32.const`` inside functions shaped like a token ``transfer`` handler
(the memo candidates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .wasm.binary import FuncType, WasmModule, WasmModuleInfo, parse_wasm
from .wasm.opcodes import BY_NAME

__all__ = [
    "MIN_STRING_LEN", "TRANSFER_SIGNATURE", "StringPool", "build_string_pool", "extract_string_pool",
    "get_memo_strings", "is_printable", "parse_wasm", "string_at",
]

MIN_STRING_LEN = 2

# (this, from, to, &quantity, &memo) as emitted for a transfer member function
TRANSFER_SIGNATURE = FuncType(("i32", "i64", "i64", "i32", "i32"), ())

_I32_CONST = BY_NAME["i32.const"]


def is_printable(b: int) -> bool:
    return 0x20 <= b < 0x7F


def _printable_runs(chunk: bytes):
    start = None
    for i, b in enumerate(chunk):
        if is_printable(b):
            if start is None:
                start = i
        elif start is not None:
            yield chunk[start:i]
            start = None
    if start is not None:
        yield chunk[start:]


def extract_string_pool(info: WasmModuleInfo) -> set[str]:
    """Maximal printable-ASCII runs (length >= 2) in every NUL-separated chunk of every data segment."""
    pool: set[str] = set()
    for seg in info.data_segments:
        for chunk in seg.data.split(b"\0"):
            for run in _printable_runs(chunk):
                if len(run) >= MIN_STRING_LEN:
                    pool.add(run.decode("ascii"))
    return pool


def string_at(info: WasmModuleInfo, addr: int) -> str | None:
    """The NUL-terminated printable string starting at ``addr``, if one is stored there.

    The string must end at a NUL byte or at the end of its segment; a
    non-printable byte before that disqualifies it.
    """
    for seg in info.data_segments:
        if not seg.contains(addr):
            continue
        rel = addr - seg.offset
        end = seg.data.find(b"\0", rel)
        raw = seg.data[rel:] if end < 0 else seg.data[rel:end]
        if len(raw) >= MIN_STRING_LEN and all(is_printable(b) for b in raw):
            return raw.decode("ascii")
        return None
    return None


def get_memo_strings(info: WasmModuleInfo, transfer_signature: FuncType = TRANSFER_SIGNATURE) -> set[str]:
    offsets: set[int] = set()
    for fn in info.functions:
        sig = info.types[fn.type_index]
        if sig.params != transfer_signature.params or sig.results != transfer_signature.results:
            continue
        for op, imm in fn.body:
            if op == _I32_CONST:
                offsets.add(imm & 0xFFFFFFFF)
    found = set()
    for off in offsets:
        s = string_at(info, off)
        if s is not None:
            found.add(s)
    return found


@dataclass
class StringPool:
    all_strings: set[str] = field(default_factory=set)
    memo_candidates: set[str] = field(default_factory=set)

    def sorted_all(self) -> list[str]:
        return sorted(self.all_strings)

    def sorted_memos(self) -> list[str]:
        return sorted(self.memo_candidates)


def build_string_pool(info: WasmModule, transfer_signature: FuncType = TRANSFER_SIGNATURE) -> StringPool:
    return StringPool(extract_string_pool(info), get_memo_strings(info, transfer_signature))
