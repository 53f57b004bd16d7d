"""EOSIO ABI model: name/symbol codecs, type resolution and binary serialization.

Values are plain Python objects driven by a resolved type descriptor:

    int     for intN/uintN, name, symbol and varuint32
    float   for float32/float64
    bool    for bool
    str     for string
    bytes   for public_key (34 bytes, opaque)
    Asset   for asset
    list    for arrays
    dict    for structs (field name -> value, in declaration order)
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Any

NAME_CHARS = ".12345abcdefghijklmnopqrstuvwxyz"
_NAME_INDEX = {c: i for i, c in enumerate(NAME_CHARS)}

PUBLIC_KEY_SIZE = 34
MAX_ASSET_AMOUNT = (1 << 62) - 1


class AbiError(Exception):
    pass


class ParseError(AbiError):
    pass


class TypeResolutionError(AbiError):
    pass


class InvalidNameError(AbiError, ValueError):
    pass


class SerializeError(AbiError):
    pass


class DeserializeError(AbiError):
    pass


# ---------------------------------------------------------------------------
# name codec


def name_to_u64(s: str) -> int:
    """Pack an account/action name into its 64-bit form.

    The first twelve characters take 5 bits each starting from the most
    significant end; an optional thirteenth character fills the low 4 bits.
    """
    if len(s) > 13:
        raise InvalidNameError(f"name too long: {s!r}")
    if s.endswith("."):
        raise InvalidNameError(f"name may not end with '.': {s!r}")
    value = 0
    for i, ch in enumerate(s):
        try:
            c = _NAME_INDEX[ch]
        except KeyError:
            raise InvalidNameError(f"invalid character {ch!r} in name {s!r}") from None
        if i < 12:
            value |= c << (64 - 5 * (i + 1))
        else:
            if c > 0x0F:
                raise InvalidNameError(f"13th character of {s!r} must be one of {NAME_CHARS[:16]!r}")
            value |= c
    return value


def u64_to_name(v: int) -> str:
    v &= 0xFFFFFFFFFFFFFFFF
    chars = ["."] * 13
    tmp = v
    for i in range(13):
        if i == 0:
            chars[12] = NAME_CHARS[tmp & 0x0F]
            tmp >>= 4
        else:
            chars[12 - i] = NAME_CHARS[tmp & 0x1F]
            tmp >>= 5
    return "".join(chars).rstrip(".")


def is_valid_name(s: str) -> bool:
    try:
        name_to_u64(s)
    except InvalidNameError:
        return False
    return True


# ---------------------------------------------------------------------------
# symbols and assets


def make_symbol(code: str, precision: int) -> int:
    if not 0 <= precision <= 18:
        raise SerializeError(f"symbol precision out of range: {precision}")
    if not 1 <= len(code) <= 7 or not all("A" <= c <= "Z" for c in code):
        raise SerializeError(f"invalid symbol code: {code!r}")
    value = precision
    for i, c in enumerate(code):
        value |= ord(c) << (8 * (i + 1))
    return value


def symbol_precision(sym: int) -> int:
    return sym & 0xFF


def symbol_code(sym: int) -> str:
    out = []
    sym >>= 8
    while sym:
        out.append(chr(sym & 0xFF))
        sym >>= 8
    return "".join(out)


def is_valid_symbol(sym: int) -> bool:
    if not 0 <= sym < 1 << 64:
        return False
    if symbol_precision(sym) > 18:
        return False
    rest = sym >> 8
    seen_pad = False
    count = 0
    for _ in range(7):
        b = rest & 0xFF
        rest >>= 8
        if b == 0:
            seen_pad = True
        elif seen_pad or not (ord("A") <= b <= ord("Z")):
            return False
        else:
            count += 1
    return count > 0


EOS_SYMBOL = make_symbol("EOS", 4)


@dataclass(frozen=True, order=True)
class Asset:
    amount: int
    symbol: int = EOS_SYMBOL

    @classmethod
    def eos(cls, units: int) -> Asset:
        return cls(units, EOS_SYMBOL)

    @classmethod
    def parse(cls, text: str) -> Asset:
        """Parse ``"1.0000 EOS"`` style strings."""
        try:
            num, code = text.strip().split()
        except ValueError:
            raise ParseError(f"bad asset string: {text!r}") from None
        neg = num.startswith("-")
        num = num.lstrip("-")
        whole, _, frac = num.partition(".")
        amount = int(whole or "0") * 10 ** len(frac) + int(frac or "0")
        return cls(-amount if neg else amount, make_symbol(code, len(frac)))

    def __str__(self) -> str:
        prec = symbol_precision(self.symbol)
        sign = "-" if self.amount < 0 else ""
        a = abs(self.amount)
        if prec:
            body = f"{a // 10**prec}.{a % 10**prec:0{prec}d}"
        else:
            body = str(a)
        return f"{sign}{body} {symbol_code(self.symbol)}"


# ---------------------------------------------------------------------------
# type descriptors

INT_RANGES = {
    "int8": (-(1 << 7), (1 << 7) - 1),
    "int16": (-(1 << 15), (1 << 15) - 1),
    "int32": (-(1 << 31), (1 << 31) - 1),
    "int64": (-(1 << 63), (1 << 63) - 1),
    "uint8": (0, (1 << 8) - 1),
    "uint16": (0, (1 << 16) - 1),
    "uint32": (0, (1 << 32) - 1),
    "uint64": (0, (1 << 64) - 1),
    "varuint32": (0, (1 << 32) - 1),
}
_INT_FORMATS = {
    "int8": "<b", "int16": "<h", "int32": "<i", "int64": "<q",
    "uint8": "<B", "uint16": "<H", "uint32": "<I", "uint64": "<Q",
}
FLOAT_TYPES = ("float32", "float64")
BUILTIN_TYPES = frozenset(
    set(INT_RANGES) | set(FLOAT_TYPES) | {"bool", "string", "name", "asset", "symbol", "public_key"}
)


@dataclass(frozen=True)
class Builtin:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ArrayOf:
    elem: "TypeDesc"

    def __str__(self) -> str:
        return f"{self.elem}[]"


@dataclass(frozen=True)
class StructType:
    name: str
    fields: tuple[tuple[str, "TypeDesc"], ...]

    def __str__(self) -> str:
        return self.name


TypeDesc = Builtin | ArrayOf | StructType


@dataclass
class AbiInterface:
    """A resolved ABI: aliases are flattened out of every field type."""

    actions: list[tuple[str, str]] = field(default_factory=list)
    structs: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    types: dict[str, str] = field(default_factory=dict)

    def action_names(self) -> list[str]:
        return [a for a, _ in self.actions]

    def action_type(self, action: str) -> StructType:
        for a, t in self.actions:
            if a == action:
                desc = self.resolve(t)
                assert isinstance(desc, StructType)
                return desc
        raise TypeResolutionError(f"unknown action {action!r}")

    def resolve(self, type_name: str) -> TypeDesc:
        return _resolve(type_name, self.structs, self.types, ())

    def to_json(self) -> str:
        doc = {
            "version": "eosio::abi/1.1",
            "types": [{"new_type_name": k, "type": v} for k, v in self.types.items()],
            "structs": [
                {"name": n, "base": "", "fields": [{"name": f, "type": t} for f, t in fs]}
                for n, fs in self.structs.items()
            ],
            "actions": [{"name": a, "type": t, "ricardian_contract": ""} for a, t in self.actions],
        }
        return json.dumps(doc, indent=2)


def _flatten_alias(type_name: str, types: dict[str, str]) -> str:
    suffix = ""
    while type_name.endswith("[]"):
        type_name = type_name[:-2]
        suffix += "[]"
    seen = set()
    while type_name in types:
        if type_name in seen:
            raise TypeResolutionError(f"cyclic type alias through {type_name!r}")
        seen.add(type_name)
        type_name = types[type_name]
        while type_name.endswith("[]"):
            type_name = type_name[:-2]
            suffix += "[]"
    return type_name + suffix


def _resolve(type_name: str, structs, types, stack: tuple[str, ...]) -> TypeDesc:
    type_name = _flatten_alias(type_name, types)
    if type_name.endswith("[]"):
        return ArrayOf(_resolve(type_name[:-2], structs, types, stack))
    if type_name in BUILTIN_TYPES:
        return Builtin(type_name)
    if type_name in structs:
        if type_name in stack:
            raise TypeResolutionError(f"cyclic struct definition: {' -> '.join(stack + (type_name,))}")
        inner = stack + (type_name,)
        fields = tuple((f, _resolve(t, structs, types, inner)) for f, t in structs[type_name])
        return StructType(type_name, fields)
    raise TypeResolutionError(f"unknown type {type_name!r}")


def parse_abi(json_text: str | bytes) -> AbiInterface:
    try:
        doc = json.loads(json_text)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"malformed ABI JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("ABI document must be a JSON object")

    try:
        types = {t["new_type_name"]: t["type"] for t in doc.get("types", [])}
        raw_structs = {s["name"]: s for s in doc.get("structs", [])}
        raw_actions = [(a["name"], a["type"]) for a in doc.get("actions", [])]
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed ABI section: {e}") from e

    # base structs contribute their fields first
    def own_fields(name: str, seen: tuple[str, ...]) -> list[tuple[str, str]]:
        if name in seen:
            raise TypeResolutionError(f"cyclic struct base chain through {name!r}")
        s = raw_structs[name]
        out: list[tuple[str, str]] = []
        base = s.get("base") or ""
        if base:
            base = _flatten_alias(base, types)
            if base not in raw_structs:
                raise TypeResolutionError(f"unknown base struct {base!r}")
            out.extend(own_fields(base, seen + (name,)))
        try:
            out.extend((f["name"], _flatten_alias(f["type"], types)) for f in s.get("fields", []))
        except (KeyError, TypeError) as e:
            raise ParseError(f"malformed struct {name!r}: {e}") from e
        return out

    structs = {name: own_fields(name, ()) for name in raw_structs}
    for name in structs:
        _resolve(name, structs, types, ())

    actions = []
    for action_name, handler in raw_actions:
        if not is_valid_name(action_name):
            raise ParseError(f"invalid action name {action_name!r}")
        handler = _flatten_alias(handler, types)
        if not isinstance(_resolve(handler, structs, types, ()), StructType):
            raise TypeResolutionError(f"action {action_name!r} handler type {handler!r} is not a struct")
        actions.append((action_name, handler))

    for alias in types:
        _resolve(alias, structs, types, ())
    return AbiInterface(actions=actions, structs=structs, types=types)


# ---------------------------------------------------------------------------
# binary serialization


def write_varuint32(n: int, out: bytearray) -> None:
    if not 0 <= n < 1 << 32:
        raise SerializeError(f"varuint32 out of range: {n}")
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def read_varuint32(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise DeserializeError("truncated varuint32")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            break
        shift += 7
        if shift >= 35:
            raise DeserializeError("varuint32 too long")
    if result >= 1 << 32:
        raise DeserializeError("varuint32 overflow")
    return result, pos


def check_value(value: Any, typ: TypeDesc) -> None:
    """Raise SerializeError unless ``value`` satisfies the invariants of ``typ``."""
    if isinstance(typ, ArrayOf):
        if not isinstance(value, (list, tuple)):
            raise SerializeError(f"expected list for {typ}, got {type(value).__name__}")
        for v in value:
            check_value(v, typ.elem)
        return
    if isinstance(typ, StructType):
        if not isinstance(value, dict):
            raise SerializeError(f"expected dict for struct {typ.name}")
        names = [f for f, _ in typ.fields]
        if list(value) != names:
            raise SerializeError(f"struct {typ.name} fields {list(value)} != {names}")
        for f, t in typ.fields:
            check_value(value[f], t)
        return
    n = typ.name
    if n in INT_RANGES:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SerializeError(f"{n} expects int, got {value!r}")
        lo, hi = INT_RANGES[n]
        if not lo <= value <= hi:
            raise SerializeError(f"{value} out of range for {n}")
    elif n in FLOAT_TYPES:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SerializeError(f"{n} expects float, got {value!r}")
    elif n == "bool":
        if not isinstance(value, bool):
            raise SerializeError(f"bool expects bool, got {value!r}")
    elif n == "string":
        if not isinstance(value, str):
            raise SerializeError(f"string expects str, got {value!r}")
    elif n == "name":
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 1 << 64:
            raise SerializeError(f"name expects u64, got {value!r}")
    elif n == "symbol":
        if isinstance(value, bool) or not isinstance(value, int) or not is_valid_symbol(value):
            raise SerializeError(f"invalid symbol {value!r}")
    elif n == "asset":
        if not isinstance(value, Asset):
            raise SerializeError(f"asset expects Asset, got {value!r}")
        if abs(value.amount) > MAX_ASSET_AMOUNT:
            raise SerializeError(f"asset amount {value.amount} exceeds 62 bits")
        if not is_valid_symbol(value.symbol):
            raise SerializeError(f"invalid asset symbol {value.symbol:#x}")
    elif n == "public_key":
        if not isinstance(value, (bytes, bytearray)) or len(value) != PUBLIC_KEY_SIZE:
            raise SerializeError("public_key must be 34 bytes")
    else:  # pragma: no cover - resolver only emits known builtins
        raise SerializeError(f"unknown builtin {n}")


def _write(value: Any, typ: TypeDesc, out: bytearray) -> None:
    if isinstance(typ, ArrayOf):
        write_varuint32(len(value), out)
        for v in value:
            _write(v, typ.elem, out)
        return
    if isinstance(typ, StructType):
        for f, t in typ.fields:
            _write(value[f], t, out)
        return
    n = typ.name
    if n in _INT_FORMATS:
        out += struct.pack(_INT_FORMATS[n], value)
    elif n == "varuint32":
        write_varuint32(value, out)
    elif n == "float32":
        out += struct.pack("<f", value)
    elif n == "float64":
        out += struct.pack("<d", value)
    elif n == "bool":
        out.append(1 if value else 0)
    elif n == "string":
        raw = value.encode("utf-8")
        write_varuint32(len(raw), out)
        out += raw
    elif n in ("name", "symbol"):
        out += struct.pack("<Q", value)
    elif n == "asset":
        out += struct.pack("<qQ", value.amount, value.symbol)
    elif n == "public_key":
        out += bytes(value)


def serialize(value: Any, typ: TypeDesc) -> bytes:
    check_value(value, typ)
    out = bytearray()
    try:
        _write(value, typ, out)
    except (struct.error, OverflowError) as e:
        raise SerializeError(str(e)) from e
    return bytes(out)


def _need(data: bytes, pos: int, n: int) -> None:
    if pos + n > len(data):
        raise DeserializeError(f"truncated input: need {n} bytes at offset {pos}, have {len(data) - pos}")


def _read(data: bytes, pos: int, typ: TypeDesc) -> tuple[Any, int]:
    if isinstance(typ, ArrayOf):
        count, pos = read_varuint32(data, pos)
        items = []
        for _ in range(count):
            v, pos = _read(data, pos, typ.elem)
            items.append(v)
        return items, pos
    if isinstance(typ, StructType):
        out = {}
        for f, t in typ.fields:
            out[f], pos = _read(data, pos, t)
        return out, pos
    n = typ.name
    if n in _INT_FORMATS:
        fmt = _INT_FORMATS[n]
        size = struct.calcsize(fmt)
        _need(data, pos, size)
        return struct.unpack_from(fmt, data, pos)[0], pos + size
    if n == "varuint32":
        return read_varuint32(data, pos)
    if n == "float32":
        _need(data, pos, 4)
        return struct.unpack_from("<f", data, pos)[0], pos + 4
    if n == "float64":
        _need(data, pos, 8)
        return struct.unpack_from("<d", data, pos)[0], pos + 8
    if n == "bool":
        _need(data, pos, 1)
        b = data[pos]
        if b > 1:
            raise DeserializeError(f"invalid bool byte {b:#x}")
        return b == 1, pos + 1
    if n == "string":
        length, pos = read_varuint32(data, pos)
        _need(data, pos, length)
        try:
            return data[pos:pos + length].decode("utf-8"), pos + length
        except UnicodeDecodeError as e:
            raise DeserializeError(f"invalid utf-8 in string: {e}") from e
    if n in ("name", "symbol"):
        _need(data, pos, 8)
        return struct.unpack_from("<Q", data, pos)[0], pos + 8
    if n == "asset":
        _need(data, pos, 16)
        amount, sym = struct.unpack_from("<qQ", data, pos)
        return Asset(amount, sym), pos + 16
    if n == "public_key":
        _need(data, pos, PUBLIC_KEY_SIZE)
        return bytes(data[pos:pos + PUBLIC_KEY_SIZE]), pos + PUBLIC_KEY_SIZE
    raise DeserializeError(f"unknown builtin {n}")  # pragma: no cover


def deserialize(data: bytes, typ: TypeDesc, strict: bool = True) -> Any:
    """Decode ``data`` as ``typ``.  Strict mode rejects trailing bytes."""
    value, pos = _read(bytes(data), 0, typ)
    if strict and pos != len(data):
        raise DeserializeError(f"{len(data) - pos} trailing bytes after {typ}")
    return value


# ---------------------------------------------------------------------------
# the transfer struct shared by eosio.token, the agents and most fixtures

TRANSFER_TYPE = StructType(
    "transfer",
    (("from", Builtin("name")), ("to", Builtin("name")), ("quantity", Builtin("asset")), ("memo", Builtin("string"))),
)


def pack_transfer(frm: int, to: int, quantity: Asset, memo: str = "") -> bytes:
    return serialize({"from": frm, "to": to, "quantity": quantity, "memo": memo}, TRANSFER_TYPE)


def unpack_transfer(data: bytes, strict: bool = False) -> dict:
    return deserialize(data, TRANSFER_TYPE, strict=strict)


def float32_round(x: float) -> float:
    """Round a Python float to the nearest float32 value."""
    if math.isnan(x) or math.isinf(x):
        return x
    return struct.unpack("<f", struct.pack("<f", x))[0]

