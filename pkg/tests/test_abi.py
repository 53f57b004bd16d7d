import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eosfuzz.abi import (
    EOS_SYMBOL,
    TRANSFER_TYPE,
    ArrayOf,
    Asset,
    Builtin,
    DeserializeError,
    InvalidNameError,
    ParseError,
    SerializeError,
    StructType,
    TypeResolutionError,
    deserialize,
    is_valid_symbol,
    make_symbol,
    name_to_u64,
    pack_transfer,
    parse_abi,
    read_varuint32,
    serialize,
    symbol_code,
    symbol_precision,
    u64_to_name,
    unpack_transfer,
    write_varuint32,
)
from refs import CHARMAP, pack_name, transfer_bytes, unpack_name

TRANSFER_ABI = {
    "version": "eosio::abi/1.1",
    "structs": [{"name": "transfer", "base": "", "fields": [
        {"name": "from", "type": "name"}, {"name": "to", "type": "name"},
        {"name": "quantity", "type": "asset"}, {"name": "memo", "type": "string"}]}],
    "actions": [{"name": "transfer", "type": "transfer", "ricardian_contract": ""}],
}

names_12 = st.text(alphabet=CHARMAP[1:], min_size=1, max_size=1).flatmap(
    lambda last: st.text(alphabet=CHARMAP, min_size=0, max_size=11).map(lambda s: s + last)
)


# -- names

def test_empty_name_is_zero():
    assert name_to_u64("") == 0
    assert u64_to_name(0) == ""


def test_single_letter_packs_into_top_bits():
    assert name_to_u64("a") == 6 << 59
    assert name_to_u64("a") == pack_name("a")


@pytest.mark.parametrize("s", ["eosio.token", "notifier", "victim1", "fakeagent", "sender", "eosio", "a.b.c"])
def test_name_matches_bit_oracle(s):
    v = name_to_u64(s)
    assert v == pack_name(s)
    assert u64_to_name(v) == s


def test_thirteenth_char_uses_four_bits():
    s = "zzzzzzzzzzzzj"
    assert name_to_u64(s) == pack_name(s)
    assert u64_to_name(name_to_u64(s)) == s
    with pytest.raises(InvalidNameError):
        name_to_u64("zzzzzzzzzzzzk")


@pytest.mark.parametrize("bad", ["A", "abc!", "6", "toolongname1234", "abc."])
def test_invalid_names_rejected(bad):
    with pytest.raises(InvalidNameError):
        name_to_u64(bad)


@given(names_12)
def test_name_roundtrip_property(s):
    assert u64_to_name(name_to_u64(s)) == s
    assert name_to_u64(s) == pack_name(s)


@given(st.integers(0, 2**64 - 1))
def test_decode_matches_oracle(v):
    assert u64_to_name(v) == unpack_name(v)


# -- symbols and assets

def test_eos_symbol_layout():
    assert symbol_precision(EOS_SYMBOL) == 4
    assert symbol_code(EOS_SYMBOL) == "EOS"
    assert EOS_SYMBOL.to_bytes(8, "little") == bytes([4]) + b"EOS" + b"\0" * 4
    assert is_valid_symbol(EOS_SYMBOL)
    assert not is_valid_symbol(make_symbol("EOS", 4) | (ord("a") << 32))


def test_asset_text_roundtrip():
    assert str(Asset.eos(10000)) == "1.0000 EOS"
    assert Asset.parse("1.0000 EOS") == Asset.eos(10000)
    assert Asset.parse("-0.0001 EOS").amount == -1


@given(st.integers(-(2**62) + 1, 2**62 - 1))
def test_asset_is_sixteen_bytes(amount):
    b = serialize(Asset(amount, EOS_SYMBOL), Builtin("asset"))
    assert len(b) == 16
    assert deserialize(b, Builtin("asset")) == Asset(amount, EOS_SYMBOL)


def test_asset_out_of_range():
    with pytest.raises(SerializeError):
        serialize(Asset(2**62, EOS_SYMBOL), Builtin("asset"))


# -- ABI parsing

def test_parse_transfer_abi():
    abi = parse_abi(json.dumps(TRANSFER_ABI))
    assert abi.action_names() == ["transfer"]
    assert len(abi.structs) == 1
    assert [f for f, _ in abi.structs["transfer"]] == ["from", "to", "quantity", "memo"]


def test_alias_flattened():
    doc = dict(TRANSFER_ABI, types=[{"new_type_name": "account_name", "type": "name"}])
    doc["structs"] = [{"name": "transfer", "base": "", "fields": [{"name": "from", "type": "account_name"}]}]
    abi = parse_abi(json.dumps(doc))
    assert abi.structs["transfer"] == [("from", "name")]
    assert abi.action_type("transfer").fields == (("from", Builtin("name")),)


def test_alias_array_suffix():
    doc = {"types": [{"new_type_name": "names", "type": "name[]"}],
           "structs": [{"name": "s", "base": "", "fields": [{"name": "xs", "type": "names"}]}],
           "actions": [{"name": "go", "type": "s"}]}
    assert parse_abi(json.dumps(doc)).action_type("go").fields[0][1] == ArrayOf(Builtin("name"))


def test_struct_cycle_rejected():
    doc = {"structs": [{"name": "A", "base": "", "fields": [{"name": "a", "type": "A"}]}], "actions": []}
    with pytest.raises(TypeResolutionError):
        parse_abi(json.dumps(doc))


def test_base_struct_fields_first():
    doc = {"structs": [
        {"name": "base", "base": "", "fields": [{"name": "x", "type": "uint8"}]},
        {"name": "child", "base": "base", "fields": [{"name": "y", "type": "bool"}]}],
        "actions": [{"name": "act", "type": "child"}]}
    assert parse_abi(json.dumps(doc)).structs["child"] == [("x", "uint8"), ("y", "bool")]


@pytest.mark.parametrize("text", ["{", "[]", '{"actions": [{"type": "x"}]}'])
def test_malformed_abi(text):
    with pytest.raises(ParseError):
        parse_abi(text)


def test_unknown_type():
    doc = {"structs": [{"name": "s", "base": "", "fields": [{"name": "a", "type": "uint128"}]}], "actions": []}
    with pytest.raises(TypeResolutionError):
        parse_abi(json.dumps(doc))


def test_reemission_is_idempotent():
    doc = dict(TRANSFER_ABI, types=[{"new_type_name": "account_name", "type": "name"}])
    a = parse_abi(json.dumps(doc))
    b = parse_abi(a.to_json())
    assert (a.actions, a.structs) == (b.actions, b.structs)
    assert parse_abi(b.to_json()) == b


# -- serialization

def test_bool_and_empty_string_bytes():
    assert serialize(True, Builtin("bool")) == b"\x01"
    assert serialize("", Builtin("string")) == b"\x00"
    assert deserialize(b"\x01", Builtin("bool")) is True


def test_transfer_layout_matches_byte_oracle():
    value = {"from": name_to_u64("sender"), "to": name_to_u64("victim1"),
             "quantity": Asset.eos(10000), "memo": "hi"}
    b = serialize(value, TRANSFER_TYPE)
    assert len(b) == 35
    assert b == transfer_bytes("sender", "victim1", 10000, "hi")
    assert b[16:24] == (10000).to_bytes(8, "little")
    assert b[24] == 4
    assert deserialize(b, TRANSFER_TYPE) == value
    assert pack_transfer(value["from"], value["to"], value["quantity"], "hi") == b
    assert unpack_transfer(b) == value


def test_strict_rejects_trailing_bytes():
    b = serialize(True, Builtin("bool")) + b"\x00"
    with pytest.raises(DeserializeError):
        deserialize(b, Builtin("bool"))
    assert deserialize(b, Builtin("bool"), strict=False) is True


def test_truncated_input():
    with pytest.raises(DeserializeError):
        deserialize(b"\x01\x02", Builtin("uint64"))


@pytest.mark.parametrize("n", [0, 1, 127, 128, 300, 2**21, 2**32 - 1])
def test_varuint32(n):
    out = bytearray()
    write_varuint32(n, out)
    assert read_varuint32(bytes(out), 0) == (n, len(out))
    # LEB128 width
    assert len(out) == max(1, (n.bit_length() + 6) // 7)


def test_check_rejects_bad_values():
    with pytest.raises(SerializeError):
        serialize(256, Builtin("uint8"))
    with pytest.raises(SerializeError):
        serialize(b"short", Builtin("public_key"))


def test_nested_array_struct_roundtrip():
    typ = StructType("s", (("xs", ArrayOf(Builtin("int16"))), ("k", Builtin("public_key"))))
    v = {"xs": [-32768, 0, 32767], "k": bytes(range(34))}
    assert deserialize(serialize(v, typ), typ) == v


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_name_from_random_u64_survives_reencode(seed):
    # codec-produced values: encode(decode(encode(s))) == encode(s)
    rng = random.Random(seed)
    s = "".join(rng.choice(CHARMAP[1:]) for _ in range(rng.randint(1, 12)))
    v = name_to_u64(s)
    assert name_to_u64(u64_to_name(v)) == v
