"""EOSIO host intrinsics exposed to contracts as ``env.*`` imports."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable

from .. import trace as tr
from ..abi import u64_to_name
from .interp import M32, M64, ContractAbort, ContractExit, Instance, Trap


@dataclass
class ActionContext:
    """What a running contract can observe and request.

    The chain simulator subclasses this to hook recipients, inline actions,
    authorization and storage into its own state; on its own it is enough to
    run a contract in isolation.
    """

    receiver: int
    code: int
    action: int
    payload: bytes = b""
    auth: frozenset[int] = frozenset()
    tapos_block_num: int = 1
    tapos_block_prefix: int = 0
    current_time: int = 0
    recipients: list[int] = field(default_factory=list)
    inline: list[bytes] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    accounts: frozenset[int] | None = None
    console: list[str] = field(default_factory=list)

    def require_recipient(self, who: int) -> None:
        if who != self.receiver and who not in self.recipients:
            self.recipients.append(who)

    def has_auth(self, who: int) -> bool:
        return who in self.auth

    def is_account(self, who: int) -> bool:
        return self.accounts is None or who in self.accounts

    def send_inline(self, packed_action: bytes) -> None:
        self.inline.append(packed_action)

    def table(self, code: int, scope: int, table: int) -> dict[int, bytes]:
        return self.tables.setdefault((code, scope, table), {})

    def find_table(self, code: int, scope: int, table: int) -> dict[int, bytes] | None:
        return self.tables.get((code, scope, table))


HOST_FUNCTION_NAMES = (
    "read_action_data", "action_data_size", "require_recipient", "require_auth", "require_auth2",
    "has_auth", "is_account", "send_inline", "eosio_assert", "eosio_assert_message", "eosio_exit",
    "current_receiver", "current_time", "tapos_block_num", "tapos_block_prefix",
    "sha256", "assert_sha256", "memcpy", "memmove", "memset", "memcmp",
    "prints", "prints_l", "printi", "printui", "printn",
    "db_store_i64", "db_find_i64", "db_get_i64", "db_update_i64", "db_remove_i64",
)


class HostEnv:
    """Binds intrinsic implementations to one action context."""

    def __init__(self, ctx: ActionContext):
        self.ctx = ctx
        # iterator handle -> (table key, primary id)
        self._iters: list[tuple[tuple[int, int, int], int]] = []

    def bindings(self) -> dict[str, Callable]:
        return {name: getattr(self, "_" + name) for name in HOST_FUNCTION_NAMES}

    # -- action data
    def _read_action_data(self, inst: Instance, msg: int, length: int) -> int:
        data = self.ctx.payload
        if length == 0:
            return len(data)
        n = min(length, len(data))
        inst.write(msg, data[:n])
        return n

    def _action_data_size(self, inst: Instance) -> int:
        return len(self.ctx.payload)

    def _current_receiver(self, inst: Instance) -> int:
        return self.ctx.receiver & M64

    # -- notifications, inline actions, authorization
    def _require_recipient(self, inst: Instance, who: int) -> None:
        self.ctx.require_recipient(who)

    def _require_auth(self, inst: Instance, who: int) -> None:
        if not self.ctx.has_auth(who):
            inst.sink.emit(tr.ASSERT_FIRED, message="missing required authority")
            raise ContractAbort("missing required authority")

    def _require_auth2(self, inst: Instance, who: int, permission: int) -> None:
        self._require_auth(inst, who)

    def _has_auth(self, inst: Instance, who: int) -> int:
        return 1 if self.ctx.has_auth(who) else 0

    def _is_account(self, inst: Instance, who: int) -> int:
        return 1 if self.ctx.is_account(who) else 0

    def _send_inline(self, inst: Instance, data: int, length: int) -> None:
        self.ctx.send_inline(inst.read(data, length))

    # -- assertions
    def _eosio_assert(self, inst: Instance, cond: int, msg: int) -> None:
        if not cond:
            message = inst.read_cstr(msg)
            inst.sink.emit(tr.ASSERT_FIRED, message=message)
            raise ContractAbort(message)

    def _eosio_assert_message(self, inst: Instance, cond: int, msg: int, length: int) -> None:
        if not cond:
            message = inst.read(msg, length).decode("utf-8", errors="replace")
            inst.sink.emit(tr.ASSERT_FIRED, message=message)
            raise ContractAbort(message)

    def _eosio_exit(self, inst: Instance, code: int) -> None:
        raise ContractExit(code)

    # -- block info
    def _current_time(self, inst: Instance) -> int:
        return self.ctx.current_time & M64

    def _tapos_block_num(self, inst: Instance) -> int:
        v = self.ctx.tapos_block_num & M32
        inst.sink.emit(tr.BLOCK_INFO_READ, which="tapos_block_num", value=v)
        return v

    def _tapos_block_prefix(self, inst: Instance) -> int:
        v = self.ctx.tapos_block_prefix & M32
        inst.sink.emit(tr.BLOCK_INFO_READ, which="tapos_block_prefix", value=v)
        return v

    # -- crypto and memory
    def _sha256(self, inst: Instance, data: int, length: int, out: int) -> None:
        inst.write(out, hashlib.sha256(inst.read(data, length)).digest())

    def _assert_sha256(self, inst: Instance, data: int, length: int, expected: int) -> None:
        if hashlib.sha256(inst.read(data, length)).digest() != inst.read(expected, 32):
            inst.sink.emit(tr.ASSERT_FIRED, message="hash mismatch")
            raise ContractAbort("hash mismatch")

    def _memcpy(self, inst: Instance, dest: int, src: int, n: int) -> int:
        if abs(dest - src) < n:
            raise Trap("memcpy with overlapping memory")
        inst.write(dest, inst.read(src, n))
        return dest

    def _memmove(self, inst: Instance, dest: int, src: int, n: int) -> int:
        inst.write(dest, inst.read(src, n))
        return dest

    def _memset(self, inst: Instance, dest: int, value: int, n: int) -> int:
        inst.write(dest, bytes([value & 0xFF]) * n)
        return dest

    def _memcmp(self, inst: Instance, a: int, b: int, n: int) -> int:
        x, y = inst.read(a, n), inst.read(b, n)
        if x == y:
            return 0
        return 0xFFFFFFFF if x < y else 1

    # -- console
    def _prints(self, inst: Instance, s: int) -> None:
        self.ctx.console.append(inst.read_cstr(s))

    def _prints_l(self, inst: Instance, s: int, n: int) -> None:
        self.ctx.console.append(inst.read(s, n).decode("utf-8", errors="replace"))

    def _printi(self, inst: Instance, v: int) -> None:
        self.ctx.console.append(str(struct.unpack("<q", struct.pack("<Q", v))[0]))

    def _printui(self, inst: Instance, v: int) -> None:
        self.ctx.console.append(str(v))

    def _printn(self, inst: Instance, v: int) -> None:
        self.ctx.console.append(u64_to_name(v))

    # -- primary-key tables
    def _iter(self, key: tuple[int, int, int], pk: int) -> int:
        self._iters.append((key, pk))
        return len(self._iters) - 1

    def _lookup(self, it: int) -> tuple[dict[int, bytes], int]:
        if not 0 <= it < len(self._iters):
            raise Trap(f"invalid table iterator {it}")
        key, pk = self._iters[it]
        rows = self.ctx.find_table(*key)
        if rows is None or pk not in rows:
            raise Trap(f"dereferenced stale table iterator {it}")
        return rows, pk

    def _db_store_i64(self, inst: Instance, scope: int, table: int, payer: int, pk: int, data: int, length: int) -> int:
        key = (self.ctx.receiver, scope, table)
        rows = self.ctx.table(*key)
        if pk in rows:
            inst.sink.emit(tr.ASSERT_FIRED, message="key uniqueness violation")
            raise ContractAbort("key uniqueness violation")
        rows[pk] = inst.read(data, length)
        return self._iter(key, pk)

    def _db_find_i64(self, inst: Instance, code: int, scope: int, table: int, pk: int) -> int:
        rows = self.ctx.find_table(code, scope, table)
        if rows is None or pk not in rows:
            return M32  # -1: not found
        return self._iter((code, scope, table), pk)

    def _db_get_i64(self, inst: Instance, it: int, data: int, length: int) -> int:
        rows, pk = self._lookup(it)
        row = rows[pk]
        if length == 0:
            return len(row)
        n = min(length, len(row))
        inst.write(data, row[:n])
        return n

    def _db_update_i64(self, inst: Instance, it: int, payer: int, data: int, length: int) -> None:
        rows, pk = self._lookup(it)
        if self._iters[it][0][0] != self.ctx.receiver:
            raise Trap("db access violation: update of another contract's table")
        rows[pk] = inst.read(data, length)

    def _db_remove_i64(self, inst: Instance, it: int) -> None:
        rows, pk = self._lookup(it)
        if self._iters[it][0][0] != self.ctx.receiver:
            raise Trap("db access violation: remove from another contract's table")
        del rows[pk]
