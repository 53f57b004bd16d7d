"""In-process EOSIO runtime: balances, eosio.token, notifications, inline actions.

A transaction is one pushed action plus everything it triggers.  Dispatch
follows EOSIO's apply-context order: the action's own account runs first,
then every account added through ``require_recipient`` (same ``code`` and
payload, new ``receiver``), then queued inline actions depth-first, each with
``code`` equal to its own target account.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any

from . import trace as tr
from .abi import (
    EOS_SYMBOL,
    AbiError,
    Asset,
    name_to_u64,
    pack_transfer,
    read_varuint32,
    u64_to_name,
    unpack_transfer,
    write_varuint32,
)
from .trace import TraceEvent, TraceSink
from .wasm.binary import WasmModule
from .wasm.host import ActionContext, HostEnv
from .wasm.interp import M32, CompiledModule, ContractAbort, Instance, Trap, call_apply, prepare
from .wasm.host import HOST_FUNCTION_NAMES

log = logging.getLogger(__name__)

EOSIO_TOKEN = name_to_u64("eosio.token")
TRANSFER = name_to_u64("transfer")
HACK = name_to_u64("hack")
ACTIVE = name_to_u64("active")

DEFAULT_MAX_DEPTH = 32
DEFAULT_BUDGET = 10_000_000
GENESIS_BALANCE = 1000_0000  # 1000.0000 EOS

APPLIED = "Applied"
ABORTED = "Aborted"
ERROR = "Error"


class ChainError(Exception):
    pass


class AccountError(ChainError):
    pass


class DepthError(ChainError):
    pass


class _TxFailed(Exception):
    def __init__(self, status: str, message: str, kind: str = ""):
        super().__init__(message)
        self.status = status
        self.message = message
        self.kind = kind


@dataclass(frozen=True)
class Action:
    account: int
    name: int
    authorization: tuple[int, ...]
    data: bytes
    provenance: str = "abi"

    def pack(self) -> bytes:
        """Serialize in the layout ``send_inline`` expects."""
        out = bytearray()
        out += self.account.to_bytes(8, "little") + self.name.to_bytes(8, "little")
        write_varuint32(len(self.authorization), out)
        for actor in self.authorization:
            out += actor.to_bytes(8, "little") + ACTIVE.to_bytes(8, "little")
        write_varuint32(len(self.data), out)
        out += self.data
        return bytes(out)

    @classmethod
    def unpack(cls, raw: bytes, provenance: str = "inline") -> Action:
        if len(raw) < 16:
            raise AbiError("packed action too short")
        account = int.from_bytes(raw[0:8], "little")
        name = int.from_bytes(raw[8:16], "little")
        n, pos = read_varuint32(raw, 16)
        actors = []
        for _ in range(n):
            if pos + 16 > len(raw):
                raise AbiError("truncated authorization list")
            actors.append(int.from_bytes(raw[pos:pos + 8], "little"))
            pos += 16
        size, pos = read_varuint32(raw, pos)
        if pos + size != len(raw):
            raise AbiError("packed action data length mismatch")
        return cls(account, name, tuple(actors), bytes(raw[pos:pos + size]), provenance)

    def describe(self) -> dict[str, Any]:
        return {
            "account": u64_to_name(self.account),
            "name": u64_to_name(self.name),
            "authorization": [u64_to_name(a) for a in self.authorization],
            "data": self.data.hex(),
            "provenance": self.provenance,
        }


@dataclass
class BlockInfo:
    tapos_block_num: int = 1
    tapos_block_prefix: int = 0x5EED0001
    current_time: int = 1_600_000_000_000_000  # microseconds

    def advance(self) -> None:
        self.tapos_block_num = (self.tapos_block_num + 1) & 0xFFFF
        self.tapos_block_prefix = (self.tapos_block_prefix * 1103515245 + 12345) & M32
        self.current_time += 500_000


@dataclass
class TransactionResult:
    status: str
    message: str = ""
    error_kind: str = ""
    trace: list[TraceEvent] = field(default_factory=list)
    balance_deltas: dict[int, int] = field(default_factory=dict)
    balances_before: dict[int, int] = field(default_factory=dict)
    balances_after: dict[int, int] = field(default_factory=dict)
    steps: int = 0

    @property
    def applied(self) -> bool:
        return self.status == APPLIED


class NativeContract:
    """A contract implemented in Python rather than WASM."""

    def apply(self, chain: ChainState, ctx: ApplyContext) -> None:
        raise NotImplementedError


class WasmContract:
    def __init__(self, module: WasmModule | CompiledModule, floats: bool = False):
        if isinstance(module, CompiledModule):
            self.compiled = module
        else:
            self.compiled = prepare(module, set(HOST_FUNCTION_NAMES), floats=floats)


class ApplyContext(ActionContext):
    """ActionContext wired into chain state for one apply() call."""

    def __init__(self, chain: ChainState, receiver: int, act: Action, recipients: list[int],
                 inline: list[Action], sink: TraceSink):
        super().__init__(
            receiver=receiver,
            code=act.account,
            action=act.name,
            payload=act.data,
            auth=frozenset(act.authorization),
            tapos_block_num=chain.block_info.tapos_block_num,
            tapos_block_prefix=chain.block_info.tapos_block_prefix,
            current_time=chain.block_info.current_time,
            recipients=recipients,
            tables=chain.tables,
        )
        self.chain = chain
        self.inline_actions = inline
        self.sink = sink

    def is_account(self, who: int) -> bool:
        return who in self.chain.accounts

    def send_inline(self, packed_action: bytes) -> None:
        try:
            act = Action.unpack(packed_action)
        except AbiError as e:
            raise Trap(f"malformed inline action: {e}") from e
        self.send_inline_action(act)

    def send_inline_action(self, act: Action) -> None:
        # a contract may only sign with its own authority
        for actor in act.authorization:
            if actor != self.receiver:
                self.sink.emit(tr.ASSERT_FIRED, message=f"missing authority of {u64_to_name(actor)}")
                raise ContractAbort(f"missing authority of {u64_to_name(actor)}")
        self.inline_actions.append(act)

    def check(self, cond: bool, message: str) -> None:
        """eosio_assert for native handlers."""
        if not cond:
            self.sink.emit(tr.ASSERT_FIRED, message=message)
            raise ContractAbort(message)


class EosioToken(NativeContract):
    """Native eosio.token: EOS transfers with carbon-copy notification."""

    def apply(self, chain: ChainState, ctx: ApplyContext) -> None:
        if ctx.code != ctx.receiver or ctx.action != TRANSFER:
            return
        try:
            data = unpack_transfer(ctx.payload, strict=True)
        except AbiError as e:
            ctx.check(False, f"malformed transfer: {e}")
        frm, to, qty = data["from"], data["to"], data["quantity"]
        ctx.check(ctx.has_auth(frm), f"missing authority of {u64_to_name(frm)}")
        ctx.check(frm != to, "cannot transfer to self")
        ctx.check(to in chain.accounts, "to account does not exist")
        ctx.check(qty.symbol == EOS_SYMBOL, "symbol precision mismatch")
        ctx.check(qty.amount > 0, "must transfer positive quantity")
        ctx.check(len(data["memo"].encode()) <= 256, "memo has more than 256 bytes")
        ctx.check(chain.balances.get(frm, 0) >= qty.amount, "overdrawn balance")
        chain.balances[frm] -= qty.amount
        chain.balances[to] = chain.balances.get(to, 0) + qty.amount
        ctx.sink.emit(tr.TOKEN_TRANSFER, **{"from": frm, "to": to, "amount": qty.amount})
        ctx.require_recipient(frm)
        ctx.require_recipient(to)


class FakeTransferAgent(NativeContract):
    """Calls a victim's transfer handler without going through eosio.token.

    ``hack`` sends the transfer as an inline action to the victim (code ==
    receiver there); ``transfer`` forwards itself with require_recipient, so
    the victim sees code == this agent.
    """

    def apply(self, chain: ChainState, ctx: ApplyContext) -> None:
        if ctx.code != ctx.receiver:
            return
        if ctx.action not in (TRANSFER, HACK):
            return
        try:
            data = unpack_transfer(ctx.payload)
        except AbiError as e:
            ctx.check(False, f"malformed transfer: {e}")
        if ctx.action == TRANSFER:
            ctx.require_recipient(data["to"])
        else:
            ctx.send_inline_action(Action(data["to"], TRANSFER, (ctx.receiver,), ctx.payload, "inline"))


class NotifierAgent(NativeContract):
    """Forwards eosio.token transfer notifications it receives to ``target``."""

    def __init__(self, target: int = 0):
        self.target = target

    def apply(self, chain: ChainState, ctx: ApplyContext) -> None:
        if ctx.code != EOSIO_TOKEN or ctx.action != TRANSFER or not self.target:
            return
        data = unpack_transfer(ctx.payload)
        if data["to"] == ctx.receiver:
            ctx.require_recipient(self.target)


class ChainState:
    def __init__(self, *, max_depth: int = DEFAULT_MAX_DEPTH, budget: int = DEFAULT_BUDGET,
                 verbose: bool = False):
        self.balances: dict[int, int] = {}
        self.contracts: dict[int, NativeContract | WasmContract] = {}
        self.accounts: set[int] = set()
        self.tables: dict = {}
        self.block_info = BlockInfo()
        self.action_depth = 0
        self.max_depth = max_depth
        self.budget = budget
        self.verbose = verbose
        self._steps = 0
        self.create_account(EOSIO_TOKEN)
        self.contracts[EOSIO_TOKEN] = EosioToken()

    # -- setup
    def create_account(self, account: int | str, balance: int = 0) -> int:
        if isinstance(account, str):
            account = name_to_u64(account)
        self.accounts.add(account)
        self.balances[account] = self.balances.get(account, 0) + balance
        return account

    def deploy(self, account: int | str, contract: NativeContract | WasmContract) -> int:
        if isinstance(account, str):
            account = name_to_u64(account)
        if account not in self.accounts:
            self.create_account(account)
        self.contracts[account] = contract
        return account

    def total_supply(self) -> int:
        return sum(self.balances.values())

    def snapshot(self) -> tuple:
        return (dict(self.balances), {k: dict(v) for k, v in self.tables.items()})

    def restore(self, snap: tuple) -> None:
        balances, tables = snap
        self.balances = dict(balances)
        self.tables.clear()
        self.tables.update({k: dict(v) for k, v in tables.items()})

    # -- dispatch
    def push_action(self, act: Action) -> TransactionResult:
        if act.account not in self.accounts:
            raise AccountError(f"unknown account {u64_to_name(act.account)}")
        sink = TraceSink(self.verbose)
        snap = self.snapshot()
        before = dict(self.balances)
        self._steps = 0
        self.action_depth = 0
        try:
            self._execute(act, 0, sink)
            result = TransactionResult(APPLIED)
        except _TxFailed as e:
            self.restore(snap)
            result = TransactionResult(e.status, e.message, e.kind)
        finally:
            self.action_depth = 0
        result.trace = sink.events
        result.steps = self._steps
        result.balances_before = before
        result.balances_after = dict(self.balances)
        keys = set(before) | set(self.balances)
        result.balance_deltas = {
            k: self.balances.get(k, 0) - before.get(k, 0)
            for k in sorted(keys)
            if self.balances.get(k, 0) != before.get(k, 0)
        }
        self.block_info.advance()
        return result

    def _execute(self, act: Action, depth: int, sink: TraceSink) -> None:
        if depth > self.max_depth:
            raise _TxFailed(ERROR, f"inline action depth exceeds {self.max_depth}", "DepthError")
        if act.account not in self.accounts:
            raise _TxFailed(ERROR, f"action to unknown account {u64_to_name(act.account)}", "AccountError")
        self.action_depth = max(self.action_depth, depth)
        recipients = [act.account]
        inline: list[Action] = []
        i = 0
        while i < len(recipients):
            self._apply(recipients[i], act, recipients, inline, sink)
            i += 1
        for child in inline:
            self._execute(child, depth + 1, sink)

    def _apply(self, receiver: int, act: Action, recipients: list[int], inline: list[Action],
               sink: TraceSink) -> None:
        contract = self.contracts.get(receiver)
        if contract is None:
            return
        sink.ctx = (receiver, act.account, act.name)
        sink.emit(tr.ACTION_BEGIN, depth=self.action_depth)
        ctx = ApplyContext(self, receiver, act, recipients, inline, sink)
        if isinstance(contract, WasmContract):
            remaining = self.budget - self._steps
            if remaining <= 0:
                sink.emit(tr.ACTION_END, status="error")
                raise _TxFailed(ERROR, "transaction instruction budget exhausted", "Budget")
            inst = Instance(contract.compiled, HostEnv(ctx).bindings(), sink)
            res = call_apply(inst, receiver, act.account, act.name, remaining)
            self._steps += res.steps
            status, message, kind = res.status, res.message, res.error_kind
        else:
            try:
                contract.apply(self, ctx)
                status, message, kind = "applied", "", ""
            except ContractAbort as e:
                status, message, kind = "aborted", e.message, ""
        sink.ctx = (receiver, act.account, act.name)
        sink.emit(tr.ACTION_END, status=status)
        if status == "aborted":
            raise _TxFailed(ABORTED, message)
        if status == "error":
            raise _TxFailed(ERROR, message, kind)


# ---------------------------------------------------------------------------
# genesis and attack scenarios


@dataclass
class Genesis:
    """Initial accounts and EOS balances (base units)."""

    balances: dict[str, int]

    @classmethod
    def default(cls, cut: str, sender: str = "sender", fake_agent: str = "fakeagent",
                notifier: str = "notifier") -> Genesis:
        return cls({
            sender: GENESIS_BALANCE,
            fake_agent: GENESIS_BALANCE,
            notifier: GENESIS_BALANCE,
            cut: GENESIS_BALANCE,
        })

    @classmethod
    def from_json(cls, text: str) -> Genesis:
        doc = json.loads(text)
        balances = {}
        for acct in doc["accounts"]:
            bal = acct.get("balance", 0)
            balances[acct["name"]] = Asset.parse(bal).amount if isinstance(bal, str) else int(bal)
        return cls(balances)

    def to_json(self) -> str:
        return json.dumps(
            {"accounts": [{"name": n, "balance": str(Asset.eos(b))} for n, b in self.balances.items()]},
            indent=2,
        )


@dataclass
class Roles:
    cut: int
    sender: int
    fake_agent: int
    notifier: int


def build_chain(contract: WasmContract | NativeContract | None, genesis: Genesis, roles: Roles, *,
                budget: int = DEFAULT_BUDGET, max_depth: int = DEFAULT_MAX_DEPTH,
                verbose: bool = False) -> ChainState:
    chain = ChainState(budget=budget, max_depth=max_depth, verbose=verbose)
    for n, bal in genesis.balances.items():
        chain.create_account(n, bal)
    for acct in (roles.cut, roles.sender, roles.fake_agent, roles.notifier):
        chain.create_account(acct)
    chain.deploy(roles.fake_agent, FakeTransferAgent())
    chain.deploy(roles.notifier, NotifierAgent(roles.cut))
    if contract is not None:
        chain.deploy(roles.cut, contract)
    return chain


def token_transfer(frm: int, to: int, amount: Asset, memo: str = "", provenance: str = "harness") -> Action:
    return Action(EOSIO_TOKEN, TRANSFER, (frm,), pack_transfer(frm, to, amount, memo), provenance)


def run_fake_transfer_attack(state: ChainState, variant: str, cut: int, amount: Asset, *,
                             agent: int, memo: str = "") -> TransactionResult:
    payload = pack_transfer(agent, cut, amount, memo)
    if variant == "inline":
        act = Action(agent, HACK, (agent,), payload, "fake-inline")
    elif variant == "forwarded":
        act = Action(agent, TRANSFER, (agent,), payload, "fake-forwarded")
    else:
        raise ValueError(f"unknown fake transfer variant {variant!r}")
    return state.push_action(act)


def run_forged_notification_attack(state: ChainState, cut: int, amount: Asset, *, sender: int,
                                   notifier: int, memo: str = "") -> TransactionResult:
    agent = state.contracts.get(notifier)
    if isinstance(agent, NotifierAgent):
        agent.target = cut
    return state.push_action(token_transfer(sender, notifier, amount, memo, "forged-notification"))


def run_genuine_transfer_probe(state: ChainState, cut: int, amount: Asset, *, sender: int,
                               memo: str = "") -> TransactionResult:
    return state.push_action(token_transfer(sender, cut, amount, memo, "probe"))
