import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eosfuzz import trace as tr
from eosfuzz.abi import Asset, name_to_u64, pack_transfer
from eosfuzz.chain import (
    ABORTED,
    APPLIED,
    EOSIO_TOKEN,
    ERROR,
    TRANSFER,
    AccountError,
    Action,
    ChainState,
    Genesis,
    NativeContract,
    Roles,
    WasmContract,
    build_chain,
    run_fake_transfer_attack,
    run_forged_notification_attack,
    run_genuine_transfer_probe,
    token_transfer,
)
from eosfuzz.wasm import parse_wasm
from refs import FIXTURES

N = name_to_u64
CUT, SENDER, AGENT, NOTIFIER = N("victim1"), N("sender"), N("fakeagent"), N("notifier")
ROLES = Roles(CUT, SENDER, AGENT, NOTIFIER)


class Recorder(NativeContract):
    def __init__(self):
        self.seen = []

    def apply(self, chain, ctx):
        self.seen.append((ctx.receiver, ctx.code, ctx.action, ctx.payload))


def chain_with(contract=None):
    return build_chain(contract, Genesis.default("victim1"), ROLES)


def fixture_contract(name):
    return WasmContract(parse_wasm((FIXTURES / f"{name}.wasm").read_bytes()))


def test_five_eos_transfer():
    chain = chain_with()
    res = chain.push_action(token_transfer(SENDER, CUT, Asset.eos(50000), "hello"))
    assert res.status == APPLIED
    assert res.balance_deltas == {SENDER: -50000, CUT: 50000}
    transfers = [e for e in res.trace if e.kind == tr.TOKEN_TRANSFER]
    assert [(e.data["from"], e.data["to"], e.data["amount"]) for e in transfers] == [(SENDER, CUT, 50000)]
    assert chain.total_supply() == 4 * 1000_0000


def test_notification_order_and_contexts():
    rec = Recorder()
    chain = chain_with(rec)
    chain.push_action(token_transfer(SENDER, CUT, Asset.eos(1)))
    assert [(r, c, a) for r, c, a, _ in rec.seen] == [(CUT, EOSIO_TOKEN, TRANSFER)]
    begins = [e.receiver for e in chain.push_action(token_transfer(SENDER, CUT, Asset.eos(1))).trace
              if e.kind == tr.ACTION_BEGIN]
    # token first, then the carbon copies; sender has no code so it is skipped
    assert begins == [EOSIO_TOKEN, CUT]


@pytest.mark.parametrize("amount,memo,why", [
    (0, "", "must transfer positive quantity"),
    (2000_0000, "", "overdrawn balance"),
    (1, "x" * 257, "memo has more than 256 bytes"),
])
def test_token_rejections_roll_back(amount, memo, why):
    chain = chain_with()
    before = dict(chain.balances)
    res = chain.push_action(token_transfer(SENDER, CUT, Asset.eos(amount), memo))
    assert res.status == ABORTED and res.message == why
    assert chain.balances == before and res.balance_deltas == {}


def test_transfer_needs_sender_authority():
    chain = chain_with()
    act = Action(EOSIO_TOKEN, TRANSFER, (CUT,), pack_transfer(SENDER, CUT, Asset.eos(1), ""))
    assert chain.push_action(act).status == ABORTED


def test_unknown_top_level_account():
    with pytest.raises(AccountError):
        chain_with().push_action(Action(N("nobody"), TRANSFER, (), b""))


class InlineTo(NativeContract):
    def __init__(self, target):
        self.target = target

    def apply(self, chain, ctx):
        ctx.send_inline_action(Action(self.target, N("ping"), (ctx.receiver,), b""))


def test_inline_to_unknown_account_errors():
    chain = chain_with(InlineTo(N("nobody")))
    res = chain.push_action(Action(CUT, N("ping"), (), b""))
    assert (res.status, res.error_kind) == (ERROR, "AccountError")


def test_depth_limit():
    chain = ChainState(max_depth=4)
    chain.deploy("loop", InlineTo(N("loop")))
    res = chain.push_action(Action(N("loop"), N("ping"), (), b""))
    assert (res.status, res.error_kind) == (ERROR, "DepthError")
    depths = [e.data["depth"] for e in res.trace if e.kind == tr.ACTION_BEGIN]
    assert max(depths) == 4


class Both(NativeContract):
    """Notifies ``peer`` and sends an inline to ``peer``; records order via a shared log."""

    def __init__(self, peer, log):
        self.peer, self.log = peer, log

    def apply(self, chain, ctx):
        self.log.append(("me", ctx.receiver, ctx.code))
        if ctx.code == ctx.receiver and ctx.action == N("go"):
            ctx.send_inline_action(Action(ctx.receiver, N("later"), (ctx.receiver,), b""))
            ctx.require_recipient(self.peer)


def test_notifications_run_before_inline_actions():
    log = []
    chain = ChainState()
    chain.deploy("alice", Both(N("bob"), log))
    chain.deploy("bob", Recorder())
    bob = chain.contracts[N("bob")]
    bob.apply = lambda ch, ctx: log.append(("bob", ctx.receiver, ctx.code))
    chain.push_action(Action(N("alice"), N("go"), (), b""))
    assert [x[0] for x in log] == ["me", "bob", "me"]


def test_fake_inline_agent_fidelity():
    rec = Recorder()
    chain = chain_with(rec)
    res = run_fake_transfer_attack(chain, "inline", CUT, Asset.eos(10), agent=AGENT, memo="m")
    assert res.status == APPLIED and res.balance_deltas == {}
    assert rec.seen == [(CUT, CUT, TRANSFER, pack_transfer(AGENT, CUT, Asset.eos(10), "m"))]


def test_fake_forwarded_agent_fidelity():
    rec = Recorder()
    chain = chain_with(rec)
    run_fake_transfer_attack(chain, "forwarded", CUT, Asset.eos(10), agent=AGENT)
    assert [(r, c, a) for r, c, a, _ in rec.seen] == [(CUT, AGENT, TRANSFER)]


def test_forged_notification_fidelity():
    rec = Recorder()
    chain = chain_with(rec)
    res = run_forged_notification_attack(chain, CUT, Asset.eos(10), sender=SENDER, notifier=NOTIFIER)
    assert res.balance_deltas == {SENDER: -10, NOTIFIER: 10}
    (r, c, a, payload), = rec.seen
    assert (r, c, a) == (CUT, EOSIO_TOKEN, TRANSFER)
    assert payload == pack_transfer(SENDER, NOTIFIER, Asset.eos(10), "")


def test_probe_reaches_handler():
    rec = Recorder()
    chain = chain_with(rec)
    res = run_genuine_transfer_probe(chain, CUT, Asset.eos(10), sender=SENDER)
    assert res.balance_deltas == {SENDER: -10, CUT: 10}
    assert [(r, c) for r, c, _, _ in rec.seen] == [(CUT, EOSIO_TOKEN)]


def test_block_info_advances_per_transaction():
    chain = chain_with()
    first = chain.block_info.tapos_block_num
    chain.push_action(token_transfer(SENDER, CUT, Asset.eos(1)))
    chain.push_action(token_transfer(SENDER, CUT, Asset.eos(0)))
    assert chain.block_info.tapos_block_num == first + 2


def test_genesis_json_roundtrip():
    g = Genesis.default("victim1")
    assert Genesis.from_json(g.to_json()) == g
    assert Genesis.from_json('{"accounts": [{"name": "x", "balance": "2.5000 EOS"}]}').balances == {"x": 25000}


class WriteThenAbort(NativeContract):
    def apply(self, chain, ctx):
        if ctx.code != ctx.receiver:
            return
        ctx.table(ctx.receiver, ctx.receiver, N("rows"))[0] = b"x"
        ctx.send_inline_action(token_transfer(ctx.receiver, SENDER, Asset.eos(5)))
        if ctx.action == N("fail"):
            ctx.check(False, "boom")


def test_abort_rolls_back_tables_and_balances():
    chain = chain_with(WriteThenAbort())
    snap = chain.snapshot()
    res = chain.push_action(Action(CUT, N("fail"), (), b""))
    assert (res.status, res.message) == (ABORTED, "boom")
    assert chain.snapshot() == snap
    res = chain.push_action(Action(CUT, N("ok"), (), b""))
    assert res.status == APPLIED and res.balance_deltas == {CUT: -5, SENDER: 5}
    assert chain.tables[(CUT, CUT, N("rows"))] == {0: b"x"}


def test_bet_row_written_by_wasm_contract():
    chain = chain_with(fixture_contract("diamond1_like"))
    res = chain.push_action(token_transfer(SENDER, CUT, Asset.eos(1), "bet"))
    assert res.status == APPLIED
    rows = [t for t in chain.tables.values() if t]
    assert rows and SENDER.to_bytes(8, "little") in rows[0].values()


def test_packed_action_roundtrip():
    act = Action(N("eosio.token"), TRANSFER, (N("victim1"),), b"\x01\x02", "inline")
    assert Action.unpack(act.pack()) == act


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["sender", "victim1", "notifier", "fakeagent"]),
                          st.sampled_from(["sender", "victim1", "notifier", "fakeagent"]),
                          st.integers(-5, 3000_0000)), max_size=12))
def test_supply_conserved_and_nonnegative(transfers):
    chain = chain_with(fixture_contract("notif_safe"))
    supply = chain.total_supply()
    for frm, to, amt in transfers:
        res = chain.push_action(token_transfer(N(frm), N(to), Asset.eos(amt)))
        assert sum(res.balance_deltas.values()) == 0
        assert chain.total_supply() == supply
        assert all(v >= 0 for v in chain.balances.values())
