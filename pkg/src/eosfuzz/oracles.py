"""Vulnerability oracles evaluated over a whole campaign's transactions.

Counting is attributed to execution context: a CallIndirect counts only when
it ran with ``receiver == cut``. eosio.token and the attack agents are native
here, so the only indirect calls in a trace are the contract's own
dispatcher jumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import trace as tr
from .chain import APPLIED, TransactionResult
from .gen import (
    FAKE_FORWARDED,
    FAKE_INLINE,
    FORGED_NOTIFICATION,
    GENUINE_PROBE,
    AbiCall,
    AgentInteraction,
    Step,
)
from .wasm.interp import M64

FAKE_EOS_TRANSFER = "FakeEOSTransfer"
FORGED_TRANSFER_NOTIFICATION = "ForgedTransferNotification"
BLOCK_INFO_DEPENDENCY = "BlockInfoDependency"
ASSET_LOSS = "AssetLoss"
VULN_TYPES = (FAKE_EOS_TRANSFER, FORGED_TRANSFER_NOTIFICATION, BLOCK_INFO_DEPENDENCY, ASSET_LOSS)

_I64_COMPARES = frozenset(("i64.eq", "i64.ne"))
_FAKE_KINDS = (FAKE_INLINE, FAKE_FORWARDED)


class MissingScenarioError(Exception):
    """The campaign lacks the interactions a detector needs to say anything."""


@dataclass
class TxRecord:
    case: int
    step: Step
    result: TransactionResult

    @property
    def kind(self) -> str:
        return self.step.kind if isinstance(self.step, AgentInteraction) else "AbiCall"


@dataclass
class CampaignTrace:
    transactions: list[TxRecord]
    cut: int
    notifier: int
    fake_agent: int
    sender: int

    def of_kind(self, *kinds: str):
        for i, rec in enumerate(self.transactions):
            if rec.kind in kinds:
                yield i, rec

    def harness_accounts(self) -> tuple[int, ...]:
        return (self.sender, self.fake_agent, self.notifier)

    def case_steps(self, case: int, upto: int | None = None) -> list[Step]:
        """Steps of one test case, optionally stopping after transaction index ``upto``."""
        return [
            rec.step for i, rec in enumerate(self.transactions)
            if rec.case == case and (upto is None or i <= upto)
        ]


@dataclass
class Evidence:
    tx: int
    seq_lo: int
    seq_hi: int
    what: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"tx": self.tx, "seq": [self.seq_lo, self.seq_hi], "what": self.what}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> Evidence:
        return cls(doc["tx"], doc["seq"][0], doc["seq"][1], doc.get("what", ""))


@dataclass
class Finding:
    vuln_type: str
    evidence: list[Evidence]
    # each inner list is one test case, replayed from genesis
    replay: list[list[Step]] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "vuln_type": self.vuln_type,
            "evidence": [e.to_json() for e in self.evidence],
            "details": self.details,
            "replay": {"cases": [[s.to_json() for s in case] for case in self.replay]},
        }


# ---------------------------------------------------------------------------
# trace predicates


def cut_call_indirects(result: TransactionResult, cut: int, code: int | None = None) -> list[tr.TraceEvent]:
    return [
        e for e in result.trace
        if e.kind == tr.CALL_INDIRECT and e.receiver == cut and (code is None or e.code == code)
    ]


def is_recipient_check(ev: tr.TraceEvent, cut: int, notifier: int) -> bool:
    if ev.kind != tr.COMPARE or ev.receiver != cut or ev.data.get("opcode") not in _I64_COMPARES:
        return False
    pair = {ev.data["lhs"] & M64, ev.data["rhs"] & M64}
    return pair == {notifier, cut}


def reached_handler(result: TransactionResult, cut: int) -> bool:
    return result.status == APPLIED and bool(cut_call_indirects(result, cut))


def replay_cases(trace: CampaignTrace, *tx_indices: int) -> list[list[Step]]:
    """Test-case prefixes covering the given transactions, in campaign order."""
    last: dict[int, int] = {}
    for i in tx_indices:
        case = trace.transactions[i].case
        last[case] = max(last.get(case, i), i)
    return [trace.case_steps(case, last[case]) for case in sorted(last)]


def _span(tx: int, events: list[tr.TraceEvent], what: str) -> Evidence:
    return Evidence(tx, events[0].seq, events[-1].seq, what)


# ---------------------------------------------------------------------------
# detectors


def detect_fake_eos_transfer(trace: CampaignTrace, require_both_variants: bool = True) -> Finding | None:
    probes = list(trace.of_kind(GENUINE_PROBE))
    if not probes:
        raise MissingScenarioError("no genuine transfer probe ran")
    variants = _FAKE_KINDS if require_both_variants else ()
    for variant in variants:
        if not any(True for _ in trace.of_kind(variant)):
            raise MissingScenarioError(f"no {variant} attack ran")
    if not any(True for _ in trace.of_kind(*_FAKE_KINDS)):
        raise MissingScenarioError("no fake transfer attack ran")
    can_receive = None
    for i, rec in probes:
        hits = cut_call_indirects(rec.result, trace.cut)
        if hits:
            can_receive = (i, rec, hits)
            break
    if can_receive is None:
        return None
    for i, rec in trace.of_kind(*_FAKE_KINDS):
        if rec.result.status != APPLIED:
            continue
        hits = cut_call_indirects(rec.result, trace.cut)
        if hits:
            pi, _, phits = can_receive
            return Finding(
                FAKE_EOS_TRANSFER,
                [_span(pi, phits, "CanReceiveEOS"), _span(i, hits, "TransferCalled")],
                replay_cases(trace, pi, i),
                {"attack": rec.kind},
            )
    return None


def forged_handler_start(result: TransactionResult, cut: int, token: int) -> tr.TraceEvent | None:
    hits = cut_call_indirects(result, cut, token)
    return hits[0] if hits else None


def detect_forged_notification(trace: CampaignTrace, token: int) -> Finding | None:
    attacks = list(trace.of_kind(FORGED_NOTIFICATION))
    if not attacks:
        raise MissingScenarioError("no forged notification attack ran")
    called = None
    for i, rec in attacks:
        start = forged_handler_start(rec.result, trace.cut, token)
        if start is None:
            continue
        for ev in rec.result.trace[start.seq + 1:]:
            if is_recipient_check(ev, trace.cut, trace.notifier):
                return None
        if called is None:
            called = (i, rec, start)
    if called is None:
        return None
    i, rec, start = called
    return Finding(
        FORGED_TRANSFER_NOTIFICATION,
        [Evidence(i, start.seq, rec.result.trace[-1].seq, "TransferCalled")],
        [trace.case_steps(rec.case, i)],
        {"forged_attacks": len(attacks)},
    )


def detect_block_info_dependency(trace: CampaignTrace, strict: bool = False) -> Finding | None:
    reads: list[tuple[int, tr.TraceEvent]] = []
    transfers: list[tuple[int, tr.TraceEvent]] = []
    for i, rec in enumerate(trace.transactions):
        r = [e for e in rec.result.trace if e.kind == tr.BLOCK_INFO_READ]
        t = [e for e in rec.result.trace if e.kind == tr.TOKEN_TRANSFER]
        if strict:
            if r and t:
                return Finding(
                    BLOCK_INFO_DEPENDENCY,
                    [Evidence(i, r[0].seq, r[0].seq, "BlockInfoRead"), Evidence(i, t[0].seq, t[0].seq, "TokenTransfer")],
                    [trace.case_steps(rec.case, i)],
                    {"strict": True},
                )
            continue
        if r and not reads:
            reads.append((i, r[0]))
        if t and not transfers:
            transfers.append((i, t[0]))
        if reads and transfers:
            (ri, rev), (ti, tev) = reads[0], transfers[0]
            return Finding(
                BLOCK_INFO_DEPENDENCY,
                [Evidence(ri, rev.seq, rev.seq, "BlockInfoRead"), Evidence(ti, tev.seq, tev.seq, "TokenTransfer")],
                replay_cases(trace, ri, ti),
                {"strict": False},
            )
    return None


def detect_asset_loss(trace: CampaignTrace, initial_cut_balance: int | None = None) -> Finding | None:
    """CUT loses EOS to a harness account in an attack step.

    Attack steps are agent attacks, plus ABI calls made later in a test case
    where an attack already reached the contract's handlers (the payout of a
    forged bet typically happens in a separate action). Probes never count.
    """
    harness = trace.harness_accounts()
    reached_case: set[int] = set()
    for i, rec in enumerate(trace.transactions):
        res = rec.result
        is_attack = rec.kind in (FAKE_INLINE, FAKE_FORWARDED, FORGED_NOTIFICATION)
        eligible = is_attack or (isinstance(rec.step, AbiCall) and rec.case in reached_case)
        if eligible and res.status == APPLIED:
            before = res.balances_before.get(trace.cut, 0)
            after = res.balances_after.get(trace.cut, 0)
            gainers = [a for a in harness if res.balance_deltas.get(a, 0) > 0]
            if after < before and gainers:
                outflow = [
                    e for e in res.trace
                    if e.kind == tr.TOKEN_TRANSFER and e.data.get("from") == trace.cut
                ]
                ev = _span(i, outflow, "CUT outflow") if outflow else Evidence(i, 0, len(res.trace) - 1, "CUT outflow")
                details = {
                    "cut_delta": after - before,
                    "gainers": {str(a): res.balance_deltas[a] for a in gainers},
                    "step": rec.kind,
                }
                if initial_cut_balance is not None:
                    details["initial_cut_balance"] = initial_cut_balance
                return Finding(ASSET_LOSS, [ev], [trace.case_steps(rec.case, i)], details)
        if is_attack and reached_handler(res, trace.cut):
            reached_case.add(rec.case)
    return None


# evidence re-checks used by tests and replay


def evidence_holds(finding: Finding, trace: CampaignTrace) -> bool:
    cut, notifier = trace.cut, trace.notifier

    def events(ev: Evidence, rec: TxRecord) -> list[tr.TraceEvent]:
        return [e for e in rec.result.trace if ev.seq_lo <= e.seq <= ev.seq_hi]

    for ev in finding.evidence:
        if not 0 <= ev.tx < len(trace.transactions):
            return False
        rec = trace.transactions[ev.tx]
        evs = events(ev, rec)
        if not evs:
            return False
        if finding.vuln_type == FAKE_EOS_TRANSFER:
            ok = evs[0].kind == tr.CALL_INDIRECT and evs[0].receiver == cut
            if ev.what == "CanReceiveEOS":
                ok = ok and rec.kind == GENUINE_PROBE
            else:
                ok = ok and rec.kind in _FAKE_KINDS and rec.result.status == APPLIED
        elif finding.vuln_type == FORGED_TRANSFER_NOTIFICATION:
            ok = (
                rec.kind == FORGED_NOTIFICATION
                and evs[0].kind == tr.CALL_INDIRECT and evs[0].receiver == cut
                and not any(is_recipient_check(e, cut, notifier) for e in evs[1:])
            )
        elif finding.vuln_type == BLOCK_INFO_DEPENDENCY:
            want = tr.BLOCK_INFO_READ if ev.what == "BlockInfoRead" else tr.TOKEN_TRANSFER
            ok = evs[0].kind == want
        elif finding.vuln_type == ASSET_LOSS:
            res = rec.result
            ok = res.balances_after.get(cut, 0) < res.balances_before.get(cut, 0)
        else:
            ok = False
        if not ok:
            return False
    return True


def run_detectors(trace: CampaignTrace, token: int, *, strict_blockinfo: bool = False,
                  initial_cut_balance: int | None = None) -> tuple[list[Finding], dict[str, str]]:
    """All detectors; returns findings and the detectors skipped for missing scenarios."""
    findings: list[Finding] = []
    skipped: dict[str, str] = {}
    runs = [
        (FAKE_EOS_TRANSFER, lambda: detect_fake_eos_transfer(trace)),
        (FORGED_TRANSFER_NOTIFICATION, lambda: detect_forged_notification(trace, token)),
        (BLOCK_INFO_DEPENDENCY, lambda: detect_block_info_dependency(trace, strict_blockinfo)),
        (ASSET_LOSS, lambda: detect_asset_loss(trace, initial_cut_balance)),
    ]
    for name, fn in runs:
        try:
            f = fn()
        except MissingScenarioError as e:
            skipped[name] = str(e)
            continue
        if f is not None:
            findings.append(f)
    return findings, skipped
