"""Instrumentation events and the per-transaction trace sink."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Any, Iterable, Iterator

from .abi import u64_to_name

ACTION_BEGIN = "ActionBegin"
ACTION_END = "ActionEnd"
CALL_INDIRECT = "CallIndirect"
COMPARE = "Compare"
HOST_CALL = "HostCall"
TOKEN_TRANSFER = "TokenTransfer"
ASSERT_FIRED = "AssertFired"
BLOCK_INFO_READ = "BlockInfoRead"
INSTR = "Instr"

KINDS = (
    ACTION_BEGIN, ACTION_END, CALL_INDIRECT, COMPARE, HOST_CALL,
    TOKEN_TRANSFER, ASSERT_FIRED, BLOCK_INFO_READ, INSTR,
)

# name-valued payload fields, rendered as {"name", "u64"} in JSON
_NAME_FIELDS = ("from", "to")


@dataclass(slots=True)
class TraceEvent:
    seq: int
    receiver: int
    code: int
    action: int
    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    @property
    def ctx(self) -> tuple[int, int, int]:
        return (self.receiver, self.code, self.action)

    def to_json(self, tx: int | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if tx is not None:
            out["tx"] = tx
        out["seq"] = self.seq
        for key in ("receiver", "code", "action"):
            v = getattr(self, key)
            out[key] = {"name": u64_to_name(v), "u64": v}
        out["kind"] = self.kind
        for k, v in self.data.items():
            if k in _NAME_FIELDS and isinstance(v, int):
                out[k] = {"name": u64_to_name(v), "u64": v}
            else:
                out[k] = v
        return out

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> TraceEvent:
        data = {}
        for k, v in doc.items():
            if k in ("tx", "seq", "receiver", "code", "action", "kind"):
                continue
            if k in _NAME_FIELDS and isinstance(v, dict):
                v = v["u64"]
            data[k] = v
        return cls(
            doc["seq"], doc["receiver"]["u64"], doc["code"]["u64"], doc["action"]["u64"], doc["kind"], data
        )


class TraceSink:
    """Collects events for one transaction; seq numbers start at zero."""

    def __init__(self, verbose: bool = False):
        self.events: list[TraceEvent] = []
        self.verbose = verbose
        self.ctx: tuple[int, int, int] = (0, 0, 0)

    def emit(self, kind: str, **data: Any) -> TraceEvent:
        r, c, a = self.ctx
        ev = TraceEvent(len(self.events), r, c, a, kind, data)
        self.events.append(ev)
        return ev


def write_jsonl(fh: IO[str], transactions: Iterable[tuple[int, Iterable[TraceEvent]]]) -> int:
    n = 0
    for tx, events in transactions:
        for ev in events:
            fh.write(json.dumps(ev.to_json(tx), sort_keys=False))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(fh: IO[str]) -> Iterator[tuple[int | None, TraceEvent]]:
    for line in fh:
        line = line.strip()
        if line:
            doc = json.loads(line)
            yield doc.get("tx"), TraceEvent.from_json(doc)
