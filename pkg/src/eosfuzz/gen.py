"""Seeded input generation: typed ABI values and mixed test cases."""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Any

from .abi import (
    EOS_SYMBOL,
    FLOAT_TYPES,
    INT_RANGES,
    PUBLIC_KEY_SIZE,
    AbiInterface,
    ArrayOf,
    Asset,
    Builtin,
    StructType,
    TypeDesc,
    TypeResolutionError,
    float32_round,
    name_to_u64,
    serialize,
)

ABI_CALL = "abi"
FAKE = "fake"
FORGED = "forged"
PROBE = "probe"
MIX_KEYS = (ABI_CALL, FAKE, FORGED, PROBE)

FAKE_INLINE = "FakeInline"
FAKE_FORWARDED = "FakeForwarded"
FORGED_NOTIFICATION = "ForgedNotification"
GENUINE_PROBE = "GenuineTransferProbe"
AGENT_KINDS = (FAKE_INLINE, FAKE_FORWARDED, FORGED_NOTIFICATION, GENUINE_PROBE)

DEFAULT_MIX = {ABI_CALL: 0.4, FAKE: 0.25, FORGED: 0.25, PROBE: 0.1}


class GenError(Exception):
    pass


class EmptyCampaignError(GenError):
    """Nothing can be drawn: no ABI actions and no weight on agent steps."""


class ConfigError(GenError, ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    actions_per_campaign: int = 1000
    attack_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    max_array_len: int = 4
    max_string_len: int = 256
    max_case_len: int = 16
    asset_cap: int = 100_000_000
    # agent stakes stay small so a funded sender never runs dry within a test case
    interaction_amount_cap: int = 100_000
    allow_nonfinite: bool = False
    numeric_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.actions_per_campaign < 1:
            raise ConfigError("actions_per_campaign must be at least 1")
        if set(self.attack_mix) - set(MIX_KEYS):
            raise ConfigError(f"unknown attack_mix keys: {sorted(set(self.attack_mix) - set(MIX_KEYS))}")
        weights = [self.attack_mix.get(k, 0.0) for k in MIX_KEYS]
        if any(w < 0 or math.isnan(w) for w in weights):
            raise ConfigError("attack_mix entries must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigError(f"attack_mix must sum to 1, got {sum(weights)!r}")
        if self.max_case_len < 1 or self.max_array_len < 0 or self.max_string_len < 0:
            raise ConfigError("length bounds must be nonnegative (max_case_len >= 1)")
        if self.interaction_amount_cap < 1 or self.asset_cap < 0:
            raise ConfigError("amount caps out of range")

    def mix_weights(self) -> list[float]:
        return [self.attack_mix.get(k, 0.0) for k in MIX_KEYS]

    def to_json(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "actions_per_campaign": self.actions_per_campaign,
            "attack_mix": {k: self.attack_mix.get(k, 0.0) for k in MIX_KEYS},
            "max_array_len": self.max_array_len,
            "max_string_len": self.max_string_len,
            "max_case_len": self.max_case_len,
            "asset_cap": self.asset_cap,
            "interaction_amount_cap": self.interaction_amount_cap,
            "allow_nonfinite": self.allow_nonfinite,
            "numeric_weights": list(self.numeric_weights),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> GenConfig:
        doc = dict(doc)
        if "numeric_weights" in doc:
            doc["numeric_weights"] = tuple(doc["numeric_weights"])
        return cls(**doc)


def parse_mix(text: str) -> dict[str, float]:
    """``"a,b,c,d"`` in abi/fake/forged/probe order."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != len(MIX_KEYS):
        raise ConfigError(f"--mix needs {len(MIX_KEYS)} comma-separated weights ({'/'.join(MIX_KEYS)})")
    try:
        return dict(zip(MIX_KEYS, (float(p) for p in parts)))
    except ValueError as e:
        raise ConfigError(f"bad --mix value: {e}") from None


# ---------------------------------------------------------------------------
# steps


@dataclass(frozen=True)
class AbiCall:
    action: str
    args: Any
    data: bytes

    def to_json(self) -> dict[str, Any]:
        return {"type": "abi", "action": self.action, "args": jsonable(self.args), "data": self.data.hex()}


@dataclass(frozen=True)
class AgentInteraction:
    kind: str
    amount: Asset
    memo: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"type": "agent", "kind": self.kind, "amount": str(self.amount), "memo": self.memo}


Step = AbiCall | AgentInteraction


def step_from_json(doc: dict[str, Any]) -> Step:
    if doc["type"] == "abi":
        return AbiCall(doc["action"], doc.get("args"), bytes.fromhex(doc["data"]))
    if doc["type"] == "agent":
        if doc["kind"] not in AGENT_KINDS:
            raise GenError(f"unknown agent interaction {doc['kind']!r}")
        return AgentInteraction(doc["kind"], Asset.parse(doc["amount"]), doc.get("memo", ""))
    raise GenError(f"unknown step type {doc['type']!r}")


@dataclass
class TestCase:
    steps: list[Step]

    __test__ = False  # not a pytest class

    def to_json(self) -> list[dict[str, Any]]:
        return [s.to_json() for s in self.steps]


def jsonable(value: Any) -> Any:
    """Render a generated value for reports (lossy for bytes and non-finite floats)."""
    if isinstance(value, Asset):
        return str(value)
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# values

_FLOAT_MAX = {"float32": struct.unpack("<f", b"\xff\xff\x7f\x7f")[0], "float64": 1.7976931348623157e308}


class GenContext:
    def __init__(self, rng: random.Random, cut: str, pool: set[str] | list[str] = (),
                 cfg: GenConfig | None = None, memo_candidates: set[str] | list[str] = ()):
        self.rng = rng
        self.cut = cut
        self.cut_u64 = name_to_u64(cut)
        self.pool = sorted(pool)
        self.memos = sorted(memo_candidates)
        self.cfg = cfg or GenConfig()
        self.public_key = b"\x00" + hashlib.sha256(cut.encode()).digest() + b"\x00" * (PUBLIC_KEY_SIZE - 33)

    def three_way(self) -> int:
        return self.rng.choices((0, 1, 2), weights=self.cfg.numeric_weights)[0]

    def pick_string(self) -> str:
        if not self.pool:
            return ""
        return self.rng.choice(self.pool)[: self.cfg.max_string_len]

    def pick_memo(self) -> str:
        if self.memos:
            return self.rng.choice(self.memos)[: self.cfg.max_string_len]
        return self.pick_string()


def gen_value(typ: TypeDesc, ctx: GenContext) -> Any:
    rng = ctx.rng
    if isinstance(typ, Builtin):
        n = typ.name
        if n in INT_RANGES:
            lo, hi = INT_RANGES[n]
            return (lo, hi, rng.randint(lo, hi))[ctx.three_way()]
        if n in FLOAT_TYPES:
            top = _FLOAT_MAX[n]
            if ctx.cfg.allow_nonfinite and rng.random() < 0.25:
                return rng.choice((math.inf, -math.inf, math.nan))
            v = (-top, top, (2.0 * rng.random() - 1.0) * top)[ctx.three_way()]
            return float32_round(v) if n == "float32" else v
        if n == "bool":
            return rng.random() < 0.5
        if n == "string":
            return ctx.pick_string()
        if n == "name":
            return ctx.cut_u64
        if n == "public_key":
            return ctx.public_key
        if n == "asset":
            return Asset(rng.randint(0, ctx.cfg.asset_cap), EOS_SYMBOL)
        if n == "symbol":
            return EOS_SYMBOL
        raise TypeResolutionError(f"no generator for builtin {n!r}")
    if isinstance(typ, ArrayOf):
        return [gen_value(typ.elem, ctx) for _ in range(rng.randint(0, ctx.cfg.max_array_len))]
    if isinstance(typ, StructType):
        return {fname: gen_value(ftype, ctx) for fname, ftype in typ.fields}
    raise TypeResolutionError(f"unknown type descriptor {typ!r}")


def gen_amount(ctx: GenContext) -> Asset:
    return Asset(ctx.rng.randint(1, ctx.cfg.interaction_amount_cap), EOS_SYMBOL)


# ---------------------------------------------------------------------------
# test cases


def case_rng(seed: int, case_index: int) -> random.Random:
    return random.Random(f"eosfuzz:{seed}:{case_index}")


def gen_test_case(abi: AbiInterface, cfg: GenConfig, pool: set[str] | list[str] = (), case_index: int = 0, *,
                  cut: str = "victim1", memo_candidates: set[str] | list[str] = ()) -> TestCase:
    """One test case, a pure function of its arguments."""
    actions = abi.action_names()
    weights = cfg.mix_weights()
    if not actions:
        weights[0] = 0.0
    if sum(weights) <= 0:
        raise EmptyCampaignError("ABI has no actions and the attack mix gives no weight to agent steps")
    ctx = GenContext(case_rng(cfg.seed, case_index), cut, pool, cfg, memo_candidates)
    rng = ctx.rng
    steps: list[Step] = []
    for _ in range(rng.randint(1, cfg.max_case_len)):
        kind = rng.choices(MIX_KEYS, weights=weights)[0]
        if kind == ABI_CALL:
            action = rng.choice(actions)
            typ = abi.action_type(action)
            args = gen_value(typ, ctx)
            steps.append(AbiCall(action, args, serialize(args, typ)))
        else:
            if kind == FAKE:
                agent_kind = rng.choice((FAKE_INLINE, FAKE_FORWARDED))
            elif kind == FORGED:
                agent_kind = FORGED_NOTIFICATION
            else:
                agent_kind = GENUINE_PROBE
            steps.append(AgentInteraction(agent_kind, gen_amount(ctx), ctx.pick_memo()))
    return TestCase(steps)
