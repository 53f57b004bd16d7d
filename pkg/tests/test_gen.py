import json
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eosfuzz.abi import Builtin, deserialize, name_to_u64, parse_abi
from eosfuzz.gen import (
    AGENT_KINDS,
    FAKE_FORWARDED,
    FAKE_INLINE,
    AbiCall,
    AgentInteraction,
    ConfigError,
    EmptyCampaignError,
    GenConfig,
    GenContext,
    case_rng,
    gen_test_case,
    gen_value,
    parse_mix,
    step_from_json,
)
from refs import FIXTURES

ALL_TYPES_ABI = parse_abi(json.dumps({
    "structs": [
        {"name": "inner", "base": "", "fields": [{"name": "who", "type": "name"}, {"name": "k", "type": "public_key"}]},
        {"name": "big", "base": "", "fields": [
            {"name": "a", "type": "uint8"}, {"name": "b", "type": "int64"}, {"name": "c", "type": "float64"},
            {"name": "d", "type": "float32"}, {"name": "e", "type": "bool"}, {"name": "f", "type": "string"},
            {"name": "g", "type": "asset"}, {"name": "h", "type": "symbol"}, {"name": "i", "type": "inner[]"},
            {"name": "j", "type": "uint32[]"}]},
    ],
    "actions": [{"name": "big", "type": "big"}, {"name": "noop", "type": "inner"}],
}))
EMPTY_ABI = parse_abi('{"structs": [], "actions": []}')
POOL = ["deposit", "hello", "only EOS is accepted"]


def fixture_abi(name):
    return parse_abi((FIXTURES / f"{name}.abi").read_text())


def test_same_inputs_same_case():
    cfg = GenConfig(seed=7)
    a = gen_test_case(ALL_TYPES_ABI, cfg, POOL, 3)
    b = gen_test_case(ALL_TYPES_ABI, cfg, list(reversed(POOL)), 3)
    assert a.to_json() == b.to_json()


def test_seed_and_index_change_output():
    base = gen_test_case(ALL_TYPES_ABI, GenConfig(seed=1), POOL, 0).to_json()
    assert any(gen_test_case(ALL_TYPES_ABI, GenConfig(seed=2), POOL, i).to_json() != base for i in range(3))
    assert gen_test_case(ALL_TYPES_ABI, GenConfig(seed=1), POOL, 1).to_json() != base


def test_case_rng_is_string_seeded():
    assert case_rng(3, 4).random() == case_rng(3, 4).random()
    assert case_rng(3, 4).random() != case_rng(4, 3).random()


def test_uint8_hits_both_extremes():
    ctx = GenContext(case_rng(0, 0), "victim1", POOL)
    seen = Counter(gen_value(Builtin("uint8"), ctx) for _ in range(300))
    assert seen[0] > 0 and seen[255] > 0
    assert all(0 <= v <= 255 for v in seen)


def test_numeric_weights_pin_the_minimum():
    ctx = GenContext(case_rng(0, 0), "victim1", POOL, GenConfig(numeric_weights=(1.0, 0.0, 0.0)))
    assert {gen_value(Builtin("int64"), ctx) for _ in range(50)} == {-(2**63)}


def test_floats_finite_unless_enabled():
    ctx = GenContext(case_rng(0, 0), "victim1", POOL)
    assert all(math.isfinite(gen_value(Builtin("float64"), ctx)) for _ in range(200))
    ctx = GenContext(case_rng(0, 0), "victim1", POOL, GenConfig(allow_nonfinite=True))
    assert any(not math.isfinite(gen_value(Builtin("float64"), ctx)) for _ in range(200))


def test_names_and_keys_target_the_contract():
    ctx = GenContext(case_rng(0, 0), "victim1", POOL)
    assert gen_value(Builtin("name"), ctx) == name_to_u64("victim1")
    key = gen_value(Builtin("public_key"), ctx)
    assert len(key) == 34 and key[0] == 0


def test_strings_come_from_pool():
    ctx = GenContext(case_rng(0, 0), "victim1", POOL)
    assert {gen_value(Builtin("string"), ctx) for _ in range(100)} <= set(POOL)
    assert gen_value(Builtin("string"), GenContext(case_rng(0, 0), "victim1", ())) == ""


def test_attack_only_mix():
    cfg = GenConfig(attack_mix={"fake": 1.0})
    for i in range(20):
        for s in gen_test_case(ALL_TYPES_ABI, cfg, POOL, i).steps:
            assert isinstance(s, AgentInteraction) and s.kind in (FAKE_INLINE, FAKE_FORWARDED)


def test_abi_only_mix_on_empty_abi_is_an_error():
    with pytest.raises(EmptyCampaignError):
        gen_test_case(EMPTY_ABI, GenConfig(attack_mix={"abi": 1.0}), POOL)


def test_empty_abi_falls_back_to_agents():
    case = gen_test_case(EMPTY_ABI, GenConfig(), POOL, 0)
    assert case.steps and all(isinstance(s, AgentInteraction) for s in case.steps)


def test_memos_prefer_candidates():
    cfg = GenConfig(attack_mix={"forged": 1.0})
    memos = {s.memo for i in range(10) for s in gen_test_case(EMPTY_ABI, cfg, POOL, i, memo_candidates=["bet"]).steps}
    assert memos == {"bet"}


@pytest.mark.parametrize("kw", [
    {"actions_per_campaign": 0},
    {"attack_mix": {"abi": 0.5}},
    {"attack_mix": {"abi": 1.5, "fake": -0.5}},
    {"attack_mix": {"bogus": 1.0}},
    {"max_case_len": 0},
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        GenConfig(**kw)


def test_parse_mix():
    assert parse_mix("0.4,0.25,0.25,0.1") == {"abi": 0.4, "fake": 0.25, "forged": 0.25, "probe": 0.1}
    for bad in ("1,0,0", "a,b,c,d"):
        with pytest.raises(ConfigError):
            parse_mix(bad)


def test_config_json_roundtrip():
    cfg = GenConfig(seed=9, numeric_weights=(1.0, 2.0, 3.0))
    assert GenConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 50), st.sampled_from(["fake_vuln", "vigor_like", "token_only", "diamond1_like"]))
def test_generated_steps_are_well_formed(seed, idx, fixture):
    abi = fixture_abi(fixture)
    cfg = GenConfig(seed=seed, max_case_len=8)
    case = gen_test_case(abi, cfg, POOL, idx)
    assert 1 <= len(case.steps) <= 8
    for step in case.steps:
        if isinstance(step, AbiCall):
            assert deserialize(step.data, abi.action_type(step.action)) == step.args
        else:
            assert step.kind in AGENT_KINDS
            assert 1 <= step.amount.amount <= cfg.interaction_amount_cap
        again = step_from_json(json.loads(json.dumps(step.to_json())))
        assert again.to_json() == step.to_json()
