"""Acceptance suite: one PASS/FAIL line per criterion, printed live under ``pytest -v``."""

import math
import random
import time
from pathlib import Path

import pytest

from eosfuzz.abi import (
    TRANSFER_TYPE,
    Asset,
    deserialize,
    name_to_u64,
    parse_abi,
    serialize,
    u64_to_name,
)
from eosfuzz.gen import GenConfig, GenContext, case_rng, gen_value
from eosfuzz.harness import (
    CampaignConfig,
    dump_report,
    execute_campaign,
    flatten_findings,
    load_expectations,
    replay,
    run_campaign,
    run_corpus,
)
from eosfuzz.static import get_memo_strings, parse_wasm
from refs import BEHAVIORAL, CHARMAP, FIXTURES, MICRO, pack_name, transfer_bytes, wat_functions, wat_memo_strings
from test_gen import ALL_TYPES_ABI
from test_wasm import run as run_wasm

EXPECT = load_expectations(FIXTURES)
SEEDS = range(1, 21)
SWEEP_LIMIT_SEC = 600
MIN_ACTIONS_PER_SEC = 11


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def campaign_cfg(name, seed, **kw):
    return CampaignConfig(FIXTURES / f"{name}.wasm", FIXTURES / f"{name}.abi",
                          gen=GenConfig(seed=seed), expected=EXPECT[name], **kw)


@pytest.fixture(scope="module")
def sweep():
    """Every behavioral fixture under every seed, default 1000-action budget."""
    started = time.perf_counter()
    sections = {(n, s): execute_campaign(campaign_cfg(n, s)).section for n in BEHAVIORAL for s in SEEDS}
    sections.update({(n, 0): execute_campaign(campaign_cfg(n, 0)).section for n in MICRO})
    return sections, time.perf_counter() - started


@pytest.fixture(scope="module")
def corpus_runs():
    base = CampaignConfig(Path(), Path())
    return run_corpus(FIXTURES, base), run_corpus(FIXTURES, base)


def test_criterion_1_fixture_oracles(sweep, capsys):
    sections, elapsed = sweep
    bad = [
        f"{n}@{s}: got {sec['vuln_types']} want {sorted(EXPECT[n]['expected'])}"
        for (n, s), sec in sections.items() if n in BEHAVIORAL and not sec["expected"]["match"]
    ]
    vigor = all("FakeEOSTransfer" in sections[("vigor_like", s)]["vuln_types"] for s in SEEDS)
    lottery = all("BlockInfoDependency" not in sections[("lottery10_like", s)]["vuln_types"] for s in SEEDS)
    ok = not bad and vigor and lottery and elapsed < SWEEP_LIMIT_SEC
    report(capsys, 1, ok, f"{len(BEHAVIORAL)} fixtures x {len(SEEDS)} seeds, {len(bad)} mismatches, "
                          f"vigor_like flagged={vigor}, lottery10_like unflagged={lottery}, {elapsed:.1f}s")
    assert not bad, bad[:5]
    assert vigor and lottery
    assert elapsed < SWEEP_LIMIT_SEC


def test_criterion_2_memo_equivalence(capsys):
    checked, diffs = [], []
    for n in BEHAVIORAL + MICRO:
        wat = (FIXTURES / f"{n}.wat").read_text()
        if not any(tuple(sig) == ("i32", "i64", "i64", "i32", "i32") for _, sig, _ in wat_functions(wat)):
            continue
        checked.append(n)
        got = get_memo_strings(parse_wasm((FIXTURES / f"{n}.wasm").read_bytes()))
        if got != wat_memo_strings(wat):
            diffs.append(n)
    report(capsys, 2, bool(checked) and not diffs, f"{len(checked)} fixtures compared, {len(diffs)} differ {diffs}")
    assert checked and not diffs


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float):
        return a == b or (math.isnan(a) and math.isnan(b))
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


def test_criterion_3_serialization(capsys):
    abis = [ALL_TYPES_ABI] + [parse_abi((FIXTURES / f"{n}.abi").read_text()) for n in BEHAVIORAL]
    types = [abi.action_type(a) for abi in abis for a in abi.action_names()]
    cfg = GenConfig(allow_nonfinite=True)
    failures = 0
    for i in range(10_000):
        ctx = GenContext(case_rng(i, 0), "victim1", ["memo", "deposit", ""], cfg)
        typ = types[i % len(types)]
        value = gen_value(typ, ctx)
        if not _same(deserialize(serialize(value, typ), typ), value):
            failures += 1
    value = {"from": name_to_u64("sender"), "to": name_to_u64("victim1"), "quantity": Asset.eos(10000), "memo": "hi"}
    layout = serialize(value, TRANSFER_TYPE)
    layout_ok = layout == transfer_bytes("sender", "victim1", 10000, "hi") and len(layout) == 35
    report(capsys, 3, failures == 0 and layout_ok, f"10000 round-trips, {failures} failures; 35-byte layout match={layout_ok}")
    assert failures == 0 and layout_ok


def test_criterion_4_name_codec(capsys):
    tail = CHARMAP[1:]
    names = list(tail) + [a + b for a in CHARMAP for b in tail]
    rng = random.Random(12)
    names += ["".join(rng.choice(CHARMAP) for _ in range(11)) + rng.choice(tail) for _ in range(1000)]
    failures = [s for s in names if u64_to_name(name_to_u64(s)) != s or name_to_u64(s) != pack_name(s)]
    report(capsys, 4, not failures, f"{len(names)} names, {len(failures)} failures")
    assert len(names) == 31 + 32 * 31 + 1000
    assert not failures


def test_criterion_5_chain_invariants(sweep, capsys):
    sections, _ = sweep
    checks = sum(s["stats"]["invariant_checks"] for s in sections.values())
    violations = sum(s["stats"]["invariant_violations"] for s in sections.values())
    report(capsys, 5, violations == 0 and checks > 0, f"{checks} transactions checked, {violations} violations")
    assert checks > 0 and violations == 0


def test_criterion_6_micro_fixtures(capsys):
    arith_inst, arith = run_wasm((FIXTURES / "micro_arith.wasm").read_bytes())
    disp_inst, disp = run_wasm((FIXTURES / "micro_dispatch.wasm").read_bytes())

    def counts(res):
        return {k: sum(e.kind == k for e in res.events) for k in ("CallIndirect", "Compare", "HostCall")}

    ok = (
        (arith_inst.globals[0], arith.steps, counts(arith)) == (7, 9, {"CallIndirect": 0, "Compare": 0, "HostCall": 0})
        and (disp_inst.globals[0], disp.steps, counts(disp)) == (23, 102, {"CallIndirect": 5, "Compare": 7, "HostCall": 1})
    )
    report(capsys, 6, ok, f"micro_arith={arith_inst.globals[0]}/{arith.steps} steps, "
                          f"micro_dispatch={disp_inst.globals[0]}/{disp.steps} steps {counts(disp)}")
    assert ok


def test_criterion_7_end_to_end(capsys):
    rep = run_campaign(CampaignConfig(FIXTURES / "diamond1_like.wasm", FIXTURES / "diamond1_like.abi"))
    types = set(rep["contracts"][0]["vuln_types"])
    idx = next(i for i, (_, f) in enumerate(flatten_findings(rep)) if f["vuln_type"] == "AssetLoss")
    first, second = replay(rep, idx), replay(rep, idx)
    same = [(r.status, r.balance_deltas) for r in first.results] == [(r.status, r.balance_deltas) for r in second.results]
    ok = (
        {"ForgedTransferNotification", "AssetLoss"} <= types
        and first.reproduced and first.cut_delta < 0 and first.sender_delta > 0 and same
    )
    report(capsys, 7, ok, f"findings={sorted(types)}, replay reproduced={first.reproduced}, "
                          f"cut delta={first.cut_delta}, sender delta={first.sender_delta}, deterministic={same}")
    assert ok


def test_criterion_8_throughput(corpus_runs, capsys):
    first, _ = corpus_runs
    rate = first["timing"]["actions_per_sec"]
    report(capsys, 8, rate >= MIN_ACTIONS_PER_SEC, f"{rate:.0f} actions/sec over the corpus run (floor {MIN_ACTIONS_PER_SEC})")
    assert rate >= MIN_ACTIONS_PER_SEC


def test_criterion_9_determinism(corpus_runs, capsys):
    a, b = corpus_runs
    same = dump_report(a, normalize=True) == dump_report(b, normalize=True)
    report(capsys, 9, same, f"normalized corpus reports identical={same} ({len(a['contracts'])} contracts)")
    assert same
