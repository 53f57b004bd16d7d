import json
import shutil
from pathlib import Path

import pytest

from eosfuzz import trace as tr
from eosfuzz.cli import main
from eosfuzz.gen import GenConfig
from eosfuzz.harness import (
    CampaignConfig,
    ReplayError,
    dump_report,
    execute_campaign,
    flatten_findings,
    format_summary,
    ground_truth,
    load_expectations,
    normalize_report,
    replay,
    run_campaign,
    run_corpus,
)
from refs import BEHAVIORAL, FIXTURES, MICRO

EXPECT = load_expectations(FIXTURES)


def cfg_for(name, seed=0, actions=300, **kw):
    return CampaignConfig(FIXTURES / f"{name}.wasm", FIXTURES / f"{name}.abi",
                          gen=GenConfig(seed=seed, actions_per_campaign=actions), **kw)


def copy_fixtures(dst: Path, names):
    for n in names:
        for ext in (".wasm", ".abi"):
            shutil.copy(FIXTURES / f"{n}{ext}", dst / f"{n}{ext}")


@pytest.mark.parametrize("name", BEHAVIORAL + MICRO)
def test_fixture_matches_expectations(name):
    res = execute_campaign(cfg_for(name, actions=1000, expected=EXPECT[name]))
    sec = res.section
    assert sec["vuln_types"] == sorted(EXPECT[name]["expected"])
    assert sec["expected"]["match"]
    assert sec["stats"]["invariant_violations"] == 0
    assert sec["stats"]["transactions"] == 1000


def test_limitations_shape_ground_truth():
    assert ground_truth(EXPECT["vigor_like"]) == set()
    assert ground_truth(EXPECT["lottery10_like"]) == {"BlockInfoDependency"}


def test_every_case_starts_with_probe_and_reset():
    res = execute_campaign(cfg_for("notif_vuln", actions=200))
    recs = res.trace.transactions
    firsts = [r for i, r in enumerate(recs) if i == 0 or recs[i - 1].case != r.case]
    assert all(r.kind == "GenuineTransferProbe" for r in firsts)
    genesis = recs[0].result.balances_before
    assert all(r.result.balances_before == genesis for r in firsts)


def test_action_budget_truncates_last_case():
    for n in (1, 7, 123):
        assert execute_campaign(cfg_for("fake_vuln", actions=n)).section["stats"]["transactions"] == n


def test_reports_are_deterministic():
    a = run_campaign(cfg_for("diamond1_like", seed=3))
    b = run_campaign(cfg_for("diamond1_like", seed=3))
    assert "timing" in a
    assert dump_report(a, normalize=True) == dump_report(b, normalize=True)
    assert normalize_report(a) != normalize_report(run_campaign(cfg_for("diamond1_like", seed=4)))


def test_report_schema():
    rep = run_campaign(cfg_for("fake_vuln"))
    assert rep["schema_version"] == 1 and rep["tool"]["name"] == "eosfuzz"
    sec = rep["contracts"][0]
    for key in ("wasm_sha256", "abi_sha256", "findings", "vuln_types", "stats", "memo_candidates"):
        assert key in sec
    f = sec["findings"][0]
    assert f["vuln_type"] == "FakeEOSTransfer"
    assert f["replay"]["cases"] and all(isinstance(c, list) for c in f["replay"]["cases"])


def test_empty_campaign_is_reported():
    rep = run_campaign(CampaignConfig(FIXTURES / "micro_arith.wasm", FIXTURES / "micro_arith.abi",
                                      gen=GenConfig(attack_mix={"abi": 1.0}, actions_per_campaign=10)))
    assert rep["contracts"][0]["error"]["kind"] == "EmptyCampaignError"


# -- replay

def test_replay_reproduces_each_finding():
    rep = run_campaign(cfg_for("diamond1_like", actions=1000))
    flat = flatten_findings(rep)
    assert {f["vuln_type"] for _, f in flat} == {"AssetLoss", "ForgedTransferNotification"}
    for i in range(len(flat)):
        assert replay(rep, i).reproduced


def test_replay_rejects_modified_contract(tmp_path):
    copy_fixtures(tmp_path, ["fake_vuln"])
    cfg = CampaignConfig(tmp_path / "fake_vuln.wasm", tmp_path / "fake_vuln.abi",
                         gen=GenConfig(actions_per_campaign=200))
    rep = run_campaign(cfg)
    blob = bytearray((tmp_path / "fake_vuln.wasm").read_bytes())
    blob[-1] ^= 0xFF
    (tmp_path / "fake_vuln.wasm").write_bytes(bytes(blob))
    with pytest.raises(ReplayError):
        replay(rep, 0)
    with pytest.raises(ReplayError):
        replay(rep, 99)


# -- corpus

def test_corpus_summary_and_errors(tmp_path):
    copy_fixtures(tmp_path, ["fake_vuln", "fake_safe", "vigor_like"])
    (tmp_path / "orphan.wasm").write_bytes(b"\0asm\1\0\0\0")
    (tmp_path / "broken.wasm").write_bytes(b"junk")
    (tmp_path / "broken.abi").write_text("{}")
    exp = {k: EXPECT[k] for k in ("fake_vuln", "fake_safe", "vigor_like")}
    (tmp_path / "expectations.json").write_text(json.dumps({"schema_version": 1, "fixtures": exp}))
    rep = run_corpus(tmp_path, CampaignConfig(Path(), Path(), gen=GenConfig(actions_per_campaign=300)))
    assert sorted(s["name"] for s in rep["contracts"]) == ["fake_safe", "fake_vuln", "vigor_like"]
    assert sorted(e["name"] for e in rep["errors"]) == ["broken", "orphan"]
    row = next(r for r in rep["summary"]["rows"] if r["vuln_type"] == "FakeEOSTransfer")
    # vigor_like is a documented false positive
    assert (row["total"], row["reported"], row["fp"], row["fn"]) == (3, 2, 1, 0)
    assert rep["summary"]["mismatches"] == 0
    assert "FakeEOSTransfer" in format_summary(rep)


def test_corpus_parallel_equals_serial(tmp_path):
    copy_fixtures(tmp_path, ["fake_vuln", "notif_vuln"])
    base = CampaignConfig(Path(), Path(), gen=GenConfig(actions_per_campaign=150))
    a = run_corpus(tmp_path, base, jobs=1)
    b = run_corpus(tmp_path, base, jobs=2)
    assert dump_report(a, normalize=True) == dump_report(b, normalize=True)


# -- command line

def cli(*args):
    return main([str(a) for a in args])


def test_cli_run_exit_codes_and_outputs(tmp_path, capsys):
    report, trace = tmp_path / "r.json", tmp_path / "t.jsonl"
    rc = cli("run", "--wasm", FIXTURES / "fake_vuln.wasm", "--abi", FIXTURES / "fake_vuln.abi",
             "--actions", 200, "--report", report, "--trace", trace)
    assert rc == 2
    rep = json.loads(report.read_text())
    assert rep["contracts"][0]["vuln_types"] == ["FakeEOSTransfer"]
    with trace.open() as fh:
        events = list(tr.read_jsonl(fh))
    assert events and {tx for tx, _ in events} <= set(range(200))

    rc = cli("run", "--wasm", FIXTURES / "fake_safe.wasm", "--abi", FIXTURES / "fake_safe.abi", "--actions", 200,
             "--report", tmp_path / "s.json")
    assert rc == 0


@pytest.mark.parametrize("extra", [
    ["--mix", "1,1,1"],
    ["--actions", "0"],
])
def test_cli_config_errors(extra):
    assert cli("run", "--wasm", FIXTURES / "fake_vuln.wasm", "--abi", FIXTURES / "fake_vuln.abi", *extra) == 1


def test_cli_missing_files(tmp_path):
    assert cli("run", "--wasm", tmp_path / "nope.wasm", "--abi", tmp_path / "nope.abi") == 1


def test_cli_extract_memos(capsys):
    assert cli("extract-memos", "--wasm", FIXTURES / "diamond1_like.wasm") == 0
    assert json.loads(capsys.readouterr().out) == ["bet", "only EOS is accepted"]


def test_cli_replay(tmp_path, capsys):
    report = tmp_path / "r.json"
    cli("run", "--wasm", FIXTURES / "notif_vuln.wasm", "--abi", FIXTURES / "notif_vuln.abi", "--report", report)
    capsys.readouterr()
    assert cli("replay", "--report", report, "--finding", 0) == 2
    out = json.loads(capsys.readouterr().out)
    assert out["reproduced"] is True and out["transactions"]
    assert cli("replay", "--report", report, "--finding", 50) == 1


def test_cli_corpus(tmp_path, capsys):
    copy_fixtures(tmp_path, ["token_only"])
    rc = cli("corpus", "--dir", tmp_path, "--actions", 100, "--report", tmp_path / "c.json")
    assert rc == 0
    assert "Vulnerability" in capsys.readouterr().err
