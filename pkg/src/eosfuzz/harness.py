"""Campaign orchestration: load, generate, execute, detect, report."""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from . import __version__
from . import trace as tr
from .abi import AbiError, AbiInterface, name_to_u64, parse_abi, u64_to_name
from .chain import (
    APPLIED,
    DEFAULT_BUDGET,
    DEFAULT_MAX_DEPTH,
    EOSIO_TOKEN,
    ERROR,
    Action,
    ChainError,
    ChainState,
    Genesis,
    Roles,
    TransactionResult,
    WasmContract,
    build_chain,
    run_fake_transfer_attack,
    run_forged_notification_attack,
    run_genuine_transfer_probe,
)
from .gen import (
    FAKE_FORWARDED,
    FAKE_INLINE,
    FORGED_NOTIFICATION,
    GENUINE_PROBE,
    AbiCall,
    AgentInteraction,
    EmptyCampaignError,
    GenConfig,
    Step,
    case_rng,
    gen_amount,
    gen_test_case,
    GenContext,
    step_from_json,
)
from .oracles import (
    ASSET_LOSS,
    BLOCK_INFO_DEPENDENCY,
    FAKE_EOS_TRANSFER,
    FORGED_TRANSFER_NOTIFICATION,
    VULN_TYPES,
    CampaignTrace,
    Finding,
    MissingScenarioError,
    TxRecord,
    detect_asset_loss,
    detect_block_info_dependency,
    detect_fake_eos_transfer,
    detect_forged_notification,
    run_detectors,
)
from .static import build_string_pool
from .wasm import WasmError, parse_wasm
from .wasm.interp import prepare
from .wasm.host import HOST_FUNCTION_NAMES

SCHEMA_VERSION = 1
TOOL_NAME = "eosfuzz"
EXPECTATIONS_FILE = "expectations.json"


class HarnessError(Exception):
    pass


class ReplayError(HarnessError):
    pass


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class CampaignConfig:
    wasm: Path
    abi: Path
    gen: GenConfig = field(default_factory=GenConfig)
    genesis: Genesis | None = None
    cut: str = "victim1"
    sender: str = "sender"
    fake_agent: str = "fakeagent"
    notifier: str = "notifier"
    verbose_trace: bool = False
    strict_blockinfo: bool = False
    trace_path: Path | None = None
    budget: int = DEFAULT_BUDGET
    max_depth: int = DEFAULT_MAX_DEPTH
    floats: bool = False
    # fixture annotations, when the contract comes with expectations
    expected: dict[str, Any] | None = None

    def resolved_genesis(self) -> Genesis:
        return self.genesis or Genesis.default(self.cut, self.sender, self.fake_agent, self.notifier)

    def roles(self) -> Roles:
        return Roles(name_to_u64(self.cut), name_to_u64(self.sender),
                     name_to_u64(self.fake_agent), name_to_u64(self.notifier))

    def echo(self) -> dict[str, Any]:
        """Config as recorded in the report; enough to replay a finding."""
        return {
            "gen": self.gen.to_json(),
            "cut": self.cut,
            "sender": self.sender,
            "fake_agent": self.fake_agent,
            "notifier": self.notifier,
            "genesis": json.loads(self.resolved_genesis().to_json()),
            "budget": self.budget,
            "max_depth": self.max_depth,
            "floats": self.floats,
            "strict_blockinfo": self.strict_blockinfo,
            "verbose_trace": self.verbose_trace,
        }

    @classmethod
    def from_echo(cls, doc: dict[str, Any], wasm: Path, abi: Path) -> CampaignConfig:
        return cls(
            wasm=Path(wasm), abi=Path(abi),
            gen=GenConfig.from_json(doc["gen"]),
            genesis=Genesis.from_json(json.dumps(doc["genesis"])),
            cut=doc["cut"], sender=doc["sender"], fake_agent=doc["fake_agent"], notifier=doc["notifier"],
            budget=doc["budget"], max_depth=doc["max_depth"], floats=doc["floats"],
            strict_blockinfo=doc["strict_blockinfo"], verbose_trace=doc.get("verbose_trace", False),
        )


@dataclass
class LoadedContract:
    abi: AbiInterface
    contract: WasmContract
    all_strings: set[str]
    memo_candidates: set[str]
    wasm_sha256: str
    abi_sha256: str


def load_contract(cfg: CampaignConfig) -> LoadedContract:
    """Read and validate both files before anything executes."""
    wasm_bytes = Path(cfg.wasm).read_bytes()
    abi_bytes = Path(cfg.abi).read_bytes()
    module = parse_wasm(wasm_bytes)
    compiled = prepare(module, HOST_FUNCTION_NAMES, floats=cfg.floats)
    abi = parse_abi(abi_bytes)
    pool = build_string_pool(module)
    return LoadedContract(
        abi, WasmContract(compiled, cfg.floats), pool.all_strings, pool.memo_candidates,
        hashlib.sha256(wasm_bytes).hexdigest(), hashlib.sha256(abi_bytes).hexdigest(),
    )


# ---------------------------------------------------------------------------
# execution


def execute_step(chain: ChainState, roles: Roles, step: Step) -> TransactionResult:
    if isinstance(step, AbiCall):
        act = Action(roles.cut, name_to_u64(step.action), (roles.sender, roles.cut), step.data, "abi")
        return chain.push_action(act)
    k = step.kind
    if k == FAKE_INLINE:
        return run_fake_transfer_attack(chain, "inline", roles.cut, step.amount, agent=roles.fake_agent, memo=step.memo)
    if k == FAKE_FORWARDED:
        return run_fake_transfer_attack(chain, "forwarded", roles.cut, step.amount, agent=roles.fake_agent,
                                        memo=step.memo)
    if k == FORGED_NOTIFICATION:
        return run_forged_notification_attack(chain, roles.cut, step.amount, sender=roles.sender,
                                              notifier=roles.notifier, memo=step.memo)
    if k == GENUINE_PROBE:
        return run_genuine_transfer_probe(chain, roles.cut, step.amount, sender=roles.sender, memo=step.memo)
    raise HarnessError(f"unknown step kind {k!r}")


def _failed_step(message: str, chain: ChainState) -> TransactionResult:
    bal = dict(chain.balances)
    return TransactionResult(ERROR, message, "StepError", [], {}, bal, dict(bal), 0)


class InvariantMonitor:
    """Supply conservation, rollback atomicity and reset correctness, checked per transaction."""

    def __init__(self, genesis_balances: dict[int, int]):
        self.genesis = dict(genesis_balances)
        self.violations: list[dict[str, Any]] = []
        self.checked = 0

    def _flag(self, tx: int, what: str, detail: str) -> None:
        self.violations.append({"tx": tx, "invariant": what, "detail": detail})

    def check(self, tx: int, first_in_case: bool, res: TransactionResult, tables_before, tables_after) -> None:
        self.checked += 1
        if first_in_case and res.balances_before != self.genesis:
            self._flag(tx, "reset", "first transaction of a test case did not start from genesis balances")
        if any(v < 0 for v in res.balances_after.values()):
            self._flag(tx, "nonnegative", "negative balance")
        if res.status == APPLIED:
            if sum(res.balance_deltas.values()) != 0:
                self._flag(tx, "supply", f"deltas sum to {sum(res.balance_deltas.values())}")
        else:
            if res.balances_after != res.balances_before or res.balance_deltas:
                self._flag(tx, "rollback", "balances changed by a failed transaction")
            if tables_after != tables_before:
                self._flag(tx, "rollback", "tables changed by a failed transaction")


@dataclass
class CampaignResult:
    section: dict[str, Any]
    trace: CampaignTrace
    findings: list[Finding]
    timing: dict[str, Any]


def _copy_tables(chain: ChainState) -> dict:
    return {k: dict(v) for k, v in chain.tables.items()}


def execute_campaign(cfg: CampaignConfig) -> CampaignResult:
    loaded = load_contract(cfg)
    roles = cfg.roles()
    chain = build_chain(loaded.contract, cfg.resolved_genesis(), roles, budget=cfg.budget,
                        max_depth=cfg.max_depth, verbose=cfg.verbose_trace)
    genesis_snap = chain.snapshot()
    monitor = InvariantMonitor(genesis_snap[0])
    pool = loaded.all_strings | loaded.memo_candidates
    records: list[TxRecord] = []
    stats: dict[str, Any] = {
        "transactions": 0, "test_cases": 0, "applied": 0, "aborted": 0, "errors": {},
        "step_errors": 0, "instructions": 0, "by_step": {},
    }
    section: dict[str, Any] = {
        "name": Path(cfg.wasm).stem,
        "wasm": str(cfg.wasm),
        "abi": str(cfg.abi),
        "wasm_sha256": loaded.wasm_sha256,
        "abi_sha256": loaded.abi_sha256,
        "string_pool": sorted(loaded.all_strings),
        "memo_candidates": sorted(loaded.memo_candidates),
    }
    started = time.perf_counter()
    budget = cfg.gen.actions_per_campaign
    case = 0
    try:
        while len(records) < budget:
            tc = gen_test_case(loaded.abi, cfg.gen, pool, case, cut=cfg.cut, memo_candidates=loaded.memo_candidates)
            # every test case opens with a genuine transfer so CanReceiveEOS is always measured
            probe_ctx = GenContext(case_rng(cfg.gen.seed, -1 - case), cfg.cut, pool, cfg.gen, loaded.memo_candidates)
            steps = [AgentInteraction(GENUINE_PROBE, gen_amount(probe_ctx), probe_ctx.pick_memo()), *tc.steps]
            steps = steps[: budget - len(records)]
            chain.restore(genesis_snap)
            stats["test_cases"] += 1
            for j, step in enumerate(steps):
                tables_before = _copy_tables(chain)
                try:
                    res = execute_step(chain, roles, step)
                except (ChainError, AbiError, WasmError) as e:
                    stats["step_errors"] += 1
                    res = _failed_step(f"{type(e).__name__}: {e}", chain)
                monitor.check(len(records), j == 0, res, tables_before, _copy_tables(chain))
                records.append(TxRecord(case, step, res))
                stats["instructions"] += res.steps
                if res.status == APPLIED:
                    stats["applied"] += 1
                elif res.status == ERROR:
                    stats["errors"][res.error_kind or "Unknown"] = stats["errors"].get(res.error_kind or "Unknown", 0) + 1
                else:
                    stats["aborted"] += 1
                label = step.kind if isinstance(step, AgentInteraction) else "AbiCall"
                stats["by_step"][label] = stats["by_step"].get(label, 0) + 1
            case += 1
    except EmptyCampaignError as e:
        section["error"] = {"kind": "EmptyCampaignError", "message": str(e)}
    elapsed = time.perf_counter() - started
    stats["transactions"] = len(records)
    stats["traps"] = stats["errors"].get("Trap", 0)
    stats["errors"] = dict(sorted(stats["errors"].items()))
    stats["by_step"] = dict(sorted(stats["by_step"].items()))
    stats["invariant_checks"] = monitor.checked
    stats["invariant_violations"] = len(monitor.violations)

    ctrace = CampaignTrace(records, roles.cut, roles.notifier, roles.fake_agent, roles.sender)
    cut_genesis = genesis_snap[0].get(roles.cut, 0)
    findings, skipped = run_detectors(ctrace, EOSIO_TOKEN, strict_blockinfo=cfg.strict_blockinfo,
                                      initial_cut_balance=cut_genesis)
    for f in findings:
        if "gainers" in f.details:
            f.details["gainers"] = {u64_to_name(int(k)): v for k, v in f.details["gainers"].items()}

    if cfg.trace_path is not None:
        with open(cfg.trace_path, "w") as fh:
            tr.write_jsonl(fh, ((i, rec.result.trace) for i, rec in enumerate(records)))

    section["findings"] = [f.to_json() for f in findings]
    section["vuln_types"] = sorted({f.vuln_type for f in findings})
    section["skipped_detectors"] = skipped
    section["stats"] = stats
    section["invariant_violations"] = monitor.violations[:20]
    if cfg.expected is not None:
        section["expected"] = annotate(section["vuln_types"], cfg.expected)
    timing = {
        "elapsed_sec": round(elapsed, 6),
        "actions_per_sec": round(len(records) / elapsed, 3) if elapsed > 0 else None,
    }
    return CampaignResult(section, ctrace, findings, timing)


def annotate(reported: list[str], expected: dict[str, Any]) -> dict[str, Any]:
    exp = sorted(expected.get("expected", []))
    lims = expected.get("limitations", [])
    return {
        "expected": exp,
        "limitations": lims,
        "unexpected": sorted(set(reported) - set(exp)),
        "missed": sorted(set(exp) - set(reported)),
        "match": set(reported) == set(exp),
    }


def ground_truth(expected: dict[str, Any]) -> set[str]:
    """Real vulnerabilities: expected reports minus documented false positives plus documented misses."""
    truth = set(expected.get("expected", []))
    for lim in expected.get("limitations", []):
        if lim.get("kind") == "false_positive":
            truth.discard(lim["vuln_type"])
        elif lim.get("kind") == "false_negative":
            truth.add(lim["vuln_type"])
    return truth


def new_report(config: dict[str, Any]) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": TOOL_NAME, "version": __version__},
        "config": config,
        "contracts": [],
    }


def run_campaign(cfg: CampaignConfig) -> dict[str, Any]:
    result = execute_campaign(cfg)
    report = new_report(cfg.echo())
    report["contracts"].append(result.section)
    report["timing"] = {"contracts": {result.section["name"]: result.timing}}
    return report


# ---------------------------------------------------------------------------
# corpus


def load_expectations(directory: Path) -> dict[str, dict[str, Any]]:
    p = Path(directory) / EXPECTATIONS_FILE
    if not p.exists():
        return {}
    doc = json.loads(p.read_text())
    return doc.get("fixtures", doc)


def discover(directory: Path) -> tuple[list[tuple[str, Path, Path]], list[dict[str, str]]]:
    pairs, problems = [], []
    for wasm in sorted(Path(directory).glob("*.wasm")):
        abi = next((c for c in (wasm.with_suffix(".abi"), wasm.with_suffix(".abi.json")) if c.exists()), None)
        if abi is None:
            problems.append({"name": wasm.stem, "error": "no ABI file next to the wasm"})
            continue
        pairs.append((wasm.stem, wasm, abi))
    return pairs, problems


def _campaign_worker(cfg: CampaignConfig) -> tuple[dict[str, Any], dict[str, Any]]:
    res = execute_campaign(cfg)
    return res.section, res.timing


def run_corpus(directory: Path, base: CampaignConfig | None = None, jobs: int = 1) -> dict[str, Any]:
    """One independent campaign per (wasm, abi) pair; unreadable pairs are recorded and skipped."""
    directory = Path(directory)
    base = base or CampaignConfig(wasm=Path(), abi=Path())
    pairs, problems = discover(directory)
    expectations = load_expectations(directory)
    cfgs = [
        replace(base, wasm=w, abi=a, trace_path=None, expected=expectations.get(n))
        for n, w, a in pairs
    ]
    started = time.perf_counter()
    outcomes: list[tuple[str, Any]] = []
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_campaign_worker, c) for c in cfgs]
            for (n, _, _), fut in zip(pairs, futures):
                try:
                    outcomes.append((n, fut.result()))
                except Exception as e:  # noqa: BLE001 - recorded per contract
                    outcomes.append((n, e))
    else:
        for (n, _, _), c in zip(pairs, cfgs):
            try:
                outcomes.append((n, _campaign_worker(c)))
            except Exception as e:  # noqa: BLE001
                outcomes.append((n, e))
    elapsed = time.perf_counter() - started

    echo = base.echo()
    echo["corpus"] = str(directory)
    report = new_report(echo)
    timing: dict[str, Any] = {"contracts": {}}
    total_tx = 0
    for n, out in outcomes:
        if isinstance(out, Exception):
            problems.append({"name": n, "error": f"{type(out).__name__}: {out}"})
            continue
        section, t = out
        report["contracts"].append(section)
        timing["contracts"][n] = t
        total_tx += section["stats"]["transactions"]
    report["errors"] = problems
    report["summary"] = summarize(report["contracts"], bool(expectations))
    timing["elapsed_sec"] = round(elapsed, 6)
    timing["actions_per_sec"] = round(total_tx / elapsed, 3) if elapsed > 0 else None
    report["timing"] = timing
    return report


def summarize(sections: list[dict[str, Any]], with_expectations: bool) -> dict[str, Any]:
    rows = []
    for v in VULN_TYPES:
        reported = sum(1 for s in sections if v in s["vuln_types"])
        row: dict[str, Any] = {"vuln_type": v, "total": len(sections), "reported": reported, "fp": None, "fn": None}
        if with_expectations:
            fp = fn = 0
            for s in sections:
                if "expected" not in s:
                    continue
                truth = ground_truth(s["expected"])
                got = v in s["vuln_types"]
                fp += got and v not in truth
                fn += (not got) and v in truth
            row["fp"], row["fn"] = fp, fn
        rows.append(row)
    mismatched = [s["name"] for s in sections if "expected" in s and not s["expected"]["match"]]
    return {
        "rows": rows,
        "mismatches": len(mismatched) if with_expectations else None,
        "mismatched": mismatched,
        "invariant_violations": sum(s["stats"]["invariant_violations"] for s in sections),
        "transactions": sum(s["stats"]["transactions"] for s in sections),
    }


def format_summary(report: dict[str, Any]) -> str:
    summary = report.get("summary")
    if summary is None:
        return ""
    lines = [f"{'Vulnerability':<28} {'Total':>5} {'Reported':>8} {'FP':>4} {'FN':>4}"]
    for r in summary["rows"]:
        fp = "-" if r["fp"] is None else r["fp"]
        fn = "-" if r["fn"] is None else r["fn"]
        lines.append(f"{r['vuln_type']:<28} {r['total']:>5} {r['reported']:>8} {fp:>4} {fn:>4}")
    if summary["mismatches"] is not None:
        lines.append(f"mismatches against expectations: {summary['mismatches']}"
                     + (f" ({', '.join(summary['mismatched'])})" if summary["mismatched"] else ""))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# report i/o


def normalize_report(report: dict[str, Any]) -> dict[str, Any]:
    """Drop the timing field, the only part of a report allowed to differ between runs."""
    return {k: v for k, v in report.items() if k != "timing"}


def dump_report(report: dict[str, Any], normalize: bool = False) -> str:
    doc = normalize_report(report) if normalize else report
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# replay


@dataclass
class ReplayOutcome:
    results: list[TransactionResult]
    trace: CampaignTrace
    vuln_type: str
    reproduced: bool
    cut_delta: int = 0
    sender_delta: int = 0


def flatten_findings(report: dict[str, Any]) -> list[tuple[dict[str, Any], dict[str, Any]]]:
    return [(section, f) for section in report["contracts"] for f in section.get("findings", [])]


def _reproduces(vuln: str, trace: CampaignTrace, strict: bool) -> bool:
    try:
        if vuln == FAKE_EOS_TRANSFER:
            return detect_fake_eos_transfer(trace, require_both_variants=False) is not None
        if vuln == FORGED_TRANSFER_NOTIFICATION:
            return detect_forged_notification(trace, EOSIO_TOKEN) is not None
        if vuln == BLOCK_INFO_DEPENDENCY:
            return detect_block_info_dependency(trace, strict) is not None
        if vuln == ASSET_LOSS:
            return detect_asset_loss(trace) is not None
    except MissingScenarioError:
        return False
    raise ReplayError(f"unknown vulnerability type {vuln!r}")


def replay(report: dict[str, Any], finding_index: int, *, wasm: Path | None = None,
           abi: Path | None = None) -> ReplayOutcome:
    """Re-execute a finding's recorded test cases from genesis and re-check its oracle."""
    flat = flatten_findings(report)
    if not 0 <= finding_index < len(flat):
        raise ReplayError(f"finding index {finding_index} out of range (report has {len(flat)})")
    section, finding = flat[finding_index]
    wasm = Path(wasm or section["wasm"])
    abi = Path(abi or section["abi"])
    try:
        if sha256_file(wasm) != section["wasm_sha256"]:
            raise ReplayError(f"{wasm} does not match the hash recorded in the report")
        if sha256_file(abi) != section["abi_sha256"]:
            raise ReplayError(f"{abi} does not match the hash recorded in the report")
    except OSError as e:
        raise ReplayError(str(e)) from e
    cfg = CampaignConfig.from_echo(report["config"], wasm, abi)
    loaded = load_contract(cfg)
    roles = cfg.roles()
    chain = build_chain(loaded.contract, cfg.resolved_genesis(), roles, budget=cfg.budget,
                        max_depth=cfg.max_depth, verbose=cfg.verbose_trace)
    genesis = chain.snapshot()
    records: list[TxRecord] = []
    for ci, case in enumerate(finding["replay"]["cases"]):
        chain.restore(genesis)
        for doc in case:
            step = step_from_json(doc)
            records.append(TxRecord(ci, step, execute_step(chain, roles, step)))
    ctrace = CampaignTrace(records, roles.cut, roles.notifier, roles.fake_agent, roles.sender)
    vuln = finding["vuln_type"]
    out = ReplayOutcome([r.result for r in records], ctrace, vuln,
                        _reproduces(vuln, ctrace, cfg.strict_blockinfo))
    if records:
        last = records[-1].result
        out.cut_delta = last.balance_deltas.get(roles.cut, 0)
        out.sender_delta = last.balance_deltas.get(roles.sender, 0)
    return out


def corpus_worker_count(requested: int | None) -> int:
    if requested is not None and requested > 0:
        return requested
    return max(1, (os.cpu_count() or 1))


__all__ = [
    "CampaignConfig", "CampaignResult", "HarnessError", "InvariantMonitor", "ReplayError", "ReplayOutcome",
    "SCHEMA_VERSION", "dump_report", "execute_campaign", "execute_step", "format_summary",
    "ground_truth", "load_contract", "load_expectations", "normalize_report", "replay", "run_campaign",
    "run_corpus", "summarize",
]
