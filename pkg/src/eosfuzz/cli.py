"""``eosfuzz`` command line.

Exit codes: 0 when the run is clean, 2 when findings are present, 1 on a tool error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .abi import AbiError, u64_to_name
from .chain import ChainError, Genesis
from .gen import GenConfig, GenError, parse_mix
from .harness import (
    CampaignConfig,
    HarnessError,
    corpus_worker_count,
    dump_report,
    format_summary,
    replay,
    run_campaign,
    run_corpus,
)
from .static import get_memo_strings, parse_wasm
from .wasm import WasmError

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 2

log = logging.getLogger("eosfuzz")


def _gen_config(args) -> GenConfig:
    kw = {"seed": args.seed, "actions_per_campaign": args.actions}
    if args.mix:
        kw["attack_mix"] = parse_mix(args.mix)
    return GenConfig(**kw)


def _campaign_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--actions", type=int, default=1000, help="steps per campaign (default 1000)")
    p.add_argument("--mix", help="weights for abi,fake,forged,probe steps, e.g. 0.4,0.25,0.25,0.1")
    p.add_argument("--strict-blockinfo", action="store_true",
                   help="require the block-info read and the EOS transfer in one transaction")
    p.add_argument("--genesis", type=Path, help="genesis JSON with initial accounts and balances")
    p.add_argument("--cut", default="victim1", help="account name the contract is deployed under")
    p.add_argument("--floats", action="store_true", help="allow f32/f64 instructions")


def _base_config(args, wasm: Path, abi: Path) -> CampaignConfig:
    genesis = Genesis.from_json(args.genesis.read_text()) if args.genesis else None
    return CampaignConfig(
        wasm=wasm, abi=abi, gen=_gen_config(args), genesis=genesis, cut=args.cut,
        strict_blockinfo=args.strict_blockinfo, floats=args.floats,
        verbose_trace=getattr(args, "verbose_trace", False),
        trace_path=getattr(args, "trace", None),
    )


def _write_report(report: dict, path: Path | None) -> None:
    text = dump_report(report)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_run(args) -> int:
    report = run_campaign(_base_config(args, args.wasm, args.abi))
    _write_report(report, args.report)
    section = report["contracts"][0]
    if "error" in section:
        log.error("%s: %s", section["error"]["kind"], section["error"]["message"])
        return EXIT_ERROR
    for v in section["vuln_types"]:
        log.warning("finding: %s", v)
    return EXIT_FINDINGS if section["findings"] else EXIT_CLEAN


def cmd_corpus(args) -> int:
    base = _base_config(args, Path(), Path())
    report = run_corpus(args.dir, base, jobs=corpus_worker_count(args.jobs))
    _write_report(report, args.report)
    print(format_summary(report), file=sys.stderr)
    for err in report["errors"]:
        log.error("%s: %s", err["name"], err["error"])
    return EXIT_FINDINGS if any(s["findings"] for s in report["contracts"]) else EXIT_CLEAN


def cmd_extract_memos(args) -> int:
    info = parse_wasm(args.wasm.read_bytes())
    print(json.dumps(sorted(get_memo_strings(info))))
    return EXIT_CLEAN


def cmd_replay(args) -> int:
    report = json.loads(args.report.read_text())
    out = replay(report, args.finding, wasm=args.wasm, abi=args.abi)
    print(json.dumps({
        "vuln_type": out.vuln_type,
        "reproduced": out.reproduced,
        "transactions": [
            {"status": r.status, "message": r.message, "error_kind": r.error_kind,
             "balance_deltas": {u64_to_name(k): v for k, v in r.balance_deltas.items()}}
            for r in out.results
        ],
    }, indent=2))
    return EXIT_FINDINGS if out.reproduced else EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eosfuzz", description="Blackbox fuzzer for EOSIO WASM contracts")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="fuzz one contract")
    p.add_argument("--wasm", type=Path, required=True)
    p.add_argument("--abi", type=Path, required=True)
    _campaign_args(p)
    p.add_argument("--trace", type=Path, help="write the event trace as JSON lines")
    p.add_argument("--report", type=Path, help="write the JSON report here instead of stdout")
    p.add_argument("--verbose-trace", action="store_true", help="also record every executed instruction")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("corpus", help="fuzz every (wasm, abi) pair in a directory")
    p.add_argument("--dir", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel campaigns (0 = one per CPU)")
    p.add_argument("--report", type=Path)
    _campaign_args(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("extract-memos", help="print memo candidate strings as a JSON array")
    p.add_argument("--wasm", type=Path, required=True)
    p.set_defaults(func=cmd_extract_memos)

    p = sub.add_parser("replay", help="re-execute one finding from a report")
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--finding", type=int, required=True)
    p.add_argument("--wasm", type=Path, help="override the contract path recorded in the report")
    p.add_argument("--abi", type=Path, help="override the ABI path recorded in the report")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, AbiError, WasmError, ChainError, GenError, HarnessError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
