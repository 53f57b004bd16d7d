"""Compile fixture WAT sources to .wasm (dev-only; needs the wasmtime package).

Usage: python3 tools/build_fixtures.py [--check]
"""

import argparse
import pathlib
import sys

import wasmtime

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "src" / "eosfuzz" / "fixtures"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true", help="fail if any .wasm is stale instead of writing")
    args = ap.parse_args()
    stale = []
    for wat in sorted(FIXTURES.glob("*.wat")):
        binary = wasmtime.wat2wasm(wat.read_text())
        out = wat.with_suffix(".wasm")
        if out.exists() and out.read_bytes() == binary:
            continue
        stale.append(out.name)
        if not args.check:
            out.write_bytes(binary)
    for name in stale:
        print(("stale: " if args.check else "wrote: ") + name)
    return 1 if args.check and stale else 0


if __name__ == "__main__":
    sys.exit(main())
