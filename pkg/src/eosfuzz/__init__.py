"""Blackbox fuzzer for EOSIO WASM contracts."""

__version__ = "0.1.0"
