"""WASM decoding, interpretation and EOSIO host bindings."""

from .binary import (
    DataSegment,
    FuncType,
    UnsupportedFeatureError,
    WasmError,
    WasmModule,
    WasmModuleInfo,
    WasmParseError,
    parse_wasm,
)
from .host import ActionContext, HostEnv
from .interp import (
    ApplyResult,
    CompiledModule,
    ContractAbort,
    Instance,
    LinkError,
    Trap,
    call_apply,
    instantiate,
    prepare,
)

__all__ = [
    "ActionContext", "ApplyResult", "CompiledModule", "ContractAbort", "DataSegment", "FuncType",
    "HostEnv", "Instance", "LinkError", "Trap", "UnsupportedFeatureError", "WasmError", "WasmModule",
    "WasmModuleInfo", "WasmParseError", "call_apply", "instantiate", "parse_wasm", "prepare",
]
