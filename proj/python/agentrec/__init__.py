"""Python bindings for the agentrec C++ core."""

from ._agentrec import (
    AgentRecError,
    MemoryLabel,
    MemoryStore,
    __version__,
    constrained_select,
    propagation_probability,
    regulate_context,
    retrieve_topk,
    run_scenario,
    sha256_hex,
    validate_config,
)

__all__ = [
    "AgentRecError",
    "MemoryLabel",
    "MemoryStore",
    "__version__",
    "constrained_select",
    "propagation_probability",
    "regulate_context",
    "retrieve_topk",
    "run_scenario",
    "sha256_hex",
    "validate_config",
]
