"""Clustered hybrid consensus toolkit (C++ core)."""

from ._core import (
    HyconError,
    certify,
    decompose,
    preset_reduced_dimension,
    run_command,
    simulate,
    system_info,
)

__all__ = [
    "HyconError",
    "certify",
    "decompose",
    "preset_reduced_dimension",
    "run_command",
    "simulate",
    "system_info",
]
