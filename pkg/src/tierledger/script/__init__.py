"""Level-2 script machine: assembler, disassembler, and interpreter.

Execution dispatches to the compiled kernel when the extension built, and
otherwise to the pure-Python kernel; both implement identical semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .asm import ScriptSyntaxError, assemble, disassemble
from .opcodes import (
    MAX_ELEMENT,
    MAX_SCRIPT_BYTES,
    MAX_STACK,
    MAX_STEPS,
    MAX_WITNESS_ITEMS,
    REASON_NAMES,
)
from . import interpreter as _pure

try:
    from . import _speedups as _compiled  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_kernel = _compiled.execute_bytecode if _compiled is not None else _pure.execute_bytecode

KERNEL = "compiled" if _compiled is not None else "pure"

__all__ = [
    "KERNEL",
    "ScriptContext",
    "ScriptResult",
    "ScriptSyntaxError",
    "assemble",
    "disassemble",
    "execute",
    "REASON_NAMES",
    "MAX_SCRIPT_BYTES",
    "MAX_STEPS",
    "MAX_STACK",
    "MAX_ELEMENT",
    "MAX_WITNESS_ITEMS",
]


@dataclass(frozen=True)
class ScriptContext:
    """Read-only execution context: the deliberate, minimal view a script
    gets of the world outside its own bytes."""

    signing_message: bytes = b"\x00" * 32
    not_before: Optional[int] = None
    spend_script_hashes: tuple[bytes, ...] = ()
    covenants_enabled: bool = True


@dataclass(frozen=True)
class ScriptResult:
    success: bool
    reason: int  # -1 on success, else a R_* code from opcodes
    steps: int

    @property
    def reason_name(self) -> str:
        return "" if self.success else REASON_NAMES[self.reason]


def execute(
    program: bytes,
    witness: Sequence[bytes],
    ctx: ScriptContext,
    kernel: Optional[str] = None,
) -> ScriptResult:
    """Execute a script program against a witness stack and context.

    kernel forces "pure" or "compiled" (used by the differential tests and
    the benchmark); by default the fastest available kernel runs.
    """
    if kernel is None:
        fn = _kernel
    elif kernel == "pure":
        fn = _pure.execute_bytecode
    elif kernel == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel not available")
        fn = _compiled.execute_bytecode
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    nb = -1 if ctx.not_before is None else ctx.not_before
    success, reason, steps = fn(
        bytes(program),
        tuple(witness),
        ctx.signing_message,
        nb,
        ctx.spend_script_hashes,
        ctx.covenants_enabled,
    )
    return ScriptResult(success, reason, steps)
