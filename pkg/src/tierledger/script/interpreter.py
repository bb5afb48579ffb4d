"""Pure-Python script execution kernel.

The compiled kernel in _speedups.pyx implements the same algorithm
step-for-step; any change here must be mirrored there (the test suite
cross-checks the two on random programs).
"""

from __future__ import annotations

import hashlib
from typing import Sequence

from ..crypto import check_multisig, verify
from .opcodes import (
    MAX_ELEMENT,
    MAX_PUSH,
    MAX_STACK,
    MAX_STEPS,
    MAX_WITNESS_ITEMS,
    OP_CHECKLOCKTIME,
    OP_CHECKMULTISIG,
    OP_CHECKSIG,
    OP_CHECKSIGVERIFY,
    OP_COVENANT,
    OP_DROP,
    OP_DUP,
    OP_ELSE,
    OP_ENDIF,
    OP_EQUAL,
    OP_EQUALVERIFY,
    OP_FALSE,
    OP_IF,
    OP_RETURN,
    OP_SHA256,
    OP_SWAP,
    OP_TRUE,
    OP_VERIFY,
    R_BAD_PUSH,
    R_EMPTY_SCRIPT,
    R_RETURN_HIT,
    R_STACK_LIMIT,
    R_STACK_UNDERFLOW,
    R_STEP_LIMIT,
    R_TYPE_ERROR,
    R_UNBALANCED_IF,
    R_VERIFY_FAILED,
)

TRUE_ITEM = b"\x01"
FALSE_ITEM = b""


def _as_small_int(item: bytes) -> int:
    """Little-endian unsigned decode of a stack element, at most 8 bytes."""
    if len(item) > 8:
        return -1
    return int.from_bytes(item, "little")


def execute_bytecode(
    code: bytes,
    witness: Sequence[bytes],
    msg: bytes,
    not_before: int,
    spend_script_hashes: Sequence[bytes],
    covenants_enabled: bool,
) -> tuple[bool, int, int]:
    """Run a script. Returns (success, reason, steps); reason is -1 on success.

    not_before is -1 when the spending transaction carries no validity
    window. Witness elements seed the stack, first element deepest.
    """
    steps = 0
    if len(code) == 0:
        return (False, R_EMPTY_SCRIPT, steps)
    if len(witness) > MAX_WITNESS_ITEMS:
        return (False, R_STACK_LIMIT, steps)
    stack: list[bytes] = []
    for item in witness:
        if len(item) > MAX_ELEMENT:
            return (False, R_STACK_LIMIT, steps)
        stack.append(bytes(item))
    cond: list[bool] = []

    pc = 0
    n = len(code)
    while pc < n:
        steps += 1
        if steps > MAX_STEPS:
            return (False, R_STEP_LIMIT, steps)
        op = code[pc]
        pc += 1
        executing = all(cond)

        if 1 <= op <= MAX_PUSH:
            if pc + op > n:
                return (False, R_BAD_PUSH, steps)
            if executing:
                stack.append(code[pc : pc + op])
                if len(stack) > MAX_STACK:
                    return (False, R_STACK_LIMIT, steps)
            pc += op
            continue

        if op == OP_IF:
            if executing:
                if not stack:
                    return (False, R_STACK_UNDERFLOW, steps)
                cond.append(any(stack.pop()))
            else:
                cond.append(False)
            continue
        if op == OP_ELSE:
            if not cond:
                return (False, R_UNBALANCED_IF, steps)
            cond[-1] = not cond[-1]
            continue
        if op == OP_ENDIF:
            if not cond:
                return (False, R_UNBALANCED_IF, steps)
            cond.pop()
            continue

        if not executing:
            continue

        if op == OP_FALSE or op == OP_TRUE:
            stack.append(TRUE_ITEM if op == OP_TRUE else FALSE_ITEM)
            if len(stack) > MAX_STACK:
                return (False, R_STACK_LIMIT, steps)
        elif op == OP_VERIFY:
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            if not any(stack.pop()):
                return (False, R_VERIFY_FAILED, steps)
        elif op == OP_RETURN:
            return (False, R_RETURN_HIT, steps)
        elif op == OP_DROP:
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            stack.pop()
        elif op == OP_DUP:
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            stack.append(stack[-1])
            if len(stack) > MAX_STACK:
                return (False, R_STACK_LIMIT, steps)
        elif op == OP_SWAP:
            if len(stack) < 2:
                return (False, R_STACK_UNDERFLOW, steps)
            stack[-1], stack[-2] = stack[-2], stack[-1]
        elif op == OP_EQUAL or op == OP_EQUALVERIFY:
            if len(stack) < 2:
                return (False, R_STACK_UNDERFLOW, steps)
            a = stack.pop()
            b = stack.pop()
            if op == OP_EQUAL:
                stack.append(TRUE_ITEM if a == b else FALSE_ITEM)
            elif a != b:
                return (False, R_VERIFY_FAILED, steps)
        elif op == OP_SHA256:
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            stack.append(hashlib.sha256(stack.pop()).digest())
        elif op == OP_CHECKSIG or op == OP_CHECKSIGVERIFY:
            if len(stack) < 2:
                return (False, R_STACK_UNDERFLOW, steps)
            pk = stack.pop()
            sig = stack.pop()
            ok = verify(pk, msg, sig)
            if op == OP_CHECKSIG:
                stack.append(TRUE_ITEM if ok else FALSE_ITEM)
            elif not ok:
                return (False, R_VERIFY_FAILED, steps)
        elif op == OP_CHECKMULTISIG:
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            nkeys = _as_small_int(stack.pop())
            if not 1 <= nkeys <= 16:
                return (False, R_TYPE_ERROR, steps)
            if len(stack) < nkeys:
                return (False, R_STACK_UNDERFLOW, steps)
            pks = [stack.pop() for _ in range(nkeys)]
            pks.reverse()
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            m = _as_small_int(stack.pop())
            if not 1 <= m <= nkeys:
                return (False, R_TYPE_ERROR, steps)
            if len(stack) < m:
                return (False, R_STACK_UNDERFLOW, steps)
            sigs = [stack.pop() for _ in range(m)]
            sigs.reverse()
            ok = check_multisig(m, pks, sigs, msg)
            stack.append(TRUE_ITEM if ok else FALSE_ITEM)
        elif op == OP_CHECKLOCKTIME:
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            t_item = stack.pop()
            if len(t_item) != 8:
                return (False, R_TYPE_ERROR, steps)
            t = int.from_bytes(t_item, "little")
            if not_before < 0 or not_before < t:
                return (False, R_VERIFY_FAILED, steps)
        elif op == OP_COVENANT:
            if not covenants_enabled:
                return (False, R_TYPE_ERROR, steps)
            if not stack:
                return (False, R_STACK_UNDERFLOW, steps)
            k = _as_small_int(stack.pop())
            if not 0 <= k <= 32:
                return (False, R_TYPE_ERROR, steps)
            if len(stack) < k:
                return (False, R_STACK_UNDERFLOW, steps)
            allowed = set()
            for _ in range(k):
                h = stack.pop()
                if len(h) != 32:
                    return (False, R_TYPE_ERROR, steps)
                allowed.add(h)
            for h in spend_script_hashes:
                if h not in allowed:
                    return (False, R_VERIFY_FAILED, steps)
        else:
            return (False, R_TYPE_ERROR, steps)

    if cond:
        return (False, R_UNBALANCED_IF, steps)
    if not stack or not any(stack[-1]):
        return (False, R_VERIFY_FAILED, steps)
    return (True, -1, steps)
