"""Compare the two script execution kernels (pure Python vs compiled) on a
mixed workload: signature checks, hash puzzles, branches, and loop-heavy
adversarial programs.

Usage: python benchmarks/bench_script.py [iterations]
"""

from __future__ import annotations

import random
import statistics
import sys
import time

from tierledger import crypto, script
from tierledger.script import ScriptContext, assemble, execute


def build_workload(rng: random.Random):
    kp = crypto.keygen(b"\x09" * 32)
    msg = bytes(32)
    sig = crypto.sign(kp.seed, msg)
    pk = kp.pubkey.hex()
    cases = [
        (assemble(f"PUSH({pk}) CHECKSIG"), (sig,)),
        (assemble(f"DUP SHA256 PUSH({pk}) SWAP DROP CHECKSIG"), (sig,)),
        (assemble("TRUE IF TRUE ELSE FALSE ENDIF VERIFY TRUE"), ()),
        (assemble("PUSH(ab) PUSH(ab) EQUALVERIFY TRUE"), ()),
        (bytes([0x51, 0x75]) * 4000, ()),  # step-limit territory
        (bytes([0x51]) * 300, ()),  # stack-limit territory
    ]
    for _ in range(40):
        code = bytes(rng.choice([0x00, 0x51, 0x75, 0x76, 0x7C, 0x87, 0xA8]) for _ in range(30))
        cases.append((code, (b"\x01", b"\x02")))
    return cases, msg


def bench(kernel: str, cases, msg, iterations: int) -> float:
    ctx = ScriptContext(signing_message=msg)
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(iterations):
            for code, witness in cases:
                execute(code, witness, ctx, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    cases, msg = build_workload(random.Random(1))
    print(f"default kernel: {script.KERNEL}")
    t_pure = bench("pure", cases, msg, iterations)
    print(f"pure:     {t_pure:.3f}s ({iterations} x {len(cases)} scripts)")
    if script.KERNEL != "compiled":
        print("compiled kernel not built; skipping comparison")
        return 0
    t_comp = bench("compiled", cases, msg, iterations)
    print(f"compiled: {t_comp:.3f}s ({iterations} x {len(cases)} scripts)")
    print(f"speedup:  {t_pure / t_comp:.2f}x")
    # Sanity: both kernels agree on every case.
    ctx = ScriptContext(signing_message=msg)
    for code, witness in cases:
        a = execute(code, witness, ctx, kernel="pure")
        b = execute(code, witness, ctx, kernel="compiled")
        assert (a.success, a.reason, a.steps) == (b.success, b.reason, b.steps)
    print("kernels agree on the whole workload")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
