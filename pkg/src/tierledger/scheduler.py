"""Batch execution of contract transactions.

Dynamic mode runs strictly serially in submission order. Declared mode
builds a conflict graph from access declarations (a conflict is one
transaction's written set intersecting another's read-or-written set over
balances and storage keys, with callee footprints folded in) and executes
conflict-free waves on a process pool. The committed result is
extensionally identical to serial execution in submission order because
transactions within a wave touch disjoint state, and fee credits commute.
"""

from __future__ import annotations

import multiprocessing
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from . import vm
from .model import Call, Deploy, Transaction
from .rules import ACCESS_DECLARED, SystemConfig

# Waves cheaper than this many gas units run inline; forking workers for
# tiny batches would cost more than it saves.
PARALLEL_MIN_GAS = 50_000

DEFAULT_WORKERS = 4


@dataclass
class Telemetry:
    """Scheduler observability: wave structure and per-transaction worker
    assignment, enough to demonstrate actual concurrency."""

    mode: str = "dynamic"
    waves: list[list[int]] = field(default_factory=list)
    parallel_waves: int = 0
    worker_pids: dict[int, int] = field(default_factory=dict)
    spans: dict[int, tuple[float, float]] = field(default_factory=dict)

    def max_concurrency(self) -> int:
        """Largest number of transactions whose execution spans overlap."""
        events: list[tuple[float, int]] = []
        for start, end in self.spans.values():
            events.append((start, 1))
            events.append((end, -1))
        events.sort()
        best = cur = 0
        for _, delta in events:
            cur += delta
            best = max(best, cur)
        return best


@dataclass(frozen=True)
class _Item:
    index: int
    tx: Transaction
    tx_id: bytes


def _execute_one(
    accounts: vm.Accounts,
    item: _Item,
    epoch: int,
    operator: bytes,
    declared: bool,
) -> vm.StateDiff:
    if isinstance(item.tx.kind, Deploy):
        return vm.deploy(accounts, item.tx, item.tx_id, operator)
    return vm.invoke(accounts, item.tx, item.tx_id, epoch, operator, declared)


# Fork-inherited state for pool workers: set in the parent immediately
# before the pool is created, so children see it without pickling.
_FORK_STATE: dict = {}


def _worker(index: int) -> tuple[int, vm.StateDiff, int, float, float]:
    st = _FORK_STATE
    start = time.monotonic()
    diff = _execute_one(st["accounts"], st["items"][index], st["epoch"], st["operator"], True)
    end = time.monotonic()
    return index, diff, os.getpid(), start, end


def _footprint_sets(
    item: _Item, accounts: vm.Accounts, operator: bytes
) -> tuple[Optional[set], Optional[set], bool]:
    """(reads, writes, barrier) for conflict analysis. Keys are tagged
    tuples over balances and storage slots. A barrier transaction conflicts
    with everything (deploys, and anything touching the operator, whose fee
    income is otherwise exempt from conflict analysis)."""
    k = item.tx.kind
    if isinstance(k, Deploy):
        return None, None, True
    assert isinstance(k, Call)
    if k.access is None:
        # Rejected before execution in declared mode: no footprint at all.
        return set(), set(), False
    fp = vm.effective_footprint(k.access, k.contract, accounts.contracts)
    reads = {("bal", a) for a in fp.balances_read}
    reads |= {("sto", a, key) for a, key in fp.storage_read}
    writes = {("bal", a) for a in fp.balances_written}
    writes |= {("sto", a, key) for a, key in fp.storage_written}
    # Implicit per-transaction writes: caller (fees, attached value) and the
    # callee's balance (attached value).
    writes.add(("bal", k.caller))
    writes.add(("bal", k.contract))
    barrier = k.caller == operator or ("bal", operator) in (reads | writes)
    return reads, writes, barrier


def _conflict_waves(
    items: Sequence[_Item], accounts: vm.Accounts, operator: bytes
) -> list[list[int]]:
    """Partition into waves: tx j lands one level past the deepest earlier
    transaction it conflicts with, so each wave is pairwise conflict-free."""
    n = len(items)
    sets = [_footprint_sets(it, accounts, operator) for it in items]
    level = [0] * n
    for j in range(n):
        rj, wj, bj = sets[j]
        for i in range(j):
            ri, wi, bi = sets[i]
            if bi or bj:
                conflict = True
            else:
                conflict = bool(wi & (rj | wj)) or bool(wj & (ri | wi))
            if conflict:
                level[j] = max(level[j], level[i] + 1)
    waves: dict[int, list[int]] = {}
    for j in range(n):
        waves.setdefault(level[j], []).append(j)
    return [waves[lv] for lv in sorted(waves)]


def schedule_batch(
    accounts: vm.Accounts,
    items: Sequence[tuple[Transaction, bytes]],
    epoch: int,
    cfg: SystemConfig,
    on_commit: Optional[Callable[[int, vm.ExecOutcome], None]] = None,
    workers: int = DEFAULT_WORKERS,
    parallel_min_gas: int = PARALLEL_MIN_GAS,
) -> tuple[list[vm.ExecOutcome], Telemetry]:
    """Execute contract transactions and commit their effects into accounts.

    items are (transaction, txid) in submission order; on_commit fires right
    after each transaction's diff is applied, in a deterministic order
    (submission order within each wave).
    """
    operator = cfg.operator_address
    declared = cfg.access_mode == ACCESS_DECLARED
    wrapped = [_Item(i, tx, tx_id) for i, (tx, tx_id) in enumerate(items)]
    outcomes: list[Optional[vm.ExecOutcome]] = [None] * len(wrapped)
    telemetry = Telemetry(mode=cfg.access_mode)

    def commit(item: _Item, diff: vm.StateDiff) -> None:
        diff.apply(accounts, operator)
        outcomes[item.index] = diff.outcome
        if on_commit is not None:
            on_commit(item.index, diff.outcome)

    if not declared:
        telemetry.waves = [[it.index] for it in wrapped]
        for item in wrapped:
            commit(item, _execute_one(accounts, item, epoch, operator, False))
        return [o for o in outcomes if o is not None], telemetry

    waves = _conflict_waves(wrapped, accounts, operator)
    telemetry.waves = [[wrapped[j].index for j in wave] for wave in waves]
    for wave in waves:
        wave_items = [wrapped[j] for j in wave]
        gas_in_wave = sum(_gas_limit(it.tx) for it in wave_items)
        if len(wave_items) >= 2 and workers > 1 and gas_in_wave >= parallel_min_gas:
            results = _run_parallel(accounts, wave_items, epoch, operator, workers)
            telemetry.parallel_waves += 1
            for idx, diff, pid, start, end in sorted(results):
                item = wave_items[idx]
                telemetry.worker_pids[item.index] = pid
                telemetry.spans[item.index] = (start, end)
                commit(item, diff)
        else:
            for item in wave_items:
                commit(item, _execute_one(accounts, item, epoch, operator, True))
    return [o for o in outcomes if o is not None], telemetry


def _gas_limit(tx: Transaction) -> int:
    k = tx.kind
    return k.gas_limit if isinstance(k, (Call, Deploy)) else 0


def _run_parallel(
    accounts: vm.Accounts,
    wave_items: list[_Item],
    epoch: int,
    operator: bytes,
    workers: int,
) -> list[tuple[int, vm.StateDiff, int, float, float]]:
    global _FORK_STATE
    # Workers execute against the shared pre-state snapshot; within a wave
    # nothing they read is written by a sibling, so pre-state reads are the
    # same values serial execution would see.
    _FORK_STATE = {
        "accounts": accounts,
        "items": wave_items,
        "epoch": epoch,
        "operator": operator,
    }
    ctx = multiprocessing.get_context("fork")
    nproc = min(workers, len(wave_items))
    try:
        with ctx.Pool(processes=nproc) as pool:
            return pool.map(_worker, range(len(wave_items)))
    finally:
        _FORK_STATE = {}
