"""Validation and application of UTXO transactions (Levels 1/1.5/2),
plus the pending/replaceable pool for time-locked transactions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from . import crypto, rules, script
from .model import (
    LOCK_MULTISIG,
    LOCK_PUBKEY,
    LOCK_SCRIPT,
    ModelError,
    Outpoint,
    Output,
    Transaction,
    UtxoSpend,
    Witness,
    sha256,
)

# Rejection codes (status registry range 100-199; script lock failures are
# reported as 200 + interpreter reason).
OK = 0
MISSING_INPUT = 100
DOUBLE_SPEND_IN_BATCH = 101
EXPIRED_INPUT = 102
OUTSIDE_VALIDITY_WINDOW = 103
INSUFFICIENT_FEE = rules.INSUFFICIENT_FEE
LOCK_FAILED = 105
WITNESS_COUNT_MISMATCH = 106
PENDING_ACCEPTED = 110
PENDING_REPLACED = 111
REJECTED_LOWER_FEE = 112

SCRIPT_FAILURE_BASE = 200


@dataclass(frozen=True)
class Rejection:
    code: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.code == OK


ACCEPT = Rejection(OK)


def spend_script_hashes(outputs: Sequence[Output]) -> tuple[bytes, ...]:
    """Hashes of the spending transaction's output locks, as seen by the
    COVENANT opcode."""
    return tuple(sha256(out.lock.serialize()) for out in outputs)


def check_window(tx: Transaction, epoch: int) -> bool:
    if tx.not_before is not None and epoch < tx.not_before:
        return False
    if tx.not_after is not None and epoch > tx.not_after:
        return False
    return True


def check_inputs(
    tx_id: bytes,
    tx: Transaction,
    inputs: Sequence[Outpoint],
    witnesses: Sequence[Witness],
    utxos: Mapping[Outpoint, Output],
    epoch: int,
    cfg: rules.SystemConfig,
    out_hashes: tuple[bytes, ...],
    spent_in_batch: Optional[set[Outpoint]] = None,
    allow_script_locks: bool = True,
) -> tuple[Rejection, int]:
    """Existence, expiry, and lock checks for a list of inputs.

    Returns (rejection, total input value). spent_in_batch tracks outpoints
    consumed earlier in the same batch validation.
    """
    if len(witnesses) != len(inputs):
        return Rejection(WITNESS_COUNT_MISMATCH, "one witness per input required"), 0
    seen: set[Outpoint] = set()
    total_in = 0
    for i, op in enumerate(inputs):
        if op in seen or (spent_in_batch is not None and op in spent_in_batch):
            return Rejection(DOUBLE_SPEND_IN_BATCH, f"input {i}"), 0
        seen.add(op)
        out = utxos.get(op)
        if out is None:
            return Rejection(MISSING_INPUT, f"input {i}"), 0
        if cfg.expiry_enabled and out.expiry is not None and out.expiry <= epoch:
            return Rejection(EXPIRED_INPUT, f"input {i}"), 0
        total_in += out.amount
        msg = crypto.utxo_signing_message(tx_id, i)
        wit = witnesses[i]
        lock = out.lock
        if lock.kind == LOCK_PUBKEY:
            if len(wit) != 1 or not crypto.verify(lock.pubkey, msg, wit[0]):
                return Rejection(LOCK_FAILED, f"input {i}"), 0
        elif lock.kind == LOCK_MULTISIG:
            if not crypto.check_multisig(lock.m, lock.pubkeys, list(wit), msg):
                return Rejection(LOCK_FAILED, f"input {i}"), 0
        elif lock.kind == LOCK_SCRIPT:
            if not allow_script_locks:
                return Rejection(LOCK_FAILED, f"input {i}: script locks cannot move to account"), 0
            ctx = script.ScriptContext(
                signing_message=msg,
                not_before=tx.not_before,
                spend_script_hashes=out_hashes,
                covenants_enabled=cfg.covenants,
            )
            result = script.execute(lock.script, wit, ctx)
            if not result.success:
                return (
                    Rejection(SCRIPT_FAILURE_BASE + result.reason, f"input {i}: {result.reason_name}"),
                    0,
                )
        else:  # pragma: no cover - Lock constructor rejects unknown kinds
            return Rejection(LOCK_FAILED, f"input {i}: unknown lock"), 0
    return ACCEPT, total_in


def validate_utxo_tx(
    tx: Transaction,
    tx_id: bytes,
    utxos: Mapping[Outpoint, Output],
    epoch: int,
    cfg: rules.SystemConfig,
    spent_in_batch: Optional[set[Outpoint]] = None,
) -> tuple[Rejection, int]:
    """Full validation of a UtxoSpend. Returns (rejection, implicit fee)."""
    assert isinstance(tx.kind, UtxoSpend)
    if not check_window(tx, epoch):
        return Rejection(OUTSIDE_VALIDITY_WINDOW), 0
    out_hashes = spend_script_hashes(tx.kind.outputs)
    rej, total_in = check_inputs(
        tx_id,
        tx,
        tx.kind.inputs,
        tx.witnesses,
        utxos,
        epoch,
        cfg,
        out_hashes,
        spent_in_batch,
    )
    if not rej.ok:
        return rej, 0
    total_out = sum(out.amount for out in tx.kind.outputs)
    if total_out > total_in:
        return Rejection(INSUFFICIENT_FEE, "outputs exceed inputs"), 0
    fee = total_in - total_out
    code = rules.check_fee(tx, fee, cfg)
    if code != rules.FEE_OK:
        return Rejection(code), 0
    code = rules.check_allow_list(tx.kind.outputs, cfg)
    if code != rules.FEE_OK:
        return Rejection(code), 0
    return ACCEPT, fee


def apply_utxo_tx(
    utxos: dict[Outpoint, Output], tx: Transaction, tx_id: bytes
) -> None:
    """Remove inputs, insert outputs at (txid, 0..k). Caller must have
    validated the transaction against this exact set."""
    assert isinstance(tx.kind, UtxoSpend)
    for op in tx.kind.inputs:
        del utxos[op]
    for i, out in enumerate(tx.kind.outputs):
        utxos[Outpoint(tx_id, i)] = out


# ---------------------------------------------------------------------------
# Pending pool for replaceable time-locked transactions


@dataclass(frozen=True)
class PoolEntry:
    tx: Transaction
    tx_id: bytes
    fee: int


@dataclass
class PendingPool:
    """Transactions whose not_before is still in the future; at most one
    pending transaction per outpoint, replaceable by strictly higher fee."""

    by_outpoint: dict[Outpoint, PoolEntry] = field(default_factory=dict)

    def _outpoints(self, tx: Transaction) -> tuple[Outpoint, ...]:
        assert isinstance(tx.kind, UtxoSpend)
        return tx.kind.inputs

    def submit(self, tx: Transaction, tx_id: bytes, fee: int) -> tuple[int, list[bytes]]:
        """Returns (PENDING_ACCEPTED | PENDING_REPLACED | REJECTED_LOWER_FEE,
        txids of evicted entries)."""
        conflicts = {
            e.tx_id: e for op in self._outpoints(tx) if (e := self.by_outpoint.get(op)) is not None
        }
        if any(e.fee >= fee for e in conflicts.values()):
            return REJECTED_LOWER_FEE, []
        evicted = []
        if conflicts:
            for e in conflicts.values():
                for op in self._outpoints(e.tx):
                    self.by_outpoint.pop(op, None)
                evicted.append(e.tx_id)
        entry = PoolEntry(tx, tx_id, fee)
        for op in self._outpoints(tx):
            self.by_outpoint[op] = entry
        return (PENDING_REPLACED if evicted else PENDING_ACCEPTED), evicted

    def drain(self, epoch: int) -> list[PoolEntry]:
        """Remove and return entries mature at epoch, fee-descending then
        txid-ascending."""
        mature = {
            e.tx_id: e
            for e in self.by_outpoint.values()
            if e.tx.not_before is None or e.tx.not_before <= epoch
        }
        for e in mature.values():
            for op in self._outpoints(e.tx):
                self.by_outpoint.pop(op, None)
        return sorted(mature.values(), key=lambda e: (-e.fee, e.tx_id))

    def entries(self) -> list[PoolEntry]:
        return sorted({e.tx_id: e for e in self.by_outpoint.values()}.values(), key=lambda e: e.tx_id)
