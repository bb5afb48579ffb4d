"""tierledger: a centralized ledger with pluggable programmability levels.

Levels: L1 signature locks, L1.5 validity windows with a replaceable
pending pool, L2 output scripts with covenants, L3 stateful contracts with
gas metering and declared-access parallel scheduling. Every batch appends a
hash-chained header and per-transaction receipts; anyone holding the log
can replay it and verify every digest.
"""

from .ledger import (
    BatchHeader,
    LedgerState,
    Receipt,
    ReplayReport,
    apply_batch,
    replay_verify,
    state_digest,
)
from .model import (
    Level,
    Lock,
    Outpoint,
    Output,
    Transaction,
    classify_level,
    txid,
)
from .rules import SystemConfig

__all__ = [
    "BatchHeader",
    "LedgerState",
    "Level",
    "Lock",
    "Outpoint",
    "Output",
    "Receipt",
    "ReplayReport",
    "SystemConfig",
    "Transaction",
    "apply_batch",
    "classify_level",
    "replay_verify",
    "state_digest",
    "txid",
]

__version__ = "0.1.0"
