"""Receipt status code registry (u16), stable across implementations.

0 ok; 1-99 structural; 100-199 utxo engine; 200-299 script (200 + failure
reason); 300-399 contract vm; 400-499 permission; 500-599 rules.
"""

from __future__ import annotations

from . import permission, rules, utxo, vm
from .script.opcodes import REASON_NAMES

OK = 0

# Structural (1-99).
MALFORMED_TX = 1
LEVEL_EXCEEDS_CONFIG = 2
BAD_AUTH = 4

_NAMES: dict[int, str] = {
    OK: "Ok",
    MALFORMED_TX: "MalformedTx",
    LEVEL_EXCEEDS_CONFIG: "LevelExceedsConfig",
    BAD_AUTH: "BadAuth",
    vm.STATUS_BAD_NONCE: "BadNonce",
    utxo.MISSING_INPUT: "MissingInput",
    utxo.DOUBLE_SPEND_IN_BATCH: "DoubleSpendInBatch",
    utxo.EXPIRED_INPUT: "Expired",
    utxo.OUTSIDE_VALIDITY_WINDOW: "OutsideValidityWindow",
    utxo.LOCK_FAILED: "LockFailed",
    utxo.WITNESS_COUNT_MISMATCH: "WitnessCountMismatch",
    utxo.PENDING_ACCEPTED: "PendingAccepted",
    utxo.PENDING_REPLACED: "PendingReplaced",
    utxo.REJECTED_LOWER_FEE: "RejectedLowerFee",
    vm.STATUS_REVERTED: "Reverted",
    vm.STATUS_OUT_OF_GAS: "OutOfGas",
    vm.STATUS_ACCESS_VIOLATION: "AccessViolation",
    vm.STATUS_MALFORMED_CODE: "MalformedCode",
    vm.STATUS_INSUFFICIENT_BALANCE: "InsufficientBalance",
    vm.STATUS_MISSING_ACCESS_DECL: "MissingAccessDecl",
    vm.STATUS_NO_SUCH_CONTRACT: "NoSuchContract",
    permission.NOT_ON_ALLOW_LIST: "NotOnAllowList",
    permission.MISSING_ENDORSEMENT: "MissingEndorsement",
    permission.BAD_ENDORSEMENT_SIGNATURE: "BadEndorsementSignature",
    permission.CREDENTIAL_EXPIRED: "CredentialExpired",
    rules.INSUFFICIENT_FEE: "InsufficientFee",
    rules.GAS_PRICE_TOO_LOW: "GasPriceTooLow",
    rules.ALLOW_LIST_VIOLATION: "AllowListViolation",
}
for _reason, _name in REASON_NAMES.items():
    _NAMES[utxo.SCRIPT_FAILURE_BASE + _reason] = f"ScriptFailed:{_name}"


def name(code: int) -> str:
    return _NAMES.get(code, f"Unknown({code})")
