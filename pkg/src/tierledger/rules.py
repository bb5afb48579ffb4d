"""Within-system rules: issuance schedule, fee policy, and the optional
allow-list and expiring-money rules. These are hardcoded system behavior,
configured once at genesis and immutable afterwards.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .model import (
    Call,
    Deploy,
    Level,
    ModelError,
    Outpoint,
    Output,
    Transaction,
    UtxoSpend,
    address_of_pubkey,
    require_u64,
)
from .permission import PermissionPolicy

ACCESS_DECLARED = "declared"
ACCESS_DYNAMIC = "dynamic"

# Rule error codes (status registry range 500-599).
FEE_OK = 0
INSUFFICIENT_FEE = 500
GAS_PRICE_TOO_LOW = 501
ALLOW_LIST_VIOLATION = 502


@dataclass(frozen=True)
class SystemConfig:
    """Genesis configuration; immutable for the life of the ledger."""

    max_level: Level = Level.L3
    initial_subsidy: int = 50
    halving_interval: int = 10
    min_fee: int = 0
    min_gas_price: int = 0
    covenants: bool = True
    access_mode: str = ACCESS_DYNAMIC
    allow_list: Optional[frozenset[bytes]] = None
    expiry_enabled: bool = False
    operator_pubkey: bytes = b"\x00" * 32
    deploy_policy: PermissionPolicy = field(default_factory=PermissionPolicy.open)
    call_policy: PermissionPolicy = field(default_factory=PermissionPolicy.open)
    intermediary_registry: tuple[tuple[str, bytes], ...] = ()

    def __post_init__(self) -> None:
        if self.halving_interval < 1:
            raise ModelError("halving_interval must be >= 1")
        if self.access_mode not in (ACCESS_DECLARED, ACCESS_DYNAMIC):
            raise ModelError(f"unknown access mode {self.access_mode!r}")
        if len(self.operator_pubkey) != 32:
            raise ModelError("operator_pubkey must be 32 bytes")
        require_u64(self.initial_subsidy, "initial_subsidy")
        require_u64(self.min_fee, "min_fee")
        require_u64(self.min_gas_price, "min_gas_price")
        for policy in (self.deploy_policy, self.call_policy):
            if policy.kind == "endorsed" and not self.intermediary_registry:
                raise ModelError("endorsed policy requires a non-empty intermediary registry")

    @property
    def operator_address(self) -> bytes:
        return address_of_pubkey(self.operator_pubkey)

    @property
    def registry_pubkeys(self) -> frozenset[bytes]:
        return frozenset(pk for _, pk in self.intermediary_registry)

    def to_json(self) -> dict:
        obj: dict = {
            "max_level": self.max_level.label,
            "initial_subsidy": self.initial_subsidy,
            "halving_interval": self.halving_interval,
            "min_fee": self.min_fee,
            "min_gas_price": self.min_gas_price,
            "covenants": self.covenants,
            "access_mode": self.access_mode,
            "expiry_enabled": self.expiry_enabled,
            "operator_pubkey": self.operator_pubkey.hex(),
            "deploy_policy": self.deploy_policy.to_json(),
            "call_policy": self.call_policy.to_json(),
            "intermediary_registry": [
                {"name": name, "pubkey": pk.hex()} for name, pk in self.intermediary_registry
            ],
        }
        if self.allow_list is not None:
            obj["allow_list"] = sorted(a.hex() for a in self.allow_list)
        return obj

    @staticmethod
    def from_json(obj: Mapping) -> "SystemConfig":
        allow = obj.get("allow_list")
        return SystemConfig(
            max_level=Level.from_label(obj.get("max_level", "L3")),
            initial_subsidy=obj.get("initial_subsidy", 50),
            halving_interval=obj.get("halving_interval", 10),
            min_fee=obj.get("min_fee", 0),
            min_gas_price=obj.get("min_gas_price", 0),
            covenants=obj.get("covenants", True),
            access_mode=obj.get("access_mode", ACCESS_DYNAMIC),
            allow_list=None if allow is None else frozenset(bytes.fromhex(a) for a in allow),
            expiry_enabled=obj.get("expiry_enabled", False),
            operator_pubkey=bytes.fromhex(obj.get("operator_pubkey", "00" * 32)),
            deploy_policy=PermissionPolicy.from_json(obj.get("deploy_policy", {"kind": "open"})),
            call_policy=PermissionPolicy.from_json(obj.get("call_policy", {"kind": "open"})),
            intermediary_registry=tuple(
                (e["name"], bytes.fromhex(e["pubkey"]))
                for e in obj.get("intermediary_registry", [])
            ),
        )

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> bytes:
        """sha256 of the canonical genesis JSON; embedded in every header."""
        return hashlib.sha256(self.to_json_str().encode()).digest()


def subsidy(epoch: int, cfg: SystemConfig) -> int:
    """Issuance for a batch at the given epoch: halving-style geometric
    schedule, floor(initial / 2^(epoch div interval))."""
    halvings = epoch // cfg.halving_interval
    if halvings >= 64:
        return 0
    return cfg.initial_subsidy >> halvings


def check_fee(tx: Transaction, implicit_fee: Optional[int], cfg: SystemConfig) -> int:
    """FEE_OK or an error code. implicit_fee is inputs minus outputs for
    UTXO-style transactions (None for contract transactions)."""
    if isinstance(tx.kind, (Deploy, Call)):
        gas_price = tx.kind.gas_price
        if gas_price < cfg.min_gas_price:
            return GAS_PRICE_TOO_LOW
        return FEE_OK
    assert implicit_fee is not None
    if implicit_fee < cfg.min_fee:
        return INSUFFICIENT_FEE
    return FEE_OK


def check_allow_list(outputs: tuple[Output, ...], cfg: SystemConfig) -> int:
    """Every created output address must be on the allow-list when one is set."""
    if cfg.allow_list is None:
        return FEE_OK
    for out in outputs:
        if out.lock.address() not in cfg.allow_list:
            return ALLOW_LIST_VIOLATION
    return FEE_OK


def apply_expiry(
    utxos: dict[Outpoint, Output], epoch: int, cfg: SystemConfig
) -> tuple[dict[Outpoint, Output], int]:
    """Remove every output with expiry <= epoch (inclusive bound).

    Returns the surviving set and the total expired amount. Applied at
    batch start, before any transaction validation.
    """
    if not cfg.expiry_enabled:
        return utxos, 0
    expired = 0
    survivors: dict[Outpoint, Output] = {}
    for op, out in utxos.items():
        if out.expiry is not None and out.expiry <= epoch:
            expired += out.amount
        else:
            survivors[op] = out
    if expired == 0:
        return utxos, 0
    return survivors, expired
