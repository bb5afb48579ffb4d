"""Creation/call permissioning: open, allow-list, and intermediary-endorsed
policies at both granularities."""

from __future__ import annotations

import pytest

from helpers import KEYS
from tierledger import crypto, permission
from tierledger.model import EndorsementData, ModelError, sha256

USER, OTHER, BANK, STRANGER = KEYS[1], KEYS[2], KEYS[3], KEYS[4]
TXID = sha256(b"some-tx")
REGISTRY = frozenset({BANK.pubkey})


def auth(policy, endorsement=None, user=USER.pubkey, epoch=5, registry=REGISTRY):
    return permission.authorize(TXID, user, endorsement, policy, registry, epoch)


def test_open_policy_admits_everyone():
    assert auth(permission.PermissionPolicy.open()) == permission.AUTH_OK
    assert auth(permission.PermissionPolicy.open(), user=None) == permission.AUTH_OK


def test_allow_list_policy():
    policy = permission.PermissionPolicy.allow_list([USER.pubkey])
    assert auth(policy) == permission.AUTH_OK
    assert auth(policy, user=OTHER.pubkey) == permission.NOT_ON_ALLOW_LIST
    assert auth(policy, user=None) == permission.NOT_ON_ALLOW_LIST


def test_per_transaction_endorsement():
    policy = permission.PermissionPolicy.endorsed("per_transaction")
    good = permission.endorse_transaction(BANK.seed, TXID)
    assert auth(policy, good) == permission.AUTH_OK
    assert auth(policy) == permission.MISSING_ENDORSEMENT
    other_tx = permission.endorse_transaction(BANK.seed, sha256(b"other"))
    assert auth(policy, other_tx) == permission.BAD_ENDORSEMENT_SIGNATURE
    outsider = permission.endorse_transaction(STRANGER.seed, TXID)
    assert auth(policy, outsider) == permission.BAD_ENDORSEMENT_SIGNATURE  # not in registry


def test_per_user_credential():
    policy = permission.PermissionPolicy.endorsed("per_user")
    cred = permission.issue_credential(BANK.seed, USER.pubkey, expiry=10)
    assert auth(policy, cred) == permission.AUTH_OK
    assert auth(policy, cred, epoch=10) == permission.AUTH_OK
    assert auth(policy, cred, epoch=11) == permission.CREDENTIAL_EXPIRED
    assert auth(policy, cred, user=OTHER.pubkey) == permission.BAD_ENDORSEMENT_SIGNATURE
    forged = EndorsementData("per_user", BANK.pubkey, b"\x00" * 64, user_pubkey=USER.pubkey, expiry=10)
    assert auth(policy, forged) == permission.BAD_ENDORSEMENT_SIGNATURE


def test_granularity_must_match_policy():
    per_tx = permission.endorse_transaction(BANK.seed, TXID)
    assert auth(permission.PermissionPolicy.endorsed("per_user"), per_tx) == permission.MISSING_ENDORSEMENT
    cred = permission.issue_credential(BANK.seed, USER.pubkey, expiry=10)
    assert auth(permission.PermissionPolicy.endorsed("per_transaction"), cred) == permission.MISSING_ENDORSEMENT


def test_policy_json_round_trip_and_guards():
    for policy in (
        permission.PermissionPolicy.open(),
        permission.PermissionPolicy.allow_list([USER.pubkey, OTHER.pubkey]),
        permission.PermissionPolicy.endorsed("per_user"),
        permission.PermissionPolicy.endorsed("per_transaction"),
    ):
        assert permission.PermissionPolicy.from_json(policy.to_json()) == policy
    with pytest.raises(ModelError):
        permission.PermissionPolicy("vip")
    with pytest.raises(ModelError):
        permission.PermissionPolicy.endorsed("per_galaxy")
