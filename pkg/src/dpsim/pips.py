"""Payment interface providers: onboarding, payloads, and holding limits.

A payment is split into two artifacts that travel separately: a rail
message that carries account references, amounts and a payload digest
(never any personal data), and a confidential payload that carries the
names, addresses and purpose text. The payload moves only between the
payer side, the payee side and whichever relay the topology assigns;
the digest is the join key the auditor uses to pair the two halves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .events import content_digest
from .ledger import check_amount


class PipError(Exception):
    pass


class DuplicateOnboardingError(PipError):
    pass


class CustomerNotVerifiedError(PipError):
    pass


class HoldingLimitError(PipError):
    """Denied: the user's aggregate wallet total would exceed their limit."""


class RegistryUnavailableError(HoldingLimitError):
    """Registry unreachable; limit checks fail closed."""


KYC_VERIFIED = "verified"
KYC_REJECTED = "rejected"
KYC_PENDING = "pending"


class KycRuleTable:
    """Deterministic stand-in for an identity service provider."""

    def __init__(self, sanctioned_names: tuple[str, ...] = ()):
        self.sanctioned = {name.lower() for name in sanctioned_names}

    def decide(self, pii: dict) -> str:
        name = str(pii.get("name", "")).lower()
        if not name:
            return KYC_REJECTED
        if name in self.sanctioned:
            return KYC_REJECTED
        return KYC_VERIFIED


@dataclass
class CustomerProfile:
    user: str
    pii: dict
    kyc_status: str
    kyc_provider: str
    wallets: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ConfidentialPayload:
    msg_id: str
    payer_name: str
    payer_address: str
    payee_name: str
    purpose: str

    def to_record(self) -> dict:
        return {
            "msg_id": self.msg_id,
            "payer_name": self.payer_name,
            "payer_address": self.payer_address,
            "payee_name": self.payee_name,
            "purpose": self.purpose,
        }

    def digest(self) -> str:
        return content_digest(self.to_record())


@dataclass(frozen=True)
class RailMessage:
    """PII-free clearing half of a payment."""

    msg_id: str
    payer_ref: str
    payee_ref: str
    amount: int
    payload_digest: str
    lock_ref: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "msg_id": self.msg_id,
            "payer_ref": self.payer_ref,
            "payee_ref": self.payee_ref,
            "amount": self.amount,
            "payload_digest": self.payload_digest,
            "lock_ref": self.lock_ref,
        }


class Pip:
    """Per-provider customer book and delivered-payload store."""

    def __init__(self, pip_id: str):
        self.pip_id = pip_id
        self.profiles: dict[str, CustomerProfile] = {}
        self.payloads: dict[str, ConfidentialPayload] = {}

    def onboard_customer(self, user: str, pii: dict, provider: str, decision: str) -> CustomerProfile:
        if user in self.profiles:
            raise DuplicateOnboardingError(f"{user!r} already onboarded at {self.pip_id}")
        profile = CustomerProfile(user=user, pii=dict(pii), kyc_status=decision, kyc_provider=provider)
        self.profiles[user] = profile
        return profile

    def require_verified(self, user: str) -> CustomerProfile:
        profile = self.profiles.get(user)
        if profile is None or profile.kyc_status != KYC_VERIFIED:
            status = profile.kyc_status if profile else "absent"
            raise CustomerNotVerifiedError(f"{user!r} at {self.pip_id} is {status}")
        return profile

    def store_payload(self, payload: ConfidentialPayload) -> bool:
        """Deduplicating store; returns False for a repeat delivery."""
        if payload.msg_id in self.payloads:
            return False
        self.payloads[payload.msg_id] = payload
        return True


class HoldingLimitRegistry:
    """Cross-provider registry of per-user limits and wallet registrations.

    A user's digital pound wallets share one aggregate limit no matter how
    many providers hold them; the boundary is inclusive (a prospective
    total exactly at the limit is allowed).
    """

    def __init__(self):
        self.limits: dict[str, int] = {}
        self.wallets: dict[str, list[str]] = {}

    def register_wallet(self, user: str, wallet: str, limit: int) -> None:
        check_amount(limit)
        known = self.limits.get(user)
        if known is None:
            self.limits[user] = limit
        elif known != limit:
            raise HoldingLimitError(
                f"{user!r} already registered with limit {known}; wallets share one limit"
            )
        self.wallets.setdefault(user, [])
        if wallet not in self.wallets[user]:
            self.wallets[user].append(wallet)

    def wallets_of(self, user: str) -> list[str]:
        return list(self.wallets.get(user, []))

    def limit_of(self, user: str) -> Optional[int]:
        return self.limits.get(user)

    def decide(self, user: str, prospective_totals: list[int]) -> str:
        """Allow or deny a prospective set of wallet totals for a user."""
        limit = self.limits.get(user)
        if limit is None:
            return "allow"
        return "allow" if sum(prospective_totals) <= limit else "deny"

    def check_credit(self, user: str, wallet_totals: dict[str, int], wallet: str, amount: int) -> None:
        """Gate a credit of ``amount`` into ``wallet``; raises on deny."""
        prospective = dict(wallet_totals)
        prospective[wallet] = prospective.get(wallet, 0) + amount
        totals = [prospective[w] for w in self.wallets_of(user) if w in prospective]
        if self.decide(user, totals) == "deny":
            raise HoldingLimitError(
                f"{user!r}: aggregate {sum(totals)} would exceed limit {self.limits[user]}"
            )
