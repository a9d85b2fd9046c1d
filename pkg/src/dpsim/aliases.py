"""Alias registration, resolution, and validation for wallets.

A store holds full records (alias -> wallet + routing participant). Under
the federated deployment each participant's store keeps full records only
for its own registrations and replicates ownership stubs for everyone
else's, so lookups from elsewhere must be routed to the owning store.
Conflicting claims converge by first-writer-wins with a deterministic
(tick, registrant id) tie-break.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

MOBILE_NUMBER = "mobile-number"
CARD_NUMBER = "card-number"
HANDLE = "handle"

_FORMATS = {
    MOBILE_NUMBER: re.compile(r"^\+\d{10,14}$"),
    CARD_NUMBER: re.compile(r"^\d{16}$"),
    HANDLE: re.compile(r"^[a-z][a-z0-9._-]{2,31}$"),
}


class AliasError(Exception):
    pass


class MalformedAliasError(AliasError):
    pass


class DuplicateAliasError(AliasError):
    pass


class UnknownAliasError(AliasError):
    pass


class DirectoryUnavailableError(AliasError):
    """The store that owns the record cannot be reached."""


def check_alias_format(alias: str, alias_type: str) -> None:
    pattern = _FORMATS.get(alias_type)
    if pattern is None:
        raise MalformedAliasError(f"unknown alias type {alias_type!r}")
    if not pattern.match(alias):
        raise MalformedAliasError(f"{alias!r} is not a well-formed {alias_type}")


def card_issuer_prefix(card_number: str) -> str:
    check_alias_format(card_number, CARD_NUMBER)
    return card_number[:6]


@dataclass
class AliasRecord:
    alias: str
    alias_type: str
    wallet: str
    registering_pip: str
    registered_at: int
    status: str = "active"  # active | retired


@dataclass(frozen=True)
class AliasClaim:
    """Ownership stub replicated between federated stores (no wallet inside)."""

    alias: str
    alias_type: str
    owner: str
    tick: int

    def beats(self, other: "AliasClaim") -> bool:
        return (self.tick, self.owner) < (other.tick, other.owner)


class AliasStore:
    """One physical store; ``host`` is the participant operating it."""

    def __init__(self, host: str):
        self.host = host
        self.records: dict[str, AliasRecord] = {}
        self.claims: dict[str, AliasClaim] = {}

    def register(self, alias: str, alias_type: str, wallet: str, pip: str, now: int) -> AliasRecord:
        check_alias_format(alias, alias_type)
        existing = self.records.get(alias)
        if existing is not None:
            # Retired aliases stay quarantined for the rest of the scenario.
            raise DuplicateAliasError(f"alias {alias!r} already {existing.status}")
        if alias in self.claims and self.claims[alias].owner != pip:
            raise DuplicateAliasError(f"alias {alias!r} already claimed by {self.claims[alias].owner}")
        record = AliasRecord(alias, alias_type, wallet, pip, now)
        self.records[alias] = record
        self.claims[alias] = AliasClaim(alias, alias_type, pip, now)
        return record

    def apply_claim(self, claim: AliasClaim) -> Optional[AliasClaim]:
        """Merge a replicated claim; returns the claim that lost, if any."""
        current = self.claims.get(claim.alias)
        if current is None:
            self.claims[claim.alias] = claim
            return None
        if current == claim:
            return None
        if claim.beats(current):
            self.claims[claim.alias] = claim
            loser = current
        else:
            loser = claim
        # If this store held the losing full record, drop it: the alias
        # belongs to the winning registrant everywhere.
        record = self.records.get(claim.alias)
        if record is not None and record.registering_pip == loser.owner:
            del self.records[claim.alias]
        return loser

    def resolve(self, alias: str) -> AliasRecord:
        record = self.records.get(alias)
        if record is None:
            raise UnknownAliasError(f"alias {alias!r} not registered here")
        if record.status != "active":
            raise UnknownAliasError(f"alias {alias!r} is retired")
        return record

    def owner_of(self, alias: str) -> Optional[str]:
        claim = self.claims.get(alias)
        return claim.owner if claim else None

    def validate(self, alias: str) -> bool:
        """Existence check only; never discloses the wallet mapping."""
        record = self.records.get(alias)
        if record is not None:
            return record.status == "active"
        return alias in self.claims

    def retire(self, alias: str) -> None:
        record = self.records.get(alias)
        if record is None:
            raise UnknownAliasError(f"alias {alias!r} not registered here")
        record.status = "retired"

    def active_aliases(self) -> list[str]:
        return sorted(a for a, r in self.records.items() if r.status == "active")
