"""Simulated card scheme and ATM network integration.

Authorization places a hold (a kernel funds lock whose condition tag is
the transaction id) on the paying wallet; clearing draws the final
amount from the hold and releases the residual. All value moves through
kernel or interop-rail operations: wallet-to-wallet purchases draw the
hold down directly on the core ledger, cross-form legs go through a
clearing instruction that cites the hold, and physical cash moves only
between pools. Declines are normal outcomes with machine-readable
reasons, never exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .aliases import card_issuer_prefix
from .fmi import ClearingInstruction, Fmi, SETTLED
from .ledger import InsufficientFundsError, LedgerError, LockState, MoneyForm
from .money import MoneySystem, _noop_emit
from .pips import HoldingLimitError, HoldingLimitRegistry

TICKS_PER_DAY = 100
HOLD_EXPIRY_DAYS = 7  # mirrors card-hold practice

POS_PURCHASE = "pos-purchase"
ATM_WITHDRAWAL = "atm-withdrawal"
ATM_DEPOSIT = "atm-deposit"

DECLINE_BAD_CARD = "bad-card"
DECLINE_BAD_AUTH = "bad-auth"
DECLINE_INSUFFICIENT = "insufficient"
DECLINE_LIMIT = "limit"


class SchemeError(Exception):
    pass


class PrefixOwnershipError(SchemeError):
    pass


class UnknownTransactionError(SchemeError):
    pass


class ClearingStateError(SchemeError):
    pass


class OverClearingError(SchemeError):
    pass


def luhn_digit(partial: str) -> str:
    total = 0
    for i, ch in enumerate(reversed(partial)):
        d = int(ch)
        if i % 2 == 0:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return str((10 - total % 10) % 10)


@dataclass
class CardCredential:
    card_number: str
    wallet: str
    issuing_pip: str
    auth_secret: str


@dataclass
class SchemeTransaction:
    txn_id: str
    kind: str
    card_number: str
    wallet: str
    amount: int
    auth_state: str  # authorized | declined
    decline_reason: str = ""
    credit_ref: Optional[tuple[str, str]] = None  # (ledger, account)
    debit_ref: Optional[tuple[str, str]] = None
    hold_lock_id: Optional[str] = None
    cleared_amount: Optional[int] = None
    state: str = "open"  # open | cleared | expired | declined


class SchemeAdapter:
    """One scheme network actor (instantiated per card scheme / ATM network)."""

    def __init__(
        self,
        network_id: str,
        money: MoneySystem,
        rail: Fmi,
        registry: HoldingLimitRegistry,
        emit: Callable = _noop_emit,
    ):
        self.network_id = network_id
        self.money = money
        self.rail = rail
        self.registry = registry
        self._emit = emit
        self.cards: dict[str, CardCredential] = {}
        self.transactions: dict[str, SchemeTransaction] = {}
        self._card_seq = 0
        self._txn_seq = 0

    # -- issuance -------------------------------------------------------------

    def issue_card(
        self, pip: str, wallet: str, issuer_prefix: str, secret: str, owned_prefixes: set[str]
    ) -> CardCredential:
        if issuer_prefix not in owned_prefixes:
            raise PrefixOwnershipError(
                f"{pip} has no issuing partner for prefix {issuer_prefix!r}"
            )
        self.money.core._account(wallet)
        self._card_seq += 1
        partial = f"{issuer_prefix}{self._card_seq:09d}"
        card_number = partial + luhn_digit(partial)
        assert card_issuer_prefix(card_number) == issuer_prefix
        credential = CardCredential(card_number, wallet, pip, secret)
        self.cards[card_number] = credential
        return credential

    # -- authorization ----------------------------------------------------------

    def _decline(self, txn: SchemeTransaction, reason: str) -> SchemeTransaction:
        txn.auth_state = "declined"
        txn.decline_reason = reason
        txn.state = "declined"
        self._emit(
            "scheme-auth", network=self.network_id, txn_id=txn.txn_id, kind=txn.kind,
            amount=txn.amount, outcome="declined", reason=reason,
        )
        return txn

    def authorize(
        self,
        card_number: str,
        secret: str,
        amount: int,
        kind: str,
        credit_ref: Optional[tuple[str, str]] = None,
        debit_ref: Optional[tuple[str, str]] = None,
        now: int = 0,
    ) -> SchemeTransaction:
        self._txn_seq += 1
        txn_id = f"{self.network_id}-txn-{self._txn_seq:04d}"
        card = self.cards.get(card_number)
        txn = SchemeTransaction(
            txn_id=txn_id, kind=kind, card_number=card_number,
            wallet=card.wallet if card else "", amount=amount, auth_state="pending",
            credit_ref=credit_ref, debit_ref=debit_ref,
        )
        self.transactions[txn_id] = txn
        if card is None:
            return self._decline(txn, DECLINE_BAD_CARD)
        if secret != card.auth_secret:
            return self._decline(txn, DECLINE_BAD_AUTH)

        if kind in (POS_PURCHASE, ATM_WITHDRAWAL):
            # Hold: kernel lock keyed to this transaction; the drawdown route
            # (direct or via the interop rail) is fixed by the credit target.
            beneficiary = (
                credit_ref[1] if credit_ref and credit_ref[0] == "core" else "rail"
            )
            try:
                receipt = self.money.core.lock_funds(
                    f"hold:{txn_id}", card.wallet, amount, beneficiary,
                    condition_tag=txn_id, expiry=now + TICKS_PER_DAY * HOLD_EXPIRY_DAYS, now=now,
                )
            except InsufficientFundsError:
                return self._decline(txn, DECLINE_INSUFFICIENT)
            txn.hold_lock_id = receipt.entries[0].lock_id
        elif kind == ATM_DEPOSIT:
            owner = self.money.core._account(card.wallet).owner
            totals = {
                w: self.money.core.total_balance(w) for w in self.registry.wallets_of(owner)
            }
            try:
                self.registry.check_credit(owner, totals, card.wallet, amount)
            except HoldingLimitError:
                return self._decline(txn, DECLINE_LIMIT)
        else:
            raise SchemeError(f"unknown transaction kind {kind!r}")
        txn.auth_state = "authorized"
        self._emit(
            "scheme-auth", network=self.network_id, txn_id=txn_id, kind=kind,
            amount=amount, outcome="authorized", hold=txn.hold_lock_id,
        )
        return txn

    # -- clearing and settlement -------------------------------------------------

    def _release_residual(self, txn: SchemeTransaction) -> int:
        lock = self.money.core.locks[txn.hold_lock_id]
        if lock.state is not LockState.ACTIVE:
            return 0
        residual = lock.remaining
        self.money.core.release_lock(f"residual:{txn.txn_id}", txn.hold_lock_id)
        return residual

    def clear_and_settle(
        self, txn_id: str, final_amount: int, payload_digest: str = "", now: int = 0
    ) -> SchemeTransaction:
        txn = self.transactions.get(txn_id)
        if txn is None:
            raise UnknownTransactionError(txn_id)
        if txn.auth_state != "authorized" or txn.state != "open":
            raise ClearingStateError(f"{txn_id} is {txn.state} ({txn.auth_state})")
        if final_amount > txn.amount:
            raise OverClearingError(f"{final_amount} exceeds authorized {txn.amount}")

        if txn.kind == POS_PURCHASE:
            ledger_id, account = txn.credit_ref
            if ledger_id == "core":
                self.money.core.drawdown_lock(
                    f"clear:{txn_id}", txn.hold_lock_id, final_amount, txn_id, now=now
                )
            else:
                self._settle_cross_form(txn, final_amount, payload_digest, now)
            self._release_residual(txn)
        elif txn.kind == ATM_WITHDRAWAL:
            operator = self._operator_of(txn.debit_ref or txn.credit_ref)
            self._settle_cross_form(txn, final_amount, payload_digest, now)
            self._release_residual(txn)
            owner = self.money.core._account(txn.wallet).owner
            self.money.cash_movement(f"cash:{txn_id}", operator, owner, final_amount)
        elif txn.kind == ATM_DEPOSIT:
            bank_id, account = txn.debit_ref
            operator = self.money.banks[bank_id]._account(account).owner
            instr = ClearingInstruction(
                instr_id=f"{txn_id}-in", debtor=operator, debtor_ledger=bank_id,
                debtor_account=account, creditor=self.money.core._account(txn.wallet).owner,
                creditor_ledger="core", creditor_account=txn.wallet, amount=final_amount,
                source_form=MoneyForm.COMMERCIAL_BANK_MONEY.value,
                dest_form=MoneyForm.DIGITAL_POUND.value, payload_digest=payload_digest,
            )
            result = self.rail.convert(instr, limit_gate=self._limit_gate, now=now)
            if result.state != SETTLED:
                return self._decline(txn, DECLINE_LIMIT if "limit" in result.reject_reason else DECLINE_INSUFFICIENT)
            owner = self.money.core._account(txn.wallet).owner
            self.money.cash_movement(f"cash:{txn_id}", owner, operator, final_amount)
        txn.cleared_amount = final_amount
        txn.state = "cleared"
        self._emit(
            "scheme-clearing", network=self.network_id, txn_id=txn_id, kind=txn.kind,
            cleared=final_amount, authorized=txn.amount,
        )
        return txn

    def _operator_of(self, ref: tuple[str, str]) -> str:
        bank_id, account = ref
        return self.money.banks[bank_id]._account(account).owner

    def _limit_gate(self, wallet: str, amount: int) -> None:
        owner = self.money.core._account(wallet).owner
        totals = {w: self.money.core.total_balance(w) for w in self.registry.wallets_of(owner)}
        self.registry.check_credit(owner, totals, wallet, amount)

    def _settle_cross_form(self, txn: SchemeTransaction, final_amount: int, payload_digest: str, now: int) -> None:
        bank_id, account = txn.credit_ref
        instr = ClearingInstruction(
            instr_id=f"{txn.txn_id}-out", debtor=self.money.core._account(txn.wallet).owner,
            debtor_ledger="core", debtor_account=txn.wallet,
            creditor=self.money.banks[bank_id]._account(account).owner,
            creditor_ledger=bank_id, creditor_account=account, amount=final_amount,
            source_form=MoneyForm.DIGITAL_POUND.value,
            dest_form=MoneyForm.COMMERCIAL_BANK_MONEY.value, payload_digest=payload_digest,
            lock_id=txn.hold_lock_id, lock_proof=txn.txn_id,
        )
        result = self.rail.convert(instr, now=now)
        if result.state != SETTLED:
            raise ClearingStateError(f"{txn.txn_id}: rail rejected clearing ({result.reject_reason})")

    def expire_stale(self, now: int) -> list[str]:
        """Mark authorized transactions whose hold has lapsed; kernel sweep frees funds."""
        expired = []
        for txn_id in sorted(self.transactions):
            txn = self.transactions[txn_id]
            if txn.state == "open" and txn.auth_state == "authorized" and txn.hold_lock_id:
                lock = self.money.core.locks[txn.hold_lock_id]
                if lock.state is LockState.RELEASED or now >= lock.expiry:
                    txn.state = "expired"
                    expired.append(txn_id)
        return expired

    # -- terminal sessions ---------------------------------------------------------

    def atm_session(
        self,
        card_number: str,
        secret: str,
        action: str,
        amount: Optional[int] = None,
        operator_ref: Optional[tuple[str, str]] = None,
        payload_digest: str = "",
        now: int = 0,
    ) -> dict:
        """One terminal interaction: withdraw, deposit, or balance check."""
        if action == "balance":
            card = self.cards.get(card_number)
            if card is None:
                return {"outcome": "declined", "reason": DECLINE_BAD_CARD}
            if secret != card.auth_secret:
                return {"outcome": "declined", "reason": DECLINE_BAD_AUTH}
            return {"outcome": "ok", "balance": self.money.core.total_balance(card.wallet)}
        if action == "withdraw":
            txn = self.authorize(
                card_number, secret, amount, ATM_WITHDRAWAL,
                credit_ref=operator_ref, debit_ref=operator_ref, now=now,
            )
        elif action == "deposit":
            txn = self.authorize(
                card_number, secret, amount, ATM_DEPOSIT, debit_ref=operator_ref, now=now
            )
        else:
            raise SchemeError(f"unknown session action {action!r}")
        if txn.auth_state != "authorized":
            return {"outcome": "declined", "reason": txn.decline_reason, "txn_id": txn.txn_id}
        txn = self.clear_and_settle(txn.txn_id, amount, payload_digest=payload_digest, now=now)
        if txn.state != "cleared":
            return {"outcome": "declined", "reason": txn.decline_reason, "txn_id": txn.txn_id}
        return {"outcome": "ok", "txn_id": txn.txn_id, "amount": amount}
