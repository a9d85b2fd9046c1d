"""The monetary world: core ledger, commercial banks, cash, and the bridge.

Funding and defunding are three-leg sagas (bank entry, reserve entry, core
mint/burn) that share one settlement reference, so the issuance journal
always ties digital pound movements to reserve movements. Legs execute
through a journaled saga executor: a crash between legs leaves a begun,
uncommitted journal record which recovery completes forward; a rejected
leg triggers compensation of the legs already applied. There is no
command anywhere that moves value directly between a commercial bank
ledger and the core ledger.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .ledger import (
    InsufficientFundsError,
    Ledger,
    LedgerError,
    MoneyForm,
    Receipt,
    check_amount,
)


class MoneySystemError(Exception):
    """Base class for monetary-world rejections outside a single ledger."""


class UnknownParticipantError(MoneySystemError):
    pass


class InsufficientCashError(MoneySystemError):
    pass


class BridgeAborted(MoneySystemError):
    """A saga leg was rejected; applied legs were compensated."""


class SagaCrash(Exception):
    """Injected crash between saga legs; recovery completes the saga."""

    def __init__(self, ref: str):
        super().__init__(f"crash after first leg of saga {ref}")
        self.ref = ref


def _noop_emit(kind: str, **fields):
    return None


class CashPools:
    """Physical cash as per-holder pooled aggregates (no note serials)."""

    def __init__(self, emit: Callable = _noop_emit):
        self.pools: dict[str, int] = {}
        self._seen: set[str] = set()
        self._emit = emit

    def mint(self, holder: str, amount: int) -> None:
        """Scenario-setup only: cash enters the world here and nowhere else."""
        check_amount(amount, allow_zero=True)
        self.pools[holder] = self.pools.get(holder, 0) + amount

    def balance(self, holder: str) -> int:
        return self.pools.get(holder, 0)

    def total(self) -> int:
        return sum(self.pools.values())

    def move(self, cmd_key: str, holder_from: str, holder_to: str, amount: int) -> None:
        if cmd_key in self._seen:
            return
        check_amount(amount)
        if self.pools.get(holder_from, 0) < amount:
            raise InsufficientCashError(
                f"{holder_from}: cash {self.pools.get(holder_from, 0)} < {amount}"
            )
        self.pools[holder_from] -= amount
        self.pools[holder_to] = self.pools.get(holder_to, 0) + amount
        self._seen.add(cmd_key)
        self._emit(
            "cash-moved", cmd_key=cmd_key, holder_from=holder_from, holder_to=holder_to, amount=amount
        )

    def snapshot(self) -> dict:
        return dict(sorted(self.pools.items()))


@dataclass(frozen=True)
class SagaLeg:
    ledger_id: str
    op: str  # "bridge" | "transfer"
    params: tuple

    def to_record(self) -> dict:
        return {"ledger": self.ledger_id, "op": self.op, "params": list(self.params)}


@dataclass
class SagaRecord:
    ref: str
    legs: list[SagaLeg]
    applied: int = 0
    state: str = "begun"  # begun | committed | compensated
    receipts: list[Receipt] = field(default_factory=list)


class SagaExecutor:
    """Applies multi-ledger leg sequences with journaling and recovery.

    Settlement sagas are atomic critical sections over the ledgers they
    touch; the journal is what makes the critical section survivable
    across an injected crash-restart.
    """

    def __init__(self, ledgers: dict[str, Ledger], authority: str, emit: Callable = _noop_emit):
        self.ledgers = ledgers
        self.authority = authority
        self.journal: dict[str, SagaRecord] = {}
        self._emit = emit
        self.crash_next_saga = False  # set by fault injection for the owner's tick

    def _apply_leg(self, ref: str, index: int, leg: SagaLeg, now: int) -> Receipt:
        ledger = self.ledgers[leg.ledger_id]
        cmd_key = f"{ref}/leg{index}"
        if leg.op == "bridge":
            account, delta, lock_id, event_proof = leg.params
            return ledger.bridge_adjust(
                cmd_key, account, delta, bridge_ref=ref, authority=self.authority,
                lock_id=lock_id, event_proof=event_proof, now=now,
            )
        if leg.op == "transfer":
            src, dst, amount = leg.params
            return ledger.transfer(cmd_key, src, dst, amount)
        raise MoneySystemError(f"unknown saga leg op {leg.op!r}")

    def _compensate(self, record: SagaRecord, now: int) -> None:
        for index in range(record.applied - 1, -1, -1):
            leg = record.legs[index]
            ledger = self.ledgers[leg.ledger_id]
            cmd_key = f"{record.ref}/comp{index}"
            if leg.op == "bridge":
                account, delta, lock_id, _ = leg.params
                # A drawn lock cannot be un-drawn; the compensating credit
                # returns the value to the available balance instead.
                ledger.bridge_adjust(
                    cmd_key, account, -delta, bridge_ref=f"{record.ref}/comp",
                    authority=self.authority, now=now,
                )
            elif leg.op == "transfer":
                src, dst, amount = leg.params
                ledger.transfer(cmd_key, dst, src, amount)
        record.state = "compensated"
        self._emit("saga-compensated", ref=record.ref, legs_undone=record.applied)

    def run(self, ref: str, legs: list[SagaLeg], now: int = 0) -> SagaRecord:
        existing = self.journal.get(ref)
        if existing is not None:
            if existing.state == "begun":
                return self.resume(ref, now)
            return existing
        record = SagaRecord(ref=ref, legs=list(legs))
        self.journal[ref] = record
        self._emit("saga-begin", ref=ref, legs=[leg.to_record() for leg in legs])
        crash_requested = self.crash_next_saga
        self.crash_next_saga = False
        try:
            for index, leg in enumerate(record.legs):
                record.receipts.append(self._apply_leg(ref, index, leg, now))
                record.applied = index + 1
                self._emit("saga-leg", ref=ref, leg=index, ledger=leg.ledger_id)
                if crash_requested and index == 0:
                    raise SagaCrash(ref)
        except SagaCrash:
            raise
        except LedgerError as exc:
            self._compensate(record, now)
            raise BridgeAborted(f"saga {ref} aborted: {exc}") from exc
        record.state = "committed"
        self._emit("saga-commit", ref=ref)
        return record

    def resume(self, ref: str, now: int = 0) -> SagaRecord:
        """Complete a begun saga forward; legs already applied replay as no-ops."""
        record = self.journal[ref]
        if record.state != "begun":
            return record
        for index, leg in enumerate(record.legs):
            receipt = self._apply_leg(ref, index, leg, now)
            if index >= record.applied:
                record.receipts.append(receipt)
                record.applied = index + 1
                self._emit("saga-leg", ref=ref, leg=index, ledger=leg.ledger_id)
        record.state = "committed"
        self._emit("saga-commit", ref=ref, recovered=True)
        return record

    def recover(self, now: int = 0) -> list[str]:
        """Forward-complete every uncommitted saga; called on restart."""
        recovered = []
        for ref in sorted(self.journal):
            if self.journal[ref].state == "begun":
                self.resume(ref, now)
                recovered.append(ref)
        return recovered


class MoneySystem:
    """Central bank core ledger, commercial bank ledgers, and cash pools."""

    RESERVE_PREFIX = "res"

    def __init__(self, emit: Callable = _noop_emit, operator_authority: str = "fmi"):
        self._emit = emit
        self.core = Ledger("core", operator="central-bank", bridge_authority=(operator_authority,))
        self.banks: dict[str, Ledger] = {}
        self.cash = CashPools(emit)
        self.ledgers: dict[str, Ledger] = {"core": self.core}
        self.sagas = SagaExecutor(self.ledgers, authority=operator_authority, emit=emit)
        self.reserve_accounts: dict[str, str] = {}

    # -- setup ---------------------------------------------------------------

    def add_bank(self, bank_id: str, reserve_balance: int) -> None:
        if bank_id in self.banks:
            raise MoneySystemError(f"bank {bank_id!r} already registered")
        ledger = Ledger(bank_id, operator=bank_id, bridge_authority=(self.sagas.authority,))
        self.banks[bank_id] = ledger
        self.ledgers[bank_id] = ledger
        reserve_id = f"{self.RESERVE_PREFIX}:{bank_id}"
        self.core.open_account(
            f"setup:reserve:{bank_id}", bank_id, MoneyForm.RESERVE, reserve_balance,
            account_id=reserve_id,
        )
        self.reserve_accounts[bank_id] = reserve_id

    def open_bank_account(self, bank_id: str, owner: str, initial: int, account_id: str | None = None) -> str:
        bank = self._bank(bank_id)
        receipt = bank.open_account(
            f"setup:acct:{bank_id}:{owner}", owner, MoneyForm.COMMERCIAL_BANK_MONEY,
            initial, account_id=account_id,
        )
        return receipt.entries[0].account_id

    def open_wallet(self, cmd_key: str, owner: str, wallet_id: str | None = None) -> str:
        receipt = self.core.open_account(cmd_key, owner, MoneyForm.DIGITAL_POUND, 0, account_id=wallet_id)
        return receipt.entries[0].account_id

    def _bank(self, bank_id: str) -> Ledger:
        try:
            return self.banks[bank_id]
        except KeyError:
            raise UnknownParticipantError(f"unknown bank {bank_id!r}") from None

    # -- bridge --------------------------------------------------------------

    def fund_wallet(
        self,
        cmd_key: str,
        bank_id: str,
        bank_account: str,
        wallet: str,
        amount: int,
        limit_gate: Optional[Callable[[str, int], None]] = None,
        now: int = 0,
    ) -> SagaRecord:
        """Bank debit, reserve debit, core mint: all or nothing."""
        check_amount(amount)
        bank = self._bank(bank_id)
        if self.sagas.journal.get(cmd_key) is None:
            # Pre-checks keep the normal path compensation-free.
            if bank._account(bank_account).available < amount:
                raise InsufficientFundsError(f"{bank_account}: cannot fund {amount}")
            self.core._account(wallet)
            if limit_gate is not None:
                limit_gate(wallet, amount)
        legs = [
            SagaLeg(bank_id, "bridge", (bank_account, -amount, None, None)),
            SagaLeg("core", "bridge", (self.reserve_accounts[bank_id], -amount, None, None)),
            SagaLeg("core", "bridge", (wallet, amount, None, None)),
        ]
        return self.sagas.run(cmd_key, legs, now=now)

    def defund_wallet(
        self,
        cmd_key: str,
        wallet: str,
        bank_id: str,
        bank_account: str,
        amount: int,
        now: int = 0,
    ) -> SagaRecord:
        """Mirror of funding: core burn, reserve credit, bank credit."""
        check_amount(amount)
        bank = self._bank(bank_id)
        if self.sagas.journal.get(cmd_key) is None:
            wallet_account = self.core._account(wallet)
            if wallet_account.available < amount:
                raise InsufficientFundsError(
                    f"{wallet}: available {wallet_account.available} < {amount} (locked funds cannot defund)"
                )
            bank._account(bank_account)
        legs = [
            SagaLeg("core", "bridge", (wallet, -amount, None, None)),
            SagaLeg("core", "bridge", (self.reserve_accounts[bank_id], amount, None, None)),
            SagaLeg(bank_id, "bridge", (bank_account, amount, None, None)),
        ]
        return self.sagas.run(cmd_key, legs, now=now)

    def cash_movement(self, cmd_key: str, holder_from: str, holder_to: str, amount: int) -> None:
        self.cash.move(cmd_key, holder_from, holder_to, amount)

    # -- inspection ----------------------------------------------------------

    def digital_pounds_in_circulation(self) -> int:
        return self.core.form_total(MoneyForm.DIGITAL_POUND)

    def customer_money_total(self) -> int:
        """Deposits + digital pounds + cash; reserves are the issuance mirror."""
        total = self.core.form_total(MoneyForm.DIGITAL_POUND) + self.cash.total()
        for bank in self.banks.values():
            total += bank.form_total(MoneyForm.COMMERCIAL_BANK_MONEY)
        return total

    def state_snapshot(self) -> dict:
        return {
            "ledgers": {lid: self.ledgers[lid].state_snapshot() for lid in sorted(self.ledgers)},
            "cash": self.cash.snapshot(),
        }
