"""Double-entry ledger kernel with funds locks and idempotent commands.

One ``Ledger`` instance is a single-writer book of accounts. Commands are
applied strictly serially; every state-changing command carries an
idempotency key and re-applying a seen key returns the original receipt
without touching state. Receipts carry a per-ledger monotonically
increasing sequence number, which is the finality point for transfers.

Value enters or leaves a ledger only through ``bridge_adjust`` entries,
so the sum of all balances on one ledger changes exactly by the sum of
its bridge deltas. Cross-ledger settlement is built on top of that rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional


class MoneyForm(str, Enum):
    DIGITAL_POUND = "digital-pound"
    COMMERCIAL_BANK_MONEY = "commercial-bank-money"
    RESERVE = "reserve"
    PHYSICAL_CASH = "physical-cash"


class LockState(str, Enum):
    ACTIVE = "active"
    DRAWN = "drawn"
    RELEASED = "released"


class LedgerError(Exception):
    """Base class for ledger command rejections."""


class InvalidAmountError(LedgerError):
    """Amount is negative, zero where zero is not allowed, or not an int."""


class UnknownAccountError(LedgerError):
    """Account id not present on this ledger."""


class DuplicateAccountError(LedgerError):
    """Account id already exists on this ledger."""


class InsufficientFundsError(LedgerError):
    """Available balance is smaller than the requested movement."""


class CrossFormError(LedgerError):
    """Transfer between accounts of different money forms (use the bridge)."""


class IssuancePolicyError(LedgerError):
    """Digital pound wallets open at zero; value arrives via the bridge."""


class LockStateError(LedgerError):
    """Lock is not in a state that permits the requested command."""


class ConditionMismatchError(LedgerError):
    """Event proof does not match the lock's condition tag."""


class OverDrawdownError(LedgerError):
    """Requested drawdown exceeds the lock's remaining amount."""


class LockExpiryError(LedgerError):
    """Lock expiry is not strictly in the logical future."""


class BridgeAuthorityError(LedgerError):
    """Caller is not registered as a bridge authority for this ledger."""


def check_amount(value, *, allow_zero: bool = False) -> int:
    """Validate a monetary amount in integer pence and return it."""
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidAmountError(f"amount must be an integer number of pence, got {value!r}")
    if value < 0:
        raise InvalidAmountError(f"amount must not be negative, got {value}")
    if value == 0 and not allow_zero:
        raise InvalidAmountError("zero amounts are rejected")
    return value


def split_amount(amount: int, parts: int) -> list[int]:
    """Split an amount into ``parts`` near-equal non-negative pieces.

    The pieces always sum back to the original amount exactly, so
    ``merge_amounts(split_amount(a, k)) == a`` for any valid input.
    """
    check_amount(amount, allow_zero=True)
    if parts < 1:
        raise InvalidAmountError("split needs at least one part")
    base, rem = divmod(amount, parts)
    return [base + 1 if i < rem else base for i in range(parts)]


def merge_amounts(parts) -> int:
    total = 0
    for part in parts:
        total += check_amount(part, allow_zero=True)
    return total


@dataclass
class FundsLock:
    lock_id: str
    account_id: str
    amount: int
    beneficiary: str
    condition_tag: str
    expiry: int
    state: LockState = LockState.ACTIVE
    drawn: int = 0

    @property
    def remaining(self) -> int:
        return self.amount - self.drawn


@dataclass
class LedgerAccount:
    account_id: str
    owner: str
    form: MoneyForm
    available: int = 0
    lock_ids: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Entry:
    """One posting: signed delta against one account."""

    account_id: str
    form: str
    delta: int
    lock_id: Optional[str] = None


@dataclass(frozen=True)
class Receipt:
    seq: int
    cmd_key: str
    kind: str
    ledger_id: str
    entries: tuple[Entry, ...]
    info: tuple = ()

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "cmd_key": self.cmd_key,
            "kind": self.kind,
            "ledger_id": self.ledger_id,
            "entries": [
                {"account": e.account_id, "form": e.form, "delta": e.delta, "lock_id": e.lock_id}
                for e in self.entries
            ],
            "info": dict(self.info),
        }


class Ledger:
    """A single double-entry ledger instance (one operator, serial writes)."""

    def __init__(
        self,
        ledger_id: str,
        operator: str,
        bridge_authority: tuple[str, ...] = (),
        on_receipt: Optional[Callable[[Receipt], None]] = None,
        one_account_per_owner_form: bool = False,
    ):
        self.ledger_id = ledger_id
        self.operator = operator
        self.bridge_authority = set(bridge_authority) | {operator}
        self.accounts: dict[str, LedgerAccount] = {}
        self.locks: dict[str, FundsLock] = {}
        self.issuance_journal: list[tuple[str, str, int]] = []  # (bridge_ref, account, delta)
        self._seen: dict[str, Receipt] = {}
        self._seq = 0
        self._on_receipt = on_receipt
        self._one_per_owner_form = one_account_per_owner_form

    # -- helpers ------------------------------------------------------------

    def _account(self, account_id: str) -> LedgerAccount:
        try:
            return self.accounts[account_id]
        except KeyError:
            raise UnknownAccountError(f"{self.ledger_id}: unknown account {account_id!r}") from None

    def _lock(self, lock_id: str) -> FundsLock:
        try:
            return self.locks[lock_id]
        except KeyError:
            raise LockStateError(f"{self.ledger_id}: unknown lock {lock_id!r}") from None

    def _emit(self, cmd_key: str, kind: str, entries: tuple[Entry, ...], info: dict | None = None) -> Receipt:
        self._seq += 1
        receipt = Receipt(
            seq=self._seq,
            cmd_key=cmd_key,
            kind=kind,
            ledger_id=self.ledger_id,
            entries=entries,
            info=tuple(sorted((info or {}).items())),
        )
        self._seen[cmd_key] = receipt
        if self._on_receipt is not None:
            self._on_receipt(receipt)
        return receipt

    def seen(self, cmd_key: str) -> bool:
        return cmd_key in self._seen

    def locked_amount(self, account_id: str) -> int:
        account = self._account(account_id)
        return sum(
            self.locks[lid].remaining
            for lid in account.lock_ids
            if self.locks[lid].state is LockState.ACTIVE
        )

    def total_balance(self, account_id: str) -> int:
        return self._account(account_id).available + self.locked_amount(account_id)

    def form_total(self, form: MoneyForm) -> int:
        return sum(
            self.total_balance(a.account_id) for a in self.accounts.values() if a.form is form
        )

    def state_snapshot(self) -> dict:
        """Canonical state view used for byte-level comparison across runs."""
        return {
            "ledger_id": self.ledger_id,
            "seq": self._seq,
            "accounts": {
                aid: {
                    "owner": acc.owner,
                    "form": acc.form.value,
                    "available": acc.available,
                    "locked": self.locked_amount(aid),
                }
                for aid, acc in sorted(self.accounts.items())
            },
            "locks": {
                lid: {
                    "account": lk.account_id,
                    "amount": lk.amount,
                    "drawn": lk.drawn,
                    "state": lk.state.value,
                    "condition_tag": lk.condition_tag,
                    "expiry": lk.expiry,
                }
                for lid, lk in sorted(self.locks.items())
            },
            "issuance_journal": [list(row) for row in self.issuance_journal],
        }

    # -- commands -----------------------------------------------------------

    def open_account(
        self,
        cmd_key: str,
        owner: str,
        form: MoneyForm,
        initial: int = 0,
        account_id: Optional[str] = None,
    ) -> Receipt:
        if cmd_key in self._seen:
            return self._seen[cmd_key]
        check_amount(initial, allow_zero=True)
        form = MoneyForm(form)
        if form is MoneyForm.DIGITAL_POUND and initial != 0:
            raise IssuancePolicyError("digital pound wallets open empty; fund via the bridge")
        if account_id is None:
            account_id = f"{self.ledger_id}:a{len(self.accounts) + 1:04d}"
        if account_id in self.accounts:
            raise DuplicateAccountError(f"account {account_id!r} already exists")
        if self._one_per_owner_form and any(
            a.owner == owner and a.form is form for a in self.accounts.values()
        ):
            raise DuplicateAccountError(f"{owner!r} already holds a {form.value} account here")
        self.accounts[account_id] = LedgerAccount(account_id, owner, form, available=initial)
        entries = (Entry(account_id, form.value, initial),) if initial else (Entry(account_id, form.value, 0),)
        return self._emit(cmd_key, "create", entries, {"owner": owner})

    def transfer(self, cmd_key: str, from_account: str, to_account: str, amount: int) -> Receipt:
        if cmd_key in self._seen:
            return self._seen[cmd_key]
        check_amount(amount)
        src = self._account(from_account)
        dst = self._account(to_account)
        if src.form is not dst.form:
            raise CrossFormError(
                f"{src.form.value} -> {dst.form.value} transfers must go through the interop rail"
            )
        if src.available < amount:
            raise InsufficientFundsError(
                f"{from_account}: available {src.available} < {amount}"
            )
        src.available -= amount
        dst.available += amount
        entries = (
            Entry(from_account, src.form.value, -amount),
            Entry(to_account, dst.form.value, amount),
        )
        return self._emit(cmd_key, "transfer", entries)

    def lock_funds(
        self,
        cmd_key: str,
        account_id: str,
        amount: int,
        beneficiary: str,
        condition_tag: str,
        expiry: int,
        now: int,
    ) -> Receipt:
        if cmd_key in self._seen:
            return self._seen[cmd_key]
        check_amount(amount)
        if expiry <= now:
            raise LockExpiryError(f"expiry {expiry} not after current tick {now}")
        account = self._account(account_id)
        if account.available < amount:
            raise InsufficientFundsError(f"{account_id}: available {account.available} < {amount}")
        lock_id = f"{self.ledger_id}:l{len(self.locks) + 1:04d}"
        account.available -= amount
        lock = FundsLock(lock_id, account_id, amount, beneficiary, condition_tag, expiry)
        self.locks[lock_id] = lock
        account.lock_ids.append(lock_id)
        entries = (Entry(account_id, account.form.value, 0, lock_id=lock_id),)
        return self._emit(
            cmd_key,
            "lock",
            entries,
            {"amount": amount, "beneficiary": beneficiary, "condition_tag": condition_tag, "expiry": expiry},
        )

    def _active_lock(self, lock_id: str, now: int) -> FundsLock:
        lock = self._lock(lock_id)
        if lock.state is not LockState.ACTIVE:
            raise LockStateError(f"lock {lock_id} is terminal ({lock.state.value})")
        if now >= lock.expiry:
            raise LockStateError(f"lock {lock_id} expired at tick {lock.expiry}")
        return lock

    def drawdown_lock(self, cmd_key: str, lock_id: str, amount: int, event_proof: str, now: int) -> Receipt:
        if cmd_key in self._seen:
            return self._seen[cmd_key]
        check_amount(amount)
        lock = self._active_lock(lock_id, now)
        if event_proof != lock.condition_tag:
            raise ConditionMismatchError(
                f"proof {event_proof!r} does not match condition {lock.condition_tag!r}"
            )
        if amount > lock.remaining:
            raise OverDrawdownError(f"lock {lock_id}: remaining {lock.remaining} < {amount}")
        beneficiary = self._account(lock.beneficiary)
        lock.drawn += amount
        if lock.remaining == 0:
            lock.state = LockState.DRAWN
        beneficiary.available += amount
        payer = self._account(lock.account_id)
        entries = (
            Entry(lock.account_id, payer.form.value, -amount, lock_id=lock_id),
            Entry(lock.beneficiary, beneficiary.form.value, amount),
        )
        return self._emit(cmd_key, "drawdown", entries, {"lock_state": lock.state.value})

    def release_lock(self, cmd_key: str, lock_id: str) -> Receipt:
        if cmd_key in self._seen:
            return self._seen[cmd_key]
        lock = self._lock(lock_id)
        if lock.state is not LockState.ACTIVE:
            raise LockStateError(f"lock {lock_id} is terminal ({lock.state.value})")
        remainder = lock.remaining
        lock.state = LockState.RELEASED
        account = self._account(lock.account_id)
        account.available += remainder
        entries = (Entry(lock.account_id, account.form.value, 0, lock_id=lock_id),)
        return self._emit(cmd_key, "release", entries, {"released": remainder})

    def sweep_expired(self, now: int) -> list[Receipt]:
        """Release every active lock whose expiry tick has been reached."""
        receipts = []
        for lock_id in sorted(self.locks):
            lock = self.locks[lock_id]
            if lock.state is LockState.ACTIVE and now >= lock.expiry:
                receipts.append(self.release_lock(f"sweep:{lock_id}:{lock.expiry}", lock_id))
        return receipts

    def bridge_adjust(
        self,
        cmd_key: str,
        account_id: str,
        delta: int,
        bridge_ref: str,
        authority: str,
        lock_id: Optional[str] = None,
        event_proof: Optional[str] = None,
        now: int = 0,
    ) -> Receipt:
        """Post value into or out of this ledger against an external settlement ref.

        With ``lock_id`` the (negative) delta is drawn from the locked tranche
        instead of the available balance; the proof must match the lock's
        condition tag, mirroring ``drawdown_lock``.
        """
        if cmd_key in self._seen:
            return self._seen[cmd_key]
        if authority not in self.bridge_authority:
            raise BridgeAuthorityError(f"{authority!r} may not bridge on {self.ledger_id}")
        if not isinstance(delta, int) or isinstance(delta, bool) or delta == 0:
            raise InvalidAmountError(f"bridge delta must be a nonzero integer, got {delta!r}")
        if not bridge_ref:
            raise LedgerError("bridge entries must cite a settlement reference")
        account = self._account(account_id)
        if lock_id is not None:
            if delta >= 0:
                raise InvalidAmountError("lock-sourced bridge entries must debit")
            lock = self._active_lock(lock_id, now)
            if lock.account_id != account_id:
                raise LockStateError(f"lock {lock_id} does not belong to {account_id}")
            if event_proof != lock.condition_tag:
                raise ConditionMismatchError(
                    f"proof {event_proof!r} does not match condition {lock.condition_tag!r}"
                )
            if -delta > lock.remaining:
                raise OverDrawdownError(f"lock {lock_id}: remaining {lock.remaining} < {-delta}")
            lock.drawn += -delta
            if lock.remaining == 0:
                lock.state = LockState.DRAWN
        else:
            if delta < 0 and account.available < -delta:
                raise InsufficientFundsError(
                    f"{account_id}: available {account.available} < {-delta}"
                )
            account.available += delta
        self.issuance_journal.append((bridge_ref, account_id, delta))
        entries = (Entry(account_id, account.form.value, delta, lock_id=lock_id),)
        return self._emit(cmd_key, "bridge", entries, {"bridge_ref": bridge_ref})
