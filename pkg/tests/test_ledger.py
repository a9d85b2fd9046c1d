"""Ledger kernel: accounts, transfers, locks, bridge entries, idempotency."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsim.ledger import (
    BridgeAuthorityError,
    ConditionMismatchError,
    CrossFormError,
    DuplicateAccountError,
    InsufficientFundsError,
    InvalidAmountError,
    IssuancePolicyError,
    Ledger,
    LockExpiryError,
    LockState,
    LockStateError,
    MoneyForm,
    OverDrawdownError,
    check_amount,
    merge_amounts,
    split_amount,
)


def make_ledger(**kwargs) -> Ledger:
    return Ledger("bank-a:ledger", operator="bank-a", bridge_authority=("fmi",), **kwargs)


def open_cobm(ledger, owner, initial, key=None):
    receipt = ledger.open_account(
        key or f"open:{owner}", owner, MoneyForm.COMMERCIAL_BANK_MONEY, initial
    )
    return receipt.entries[0].account_id


class TestAmounts:
    def test_rejects_negative(self):
        with pytest.raises(InvalidAmountError):
            check_amount(-1)

    def test_rejects_zero_by_default(self):
        with pytest.raises(InvalidAmountError):
            check_amount(0)

    def test_rejects_non_integer(self):
        with pytest.raises(InvalidAmountError):
            check_amount(12.5)
        with pytest.raises(InvalidAmountError):
            check_amount(True)

    def test_split_merge_round_trip(self):
        for amount in (0, 1, 7, 100, 99999):
            for parts in (1, 2, 3, 7):
                pieces = split_amount(amount, parts)
                assert len(pieces) == parts
                assert all(p >= 0 for p in pieces)
                assert merge_amounts(pieces) == amount

    @given(amount=st.integers(min_value=0, max_value=10**9), parts=st.integers(min_value=1, max_value=50))
    def test_split_merge_round_trip_property(self, amount, parts):
        assert merge_amounts(split_amount(amount, parts)) == amount


class TestOpenAccount:
    def test_empty_wallet_creation(self):
        ledger = make_ledger()
        receipt = ledger.open_account("k1", "laura", MoneyForm.DIGITAL_POUND, 0)
        account = receipt.entries[0].account_id
        assert ledger.total_balance(account) == 0
        assert ledger.accounts[account].owner == "laura"

    def test_initial_balance_on_bank_account(self):
        ledger = make_ledger()
        account = open_cobm(ledger, "merchant", 50000)
        assert ledger.total_balance(account) == 50000

    def test_nonzero_initial_on_wallet_rejected(self):
        ledger = make_ledger()
        with pytest.raises(IssuancePolicyError):
            ledger.open_account("k1", "laura", MoneyForm.DIGITAL_POUND, 100)

    def test_duplicate_account_id_rejected(self):
        ledger = make_ledger()
        ledger.open_account("k1", "a", MoneyForm.COMMERCIAL_BANK_MONEY, 0, account_id="x")
        with pytest.raises(DuplicateAccountError):
            ledger.open_account("k2", "b", MoneyForm.COMMERCIAL_BANK_MONEY, 0, account_id="x")

    def test_owner_form_policy(self):
        ledger = make_ledger(one_account_per_owner_form=True)
        open_cobm(ledger, "a", 0, key="k1")
        with pytest.raises(DuplicateAccountError):
            open_cobm(ledger, "a", 0, key="k2")


class TestTransfer:
    def test_conservation_arithmetic(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 10000)
        b = open_cobm(ledger, "b", 0)
        ledger.transfer("t1", a, b, 4000)
        assert ledger.total_balance(a) == 6000
        assert ledger.total_balance(b) == 4000

    def test_replay_returns_original_receipt(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 10000)
        b = open_cobm(ledger, "b", 0)
        first = ledger.transfer("t1", a, b, 4000)
        replay = ledger.transfer("t1", a, b, 4000)
        assert replay is first
        assert ledger.total_balance(a) == 6000
        assert ledger.total_balance(b) == 4000

    def test_insufficient_funds_leaves_balances(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 6000)
        b = open_cobm(ledger, "b", 4000)
        with pytest.raises(InsufficientFundsError):
            ledger.transfer("t2", a, b, 7000)
        assert ledger.total_balance(a) == 6000
        assert ledger.total_balance(b) == 4000

    def test_cross_form_rejected(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 5000)
        w = ledger.open_account("kw", "a", MoneyForm.DIGITAL_POUND, 0).entries[0].account_id
        with pytest.raises(CrossFormError):
            ledger.transfer("t3", a, w, 100)

    def test_unknown_account(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 5000)
        with pytest.raises(Exception):
            ledger.transfer("t4", a, "missing", 100)

    def test_zero_amount_rejected(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 5000)
        b = open_cobm(ledger, "b", 0)
        with pytest.raises(InvalidAmountError):
            ledger.transfer("t5", a, b, 0)

    def test_receipt_sequence_is_monotonic(self):
        ledger = make_ledger()
        a = open_cobm(ledger, "a", 10000)
        b = open_cobm(ledger, "b", 0)
        r1 = ledger.transfer("t1", a, b, 100)
        r2 = ledger.transfer("t2", a, b, 100)
        assert r2.seq == r1.seq + 1


class TestLocks:
    def setup_method(self):
        self.ledger = make_ledger()
        self.payer = open_cobm(self.ledger, "payer", 10000)
        self.merchant = open_cobm(self.ledger, "merchant", 0)

    def lock(self, amount, key="l1", expiry=100, tag="delivery"):
        receipt = self.ledger.lock_funds(key, self.payer, amount, self.merchant, tag, expiry, now=0)
        return receipt.entries[0].lock_id

    def test_partition_arithmetic(self):
        self.lock(3000)
        assert self.ledger.accounts[self.payer].available == 7000
        assert self.ledger.locked_amount(self.payer) == 3000
        assert self.ledger.total_balance(self.payer) == 10000

    def test_zero_lock_rejected(self):
        with pytest.raises(InvalidAmountError):
            self.lock(0)

    def test_expiry_must_be_in_future(self):
        with pytest.raises(LockExpiryError):
            self.ledger.lock_funds("l1", self.payer, 100, self.merchant, "t", 0, now=0)

    def test_two_locks_exceeding_available(self):
        # Oracle: replay both submission orders serially; with 10000 available
        # the first 6000 lock must win and the second must fail in either order.
        for order in (("lA", "lB"), ("lB", "lA")):
            ledger = make_ledger()
            payer = open_cobm(ledger, "payer", 10000)
            dest = open_cobm(ledger, "merchant", 0)
            ledger.lock_funds(order[0], payer, 6000, dest, "t", 100, now=0)
            with pytest.raises(InsufficientFundsError):
                ledger.lock_funds(order[1], payer, 6000, dest, "t", 100, now=0)
            assert ledger.accounts[payer].available == 4000
            assert ledger.locked_amount(payer) == 6000

    def test_full_drawdown(self):
        lock_id = self.lock(3000)
        self.ledger.drawdown_lock("d1", lock_id, 3000, "delivery", now=1)
        assert self.ledger.total_balance(self.merchant) == 3000
        assert self.ledger.locks[lock_id].state is LockState.DRAWN

    def test_partial_drawdown_then_release(self):
        # Hand-computed walk: lock 3000, draw 1000, release 2000 remainder.
        lock_id = self.lock(3000)
        receipts = [
            self.ledger.drawdown_lock("d1", lock_id, 1000, "delivery", now=1),
            self.ledger.release_lock("r1", lock_id),
        ]
        assert self.ledger.total_balance(self.merchant) == 1000
        assert self.ledger.accounts[self.payer].available == 9000
        assert self.ledger.locks[lock_id].state is LockState.RELEASED
        # Event-log sum oracle: entry deltas across the walk must net to zero.
        deltas = [e.delta for r in receipts for e in r.entries]
        assert sum(deltas) == 0

    def test_condition_mismatch(self):
        lock_id = self.lock(3000)
        with pytest.raises(ConditionMismatchError):
            self.ledger.drawdown_lock("d1", lock_id, 3000, "refund", now=1)

    def test_over_drawdown(self):
        lock_id = self.lock(3000)
        with pytest.raises(OverDrawdownError):
            self.ledger.drawdown_lock("d1", lock_id, 3001, "delivery", now=1)

    def test_drawdown_after_expiry_rejected(self):
        lock_id = self.lock(3000, expiry=10)
        with pytest.raises(LockStateError):
            self.ledger.drawdown_lock("d1", lock_id, 100, "delivery", now=10)

    def test_release_returns_remainder(self):
        lock_id = self.lock(2000)
        receipt = self.ledger.release_lock("r1", lock_id)
        assert dict(receipt.info)["released"] == 2000
        assert self.ledger.accounts[self.payer].available == 10000

    def test_release_terminal_lock_rejected(self):
        lock_id = self.lock(3000)
        self.ledger.drawdown_lock("d1", lock_id, 3000, "delivery", now=1)
        with pytest.raises(LockStateError):
            self.ledger.release_lock("r2", lock_id)

    def test_expiry_sweep_behaves_like_release(self):
        lock_id = self.lock(3000, expiry=50)
        swept = self.ledger.sweep_expired(now=50)
        assert [r.entries[0].lock_id for r in swept] == [lock_id]
        assert self.ledger.accounts[self.payer].available == 10000
        assert self.ledger.locks[lock_id].state is LockState.RELEASED
        assert self.ledger.sweep_expired(now=51) == []  # idempotent sweep


class TestBridge:
    def setup_method(self):
        self.ledger = Ledger("core", operator="central-bank", bridge_authority=("fmi",))
        self.wallet = self.ledger.open_account(
            "kw", "laura", MoneyForm.DIGITAL_POUND, 0
        ).entries[0].account_id

    def test_mint_and_burn(self):
        self.ledger.bridge_adjust("b1", self.wallet, 5000, "ref1", authority="fmi")
        assert self.ledger.total_balance(self.wallet) == 5000
        self.ledger.bridge_adjust("b2", self.wallet, -5000, "ref2", authority="fmi")
        assert self.ledger.total_balance(self.wallet) == 0
        assert self.ledger.issuance_journal == [
            ("ref1", self.wallet, 5000),
            ("ref2", self.wallet, -5000),
        ]

    def test_unauthorized_caller(self):
        with pytest.raises(BridgeAuthorityError):
            self.ledger.bridge_adjust("b1", self.wallet, 5000, "ref1", authority="pip-1")

    def test_burn_exceeding_available(self):
        self.ledger.bridge_adjust("b1", self.wallet, 5000, "ref1", authority="fmi")
        with pytest.raises(InsufficientFundsError):
            self.ledger.bridge_adjust("b2", self.wallet, -5001, "ref2", authority="fmi")

    def test_missing_reference_rejected(self):
        with pytest.raises(Exception):
            self.ledger.bridge_adjust("b1", self.wallet, 5000, "", authority="fmi")

    def test_burn_from_lock(self):
        self.ledger.bridge_adjust("b1", self.wallet, 5000, "ref1", authority="fmi")
        lock_id = self.ledger.lock_funds(
            "l1", self.wallet, 5000, "fmi", "delivery:ord-1", 100, now=0
        ).entries[0].lock_id
        self.ledger.bridge_adjust(
            "b2", self.wallet, -5000, "ref2", authority="fmi",
            lock_id=lock_id, event_proof="delivery:ord-1", now=1,
        )
        assert self.ledger.total_balance(self.wallet) == 0
        assert self.ledger.locks[lock_id].state is LockState.DRAWN

    def test_burn_from_lock_requires_matching_proof(self):
        self.ledger.bridge_adjust("b1", self.wallet, 5000, "ref1", authority="fmi")
        lock_id = self.ledger.lock_funds(
            "l1", self.wallet, 5000, "fmi", "delivery:ord-1", 100, now=0
        ).entries[0].lock_id
        with pytest.raises(ConditionMismatchError):
            self.ledger.bridge_adjust(
                "b2", self.wallet, -5000, "ref2", authority="fmi",
                lock_id=lock_id, event_proof="refund", now=1,
            )


# -- kernel-wide properties --------------------------------------------------

command_strategy = st.lists(
    st.tuples(
        st.sampled_from(["transfer", "lock", "drawdown", "release", "bridge"]),
        st.integers(min_value=1, max_value=5000),
        st.integers(min_value=0, max_value=3),
    ),
    max_size=30,
)


def run_commands(ledger, accounts, commands, replay_each=False):
    """Drive a ledger through a generated command list, ignoring rejections."""
    lock_ids = []
    for n, (kind, amount, idx) in enumerate(commands):
        key = f"c{n}"
        src = accounts[idx % len(accounts)]
        dst = accounts[(idx + 1) % len(accounts)]
        try:
            if kind == "transfer":
                ledger.transfer(key, src, dst, amount)
            elif kind == "lock":
                receipt = ledger.lock_funds(key, src, amount, dst, "tag", 1000, now=0)
                lock_ids.append(receipt.entries[0].lock_id)
            elif kind == "drawdown" and lock_ids:
                ledger.drawdown_lock(key, lock_ids[idx % len(lock_ids)], amount, "tag", now=1)
            elif kind == "release" and lock_ids:
                ledger.release_lock(key, lock_ids[idx % len(lock_ids)])
            elif kind == "bridge":
                ledger.bridge_adjust(key, src, amount if idx % 2 else -amount, f"ref{n}", authority="fmi")
        except Exception:
            continue
        if replay_each:
            # Replaying the same key must be a no-op for every command kind.
            snapshot = ledger.state_snapshot()
            try:
                if kind == "transfer":
                    ledger.transfer(key, src, dst, amount)
                elif kind == "lock":
                    ledger.lock_funds(key, src, amount, dst, "tag", 1000, now=0)
                elif kind == "drawdown" and lock_ids:
                    ledger.drawdown_lock(key, lock_ids[idx % len(lock_ids)], amount, "tag", now=1)
                elif kind == "release" and lock_ids:
                    ledger.release_lock(key, lock_ids[idx % len(lock_ids)])
                elif kind == "bridge":
                    ledger.bridge_adjust(key, src, amount if idx % 2 else -amount, f"ref{n}", authority="fmi")
            except Exception:
                pass
            assert ledger.state_snapshot() == snapshot


class TestKernelProperties:
    @given(commands=command_strategy)
    @settings(max_examples=200, deadline=None)
    def test_conservation_and_lock_safety(self, commands):
        ledger = make_ledger()
        accounts = [open_cobm(ledger, f"u{i}", 10000, key=f"o{i}") for i in range(4)]
        start_total = sum(ledger.total_balance(a) for a in accounts)
        run_commands(ledger, accounts, commands)
        bridge_delta = sum(delta for _, _, delta in ledger.issuance_journal)
        end_total = sum(ledger.total_balance(a) for a in accounts)
        assert end_total == start_total + bridge_delta
        for account in accounts:
            assert ledger.accounts[account].available >= 0
            assert (
                ledger.accounts[account].available + ledger.locked_amount(account)
                == ledger.total_balance(account)
            )

    @given(commands=command_strategy)
    @settings(max_examples=100, deadline=None)
    def test_idempotent_replay(self, commands):
        ledger = make_ledger()
        accounts = [open_cobm(ledger, f"u{i}", 10000, key=f"o{i}") for i in range(4)]
        run_commands(ledger, accounts, commands, replay_each=True)

    @given(commands=command_strategy)
    @settings(max_examples=100, deadline=None)
    def test_serialization_equivalence(self, commands):
        # Applying a batch through the kernel must equal replaying the
        # accepted commands one at a time in receipt-sequence order.
        ledger = make_ledger()
        accounts = [open_cobm(ledger, f"u{i}", 10000, key=f"o{i}") for i in range(4)]
        accepted = []
        ledger._on_receipt = accepted.append
        run_commands(ledger, accounts, commands)

        replayed = make_ledger()
        for i in range(4):
            open_cobm(replayed, f"u{i}", 10000, key=f"o{i}")
        for receipt in accepted:
            kind = receipt.kind
            info = dict(receipt.info)
            if kind == "transfer":
                replayed.transfer(receipt.cmd_key, receipt.entries[0].account_id, receipt.entries[1].account_id, receipt.entries[1].delta)
            elif kind == "lock":
                replayed.lock_funds(
                    receipt.cmd_key, receipt.entries[0].account_id, info["amount"],
                    info["beneficiary"], info["condition_tag"], info["expiry"], now=0,
                )
            elif kind == "drawdown":
                replayed.drawdown_lock(
                    receipt.cmd_key, receipt.entries[0].lock_id, -receipt.entries[0].delta, "tag", now=1
                )
            elif kind == "release":
                replayed.release_lock(receipt.cmd_key, receipt.entries[0].lock_id)
            elif kind == "bridge":
                replayed.bridge_adjust(
                    receipt.cmd_key, receipt.entries[0].account_id, receipt.entries[0].delta,
                    info["bridge_ref"], authority="fmi",
                )
        assert replayed.state_snapshot() == ledger.state_snapshot()
