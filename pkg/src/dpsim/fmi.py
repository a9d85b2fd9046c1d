"""Instant-payment infrastructure: clearing, settlement, interop rail.

Instructions clear immediately when the debtor's funds check out and
settle over central-bank reserve accounts, never directly on the core
ledger (cross-form legs go through bridge mint/burn entries that cite
the cycle reference). A settlement cycle is one atomic saga across every
ledger it touches: either every instruction in the cycle settles or the
cycle aborts whole and the instructions stay cleared.

Two settlement modes: ``gross`` settles each instruction in its own
cycle as soon as it clears; ``net`` accumulates cleared instructions and
nets interbank reserve movements pairwise when the cycle is run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .ledger import MoneyForm, check_amount
from .money import MoneySystem, SagaLeg, _noop_emit

GROSS = "gross"
NET = "net"

SUBMITTED = "submitted"
CLEARED = "cleared"
SETTLED = "settled"
REJECTED = "rejected"


class FmiError(Exception):
    pass


class UnknownInstructionError(FmiError):
    pass


@dataclass
class ClearingInstruction:
    instr_id: str
    debtor: str
    debtor_ledger: str  # "core" for wallets, bank id otherwise
    debtor_account: str
    creditor: str
    creditor_ledger: str
    creditor_account: str
    amount: int
    source_form: str
    dest_form: str
    payload_digest: str = ""
    lock_id: Optional[str] = None
    lock_proof: Optional[str] = None
    state: str = SUBMITTED
    reject_reason: str = ""
    cycle_id: str = ""

    def to_record(self) -> dict:
        return {
            "instr_id": self.instr_id,
            "debtor": self.debtor,
            "debtor_ref": f"{self.debtor_ledger}/{self.debtor_account}",
            "creditor": self.creditor,
            "creditor_ref": f"{self.creditor_ledger}/{self.creditor_account}",
            "amount": self.amount,
            "source_form": self.source_form,
            "dest_form": self.dest_form,
            "payload_digest": self.payload_digest,
            "lock_id": self.lock_id,
            "idempotency_key": f"instr:{self.instr_id}",
            "state": self.state,
        }


@dataclass
class SettlementReport:
    cycle_id: str
    instructions: list[str]
    obligations: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "cycle_id": self.cycle_id,
            "instructions": list(self.instructions),
            "obligations": list(self.obligations),
        }


class Fmi:
    """Single-actor clearing and settlement infrastructure."""

    def __init__(self, money: MoneySystem, mode: str = GROSS, emit: Callable = _noop_emit):
        if mode not in (GROSS, NET):
            raise FmiError(f"unknown settlement mode {mode!r}")
        self.money = money
        self.mode = mode
        self._emit = emit
        self.instructions: dict[str, ClearingInstruction] = {}
        self.pending: list[str] = []
        self._cycle_count = 0
        self._inflight: Optional[SettlementReport] = None

    # -- clearing -------------------------------------------------------------

    def submit_instruction(
        self,
        instr: ClearingInstruction,
        limit_gate: Optional[Callable[[str, int], None]] = None,
        now: int = 0,
    ) -> ClearingInstruction:
        existing = self.instructions.get(instr.instr_id)
        if existing is not None:
            return existing
        check_amount(instr.amount)
        self.instructions[instr.instr_id] = instr
        if instr.source_form == MoneyForm.DIGITAL_POUND.value and instr.dest_form == MoneyForm.DIGITAL_POUND.value:
            instr.state = REJECTED
            instr.reject_reason = "wallet-to-wallet payments settle on the core ledger"
            return instr
        try:
            ledger = self.money.ledgers[instr.debtor_ledger]
            if instr.lock_id is not None:
                lock = ledger.locks.get(instr.lock_id)
                funded = lock is not None and lock.state.value == "active" and lock.remaining >= instr.amount
            else:
                funded = ledger._account(instr.debtor_account).available >= instr.amount
        except KeyError:
            funded = False
        if not funded:
            instr.state = REJECTED
            instr.reject_reason = "insufficient funds"
            return instr
        if limit_gate is not None and instr.dest_form == MoneyForm.DIGITAL_POUND.value:
            try:
                limit_gate(instr.creditor_account, instr.amount)
            except Exception as exc:
                instr.state = REJECTED
                instr.reject_reason = f"holding limit: {exc}"
                return instr
        instr.state = CLEARED
        self.pending.append(instr.instr_id)
        self._emit("instruction-cleared", instr_id=instr.instr_id, record=instr.to_record())
        return instr

    # -- settlement -----------------------------------------------------------

    def _instruction_legs(self, instr: ClearingInstruction) -> list[SagaLeg]:
        amt = instr.amount
        lock = instr.lock_id
        proof = instr.lock_proof
        reserve = self.money.reserve_accounts
        src, dst = instr.source_form, instr.dest_form
        cobm = MoneyForm.COMMERCIAL_BANK_MONEY.value
        dp = MoneyForm.DIGITAL_POUND.value
        if src == cobm and dst == cobm:
            if instr.debtor_ledger == instr.creditor_ledger:
                if lock is None:
                    return [SagaLeg(instr.debtor_ledger, "transfer", (instr.debtor_account, instr.creditor_account, amt))]
                return [
                    SagaLeg(instr.debtor_ledger, "bridge", (instr.debtor_account, -amt, lock, proof)),
                    SagaLeg(instr.creditor_ledger, "bridge", (instr.creditor_account, amt, None, None)),
                ]
            return [
                SagaLeg(instr.debtor_ledger, "bridge", (instr.debtor_account, -amt, lock, proof)),
                SagaLeg("core", "transfer", (reserve[instr.debtor_ledger], reserve[instr.creditor_ledger], amt)),
                SagaLeg(instr.creditor_ledger, "bridge", (instr.creditor_account, amt, None, None)),
            ]
        if src == dp and dst == cobm:
            return [
                SagaLeg("core", "bridge", (instr.debtor_account, -amt, lock, proof)),
                SagaLeg("core", "bridge", (reserve[instr.creditor_ledger], amt, None, None)),
                SagaLeg(instr.creditor_ledger, "bridge", (instr.creditor_account, amt, None, None)),
            ]
        if src == cobm and dst == dp:
            return [
                SagaLeg(instr.debtor_ledger, "bridge", (instr.debtor_account, -amt, lock, proof)),
                SagaLeg("core", "bridge", (reserve[instr.debtor_ledger], -amt, None, None)),
                SagaLeg("core", "bridge", (instr.creditor_account, amt, None, None)),
            ]
        raise FmiError(f"unsupported form pair {src} -> {dst}")

    def _reserve_outflows(self, instrs: list[ClearingInstruction]) -> dict[str, int]:
        """Net reserve-account deltas a settlement would cause, per bank."""
        deltas: dict[str, int] = {}
        cobm = MoneyForm.COMMERCIAL_BANK_MONEY.value
        dp = MoneyForm.DIGITAL_POUND.value
        for instr in instrs:
            if instr.source_form == cobm and instr.dest_form == cobm:
                if instr.debtor_ledger != instr.creditor_ledger:
                    deltas[instr.debtor_ledger] = deltas.get(instr.debtor_ledger, 0) - instr.amount
                    deltas[instr.creditor_ledger] = deltas.get(instr.creditor_ledger, 0) + instr.amount
            elif instr.source_form == cobm and instr.dest_form == dp:
                deltas[instr.debtor_ledger] = deltas.get(instr.debtor_ledger, 0) - instr.amount
            elif instr.source_form == dp and instr.dest_form == cobm:
                deltas[instr.creditor_ledger] = deltas.get(instr.creditor_ledger, 0) + instr.amount
        return deltas

    def settle_cycle(self, now: int = 0) -> Optional[SettlementReport]:
        """Settle all pending cleared instructions in one atomic cycle."""
        if not self.pending:
            return None
        self._cycle_count += 1
        cycle_id = f"cycle-{self._cycle_count:04d}"
        instrs = [self.instructions[i] for i in self.pending]

        # Reserve sufficiency is checked before any leg applies: a short
        # reserve aborts the whole cycle and leaves every instruction cleared.
        deltas = self._reserve_outflows(instrs)
        for bank_id, delta in sorted(deltas.items()):
            reserve_account = self.money.reserve_accounts[bank_id]
            if delta < 0 and self.money.core._account(reserve_account).available < -delta:
                self._emit(
                    "cycle-aborted", cycle_id=cycle_id, reason="reserve-insufficiency",
                    bank=bank_id, shortfall=-delta,
                )
                self._cycle_count -= 1
                return None

        legs: list[SagaLeg] = []
        obligations: list[dict] = []
        if self.mode == NET:
            pair_net: dict[tuple[str, str], int] = {}
            for instr in instrs:
                instr_legs = self._instruction_legs(instr)
                for leg in instr_legs:
                    if leg.op == "transfer" and leg.ledger_id == "core":
                        src_res, dst_res, amt = leg.params
                        key = tuple(sorted((src_res, dst_res)))
                        signed = amt if (src_res, dst_res) == key else -amt
                        pair_net[key] = pair_net.get(key, 0) + signed
                    else:
                        legs.append(leg)
            for (res_a, res_b), net in sorted(pair_net.items()):
                if net > 0:
                    legs.append(SagaLeg("core", "transfer", (res_a, res_b, net)))
                    obligations.append({"from": res_a, "to": res_b, "amount": net})
                elif net < 0:
                    legs.append(SagaLeg("core", "transfer", (res_b, res_a, -net)))
                    obligations.append({"from": res_b, "to": res_a, "amount": -net})
        else:
            for instr in instrs:
                legs.extend(self._instruction_legs(instr))
            for bank_id, delta in sorted(deltas.items()):
                obligations.append({"bank": bank_id, "reserve_delta": delta})

        self._inflight = SettlementReport(cycle_id, [i.instr_id for i in instrs], obligations)
        self.money.sagas.run(cycle_id, legs, now=now)
        return self._finalize_cycle()

    def _finalize_cycle(self) -> SettlementReport:
        report = self._inflight
        assert report is not None
        for instr_id in report.instructions:
            instr = self.instructions[instr_id]
            instr.state = SETTLED
            instr.cycle_id = report.cycle_id
        self.pending = [i for i in self.pending if i not in set(report.instructions)]
        self._inflight = None
        self._emit("cycle-settled", record=report.to_record())
        return report

    def recover(self, now: int = 0) -> Optional[SettlementReport]:
        """Complete an interrupted cycle after a crash-restart."""
        recovered = self.money.sagas.recover(now)
        if self._inflight is not None and self._inflight.cycle_id in recovered:
            return self._finalize_cycle()
        return None

    def convert(
        self,
        instr: ClearingInstruction,
        limit_gate: Optional[Callable[[str, int], None]] = None,
        now: int = 0,
    ) -> ClearingInstruction:
        """Clear and (in gross mode) immediately settle one instruction."""
        result = self.submit_instruction(instr, limit_gate=limit_gate, now=now)
        if result.state == CLEARED and self.mode == GROSS:
            self.settle_cycle(now=now)
        return result
