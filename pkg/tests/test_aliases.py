"""Alias store behaviour: formats, uniqueness, claims, concealment."""

import random

import pytest

from dpsim.aliases import (
    AliasClaim,
    AliasStore,
    DuplicateAliasError,
    MalformedAliasError,
    UnknownAliasError,
    card_issuer_prefix,
    check_alias_format,
)


class TestFormats:
    def test_mobile_number_shapes(self):
        check_alias_format("+447700900123", "mobile-number")
        with pytest.raises(MalformedAliasError):
            check_alias_format("+44-bad", "mobile-number")
        with pytest.raises(MalformedAliasError):
            check_alias_format("447700900123", "mobile-number")

    def test_card_number_shape_and_prefix(self):
        assert card_issuer_prefix("4123450000000019") == "412345"
        with pytest.raises(MalformedAliasError):
            check_alias_format("41234500000000", "card-number")

    def test_handle_shape(self):
        check_alias_format("laura.p", "handle")
        with pytest.raises(MalformedAliasError):
            check_alias_format("NOPE", "handle")


class TestStore:
    def test_register_and_resolve(self):
        store = AliasStore("pip-1")
        store.register("+447700900123", "mobile-number", "wal-1", "pip-1", now=3)
        record = store.resolve("+447700900123")
        assert record.wallet == "wal-1"
        assert record.registering_pip == "pip-1"

    def test_duplicate_active_alias_rejected(self):
        store = AliasStore("tsp")
        store.register("+447700900123", "mobile-number", "wal-1", "pip-1", now=3)
        with pytest.raises(DuplicateAliasError):
            store.register("+447700900123", "mobile-number", "wal-2", "pip-2", now=4)

    def test_retired_alias_not_resolvable_or_reusable(self):
        store = AliasStore("tsp")
        store.register("+447700900123", "mobile-number", "wal-1", "pip-1", now=3)
        store.retire("+447700900123")
        with pytest.raises(UnknownAliasError):
            store.resolve("+447700900123")
        with pytest.raises(DuplicateAliasError):
            store.register("+447700900123", "mobile-number", "wal-2", "pip-2", now=9)

    def test_validate_is_boolean_only(self):
        store = AliasStore("tsp")
        store.register("+447700900123", "mobile-number", "wal-1", "pip-1", now=3)
        assert store.validate("+447700900123") is True
        assert store.validate("+447700999999") is False

    def test_resolve_unknown(self):
        store = AliasStore("tsp")
        with pytest.raises(UnknownAliasError):
            store.resolve("+447700900123")


class TestFederationClaims:
    def test_first_writer_wins_by_tick(self):
        a = AliasStore("pip-1")
        b = AliasStore("pip-2")
        a.register("+447700900123", "mobile-number", "wal-1", "pip-1", now=3)
        b.register("+447700900123", "mobile-number", "wal-2", "pip-2", now=5)
        claim_a = a.claims["+447700900123"]
        claim_b = b.claims["+447700900123"]
        # Exchange claims in both directions; the later registration loses.
        assert b.apply_claim(claim_a) == claim_b
        assert a.apply_claim(claim_b) == claim_b
        assert a.owner_of("+447700900123") == "pip-1"
        assert b.owner_of("+447700900123") == "pip-1"
        assert "+447700900123" not in b.records

    def test_same_tick_breaks_on_participant_id(self):
        a = AliasStore("pip-1")
        b = AliasStore("pip-2")
        a.register("x1234567890", "handle", "wal-1", "pip-1", now=3)
        b.register("x1234567890", "handle", "wal-2", "pip-2", now=3)
        b.apply_claim(a.claims["x1234567890"])
        a.apply_claim(AliasClaim("x1234567890", "handle", "pip-2", 3))
        assert a.owner_of("x1234567890") == "pip-1"
        assert b.owner_of("x1234567890") == "pip-1"

    def test_randomized_interleavings_converge_deterministically(self):
        # The same claim set must converge to the same winner no matter the
        # delivery order; losers never hold an active record afterwards.
        claims = [
            AliasClaim("shared.alias", "handle", f"pip-{i}", tick)
            for i, tick in enumerate([4, 2, 2, 7, 9])
        ]
        expected_winner = min(claims, key=lambda c: (c.tick, c.owner)).owner
        for seed in range(50):
            order = claims[:]
            random.Random(seed).shuffle(order)
            store = AliasStore("pip-x")
            for claim in order:
                store.apply_claim(claim)
            assert store.owner_of("shared.alias") == expected_winner
