"""Deterministic retail digital pound ecosystem simulator."""

__version__ = "0.1.0"

from .ledger import Ledger, MoneyForm  # noqa: F401
