"""Append-only event log with a canonical JSON line format.

Every run produces one log: a header line followed by one line per event.
Field order is fixed (header fields, then ``seq``/``tick``/``kind``, then
event fields in the order the emitter supplied them), amounts are plain
integers, and serialization is ASCII with no whitespace, so the same run
always produces byte-identical lines. Audits and reports are computed
from this log alone.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable

LOG_SCHEMA = "dpsim-log/1"


def canonical_json(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def content_digest(obj) -> str:
    """Stable content digest of a JSON-serializable object (hex, not a security primitive)."""
    import zlib

    return format(zlib.crc32(canonical_json(obj).encode("ascii")), "08x")


class Event(dict):
    """One log record; a dict with guaranteed ``seq``/``tick``/``kind`` keys."""

    @property
    def seq(self) -> int:
        return self["seq"]

    @property
    def tick(self) -> int:
        return self["tick"]

    @property
    def kind(self) -> str:
        return self["kind"]


class EventLog:
    def __init__(self, header: dict | None = None):
        self.header = {"schema": LOG_SCHEMA}
        if header:
            self.header.update(header)
        self.events: list[Event] = []

    def append(self, kind: str, tick: int, **fields) -> Event:
        event = Event(seq=len(self.events) + 1, tick=tick, kind=kind)
        event.update(fields)
        self.events.append(event)
        return event

    def of_kind(self, *kinds: str) -> list[Event]:
        wanted = set(kinds)
        return [e for e in self.events if e.kind in wanted]

    def to_lines(self) -> list[str]:
        return [canonical_json(self.header)] + [canonical_json(e) for e in self.events]

    def to_text(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("ascii")).hexdigest()

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EventLog":
        lines = [line for line in (l.strip() for l in lines) if line]
        if not lines:
            raise ValueError("empty event log")
        header = json.loads(lines[0])
        if header.get("schema") != LOG_SCHEMA:
            raise ValueError(f"unsupported log schema: {header.get('schema')!r}")
        log = cls()
        log.header = header
        for line in lines[1:]:
            log.events.append(Event(json.loads(line)))
        return log

    @classmethod
    def read(cls, path) -> "EventLog":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_lines(fh)
