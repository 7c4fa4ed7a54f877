"""Candidate records and the append-only JSON-lines heuristic database."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional

log = logging.getLogger(__name__)

OK = "ok"
CHECK_FAILED = "check_failed"
REPAIR_EXHAUSTED = "repair_exhausted"
STATUSES = (OK, CHECK_FAILED, REPAIR_EXHAUSTED)


@dataclass
class CandidateRecord:
    candidate_id: str
    round: int
    source: str
    status: str
    diagnostics: list = field(default_factory=list)  # Diagnostic.to_dict() entries
    fitness: Optional[float] = None
    generator: str = ""
    wall_time_s: float = 0.0
    tokens_in: Optional[int] = None
    tokens_out: Optional[int] = None
    repairs: int = 0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"bad status {self.status!r}")
        if (self.fitness is not None) != (self.status == OK):
            raise ValueError("fitness must be present exactly when status is ok")

    @property
    def ok(self) -> bool:
        return self.status == OK

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateRecord":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def candidate_id(round_: int, index: int, seed: bool = False) -> str:
    return f"r{round_:03d}-{'s' if seed else 'c'}{index:03d}"


def rank_key(rec: CandidateRecord):
    """Sort key: best fitness first, then candidate id."""
    return (-rec.fitness, rec.candidate_id)


def top_k(records: Iterable[CandidateRecord], k: int) -> List[CandidateRecord]:
    return sorted((r for r in records if r.ok), key=rank_key)[:k]


def db_append(path, records: Iterable[CandidateRecord]) -> None:
    """Append records, one JSON object per line, flushed to disk."""
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def db_load(path) -> List[CandidateRecord]:
    """Load every record; a partial trailing line is dropped with a warning."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    tail = lines.pop()  # "" when the file ends with a newline
    out = []
    for n, line in enumerate(lines, start=1):
        if line.strip():
            out.append(CandidateRecord.from_dict(json.loads(line)))
    if tail.strip():
        try:
            out.append(CandidateRecord.from_dict(json.loads(tail)))
        except (json.JSONDecodeError, TypeError, ValueError):
            log.warning("%s: dropping truncated final record (%d bytes)", path, len(tail))
    return out


def db_rewrite(path, records: Iterable[CandidateRecord]) -> None:
    """Replace the database atomically with ``records``."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    os.replace(tmp, path)
