"""
Append-only JSONL store of generated designs.

One DesignRecord per line. Records are keyed by the sha256 of their
scan-order sequence; the first record for a key wins. An in-memory index
mirrors the file and all writes go through one lock.
"""

import logging
import os
import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import ValidationError

from models.errors import DatabaseError
from models.schemas import DesignRecord, DesignSource, RewardMode
from utils.prefix_graph import (
    CoordinateSequence,
    PrefixGraph,
    depth,
    graph_to_sequence,
    sequence_to_graph,
    size,
)

log = logging.getLogger(__name__)


def make_record(
    seq: CoordinateSequence,
    area: float,
    delay: float,
    iteration: int = 0,
    source: DesignSource = "sampled",
    reward_mode: RewardMode = "proxy",
    fallback: bool = False,
) -> DesignRecord:
    graph = sequence_to_graph(seq)
    return DesignRecord(
        key=seq.key(),
        width=seq.width,
        sequence=seq.pairs(),
        size=size(graph),
        depth=depth(graph),
        area=area,
        delay=delay,
        reward=-(area * delay),
        iteration=iteration,
        source=source,
        reward_mode=reward_mode,
        fallback=fallback,
    )


def proxy_record(
    seq: CoordinateSequence, iteration: int = 0, source: DesignSource = "sampled"
) -> DesignRecord:
    """Record scored with area = size and delay = depth."""
    graph = sequence_to_graph(seq)
    return make_record(seq, float(size(graph)), float(depth(graph)), iteration, source)


def record_sequence(record: DesignRecord) -> CoordinateSequence:
    return CoordinateSequence.of(record.width, record.sequence)


def adp_sort_key(record: DesignRecord):
    return (record.adp, record.size, record.iteration)


class DesignDatabase:
    def __init__(self, path: Optional[str] = None):
        self.path = Path(path) if path else None
        self._records: Dict[str, DesignRecord] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = DesignRecord.model_validate_json(line)
                except ValidationError as exc:
                    raise DatabaseError(
                        f"Corrupt design record at {self.path}:{line_no}",
                        {"line": line_no, "details": str(exc)},
                    ) from exc
                self._records.setdefault(record.key, record)
        log.info(f"Loaded {len(self._records)} designs from {self.path}")

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def get(self, key: str) -> Optional[DesignRecord]:
        return self._records.get(key)

    def records(self, width: Optional[int] = None) -> List[DesignRecord]:
        return [r for r in self._records.values() if width is None or r.width == width]

    @staticmethod
    def _check(record: DesignRecord) -> None:
        seq = record_sequence(record)
        graph = sequence_to_graph(seq)
        if seq.key() != record.key:
            raise DatabaseError("record key does not match its sequence", {"key": record.key})
        if (size(graph), depth(graph)) != (record.size, record.depth):
            raise DatabaseError(
                f"record metrics ({record.size},{record.depth}) disagree with its graph "
                f"({size(graph)},{depth(graph)})",
                {"key": record.key},
            )

    def insert(self, record: DesignRecord) -> bool:
        """Validate and store; returns False when the design is already present."""
        self._check(record)
        with self._lock:
            if record.key in self._records:
                return False
            if self.path:
                try:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    with self.path.open("a", encoding="utf-8", newline="\n") as handle:
                        handle.write(record.model_dump_json() + "\n")
                except OSError as exc:
                    raise DatabaseError(f"Could not append to {self.path}: {exc}") from exc
            self._records[record.key] = record
            return True

    def insert_many(self, records: Iterable[DesignRecord]) -> int:
        return sum(1 for record in records if self.insert(record))

    def seed(self, graphs: Iterable[PrefixGraph]) -> int:
        """Insert manual designs (proxy-scored, iteration 0, source ``seeded``)."""
        added = 0
        for graph in graphs:
            if self.insert(proxy_record(graph_to_sequence(graph), iteration=0, source="seeded")):
                added += 1
        log.info(f"Seeded {added} manual design(s)")
        return added

    def top_k_by_adp(self, k: int, width: Optional[int] = None) -> List[DesignRecord]:
        """k lowest area×delay; ties go to smaller size, then earlier iteration."""
        if k <= 0:
            return []
        return sorted(self.records(width), key=adp_sort_key)[:k]

    def dedupe(self) -> int:
        """Rewrite the backing file keeping the first record per key; returns lines dropped."""
        if not self.path or not self.path.exists():
            return 0
        with self._lock:
            kept: Dict[str, str] = {}
            dropped = 0
            with self.path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    record = DesignRecord.model_validate_json(line)
                    if record.key in kept:
                        dropped += 1
                    else:
                        kept[record.key] = line.rstrip("\n")
            scratch = self.path.with_suffix(self.path.suffix + ".tmp")
            scratch.write_text("".join(line + "\n" for line in kept.values()), encoding="utf-8")
            os.replace(scratch, self.path)
            self._records = {
                key: DesignRecord.model_validate_json(line) for key, line in kept.items()
            }
        log.info(f"Deduplicated {self.path}: dropped {dropped} duplicate line(s)")
        return dropped
