"""
Random-walk corpus synthesis for pre-training.

Every line of a corpus file is one ``{"width": n, "seq": [[r, c], ...]}``
object. Walks start at (0,0), pick uniformly among legal next coordinates
and stop at (n-1, 0). Duplicates are kept.
"""

import logging
import random
from pathlib import Path
from typing import Iterator, List, Optional

from pydantic import ValidationError

from models.errors import DatabaseError, SequenceValidationError
from utils.legality import random_walk
from utils.prefix_graph import CoordinateSequence, check_sequence, sequence_from_json, sequence_to_json

log = logging.getLogger(__name__)


def iter_corpus(n: int, count: int, seed: int = 0) -> Iterator[CoordinateSequence]:
    rng = random.Random(seed)
    for _ in range(count):
        yield random_walk(n, rng)


def gen_corpus(n: int, count: int, path: str, seed: int = 0) -> str:
    """Stream ``count`` random-walk designs to a JSONL file."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="\n") as handle:
        for seq in iter_corpus(n, count, seed):
            handle.write(sequence_to_json(seq))
            handle.write("\n")
    log.info(f"✅ Wrote {count} width-{n} sequences to {target}")
    return str(target)


def load_corpus(path: str, limit: Optional[int] = None) -> List[CoordinateSequence]:
    source = Path(path)
    if not source.is_file():
        raise DatabaseError(f"Corpus file not found: {path}", {"flag": "--corpus", "path": path})

    sequences: List[CoordinateSequence] = []
    with source.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                seq = sequence_from_json(line)
                check_sequence(seq)
            except (ValidationError, SequenceValidationError) as exc:
                raise DatabaseError(
                    f"Invalid corpus entry at {path}:{line_no}", {"line": line_no, "details": str(exc)}
                ) from exc
            sequences.append(seq)
            if limit is not None and len(sequences) >= limit:
                break

    log.info(f"Loaded {len(sequences)} sequences from {source}")
    return sequences
