"""
Legality masks over the next coordinate of a partial sequence.

Mask polarity: True marks an INVALID index. Both halves are computed from
the last coordinate L_k alone:

- L_k on column 0 (row finished): the only legal successor is the next
  diagonal (r+1, r+1).
- otherwise: the row stays at L_k.row and the column must be one already
  emitted in row L_k.col - 1 (the LSP candidates of the next merge node).
"""

import logging
import random
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import torch

from models.errors import SamplingError, SequenceValidationError
from utils.prefix_graph import Coordinate, CoordinateSequence, check_sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LegalityMask:
    row_mask: Tuple[bool, ...]
    col_mask: Tuple[bool, ...]

    def valid_rows(self) -> List[int]:
        return [i for i, invalid in enumerate(self.row_mask) if not invalid]

    def valid_cols(self) -> List[int]:
        return [j for j, invalid in enumerate(self.col_mask) if not invalid]

    def valid_coordinates(self) -> List[Coordinate]:
        return [Coordinate(r, c) for r in self.valid_rows() for c in self.valid_cols()]

    def to_tensors(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return (
            torch.tensor(self.row_mask, dtype=torch.bool),
            torch.tensor(self.col_mask, dtype=torch.bool),
        )


def _candidates(last: Coordinate, row_cols: Callable[[int], Iterable[int]]) -> Tuple[List[int], List[int]]:
    if last.col == 0:
        return [last.row + 1], [last.row + 1]
    return [last.row], sorted(row_cols(last.col - 1))


def _to_mask(n: int, rows: Iterable[int], cols: Iterable[int]) -> LegalityMask:
    valid_rows, valid_cols = set(rows), set(cols)
    return LegalityMask(
        row_mask=tuple(i not in valid_rows for i in range(n)),
        col_mask=tuple(j not in valid_cols for j in range(n)),
    )


def _check_extendable(partial: CoordinateSequence, n: int) -> CoordinateSequence:
    partial = CoordinateSequence(n, partial.coords)
    check_sequence(partial, require_complete=False)
    if partial.is_complete:
        raise SequenceValidationError(
            f"sequence already ends at EOS ({n - 1},0); no next coordinate", len(partial) - 1
        )
    return partial


def legal_mask(partial: CoordinateSequence, n: int) -> LegalityMask:
    partial = _check_extendable(partial, n)
    last = partial.last

    def row_cols(row: int) -> List[int]:
        return [c.col for c in partial.coords[:-1] if c.row == row]

    rows, cols = _candidates(last, row_cols)
    return _to_mask(n, rows, cols)


# -----------------------------------------------------------------------------
# Batched masks
# -----------------------------------------------------------------------------
def batched_mask_tensors(
    rows: torch.Tensor,
    cols: torch.Tensor,
    lengths: torch.Tensor,
    n: int,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Vectorized masks for right-padded sequences.

    Args:
        rows, cols: [bs, slen] long tensors (entries past ``lengths`` ignored)
        lengths: [bs] number of valid coordinates per item (>= 1)
        n: bit-width

    Returns:
        (row_mask, col_mask), each a [bs, n] bool tensor, True = invalid
    """
    bs, slen = rows.shape
    device = rows.device
    batch = torch.arange(bs, device=device)
    last = lengths - 1
    last_row = rows[batch, last]
    last_col = cols[batch, last]
    finished_row = last_col == 0

    # One spare slot absorbs the (n, n) successor of a completed sequence.
    row_mask = torch.ones(bs, n + 1, dtype=torch.bool, device=device)
    next_row = torch.where(finished_row, last_row + 1, last_row).clamp(max=n)
    row_mask[batch, next_row] = False

    col_mask = torch.ones(bs, n + 1, dtype=torch.bool, device=device)
    diag = (last_row + 1).clamp(max=n)
    col_mask[batch[finished_row], diag[finished_row]] = False

    steps = torch.arange(slen, device=device).unsqueeze(0) < last.unsqueeze(1)
    lsp_row = (last_col - 1).unsqueeze(1)
    matches = (rows == lsp_row) & steps & (~finished_row).unsqueeze(1)
    items, positions = torch.nonzero(matches, as_tuple=True)
    col_mask[items, cols[items, positions]] = False

    return row_mask[:, :n], col_mask[:, :n]


def pad_sequences(
    sequences: Sequence[CoordinateSequence],
    pad_value: int = 0,
    device: Optional[torch.device] = None,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([len(s) for s in sequences], dtype=torch.long, device=device)
    slen = int(lengths.max().item()) if len(sequences) else 0
    rows = torch.full((len(sequences), slen), pad_value, dtype=torch.long, device=device)
    cols = torch.full((len(sequences), slen), pad_value, dtype=torch.long, device=device)
    for i, seq in enumerate(sequences):
        if len(seq):
            coords = torch.tensor(seq.coords, dtype=torch.long, device=device)
            rows[i, : len(seq)] = coords[:, 0]
            cols[i, : len(seq)] = coords[:, 1]
    return rows, cols, lengths


def legal_mask_batched(partials: Sequence[CoordinateSequence], n: int) -> List[LegalityMask]:
    if not partials:
        return []
    checked = [_check_extendable(p, n) for p in partials]
    rows, cols, lengths = pad_sequences(checked)
    row_mask, col_mask = batched_mask_tensors(rows, cols, lengths, n)
    return [
        LegalityMask(tuple(r.tolist()), tuple(c.tolist()))
        for r, c in zip(row_mask, col_mask)
    ]


# -----------------------------------------------------------------------------
# Masked sampling
# -----------------------------------------------------------------------------
def masked_distribution(
    logits: torch.Tensor,
    invalid: torch.Tensor,
    temperature: float = 1.0,
    fallback: bool = True,
) -> torch.Tensor:
    """
    Temper logits, zero invalid entries and renormalize, row-wise.

    Rows whose valid mass underflows fall back to uniform over valid
    entries (warning) or raise SamplingError when ``fallback`` is off.
    """
    if temperature <= 0:
        raise SamplingError(f"temperature must be positive, got {temperature}")
    valid = ~invalid
    if not bool(valid.any(dim=-1).all()):
        raise SamplingError("mask leaves no valid entry")

    probs = torch.softmax(logits / temperature, dim=-1) * valid
    mass = probs.sum(dim=-1, keepdim=True)
    degenerate = ~(mass.squeeze(-1) > 0) | ~torch.isfinite(mass.squeeze(-1))
    if bool(degenerate.any()):
        if not fallback:
            raise SamplingError("valid probability mass is zero after masking")
        log.warning(f"Degenerate policy on {int(degenerate.sum())} item(s); sampling uniformly over valid entries")
        uniform = valid.to(probs.dtype)
        probs = torch.where(degenerate.unsqueeze(-1), uniform, probs)
        mass = probs.sum(dim=-1, keepdim=True)
    return probs / mass


def sample_masked(
    row_logits: torch.Tensor,
    col_logits: torch.Tensor,
    row_mask: torch.Tensor,
    col_mask: torch.Tensor,
    temperature: float,
    generator: Optional[torch.Generator] = None,
    fallback: bool = True,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Row first, then column; returns two [bs] long tensors."""
    row_probs = masked_distribution(row_logits, row_mask, temperature, fallback)
    next_rows = torch.multinomial(row_probs, 1, generator=generator).squeeze(-1)
    col_probs = masked_distribution(col_logits, col_mask, temperature, fallback)
    next_cols = torch.multinomial(col_probs, 1, generator=generator).squeeze(-1)
    return next_rows, next_cols


def masked_sample_step(
    probabilities_row: Sequence[float],
    probabilities_col: Sequence[float],
    mask: LegalityMask,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
    fallback: bool = True,
) -> Coordinate:
    row_probs = torch.as_tensor(probabilities_row, dtype=torch.float64)
    col_probs = torch.as_tensor(probabilities_col, dtype=torch.float64)
    if (row_probs < 0).any() or (col_probs < 0).any():
        raise SamplingError("probabilities must be non-negative")
    row_mask, col_mask = mask.to_tensors()
    # log(0) = -inf keeps zero-probability entries at zero after tempering.
    rows, cols = sample_masked(
        torch.log(row_probs).unsqueeze(0),
        torch.log(col_probs).unsqueeze(0),
        row_mask.unsqueeze(0),
        col_mask.unsqueeze(0),
        temperature,
        generator,
        fallback,
    )
    return Coordinate(int(rows[0]), int(cols[0]))


# -----------------------------------------------------------------------------
# Random walk
# -----------------------------------------------------------------------------
class SequenceBuilder:
    """Incremental partial sequence with O(1) access to per-row columns."""

    def __init__(self, width: int) -> None:
        self.width = width
        self.coords: List[Coordinate] = [Coordinate(0, 0)]
        self._row_cols: Dict[int, List[int]] = {0: [0]}

    @property
    def done(self) -> bool:
        return self.coords[-1] == (self.width - 1, 0)

    def candidates(self) -> List[Coordinate]:
        rows, cols = _candidates(self.coords[-1], lambda r: self._row_cols.get(r, []))
        return [Coordinate(r, c) for r in rows for c in cols]

    def append(self, coord: Coordinate) -> None:
        self.coords.append(coord)
        self._row_cols.setdefault(coord.row, []).append(coord.col)

    def build(self) -> CoordinateSequence:
        return CoordinateSequence(self.width, tuple(self.coords))


def random_walk(n: int, rng: random.Random) -> CoordinateSequence:
    """Uniformly pick among legal next coordinates from (0,0) until (n-1,0)."""
    if n < 2:
        raise SequenceValidationError(f"width must be >= 2, got {n}", 0)
    builder = SequenceBuilder(n)
    while not builder.done:
        builder.append(rng.choice(builder.candidates()))
    return builder.build()
