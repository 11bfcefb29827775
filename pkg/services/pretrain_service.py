"""
Self-supervised pre-training on random-walk corpora.
"""

import logging
import math
import random
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import torch

from models.config import PretrainConfig
from models.errors import PrefixForgeError, TrainingDivergenceError
from models.policy import PolicyModel, save_checkpoint, taken_log_probs
from models.schemas import PretrainReport
from services.sampling_service import legal_rate
from utils.legality import batched_mask_tensors, pad_sequences
from utils.prefix_graph import CoordinateSequence

log = logging.getLogger(__name__)


def uniform_loss(model: PolicyModel) -> float:
    """Cross-entropy of a uniform policy: 2·ln(n_max) per predicted coordinate."""
    return 2.0 * math.log(model.config.max_width)


def pretrain_loss(model: PolicyModel, sequences: Sequence[CoordinateSequence]) -> torch.Tensor:
    """Mean over the batch of -(1/k) Σ_p [log P(row_p) + log P(col_p)]."""
    if not sequences:
        raise PrefixForgeError("pretrain_loss needs at least one sequence")
    device = next(model.parameters()).device
    rows, cols, lengths = pad_sequences(sequences, device=device)
    if int(lengths.min()) < 2:
        raise PrefixForgeError("sequences must have at least two coordinates")
    row_logp, col_logp, present = taken_log_probs(model, rows, cols, lengths)
    predicted = present.sum(dim=1)
    per_sequence = -(row_logp + col_logp).sum(dim=1) / predicted
    return per_sequence.mean()


class ArgmaxScores(NamedTuple):
    accuracy: float
    ceiling: float
    unmasked_legal: float


@torch.no_grad()
def _argmax_counts(model: PolicyModel, sequences: Sequence[CoordinateSequence]) -> Tuple[int, int, float, int]:
    """(hits, positions, Σ 1/|legal successors|, legal unmasked argmaxes) for one width."""
    device = next(model.parameters()).device
    n = sequences[0].width
    vocab = model.config.max_width
    rows, cols, lengths = pad_sequences(sequences, device=device)
    row_logits, col_logits = model(rows, cols)

    hits = total = legal = 0
    ceiling = 0.0
    for p in range(1, rows.shape[1]):
        live = lengths > p
        if not bool(live.any()):
            break
        prefix = torch.full_like(lengths, p)[live]
        row_mask, col_mask = batched_mask_tensors(rows[live], cols[live], prefix, n)
        # The row is always forced, so the column choices alone set the odds.
        ceiling += float((1.0 / (~col_mask).sum(dim=1).double()).sum())
        padding = torch.ones(int(live.sum()), vocab - n, dtype=torch.bool, device=device)
        row_mask = torch.cat((row_mask, padding), dim=1)
        col_mask = torch.cat((col_mask, padding), dim=1)
        raw_rows = row_logits[live, p - 1].argmax(dim=-1)
        raw_cols = col_logits[live, p - 1].argmax(dim=-1)
        picked = torch.arange(len(raw_rows), device=device)
        legal += int((~row_mask[picked, raw_rows] & ~col_mask[picked, raw_cols]).sum())
        guess_rows = row_logits[live, p - 1].masked_fill(row_mask, float("-inf")).argmax(dim=-1)
        guess_cols = col_logits[live, p - 1].masked_fill(col_mask, float("-inf")).argmax(dim=-1)
        hits += int(((guess_rows == rows[live, p]) & (guess_cols == cols[live, p])).sum())
        total += int(live.sum())
    return hits, total, ceiling, legal


def masked_argmax_scores(
    model: PolicyModel, sequences: Sequence[CoordinateSequence], batch_size: int = 256
) -> ArgmaxScores:
    """
    Next-coordinate argmax checks over every predicted position.

    ``accuracy`` compares the masked argmax with the recorded coordinate.
    Random-walk targets are uniform over the legal successors, so its
    expectation for any legal predictor is the mean of 1/|legal successors|,
    returned as ``ceiling``. ``unmasked_legal`` is the share of positions
    where the argmax of the raw distributions is already a legal successor.
    """
    if not sequences:
        return ArgmaxScores(0.0, 0.0, 0.0)
    by_width: Dict[int, List[CoordinateSequence]] = {}
    for seq in sequences:
        by_width.setdefault(seq.width, []).append(seq)

    hits = total = legal = 0
    ceiling = 0.0
    for group in by_width.values():
        for start in range(0, len(group), batch_size):
            h, t, c, g = _argmax_counts(model, group[start:start + batch_size])
            hits, total, ceiling, legal = hits + h, total + t, ceiling + c, legal + g
    if not total:
        return ArgmaxScores(0.0, 0.0, 0.0)
    return ArgmaxScores(hits / total, ceiling / total, legal / total)


def masked_argmax_accuracy(model: PolicyModel, sequences: Sequence[CoordinateSequence]) -> float:
    """Share of predicted positions whose masked argmax equals the recorded coordinate."""
    return masked_argmax_scores(model, sequences).accuracy


def split_corpus(
    corpus: Sequence[CoordinateSequence], holdout_fraction: float, seed: int
) -> Tuple[List[CoordinateSequence], List[CoordinateSequence]]:
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    holdout = int(len(corpus) * holdout_fraction)
    if holdout >= len(corpus):
        holdout = len(corpus) - 1
    return [corpus[i] for i in order[holdout:]], [corpus[i] for i in order[:holdout]]


def _epoch_path(checkpoint_path: str, epoch: int) -> str:
    path = Path(checkpoint_path)
    return str(path.with_name(f"{path.stem}_epoch{epoch}{path.suffix or '.pt'}"))


@torch.no_grad()
def evaluate_loss(model: PolicyModel, sequences: Sequence[CoordinateSequence], batch_size: int) -> float:
    total, weight = 0.0, 0
    for start in range(0, len(sequences), batch_size):
        batch = sequences[start:start + batch_size]
        total += float(pretrain_loss(model, batch)) * len(batch)
        weight += len(batch)
    return total / weight


def pretrain(
    model: PolicyModel,
    corpus: Sequence[CoordinateSequence],
    config: PretrainConfig,
    checkpoint_path: Optional[str] = None,
    seed: int = 0,
    legal_rate_width: Optional[int] = None,
) -> PretrainReport:
    """
    Adam over shuffled mini-batches; one checkpoint per epoch.

    Raises TrainingDivergenceError on a non-finite loss, naming the last
    checkpoint that was written.
    """
    if not corpus:
        raise PrefixForgeError("pre-training corpus is empty", {"flag": "--corpus"})

    train_set, heldout = split_corpus(corpus, config.holdout_fraction, seed)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    baseline = uniform_loss(model)
    checkpoints: List[str] = []
    train_losses: List[float] = []

    log.info(
        f"🚀 Pre-training on {len(train_set)} sequences ({len(heldout)} held out), "
        f"{config.epochs} epochs, batch {config.batch_size}, lr {config.lr}"
    )
    model.train()
    for epoch in range(1, config.epochs + 1):
        order = torch.randperm(len(train_set), generator=generator).tolist()
        running, batches = 0.0, 0
        for step, start in enumerate(range(0, len(order), config.batch_size), start=1):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            loss = pretrain_loss(model, batch)
            if not torch.isfinite(loss):
                last_good = checkpoints[-1] if checkpoints else None
                log.error(f"Non-finite pre-training loss at epoch {epoch}, step {step}")
                raise TrainingDivergenceError(
                    "Pre-training diverged (non-finite loss)",
                    {"epoch": epoch, "step": step, "last_checkpoint": last_good},
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            running += float(loss)
            batches += 1

        epoch_loss = running / batches
        train_losses.append(epoch_loss)
        if checkpoint_path:
            checkpoints.append(save_checkpoint(
                model, _epoch_path(checkpoint_path, epoch), {"epoch": epoch, "train_loss": epoch_loss}
            ))
        log.info(f"Epoch {epoch}/{config.epochs}: train loss {epoch_loss:.4f} (uniform {baseline:.4f})")

    model.eval()
    heldout_loss = evaluate_loss(model, heldout, config.batch_size) if heldout else None
    scores = masked_argmax_scores(model, heldout, config.batch_size) if heldout else None
    rate = None
    if legal_rate_width and config.legal_rate_samples:
        rate = legal_rate(model, legal_rate_width, config.legal_rate_samples, generator=generator)

    report = PretrainReport(
        epochs=config.epochs,
        train_losses=train_losses,
        heldout_loss=heldout_loss,
        heldout_accuracy=scores.accuracy if scores else None,
        heldout_accuracy_ceiling=scores.ceiling if scores else None,
        heldout_argmax_legal=scores.unmasked_legal if scores else None,
        uniform_loss=baseline,
        legal_rate=rate,
        checkpoints=checkpoints,
    )
    if checkpoint_path:
        checkpoints.append(save_checkpoint(model, checkpoint_path, report.model_dump()))
        report.checkpoints = checkpoints
    log.info(
        f"✅ Pre-training done: held-out loss {heldout_loss}, masked-argmax accuracy {report.heldout_accuracy} "
        f"(ceiling {report.heldout_accuracy_ceiling}), legal rate {rate}"
    )
    return report
