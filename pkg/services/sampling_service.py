"""
Autoregressive generation from the policy: masked rollouts, unmasked
legal-rate measurement, sampling statistics and attention dumps.
"""

import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
import torch
import torch.nn.functional as F

from models.errors import ModelRangeError, SamplingError
from models.policy import PolicyModel
from models.schemas import SampleStats
from utils.legality import batched_mask_tensors, masked_distribution, sample_masked
from utils.prefix_graph import CoordinateSequence, check_sequence, max_sequence_length

log = logging.getLogger(__name__)

DEFAULT_BATCH = 256


def _device(model: PolicyModel) -> torch.device:
    return next(model.parameters()).device


def _check_width(model: PolicyModel, n: int) -> None:
    if not 2 <= n <= model.config.max_width:
        raise ModelRangeError(f"width {n} outside [2, {model.config.max_width}] for this model")


def _widen(mask: torch.Tensor, vocab: int) -> torch.Tensor:
    """Extend a width-n mask to the model vocabulary; indices >= n are invalid."""
    return F.pad(mask, (0, vocab - mask.shape[1]), value=True)


def _to_sequences(n: int, rows: torch.Tensor, cols: torch.Tensor, lengths: List[int]) -> List[CoordinateSequence]:
    rows_list, cols_list = rows.tolist(), cols.tolist()
    return [
        CoordinateSequence.of(n, zip(rows_list[i][:length], cols_list[i][:length]))
        for i, length in enumerate(lengths)
    ]


@torch.no_grad()
def _rollout_batch(
    model: PolicyModel,
    n: int,
    batch: int,
    temperature: float,
    generator: Optional[torch.Generator],
    masked: bool,
    fallback: bool,
) -> Tuple[List[CoordinateSequence], List[bool]]:
    device = _device(model)
    vocab = model.config.max_width
    cap = max_sequence_length(n)
    eos_row = n - 1

    rows = torch.zeros(batch, 1, dtype=torch.long, device=device)
    cols = torch.zeros(batch, 1, dtype=torch.long, device=device)
    lengths = [1] * batch
    legal = [True] * batch
    active = torch.ones(batch, dtype=torch.bool, device=device)

    while bool(active.any()):
        length = rows.shape[1]
        if length >= cap:
            if masked:
                raise SamplingError(f"masked rollout exceeded {cap} coordinates at width {n}")
            for i in active.nonzero().flatten().tolist():
                legal[i] = False
            break

        index = active.nonzero().flatten()
        sub_rows, sub_cols = rows[index], cols[index]
        row_logits, col_logits = model(sub_rows, sub_cols)
        row_logits, col_logits = row_logits[:, -1], col_logits[:, -1]
        sub_lengths = torch.full((len(index),), length, dtype=torch.long, device=device)
        row_mask, col_mask = batched_mask_tensors(sub_rows, sub_cols, sub_lengths, n)

        if masked:
            next_rows, next_cols = sample_masked(
                row_logits, col_logits, _widen(row_mask, vocab), _widen(col_mask, vocab),
                temperature, generator, fallback,
            )
        else:
            no_mask = torch.zeros_like(row_logits, dtype=torch.bool)
            next_rows = torch.multinomial(
                masked_distribution(row_logits, no_mask, temperature), 1, generator=generator
            ).squeeze(-1)
            next_cols = torch.multinomial(
                masked_distribution(col_logits, no_mask, temperature), 1, generator=generator
            ).squeeze(-1)

        step_rows = torch.zeros(batch, dtype=torch.long, device=device)
        step_cols = torch.zeros(batch, dtype=torch.long, device=device)
        step_rows[index] = next_rows
        step_cols[index] = next_cols
        rows = torch.cat((rows, step_rows.unsqueeze(1)), dim=1)
        cols = torch.cat((cols, step_cols.unsqueeze(1)), dim=1)

        in_range = (next_rows < n) & (next_cols < n)
        safe_rows, safe_cols = next_rows.clamp(max=n - 1), next_cols.clamp(max=n - 1)
        sub = torch.arange(len(index), device=device)
        ok = in_range & ~row_mask[sub, safe_rows] & ~col_mask[sub, safe_cols]
        finished = (next_rows == eos_row) & (next_cols == 0)

        for position, item in enumerate(index.tolist()):
            lengths[item] = length + 1
            if not bool(ok[position]):
                legal[item] = False
                active[item] = False
            elif bool(finished[position]):
                active[item] = False

    return _to_sequences(n, rows, cols, lengths), legal


def rollout(
    model: PolicyModel,
    n: int,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
    batch: int = 1,
    fallback: bool = True,
    chunk_size: int = DEFAULT_BATCH,
) -> List[CoordinateSequence]:
    """
    Masked generation of ``batch`` complete width-n designs.

    Any n <= max_width works with the same weights: the mask never admits
    an index >= n and generation stops at (n-1, 0).
    """
    _check_width(model, n)
    was_training = model.training
    model.eval()
    sequences: List[CoordinateSequence] = []
    try:
        for start in range(0, batch, chunk_size):
            size = min(chunk_size, batch - start)
            chunk, legal = _rollout_batch(model, n, size, temperature, generator, True, fallback)
            if not all(legal):
                raise SamplingError("masked rollout produced an illegal coordinate")
            sequences.extend(chunk)
    finally:
        model.train(was_training)
    for seq in sequences:
        check_sequence(seq)
    return sequences


def unmasked_rollout(
    model: PolicyModel,
    n: int,
    samples: int,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
    chunk_size: int = DEFAULT_BATCH,
) -> List[Tuple[CoordinateSequence, bool]]:
    """Pure sampling; each item is cut at its first rule-violating coordinate."""
    _check_width(model, n)
    was_training = model.training
    model.eval()
    results: List[Tuple[CoordinateSequence, bool]] = []
    try:
        for start in range(0, samples, chunk_size):
            size = min(chunk_size, samples - start)
            chunk, legal = _rollout_batch(model, n, size, temperature, generator, False, True)
            results.extend(zip(chunk, legal))
    finally:
        model.train(was_training)
    return results


def legal_rate(
    model: PolicyModel,
    n: int,
    samples: int = 1000,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
) -> float:
    if samples <= 0:
        return 0.0
    results = unmasked_rollout(model, n, samples, temperature, generator)
    rate = sum(1 for _, ok in results if ok) / len(results)
    log.info(f"Unmasked legal rate at width {n}: {rate:.4f} over {len(results)} rollouts")
    return rate


def sample_designs(
    model: PolicyModel,
    n: int,
    count: int,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
) -> Tuple[List[CoordinateSequence], SampleStats]:
    started = time.perf_counter()
    sequences = rollout(model, n, temperature, generator, batch=count)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    lengths = [len(s) for s in sequences]
    stats = SampleStats(
        width=n,
        count=count,
        valid=len(sequences),
        max_length=max(lengths, default=0),
        mean_length=sum(lengths) / len(lengths) if lengths else 0.0,
        ms_per_design=elapsed_ms / count if count else 0.0,
    )
    log.info(
        f"Sampled {count} width-{n} designs: max length {stats.max_length}, "
        f"{stats.ms_per_design:.2f} ms/design"
    )
    return sequences, stats


# -----------------------------------------------------------------------------
# Attention dump
# -----------------------------------------------------------------------------
def resolve_layer_selector(model: PolicyModel, selector: str) -> List[str]:
    """``all``, a stack name (``shared``, ``row_head``, ``col_head``) or ``<stack>.<index>``."""
    names = list(model.attention_modules())
    if selector == "all":
        return names
    if selector in ("shared", "row_head", "col_head"):
        return [name for name in names if name.startswith(f"{selector}.")]
    if selector in names:
        return [selector]
    raise ModelRangeError(f"unknown layer selector {selector!r}; choose from all, shared, row_head, col_head or {names}")


@torch.no_grad()
def attention_scores(model: PolicyModel, seq: CoordinateSequence, selector: str = "col_head") -> Dict[str, torch.Tensor]:
    """Per-layer attention weights [heads, length, length] for one sequence."""
    check_sequence(seq, require_complete=False)
    names = resolve_layer_selector(model, selector)
    device = _device(model)
    rows = torch.tensor([[c.row for c in seq.coords]], dtype=torch.long, device=device)
    cols = torch.tensor([[c.col for c in seq.coords]], dtype=torch.long, device=device)
    with model.capture_attention(names) as modules:
        model(rows, cols)
        return {name: module.last_attention[0].cpu() for name, module in modules.items()}


def dump_attention(
    model: PolicyModel,
    seq: CoordinateSequence,
    selector: str,
    path: str,
) -> Dict[str, torch.Tensor]:
    """Write attention matrices as JSON, or long-format CSV when ``path`` ends in .csv."""
    scores = attention_scores(model, seq, selector)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    if target.suffix.lower() == ".csv":
        records = []
        for name, weights in scores.items():
            heads, length, _ = weights.shape
            for head in range(heads):
                for query in range(length):
                    for key in range(query + 1):
                        records.append({
                            "layer": name,
                            "head": head,
                            "query": query,
                            "key": key,
                            "query_coord": "{},{}".format(*seq.coords[query]),
                            "key_coord": "{},{}".format(*seq.coords[key]),
                            "weight": float(weights[head, query, key]),
                        })
        pd.DataFrame.from_records(records).to_csv(target, index=False)
    else:
        payload = {
            "width": seq.width,
            "sequence": seq.pairs(),
            "layers": {name: weights.tolist() for name, weights in scores.items()},
        }
        target.write_text(json.dumps(payload), encoding="utf-8")

    log.info(f"✅ Wrote attention for {len(scores)} layer(s) to {target}")
    return scores
