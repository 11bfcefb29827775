"""
Two-head decoder-only policy over coordinate tokens.

Each coordinate (r, c) becomes a token of width 2d: learned row and column
embeddings, each rotated by the rotary matrix of its own coordinate value,
then concatenated. A shared causal decoder stack feeds a row head and a
column head; the column head sees the RMS-normalized shared and row states
through a junction projection.
"""

import copy
import hashlib
import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

import torch
import torch.nn as nn

from models.config import ModelConfig
from models.errors import CheckpointError, ModelRangeError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "prefixforge-checkpoint"
CHECKPOINT_VERSION = 1


class RotaryEmbedding(nn.Module):
    """Rotate-half rotary embedding with frequencies base^(-2i/d)."""

    def __init__(self, dim: int, base: float = 10000.0, enabled: bool = True):
        super().__init__()
        if dim % 2:
            raise ValueError(f"rotary dim must be even, got {dim}")
        self.dim = dim
        self.enabled = enabled
        inv_freq = base ** (-torch.arange(0, dim, 2, dtype=torch.float64) / dim)
        self.register_buffer("inv_freq", inv_freq, persistent=False)

    def forward(self, x: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return x
        angles = positions.to(x.dtype).unsqueeze(-1) * self.inv_freq.to(x.dtype)
        cos, sin = angles.cos(), angles.sin()
        half = self.dim // 2
        x1, x2 = x[..., :half], x[..., half:]
        return torch.cat((x1 * cos - x2 * sin, x1 * sin + x2 * cos), dim=-1)


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.capture = False
        self.last_attention: Optional[torch.Tensor] = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, dim = x.shape
        q, k, v = self.qkv(x).split(dim, dim=-1)
        q, k, v = (
            t.view(batch, length, self.heads, self.head_dim).transpose(1, 2) for t in (q, k, v)
        )
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        causal = torch.ones(length, length, dtype=torch.bool, device=x.device).triu(1)
        weights = torch.softmax(scores.masked_fill(causal, float("-inf")), dim=-1)
        if self.capture:
            self.last_attention = weights.detach()
        mixed = (weights @ v).transpose(1, 2).reshape(batch, length, dim)
        return self.out(mixed)


class DecoderLayer(nn.Module):
    """Pre-norm block: RMSNorm → causal attention → RMSNorm → GELU MLP."""

    def __init__(self, dim: int, heads: int, ffn_multiplier: int):
        super().__init__()
        self.attn_norm = nn.RMSNorm(dim)
        self.attn = CausalSelfAttention(dim, heads)
        self.ffn_norm = nn.RMSNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_multiplier * dim),
            nn.GELU(),
            nn.Linear(ffn_multiplier * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.attn_norm(x))
        return x + self.ffn(self.ffn_norm(x))


class PolicyModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d, dim, vocab = config.embed_dim, config.token_dim, config.max_width

        self.row_embedding = nn.Embedding(vocab, d)
        self.col_embedding = nn.Embedding(vocab, d)
        self.rotary = RotaryEmbedding(d, config.rope_base, enabled=config.use_rope)

        def stack(count: int) -> nn.ModuleList:
            return nn.ModuleList(
                DecoderLayer(dim, config.head_count, config.ffn_multiplier) for _ in range(count)
            )

        self.shared = stack(config.shared_layers)
        self.row_head = stack(config.row_layers)
        self.col_head = stack(config.col_layers)

        self.share_norm = nn.RMSNorm(dim)
        self.row_norm = nn.RMSNorm(dim)
        self.junction = nn.Linear(2 * dim, dim)
        self.row_out_norm = nn.RMSNorm(dim)
        self.col_out_norm = nn.RMSNorm(dim)
        self.row_output = nn.Linear(dim, vocab, bias=False)
        self.col_output = nn.Linear(dim, vocab, bias=False)

        self.apply(self._init_weights)
        nn.init.zeros_(self.row_output.weight)
        nn.init.zeros_(self.col_output.weight)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def _check_inputs(self, rows: torch.Tensor, cols: torch.Tensor) -> None:
        if rows.shape != cols.shape or rows.dim() != 2:
            raise ModelRangeError(f"expected matching [batch, length] inputs, got {tuple(rows.shape)} / {tuple(cols.shape)}")
        length = rows.shape[1]
        if not 1 <= length <= self.config.max_seq_len:
            raise ModelRangeError(f"sequence length {length} outside [1, {self.config.max_seq_len}]")
        vocab = self.config.max_width
        for name, values in (("row", rows), ("col", cols)):
            if values.numel() and (values.min() < 0 or values.max() >= vocab):
                raise ModelRangeError(f"{name} coordinate outside [0, {vocab - 1}]")

    def embed(self, rows: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
        """Coordinate tokens T_p of width 2d for [batch, length] coordinates."""
        self._check_inputs(rows, cols)
        row_tokens = self.rotary(self.row_embedding(rows), rows)
        col_tokens = self.rotary(self.col_embedding(cols), cols)
        return torch.cat((row_tokens, col_tokens), dim=-1)

    def forward(self, rows: torch.Tensor, cols: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        hidden = self.embed(rows, cols)
        for layer in self.shared:
            hidden = layer(hidden)
        shared = hidden

        for layer in self.row_head:
            hidden = layer(hidden)
        row_hidden = hidden
        row_logits = self.row_output(self.row_out_norm(row_hidden))

        hidden = self.junction(torch.cat((self.share_norm(shared), self.row_norm(row_hidden)), dim=-1))
        for layer in self.col_head:
            hidden = layer(hidden)
        col_logits = self.col_output(self.col_out_norm(hidden))
        return row_logits, col_logits

    def attention_modules(self) -> Dict[str, CausalSelfAttention]:
        modules = {}
        for group in ("shared", "row_head", "col_head"):
            for i, layer in enumerate(getattr(self, group)):
                modules[f"{group}.{i}"] = layer.attn
        return modules

    @contextmanager
    def capture_attention(self, names: Optional[List[str]] = None) -> Iterator[Dict[str, CausalSelfAttention]]:
        selected = {k: v for k, v in self.attention_modules().items() if names is None or k in names}
        for module in selected.values():
            module.capture = True
            module.last_attention = None
        try:
            yield selected
        finally:
            for module in selected.values():
                module.capture = False

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def next_distributions(
    model: PolicyModel, rows: torch.Tensor, cols: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Softmax of the final-position logits of each head."""
    row_logits, col_logits = model(rows, cols)
    return torch.softmax(row_logits[:, -1], dim=-1), torch.softmax(col_logits[:, -1], dim=-1)


def taken_log_probs(
    model: PolicyModel,
    rows: torch.Tensor,
    cols: torch.Tensor,
    lengths: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Log-probabilities of the coordinates actually taken, in one forward pass.

    Position 0 is conditioning only. Returns (row_logp, col_logp, present),
    each [batch, length - 1]; ``present`` masks out right padding.
    """
    row_logits, col_logits = model(rows, cols)
    target_rows, target_cols = rows[:, 1:], cols[:, 1:]
    row_logp = torch.log_softmax(row_logits[:, :-1], dim=-1).gather(-1, target_rows.unsqueeze(-1)).squeeze(-1)
    col_logp = torch.log_softmax(col_logits[:, :-1], dim=-1).gather(-1, target_cols.unsqueeze(-1)).squeeze(-1)
    steps = torch.arange(1, rows.shape[1], device=rows.device).unsqueeze(0)
    present = steps < lengths.unsqueeze(1)
    return row_logp * present, col_logp * present, present


def frozen_copy(model: PolicyModel) -> PolicyModel:
    reference = copy.deepcopy(model)
    reference.eval()
    for param in reference.parameters():
        param.requires_grad_(False)
    return reference


def parameter_checksum(model: nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


# -----------------------------------------------------------------------------
# Checkpoints
# -----------------------------------------------------------------------------
def save_checkpoint(model: PolicyModel, path: str, metadata: Optional[Dict[str, Any]] = None) -> str:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": model.config.model_dump(),
            "state_dict": model.state_dict(),
            "metadata": metadata or {},
        },
        target,
    )
    log.info(f"✅ Saved checkpoint to {target}")
    return str(target)


def load_checkpoint(path: str, map_location: str = "cpu") -> Tuple[PolicyModel, Dict[str, Any]]:
    source = Path(path)
    if not source.is_file():
        raise CheckpointError(f"--checkpoint: file not found: {path}", {"flag": "--checkpoint", "path": path})
    try:
        payload = torch.load(source, map_location=map_location, weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"Could not read checkpoint {path}: {exc}", {"path": path}) from exc

    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a PrefixForge checkpoint", {"path": path})
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {payload.get('version')}", {"path": path}
        )

    model = PolicyModel(ModelConfig.model_validate(payload["config"]))
    model.load_state_dict(payload["state_dict"])
    return model, dict(payload.get("metadata") or {})
