"""
Group relative policy optimization against an area×delay reward.

Each iteration samples G designs, merges in the best stored designs,
standardizes rewards within the merged group and ascends

    J = mean_i (1/N_i) Σ_p [ γ^p · s_θ(p) · Â_i − β · KL(p) ]

where s_θ(p) is the sum of the row and column probabilities of the taken
coordinate (or of their log-probabilities with the ``log_probability``
surrogate) and KL(p) is the x − log x − 1 estimate for each factor
against a frozen reference copy.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Set, Tuple

import pandas as pd
import torch

from models.config import RunConfig
from models.errors import ConfigError, SynthesisError, TrainingDivergenceError
from models.policy import PolicyModel, frozen_copy, save_checkpoint, taken_log_probs
from models.schemas import DesignRecord, IterationReport, RewardMode
from services.design_db import DesignDatabase, make_record, proxy_record, record_sequence
from services.hardware_service import SynthesisService
from services.sampling_service import rollout
from utils.legality import pad_sequences
from utils.prefix_graph import (
    CONSTRUCTORS,
    CoordinateSequence,
    depth,
    graph_to_sequence,
    sequence_to_graph,
    size,
)

log = logging.getLogger(__name__)

REFERENCE_FLOOR = 1e-8
ADVANTAGE_EPS = 1e-8


# -----------------------------------------------------------------------------
# Rewards
# -----------------------------------------------------------------------------
def score_design(
    seq: CoordinateSequence,
    reward_mode: RewardMode = "proxy",
    synthesis: Optional[SynthesisService] = None,
    iteration: int = 0,
    source: str = "sampled",
    proxy_fallback: bool = True,
) -> DesignRecord:
    """Build the record for a design; external failures fall back to proxy metrics."""
    if reward_mode == "proxy":
        return proxy_record(seq, iteration, source)
    try:
        if synthesis is None:
            raise SynthesisError("No synthesis service configured")
        result = synthesis.synthesize(sequence_to_graph(seq))
        return make_record(seq, result.area, result.delay, iteration, source, "external")
    except SynthesisError as exc:
        if not proxy_fallback:
            raise
        log.warning(f"Synthesis failed, using proxy reward: {exc}")
        graph = sequence_to_graph(seq)
        return make_record(
            seq, float(size(graph)), float(depth(graph)), iteration, source, "external", fallback=True
        )


def compute_reward(
    seq: CoordinateSequence,
    reward_mode: RewardMode = "proxy",
    synthesis: Optional[SynthesisService] = None,
) -> float:
    return score_design(seq, reward_mode, synthesis).reward


def score_designs(
    sequences: Sequence[CoordinateSequence],
    reward_mode: RewardMode,
    synthesis: Optional[SynthesisService],
    iteration: int,
    proxy_fallback: bool = True,
    source: str = "sampled",
) -> List[DesignRecord]:
    if reward_mode == "proxy" or synthesis is None:
        return [score_design(s, reward_mode, synthesis, iteration, source, proxy_fallback) for s in sequences]

    results = synthesis.synthesize_many([sequence_to_graph(s) for s in sequences])
    records = []
    for seq, result in zip(sequences, results):
        if isinstance(result, SynthesisError):
            if not proxy_fallback:
                raise result
            graph = sequence_to_graph(seq)
            records.append(make_record(
                seq, float(size(graph)), float(depth(graph)), iteration, source, "external", fallback=True
            ))
        else:
            records.append(make_record(seq, result.area, result.delay, iteration, source, "external"))
    return records


# -----------------------------------------------------------------------------
# Advantages and KL
# -----------------------------------------------------------------------------
def grpo_advantages(rewards: Sequence[float], eps: float = ADVANTAGE_EPS) -> List[float]:
    """Standard score with population σ; an all-equal group gets zeros."""
    values = torch.tensor(rewards, dtype=torch.float64)
    if values.numel() < 2:
        raise ValueError(f"advantage group needs at least 2 rewards, got {values.numel()}")
    sigma = values.std(unbiased=False)
    if float(sigma) < eps:
        return [0.0] * values.numel()
    return ((values - values.mean()) / sigma).tolist()


def kl_estimator(log_ratio: torch.Tensor) -> torch.Tensor:
    """x − log x − 1 for x = exp(log_ratio), without materializing log(x)."""
    return torch.exp(log_ratio) - log_ratio - 1.0


def kl_from_log_probs(
    policy_logp: torch.Tensor, reference_logp: torch.Tensor
) -> Tuple[torch.Tensor, int]:
    """x − log x − 1 with x = π_θ/π_ref; reference probabilities floored at 1e-8."""
    floor = math.log(REFERENCE_FLOOR)
    clamped = int((reference_logp < floor).sum())
    reference_logp = reference_logp.clamp(min=floor)
    return kl_estimator(policy_logp - reference_logp), clamped


def _kl_per_position(
    policy_row: torch.Tensor,
    policy_col: torch.Tensor,
    reference_row: torch.Tensor,
    reference_col: torch.Tensor,
    present: torch.Tensor,
) -> Tuple[torch.Tensor, int]:
    row_kl, row_clamped = kl_from_log_probs(policy_row, reference_row)
    col_kl, col_clamped = kl_from_log_probs(policy_col, reference_col)
    clamped = row_clamped + col_clamped
    if clamped:
        log.warning(f"Clamped {clamped} reference probabilities at {REFERENCE_FLOOR}")
    return (row_kl + col_kl) * present, clamped


def kl_terms(policy: PolicyModel, reference: PolicyModel, seq: CoordinateSequence) -> List[float]:
    """Row+column KL estimate for each predicted position of one sequence."""
    rows, cols, lengths = pad_sequences([seq], device=next(policy.parameters()).device)
    with torch.no_grad():
        p_row, p_col, present = taken_log_probs(policy, rows, cols, lengths)
        r_row, r_col, _ = taken_log_probs(reference, rows, cols, lengths)
    terms, _ = _kl_per_position(p_row, p_col, r_row, r_col, present)
    return terms[0].tolist()


@dataclass
class ObjectiveTerms:
    objective: torch.Tensor
    kl_term: torch.Tensor
    clamped: int


def grpo_objective(
    policy: PolicyModel,
    reference: PolicyModel,
    sequences: Sequence[CoordinateSequence],
    advantages: Sequence[float],
    gamma: float,
    beta: float,
    surrogate: str = "probability",
) -> ObjectiveTerms:
    """J(θ) over the merged group; gradients flow through s_θ and the policy side of KL."""
    device = next(policy.parameters()).device
    rows, cols, lengths = pad_sequences(sequences, device=device)
    p_row, p_col, present = taken_log_probs(policy, rows, cols, lengths)
    with torch.no_grad():
        r_row, r_col, _ = taken_log_probs(reference, rows, cols, lengths)

    if surrogate == "log_probability":
        score = p_row + p_col
    else:
        score = torch.exp(p_row) + torch.exp(p_col)
    score = score * present

    # p counts predicted positions from 1; N_i excludes the fixed (0,0).
    steps = torch.arange(1, rows.shape[1], device=device, dtype=score.dtype)
    discount = torch.pow(torch.tensor(gamma, dtype=score.dtype, device=device), steps).unsqueeze(0)
    adv = torch.tensor(advantages, dtype=score.dtype, device=device).unsqueeze(1)
    kl, clamped = _kl_per_position(p_row, p_col, r_row, r_col, present)

    predicted = present.sum(dim=1).to(score.dtype)
    reward_part = (discount * score * adv).sum(dim=1) / predicted
    kl_part = beta * kl.sum(dim=1) / predicted
    return ObjectiveTerms(
        objective=(reward_part - kl_part).mean(),
        kl_term=kl_part.mean(),
        clamped=clamped,
    )


# -----------------------------------------------------------------------------
# Pareto helper
# -----------------------------------------------------------------------------
def pareto_points(points: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Non-dominated (size, depth) pairs, sorted by size."""
    unique = sorted(set(points))
    front: List[Tuple[int, int]] = []
    for candidate in unique:
        if not any(
            other[0] <= candidate[0] and other[1] <= candidate[1] and other != candidate
            for other in unique
        ):
            front.append(candidate)
    return front


# -----------------------------------------------------------------------------
# Trainer
# -----------------------------------------------------------------------------
@dataclass
class FinetuneResult:
    history: List[IterationReport] = field(default_factory=list)
    best: List[DesignRecord] = field(default_factory=list)
    pareto: List[Tuple[int, int]] = field(default_factory=list)


class GRPOTrainer:
    """Trainable policy, frozen reference, optimizer and design database."""

    def __init__(
        self,
        policy: PolicyModel,
        config: RunConfig,
        database: DesignDatabase,
        synthesis: Optional[SynthesisService] = None,
    ):
        self.policy = policy
        self.config = config
        self.database = database
        self.reference = frozen_copy(policy)
        self.optimizer = torch.optim.Adam(policy.parameters(), lr=config.finetune.lr)
        self.generator = torch.Generator().manual_seed(config.seed)
        self.beta = config.effective_beta()
        self.retrieval_ratio = config.effective_retrieval_ratio()
        self.synthesis = synthesis
        if config.reward_mode == "external":
            if self.synthesis is None:
                self.synthesis = SynthesisService(
                    config.synthesis.resolved_command(),
                    config.synthesis.timeout,
                    config.synthesis.max_workers,
                )
            if not self.synthesis.configured:
                raise ConfigError(
                    "External reward mode needs a synthesis hook", {"flag": "--synth-cmd"}
                )
        self.best_so_far = float("-inf")
        self.seen: Set[str] = set()
        self.history: List[IterationReport] = []

    @property
    def width(self) -> int:
        return self.config.width

    def retrieval_cap(self) -> int:
        return int(math.floor(self.retrieval_ratio * self.config.finetune.group_size + 1e-9))

    def seed_designs(self, names: Sequence[str]) -> int:
        graphs = []
        for name in names:
            if name not in CONSTRUCTORS:
                raise ConfigError(f"Unknown manual design {name!r}", {"flag": "--seed-designs"})
            graphs.append(CONSTRUCTORS[name](self.width))
        records = score_designs(
            [graph_to_sequence(g) for g in graphs],
            self.config.reward_mode,
            self.synthesis,
            0,
            self.config.synthesis.proxy_fallback,
            source="seeded",
        )
        added = self.database.insert_many(records)
        log.info(f"Seeded {added} manual design(s) with {self.config.reward_mode} rewards")
        return added

    def step(self, iteration: int) -> IterationReport:
        settings = self.config.finetune
        sampled = rollout(
            self.policy, self.width, settings.temperature, self.generator, batch=settings.group_size
        )
        sampled_records = score_designs(
            sampled, self.config.reward_mode, self.synthesis, iteration, self.config.synthesis.proxy_fallback
        )

        retrieved_records = [
            record.model_copy(update={"source": "retrieved"})
            for record in self.database.top_k_by_adp(self.retrieval_cap(), width=self.width)
        ]
        group = sampled_records + retrieved_records
        sequences = sampled + [record_sequence(r) for r in retrieved_records]
        advantages = grpo_advantages([r.reward for r in group])
        skipped = all(a == 0.0 for a in advantages) and self.beta == 0.0

        last_good = copy.deepcopy(self.policy.state_dict())
        self.policy.train()
        terms = grpo_objective(
            self.policy, self.reference, sequences, advantages,
            settings.gamma, self.beta, settings.surrogate,
        )
        if not torch.isfinite(terms.objective):
            self.policy.load_state_dict(last_good)
            saved = save_checkpoint(
                self.policy, str(Path(self.config.paths.workdir) / "last_good.pt"), {"iteration": iteration}
            )
            log.error(f"Non-finite GRPO objective at iteration {iteration}")
            raise TrainingDivergenceError(
                "Fine-tuning diverged (non-finite objective)",
                {"iteration": iteration, "last_checkpoint": saved},
            )
        if not skipped:
            self.optimizer.zero_grad()
            (-terms.objective).backward()
            self.optimizer.step()

        self.database.insert_many(sampled_records)
        self.seen.update(r.key for r in sampled_records)
        rewards = [r.reward for r in sampled_records]
        best = max(rewards)
        self.best_so_far = max(self.best_so_far, best)
        report = IterationReport(
            iteration=iteration,
            best_reward=best,
            mean_reward=sum(rewards) / len(rewards),
            best_so_far=self.best_so_far,
            unique_designs=len(self.seen),
            sampled=len(sampled_records),
            retrieved=len(retrieved_records),
            objective=float(terms.objective.detach()),
            kl_term=float(terms.kl_term.detach()),
            pareto_size=len(pareto_points([(r.size, r.depth) for r in sampled_records])),
            fallback_count=sum(1 for r in sampled_records if r.fallback),
            skipped_update=skipped,
        )
        self.history.append(report)
        log.info(
            f"Iteration {iteration}: best {report.best_reward:.1f} mean {report.mean_reward:.2f} "
            f"best-so-far {report.best_so_far:.1f} unique {report.unique_designs} "
            f"retrieved {report.retrieved} KL term {report.kl_term:.6f}"
        )
        return report

    def write_history(self, path: str) -> str:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame([r.model_dump() for r in self.history]).to_csv(target, index=False)
        return str(target)

    def finetune(
        self,
        iterations: Optional[int] = None,
        history_path: Optional[str] = None,
        checkpoint_path: Optional[str] = None,
    ) -> FinetuneResult:
        iterations = iterations or self.config.finetune.iterations
        log.info(
            f"🚀 Fine-tuning width {self.width}: {iterations} iterations, G={self.config.finetune.group_size}, "
            f"β={self.beta}, retrieval cap {self.retrieval_cap()}, reward {self.config.reward_mode}"
        )
        for iteration in range(1, iterations + 1):
            self.step(iteration)
            if history_path:
                self.write_history(history_path)

        if checkpoint_path:
            save_checkpoint(self.policy, checkpoint_path, {"iterations": iterations, "best_reward": self.best_so_far})
        records = self.database.records(self.width)
        result = FinetuneResult(
            history=list(self.history),
            best=self.database.top_k_by_adp(10, width=self.width),
            pareto=pareto_points([(r.size, r.depth) for r in records]),
        )
        log.info(f"✅ Fine-tuning done: best reward {self.best_so_far}, {len(records)} designs stored")
        return result
