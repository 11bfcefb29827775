"""
Pydantic models for PrefixForge data validation and interchange.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

Rule = Literal["input", "output", "merge"]
DesignSource = Literal["sampled", "retrieved", "seeded"]
RewardMode = Literal["proxy", "external"]


def _check_pairs(value: List[List[int]]) -> List[List[int]]:
    for pair in value:
        if len(pair) != 2:
            raise ValueError(f"coordinate {pair!r} must be a [row, col] pair")
    return value


# Interchange Models
class GraphPayload(BaseModel):
    """Graph interchange format; lists merge nodes only."""
    width: int = Field(..., ge=2)
    nodes: List[List[int]] = Field(default_factory=list)

    _pairs = field_validator("nodes")(_check_pairs)


class SequencePayload(BaseModel):
    """Coordinate sequence interchange format."""
    width: int = Field(..., ge=2)
    seq: List[List[int]]

    _pairs = field_validator("seq")(_check_pairs)


# Validation Models
class RuleViolation(BaseModel):
    rule: Rule
    coordinates: List[List[int]]
    message: str


class ValidationReport(BaseModel):
    """Violations of the input, output and restricted merge rules."""
    width: int
    violations: List[RuleViolation] = Field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def rules(self) -> List[str]:
        return sorted({v.rule for v in self.violations})


class DesignMetrics(BaseModel):
    width: int
    size: int
    depth: int
    min_depth: int
    key: str
    valid: bool = True


# Hardware Models
class SynthesisResult(BaseModel):
    """Area/delay reported by an external synthesis hook."""
    area: float = Field(..., gt=0)
    delay: float = Field(..., gt=0)
    tool_log: str = ""


class SimulateRequest(BaseModel):
    graph: GraphPayload
    a: int = Field(..., ge=0)
    b: int = Field(..., ge=0)


class SimulateResponse(BaseModel):
    sum: int
    carry_out: bool


# Training Models
class DesignRecord(BaseModel):
    """A generated design with its metrics, reward and provenance."""
    key: str
    width: int
    sequence: List[List[int]]
    size: int
    depth: int
    area: float
    delay: float
    reward: float
    iteration: int = 0
    source: DesignSource = "sampled"
    reward_mode: RewardMode = "proxy"
    fallback: bool = False

    @property
    def adp(self) -> float:
        return self.area * self.delay


class IterationReport(BaseModel):
    iteration: int
    best_reward: float
    mean_reward: float
    best_so_far: float
    unique_designs: int
    sampled: int
    retrieved: int
    objective: float
    kl_term: float
    pareto_size: int
    fallback_count: int = 0
    skipped_update: bool = False


class PretrainReport(BaseModel):
    epochs: int
    train_losses: List[float]
    heldout_loss: Optional[float] = None
    heldout_accuracy: Optional[float] = None
    heldout_accuracy_ceiling: Optional[float] = None
    heldout_argmax_legal: Optional[float] = None
    uniform_loss: float
    legal_rate: Optional[float] = None
    checkpoints: List[str] = Field(default_factory=list)


# Evaluation Models
class BaselineRow(BaseModel):
    name: str
    size: int
    depth: int
    valid: bool


class DepthLimitRow(BaseModel):
    depth_limit: int
    min_size: Optional[int] = None
    designs: int = 0


class ParetoPoint(BaseModel):
    size: int
    depth: int
    key: Optional[str] = None


class EvalReport(BaseModel):
    width: int
    min_depth: int
    depth_convention: str = "depth counts the input row as a level (depth = max merge level + 1)"
    total_designs: int
    limits: List[DepthLimitRow] = Field(default_factory=list)
    pareto: List[ParetoPoint] = Field(default_factory=list)
    empty: bool = False


class SampleStats(BaseModel):
    width: int
    count: int
    valid: int
    max_length: int
    mean_length: float
    ms_per_design: float


# Service Models
class HealthResponse(BaseModel):
    """Health check response model."""
    status: str
    service: str
    version: str
    timestamp: str
