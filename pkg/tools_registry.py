"""
Command registry: command name → handler method and description.
"""

from typing import Callable, Dict, List, Optional

from handlers.pipeline import PipelineHandler
from models.config import RunConfig

COMMAND_DESCRIPTIONS: Dict[str, str] = {
    # Evaluation
    "baselines": "Size/depth/validity of the classical constructors at a width",
    "eval-db": "Minimum size per depth limit and the Pareto set of a design database",
    "legal-rate": "Fraction of valid designs among unmasked rollouts of a checkpoint",
    "report": "Plot-ready CSVs (reward curves, Pareto scatter, ADP distributions)",

    # Training
    "gen-corpus": "Write a random-walk corpus as JSONL",
    "pretrain": "Pre-train the policy on a corpus",
    "finetune": "GRPO fine-tuning with best-design retrieval",

    # Artifacts
    "sample": "Masked sampling of valid designs from a checkpoint",
    "export-netlist": "Structural Verilog for a design",
    "attention-dump": "Attention matrices of selected layers as JSON/CSV",
}

_METHODS: Dict[str, str] = {
    "baselines": "baselines",
    "eval-db": "eval_db",
    "legal-rate": "legal_rate",
    "report": "report",
    "gen-corpus": "gen_corpus",
    "pretrain": "pretrain",
    "finetune": "finetune",
    "sample": "sample",
    "export-netlist": "export_netlist",
    "attention-dump": "attention_dump",
}


def get_command(name: str, config: RunConfig) -> Optional[Callable]:
    """Handler bound to ``config`` for a command, or None."""
    method = _METHODS.get(name)
    if method is None:
        return None
    return getattr(PipelineHandler(config), method)


def list_available_commands() -> List[str]:
    return list(COMMAND_DESCRIPTIONS.keys())


def get_command_description(name: str) -> str:
    return COMMAND_DESCRIPTIONS.get(name, "No description available")
