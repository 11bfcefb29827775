"""
Handlers for the PrefixForge commands.

Each method is a thin wrapper over the services and returns a JSON-ready
dict; the CLI prints it and the registry exposes it by name.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import torch

from handlers.evaluation import baselines, build_report, eval_db, to_csv, write_eval_outputs
from models.config import RunConfig
from models.errors import CheckpointError, ConfigError
from models.policy import PolicyModel, load_checkpoint, parameter_checksum
from services.corpus_service import gen_corpus, load_corpus
from services.design_db import DesignDatabase
from services.grpo_service import GRPOTrainer
from services.hardware_service import export_netlist
from services.pretrain_service import pretrain
from services.sampling_service import dump_attention, legal_rate, sample_designs
from utils.prefix_graph import (
    CONSTRUCTORS,
    PrefixGraph,
    graph_from_json,
    sequence_from_json,
    sequence_to_graph,
    sequence_to_json,
)

log = logging.getLogger(__name__)


def _write(path: str, text: str) -> str:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")
    return str(target)


class PipelineHandler:
    """Command handlers bound to one RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        torch.manual_seed(config.seed)

    # -- model loading --------------------------------------------------------
    def fresh_model(self) -> PolicyModel:
        return PolicyModel(self.config.effective_model_config())

    def load_model(self, checkpoint: Optional[str]) -> PolicyModel:
        path = checkpoint or self.config.paths.checkpoint
        if not path:
            raise CheckpointError("No checkpoint given", {"flag": "--checkpoint"})
        model, metadata = load_checkpoint(path)
        if self.config.ablations.rope_off and model.config.use_rope:
            raise ConfigError(
                f"rope_off ablation cannot apply to {path}: it was trained with rotary embedding; "
                "pre-train with rope_off or add skip_pretrain",
                {"flag": "--ablate", "path": path},
            )
        log.info(f"Loaded checkpoint {path} ({model.parameter_count()} parameters)")
        return model

    def _generator(self) -> torch.Generator:
        return torch.Generator().manual_seed(self.config.seed)

    # -- commands -------------------------------------------------------------
    def baselines(self, width: Optional[int] = None, out: Optional[str] = None) -> Dict[str, Any]:
        n = width or self.config.width
        rows = baselines(n)
        return {"width": n, "rows": [r.model_dump() for r in rows], "csv": to_csv(rows, out)}

    def eval_db(
        self,
        database: Optional[str] = None,
        width: Optional[int] = None,
        depth_limits: Optional[Sequence[int]] = None,
        out_dir: Optional[str] = None,
    ) -> Dict[str, Any]:
        path = database or self.config.paths.database
        if not Path(path).is_file():
            raise ConfigError(f"Design database not found: {path}", {"flag": "--db", "path": path})
        report = eval_db(DesignDatabase(path), width or self.config.width, depth_limits)
        result: Dict[str, Any] = report.model_dump()
        if out_dir:
            result["files"] = write_eval_outputs(report, out_dir)
        return result

    def legal_rate(
        self,
        checkpoint: Optional[str] = None,
        width: Optional[int] = None,
        samples: int = 1000,
        temperature: float = 1.0,
    ) -> Dict[str, Any]:
        n = width or self.config.width
        model = self.load_model(checkpoint)
        rate = legal_rate(model, n, samples, temperature, self._generator())
        return {"width": n, "samples": samples, "legal_rate": rate}

    def report(
        self,
        databases: Sequence[str],
        out_dir: str,
        histories: Optional[Sequence[str]] = None,
        width: Optional[int] = None,
        window: int = 20,
    ) -> Dict[str, Any]:
        runs = {}
        for path in databases:
            if not Path(path).is_file():
                raise ConfigError(f"Design database not found: {path}", {"flag": "--db", "path": path})
            runs[Path(path).stem] = DesignDatabase(path)
        history_map = {}
        for path in histories or []:
            if not Path(path).is_file():
                raise ConfigError(f"History file not found: {path}", {"flag": "--history", "path": path})
            history_map[Path(path).stem] = path
        files = build_report(runs, out_dir, history_map, width, window)
        return {"runs": list(runs), "files": files}

    def gen_corpus(
        self, width: Optional[int] = None, count: Optional[int] = None, out: Optional[str] = None
    ) -> Dict[str, Any]:
        n = width or self.config.width
        total = count or self.config.pretrain.corpus_size
        path = gen_corpus(n, total, out or self.config.paths.corpus, seed=self.config.seed)
        return {"width": n, "count": total, "path": path}

    def pretrain(self, corpus: Optional[str] = None, checkpoint: Optional[str] = None) -> Dict[str, Any]:
        sequences = load_corpus(corpus or self.config.paths.corpus)
        model = self.fresh_model()
        widths = {s.width for s in sequences}
        report = pretrain(
            model,
            sequences,
            self.config.pretrain,
            checkpoint_path=checkpoint or self.config.paths.checkpoint,
            seed=self.config.seed,
            legal_rate_width=max(widths, default=self.config.width),
        )
        return report.model_dump()

    def finetune(
        self,
        checkpoint: Optional[str] = None,
        seed_designs: Optional[List[str]] = None,
        iterations: Optional[int] = None,
        out_checkpoint: Optional[str] = None,
    ) -> Dict[str, Any]:
        if self.config.ablations.skip_pretrain:
            log.info("skip_pretrain ablation: fine-tuning a freshly initialized policy")
            model = self.fresh_model()
        else:
            model = self.load_model(checkpoint)

        trainer = GRPOTrainer(model, self.config, DesignDatabase(self.config.paths.database))
        if seed_designs:
            trainer.seed_designs(seed_designs)
        reference_checksum = parameter_checksum(trainer.reference)
        result = trainer.finetune(
            iterations,
            history_path=self.config.paths.history,
            checkpoint_path=out_checkpoint or str(Path(self.config.paths.workdir) / "finetuned.pt"),
        )
        return {
            "iterations": len(result.history),
            "best_so_far": trainer.best_so_far,
            "unique_designs": len(trainer.seen),
            "best": [
                {"key": r.key, "size": r.size, "depth": r.depth, "adp": r.adp, "source": r.source}
                for r in result.best
            ],
            "pareto": [list(p) for p in result.pareto],
            "reference_unchanged": parameter_checksum(trainer.reference) == reference_checksum,
            "history": self.config.paths.history,
        }

    def sample(
        self,
        checkpoint: Optional[str] = None,
        width: Optional[int] = None,
        count: int = 10,
        temperature: Optional[float] = None,
        out: Optional[str] = None,
    ) -> Dict[str, Any]:
        n = width or self.config.width
        model = self.fresh_model() if self.config.ablations.skip_pretrain else self.load_model(checkpoint)
        sequences, stats = sample_designs(
            model, n, count, temperature or self.config.finetune.temperature, self._generator()
        )
        lines = [sequence_to_json(s) for s in sequences]
        result: Dict[str, Any] = {"stats": stats.model_dump()}
        if out:
            result["path"] = _write(out, "".join(line + "\n" for line in lines))
        else:
            result["sequences"] = [s.pairs() for s in sequences]
        return result

    def _load_graph(self, design: Optional[str], graph: Optional[str], sequence: Optional[str], width: int) -> PrefixGraph:
        if design:
            if design not in CONSTRUCTORS:
                raise ConfigError(f"Unknown design {design!r}", {"flag": "--design"})
            return CONSTRUCTORS[design](width)
        if graph:
            return graph_from_json(Path(graph).read_text(encoding="utf-8"))
        if sequence:
            return sequence_to_graph(sequence_from_json(Path(sequence).read_text(encoding="utf-8")))
        raise ConfigError("Give one of --design, --graph or --sequence", {"flag": "--design"})

    def export_netlist(
        self,
        design: Optional[str] = None,
        graph: Optional[str] = None,
        sequence: Optional[str] = None,
        width: Optional[int] = None,
        name: str = "prefix_adder",
        out: Optional[str] = None,
    ) -> Dict[str, Any]:
        prefix_graph = self._load_graph(design, graph, sequence, width or self.config.width)
        netlist = export_netlist(prefix_graph, name)
        if out:
            return {"path": _write(out, netlist), "width": prefix_graph.width}
        return {"netlist": netlist, "width": prefix_graph.width}

    def attention_dump(
        self,
        out: str,
        checkpoint: Optional[str] = None,
        sequence: Optional[str] = None,
        layers: str = "col_head",
    ) -> Dict[str, Any]:
        model = self.load_model(checkpoint)
        if sequence:
            seq = sequence_from_json(Path(sequence).read_text(encoding="utf-8"))
        else:
            seq = sample_designs(model, self.config.width, 1, 1.0, self._generator())[0][0]
        scores = dump_attention(model, seq, layers, out)
        return {"path": out, "layers": list(scores), "length": len(seq)}
