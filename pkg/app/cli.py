"""
PrefixForge command line.

    python -m app.cli <command> [--config run.json] [flags]

Flags override values from the config file. Results go to stdout as JSON
(``baselines`` prints CSV); failures print one JSON line to stderr and
exit with status 1.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from models.config import AblationFlags, load_run_config
from models.errors import PrefixForgeError
from tools_registry import get_command, get_command_description, list_available_commands

LOG_LEVEL = os.getenv("LOGLEVEL", "INFO").upper()

log = logging.getLogger("prefixforge.cli")

ABLATIONS = list(AblationFlags.model_fields)

# flag dest → dotted RunConfig key
CONFIG_FLAGS = {
    "width": "width",
    "seed": "seed",
    "reward_mode": "reward_mode",
    "synth_cmd": "synthesis.command",
    "synth_timeout": "synthesis.timeout",
    "iterations": "finetune.iterations",
    "group_size": "finetune.group_size",
    "temperature": "finetune.temperature",
    "gamma": "finetune.gamma",
    "beta": "finetune.beta",
    "retrieval_ratio": "finetune.retrieval_ratio",
    "surrogate": "finetune.surrogate",
    "finetune_lr": "finetune.lr",
    "epochs": "pretrain.epochs",
    "batch_size": "pretrain.batch_size",
    "pretrain_lr": "pretrain.lr",
    "corpus_size": "pretrain.corpus_size",
    "legal_rate_samples": "pretrain.legal_rate_samples",
    "max_width": "model.max_width",
    "embed_dim": "model.embed_dim",
    "workdir": "paths.workdir",
    "db": "paths.database",
    "history": "paths.history",
    "corpus": "paths.corpus",
    "checkpoint": "paths.checkpoint",
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--width", type=int, help="adder bit-width")
    common.add_argument("--seed", type=int)
    common.add_argument("--reward-mode", choices=["proxy", "external"])
    common.add_argument("--synth-cmd", help="synthesis hook command (default: $PREFIXFORGE_SYNTH_CMD)")
    common.add_argument("--synth-timeout", type=float)
    common.add_argument("--ablate", action="append", choices=ABLATIONS, default=[],
                        help="ablation flag; repeatable")
    common.add_argument("--workdir")
    common.add_argument("--max-width", type=int)
    common.add_argument("--embed-dim", type=int)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefixforge", description="Prefix-adder generation and evaluation")
    common = _common_flags()
    commands = parser.add_subparsers(dest="command", required=True)

    def add(name: str) -> argparse.ArgumentParser:
        return commands.add_parser(name, parents=[common], help=get_command_description(name))

    sub = add("baselines")
    sub.add_argument("--out", help="also write the CSV here")

    sub = add("eval-db")
    sub.add_argument("--db")
    sub.add_argument("--depth-limits", type=int, nargs="+")
    sub.add_argument("--out-dir")

    sub = add("legal-rate")
    sub.add_argument("--checkpoint")
    sub.add_argument("--samples", type=int, default=1000)
    sub.add_argument("--sample-temperature", type=float, default=1.0)

    sub = add("report")
    sub.add_argument("--db", dest="databases", nargs="+", required=True)
    sub.add_argument("--history", dest="histories", nargs="*")
    sub.add_argument("--out-dir", required=True)
    sub.add_argument("--window", type=int, default=20)

    sub = add("gen-corpus")
    sub.add_argument("--count", type=int)
    sub.add_argument("--out")

    sub = add("pretrain")
    sub.add_argument("--corpus")
    sub.add_argument("--checkpoint")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--lr", dest="pretrain_lr", type=float)
    sub.add_argument("--legal-rate-samples", type=int)

    sub = add("finetune")
    sub.add_argument("--checkpoint")
    sub.add_argument("--db")
    sub.add_argument("--history")
    sub.add_argument("--iterations", type=int)
    sub.add_argument("--group-size", type=int)
    sub.add_argument("--temperature", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--retrieval-ratio", type=float)
    sub.add_argument("--surrogate", choices=["probability", "log_probability"])
    sub.add_argument("--lr", dest="finetune_lr", type=float)
    sub.add_argument("--seed-designs", help="comma-separated constructor names")
    sub.add_argument("--out-checkpoint")

    sub = add("sample")
    sub.add_argument("--checkpoint")
    sub.add_argument("--count", type=int, default=10)
    sub.add_argument("--temperature", type=float)
    sub.add_argument("--out", help="JSONL output; sequences are inlined otherwise")

    sub = add("export-netlist")
    sub.add_argument("--design", help="constructor name")
    sub.add_argument("--graph", help="graph JSON file")
    sub.add_argument("--sequence", help="sequence JSON file")
    sub.add_argument("--name", default="prefix_adder")
    sub.add_argument("--out")

    sub = add("attention-dump")
    sub.add_argument("--checkpoint")
    sub.add_argument("--sequence", help="sequence JSON file; a sampled design otherwise")
    sub.add_argument("--layers", default="col_head")
    sub.add_argument("--out", required=True)

    return parser


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {
        dotted: getattr(args, dest)
        for dest, dotted in CONFIG_FLAGS.items()
        if getattr(args, dest, None) is not None
    }
    for flag in args.ablate:
        overrides[f"ablations.{flag}"] = True
    return overrides


def _dispatch(args: argparse.Namespace) -> Any:
    config = load_run_config(args.config, config_overrides(args))
    handler = get_command(args.command, config)
    command = args.command

    if command == "baselines":
        return handler(out=args.out)
    if command == "eval-db":
        return handler(args.db, None, args.depth_limits, args.out_dir)
    if command == "legal-rate":
        return handler(args.checkpoint, None, args.samples, args.sample_temperature)
    if command == "report":
        return handler(args.databases, args.out_dir, args.histories, config.width, args.window)
    if command == "gen-corpus":
        return handler(None, args.count, args.out)
    if command == "pretrain":
        return handler(args.corpus, args.checkpoint)
    if command == "finetune":
        seeds = [s.strip() for s in args.seed_designs.split(",") if s.strip()] if args.seed_designs else None
        return handler(args.checkpoint, seeds, None, args.out_checkpoint)
    if command == "sample":
        return handler(args.checkpoint, None, args.count, args.temperature, args.out)
    if command == "export-netlist":
        return handler(args.design, args.graph, args.sequence, None, args.name, args.out)
    if command == "attention-dump":
        return handler(args.out, args.checkpoint, args.sequence, args.layers)
    raise PrefixForgeError(f"Unknown command {command!r}", {"available": list_available_commands()})


def _fail(payload: Dict[str, Any]) -> int:
    print(json.dumps({"status": "error", **payload}, default=str), file=sys.stderr)
    return 1


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        result = _dispatch(args)
    except PrefixForgeError as exc:
        log.error(f"{args.command} failed: {exc}")
        return _fail(exc.to_dict())
    except (ValueError, OSError) as exc:
        log.error(f"{args.command} failed: {exc}")
        return _fail({"error": type(exc).__name__, "message": str(exc)})

    if args.command == "baselines":
        print(result["csv"], end="")
    else:
        print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
