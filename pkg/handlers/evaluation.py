"""
Evaluation tables: classical baselines, depth-limited minimum size,
(size, depth) Pareto frontiers and plot-ready run reports.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from models.schemas import BaselineRow, DepthLimitRow, DesignRecord, EvalReport, ParetoPoint
from services.design_db import DesignDatabase
from services.grpo_service import pareto_points
from utils.prefix_graph import CONSTRUCTORS, depth, min_depth, size, validate

log = logging.getLogger(__name__)


def baselines(n: int) -> List[BaselineRow]:
    rows = []
    for name, build in CONSTRUCTORS.items():
        graph = build(n)
        rows.append(BaselineRow(name=name, size=size(graph), depth=depth(graph), valid=validate(graph).valid))
    return rows


def to_csv(rows: Sequence, path: Optional[str] = None) -> str:
    """CSV text for a list of pydantic rows; also written to ``path`` if given."""
    frame = pd.DataFrame([row.model_dump() for row in rows])
    text = frame.to_csv(index=False)
    if path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    return text


def default_depth_limits(n: int) -> List[int]:
    h = min_depth(n)
    return [h, h + 1, h + 2]


def pareto_frontier(records: Sequence[DesignRecord]) -> List[ParetoPoint]:
    """Non-dominated (size, depth) points; each names its earliest stored design."""
    first_key: Dict[tuple, str] = {}
    for record in records:
        first_key.setdefault((record.size, record.depth), record.key)
    return [
        ParetoPoint(size=s, depth=d, key=first_key[(s, d)])
        for s, d in pareto_points(list(first_key))
    ]


def eval_db(
    database: DesignDatabase,
    width: int,
    depth_limits: Optional[Sequence[int]] = None,
) -> EvalReport:
    records = database.records(width)
    limits = list(depth_limits) if depth_limits else default_depth_limits(width)
    if not records:
        log.warning(f"No width-{width} designs in the database; emitting an empty report")
        return EvalReport(
            width=width,
            min_depth=min_depth(width),
            total_designs=0,
            limits=[DepthLimitRow(depth_limit=limit) for limit in limits],
            empty=True,
        )

    rows = []
    for limit in limits:
        eligible = [r.size for r in records if r.depth <= limit]
        rows.append(DepthLimitRow(
            depth_limit=limit,
            min_size=min(eligible) if eligible else None,
            designs=len(eligible),
        ))
    return EvalReport(
        width=width,
        min_depth=min_depth(width),
        total_designs=len(records),
        limits=rows,
        pareto=pareto_frontier(records),
    )


def write_eval_outputs(report: EvalReport, out_dir: str) -> Dict[str, str]:
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    paths = {
        "limits": str(target / "depth_limits.csv"),
        "pareto": str(target / "pareto.csv"),
        "json": str(target / "eval.json"),
    }
    to_csv(report.limits, paths["limits"])
    pd.DataFrame([p.model_dump() for p in report.pareto], columns=["size", "depth", "key"]).to_csv(
        paths["pareto"], index=False
    )
    Path(paths["json"]).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return paths


# -----------------------------------------------------------------------------
# Run reports
# -----------------------------------------------------------------------------
def _adp_frame(label: str, records: Sequence[DesignRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "run": label,
                "iteration": r.iteration,
                "source": r.source,
                "size": r.size,
                "depth": r.depth,
                "adp": r.adp,
            }
            for r in records
        ],
        columns=["run", "iteration", "source", "size", "depth", "adp"],
    )


def summarize_runs(designs: pd.DataFrame) -> pd.DataFrame:
    """min / mean / population σ of ADP per run."""
    grouped = designs.groupby("run")["adp"]
    summary = pd.DataFrame({
        "designs": grouped.size(),
        "min_adp": grouped.min(),
        "mean_adp": grouped.mean(),
        "std_adp": grouped.std(ddof=0),
    }).reset_index()
    return summary


def pareto_windows(designs: pd.DataFrame, window: int) -> pd.DataFrame:
    rows = []
    sampled = designs[designs["iteration"] > 0]
    for (label, start), chunk in sampled.groupby(
        [sampled["run"], (sampled["iteration"] - 1) // window * window + 1]
    ):
        for s, d in pareto_points(list(zip(chunk["size"], chunk["depth"]))):
            rows.append({"run": label, "window_start": int(start), "size": s, "depth": d})
    return pd.DataFrame(rows, columns=["run", "window_start", "size", "depth"])


def build_report(
    runs: Dict[str, DesignDatabase],
    out_dir: str,
    histories: Optional[Dict[str, str]] = None,
    width: Optional[int] = None,
    window: int = 20,
) -> Dict[str, str]:
    """
    Write plot-ready CSVs for one or more runs.

    - summary.csv: per-run ADP statistics and unique-design count
    - reward_curve.csv: per-iteration history rows
    - pareto_scatter.csv: Pareto front of each iteration window
    - adp_distribution.csv: one row per stored design
    """
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    frames = [_adp_frame(label, db.records(width)) for label, db in runs.items()]
    designs = pd.concat(frames, ignore_index=True) if frames else _adp_frame("", [])

    summary = summarize_runs(designs)
    paths = {
        "summary": str(target / "summary.csv"),
        "reward_curve": str(target / "reward_curve.csv"),
        "pareto_scatter": str(target / "pareto_scatter.csv"),
        "adp_distribution": str(target / "adp_distribution.csv"),
    }
    summary.to_csv(paths["summary"], index=False)
    designs.to_csv(paths["adp_distribution"], index=False)
    pareto_windows(designs, window).to_csv(paths["pareto_scatter"], index=False)

    curves = []
    for label, path in (histories or {}).items():
        history = pd.read_csv(path)
        history.insert(0, "run", label)
        curves.append(history)
    curve = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame(
        columns=["run", "iteration", "best_reward", "mean_reward", "unique_designs"]
    )
    curve.to_csv(paths["reward_curve"], index=False)

    Path(target / "report.json").write_text(
        json.dumps({"runs": summary.to_dict(orient="records"), "files": paths}, indent=2, default=float),
        encoding="utf-8",
    )
    paths["json"] = str(target / "report.json")
    log.info(f"✅ Report written to {target}")
    return paths
