"""
PrefixForge Webservice - inspection API for prefix-adder designs.
Validates, measures, simulates and exports designs; serves the design
database and samples from a checkpoint. No run steering.
"""

import logging
import os
from datetime import date
from typing import Any, Dict, List, Optional

import torch
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse

from models.errors import PrefixForgeError
from models.policy import PolicyModel, load_checkpoint
from models.schemas import (
    BaselineRow,
    DesignMetrics,
    DesignRecord,
    GraphPayload,
    HealthResponse,
    SimulateRequest,
    SimulateResponse,
    ValidationReport,
)
from handlers.evaluation import baselines
from services.design_db import DesignDatabase
from services.hardware_service import export_netlist, simulate_add
from services.sampling_service import sample_designs
from utils.prefix_graph import (
    PrefixGraph,
    depth,
    design_key,
    graph_from_payload,
    min_depth,
    size,
    validate,
)

# -----------------------------------------------------------------------------
# Config & Logging
# -----------------------------------------------------------------------------
PORT = int(os.environ.get("PORT", "8080"))
LOG_LEVEL = os.environ.get("LOGLEVEL", "INFO")
VERSION = "1.0.0"

logging.basicConfig(
    level=LOG_LEVEL,
    format="%(asctime)s %(levelname)s %(message)s"
)
log = logging.getLogger("prefixforge")

# -----------------------------------------------------------------------------
# FastAPI App Setup
# -----------------------------------------------------------------------------
app = FastAPI(
    title="PrefixForge Webservice",
    description="Prefix-adder design inspection API",
    version=VERSION,
    docs_url="/docs",
    redoc_url="/redoc"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# -----------------------------------------------------------------------------
# Resources
# -----------------------------------------------------------------------------
_resources: Dict[str, Any] = {}


def get_database() -> DesignDatabase:
    if "database" not in _resources:
        path = os.environ.get("PREFIXFORGE_DB")
        if not path or not os.path.isfile(path):
            raise HTTPException(status_code=404, detail="No design database configured (set PREFIXFORGE_DB)")
        _resources["database"] = DesignDatabase(path)
    return _resources["database"]


def get_model() -> PolicyModel:
    if "model" not in _resources:
        path = os.environ.get("PREFIXFORGE_CHECKPOINT")
        if not path:
            raise HTTPException(status_code=404, detail="No checkpoint configured (set PREFIXFORGE_CHECKPOINT)")
        try:
            _resources["model"], _ = load_checkpoint(path)
        except PrefixForgeError as e:
            raise HTTPException(status_code=404, detail=e.to_dict())
    return _resources["model"]


def reset_resources() -> None:
    _resources.clear()


@app.on_event("startup")
async def startup_event():
    log.info(f"🚀 Starting PrefixForge Webservice v{VERSION}")
    log.info("✅ Ready")


@app.on_event("shutdown")
async def shutdown_event():
    log.info("🛑 Shutting down PrefixForge Webservice")
    reset_resources()


def _graph(payload: GraphPayload) -> PrefixGraph:
    try:
        return graph_from_payload(payload)
    except PrefixForgeError as e:
        raise HTTPException(status_code=400, detail=e.to_dict())


# -----------------------------------------------------------------------------
# Health & Info Endpoints
# -----------------------------------------------------------------------------
@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint."""
    return HealthResponse(
        status="healthy",
        service="prefixforge",
        version=VERSION,
        timestamp=date.today().isoformat()
    )


@app.get("/")
async def root():
    return {
        "service": "PrefixForge Webservice",
        "version": VERSION,
        "description": "Prefix-adder design inspection API",
        "docs": "/docs",
        "features": [
            "Classical baselines",
            "Design validation and metrics",
            "Adder simulation",
            "Structural Verilog export",
            "Design database queries",
            "Checkpoint sampling",
        ]
    }


# -----------------------------------------------------------------------------
# Design Endpoints
# -----------------------------------------------------------------------------
@app.get("/baselines/{width}", response_model=List[BaselineRow])
async def get_baselines(width: int):
    if not 2 <= width <= 256:
        raise HTTPException(status_code=400, detail=f"width must be in [2, 256], got {width}")
    return baselines(width)


@app.post("/designs/validate", response_model=ValidationReport)
async def validate_design(payload: GraphPayload):
    """Rule check; input and output nodes are implied by the payload format."""
    return validate(_graph(payload))


@app.post("/designs/metrics", response_model=DesignMetrics)
async def design_metrics(payload: GraphPayload):
    graph = _graph(payload)
    report = validate(graph)
    if not report.valid:
        raise HTTPException(status_code=400, detail=report.model_dump())
    return DesignMetrics(
        width=graph.width,
        size=size(graph),
        depth=depth(graph),
        min_depth=min_depth(graph.width),
        key=design_key(graph),
    )


@app.post("/designs/netlist", response_class=PlainTextResponse)
async def design_netlist(payload: GraphPayload, name: str = Query("prefix_adder")):
    try:
        return export_netlist(_graph(payload), name)
    except PrefixForgeError as e:
        raise HTTPException(status_code=400, detail=e.to_dict())
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/designs/simulate", response_model=SimulateResponse)
async def simulate_design(request: SimulateRequest):
    try:
        total, carry = simulate_add(_graph(request.graph), request.a, request.b)
    except PrefixForgeError as e:
        raise HTTPException(status_code=400, detail=e.to_dict())
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return SimulateResponse(sum=total, carry_out=carry)


@app.get("/designs/top", response_model=List[DesignRecord])
async def top_designs(
    k: int = Query(10, ge=1, le=1000),
    width: Optional[int] = Query(None, ge=2),
):
    return get_database().top_k_by_adp(k, width)


# -----------------------------------------------------------------------------
# Sampling Endpoint
# -----------------------------------------------------------------------------
# Sync so rollouts run in the threadpool.
@app.get("/sample")
def sample(
    width: int = Query(..., ge=2),
    count: int = Query(1, ge=1, le=1000),
    temperature: float = Query(1.0, gt=0),
    seed: int = Query(0),
):
    model = get_model()
    try:
        sequences, stats = sample_designs(
            model, width, count, temperature, torch.Generator().manual_seed(seed)
        )
    except PrefixForgeError as e:
        raise HTTPException(status_code=400, detail=e.to_dict())
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {"stats": stats.model_dump(), "sequences": [s.pairs() for s in sequences]}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("app.main:app", host="0.0.0.0", port=PORT, reload=False)
