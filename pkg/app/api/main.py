# FILE 16: main.py
# Purpose: FastAPI application exposing imputation and benchmarking over HTTP.
# Dependencies: fastapi, uvicorn, pydantic, pipeline

import logging
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from app.core.base_imputers import DEFAULTS, LABELS
from app.core.config import build_run_config
from app.core.data_matrix import parse_csv_text
from app.core.errors import ConfigError, DataError, MetaImputeError
from app.core.meta_imputer import MIB_LABEL, MIB_NAME
from app.core.pipeline import BenchmarkResult, ImputationPipeline, ImputeResult

logger = logging.getLogger(__name__)

app = FastAPI(
    title="Meta-Impute API",
    description="Stacked missing-data imputation and cross-validated imputation benchmarks",
    version="1.0.0",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

MAX_CSV_CHARS = 5_000_000


# Input Models
class ImputeRequest(BaseModel):
    csv: str
    method: str
    target: Optional[str] = None
    seed: Optional[int] = None
    imputers: Optional[List[str]] = None
    hyperparameters: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    self_mask_rate: Optional[float] = None
    ridge_epsilon: Optional[float] = None
    fj_mode: Optional[str] = None


class BenchmarkRequest(BaseModel):
    csv: str
    target: Optional[str] = None
    folds: Optional[int] = None
    rate: Optional[float] = None
    seed: Optional[int] = None
    imputers: Optional[List[str]] = None
    hyperparameters: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    ridge_epsilon: Optional[float] = None
    fj_mode: Optional[str] = None
    evaluate_downstream: bool = True
    downstream: Dict[str, Any] = Field(default_factory=dict)


def _http_error(e: MetaImputeError) -> HTTPException:
    if isinstance(e, (ConfigError, DataError)):
        return HTTPException(status_code=400, detail=str(e))
    logger.error(f"Request failed: {e}")
    return HTTPException(status_code=500, detail=str(e))


def _config_values(request: BaseModel, **fields) -> Dict[str, Any]:
    values = {k: v for k, v in fields.items() if v is not None}
    if getattr(request, "hyperparameters", None):
        values["hyperparameters"] = request.hyperparameters
    return values


def _check_size(csv: str):
    if len(csv) > MAX_CSV_CHARS:
        raise HTTPException(status_code=400, detail=f"CSV too large (max {MAX_CSV_CHARS} characters).")


@app.get("/health")
async def health_check():
    return {"status": "ok", "version": app.version, "imputers": list(LABELS.values()) + [MIB_LABEL]}


@app.get("/imputers")
async def list_imputers():
    entries = [
        {"name": kind.value, "label": label, "defaults": DEFAULTS[kind]}
        for kind, label in LABELS.items()
    ]
    entries.append({"name": MIB_NAME, "label": MIB_LABEL, "defaults": {}})
    return {"imputers": entries}


@app.post("/impute", response_model=ImputeResult)
def impute(request: ImputeRequest):
    _check_size(request.csv)
    try:
        data = parse_csv_text(request.csv, request.target, source="request")
        config = build_run_config(_config_values(
            request,
            target_name=request.target,
            seed=request.seed,
            imputers=request.imputers,
            self_mask_rate=request.self_mask_rate,
            ridge_epsilon=request.ridge_epsilon,
            fj_mode=request.fj_mode,
        ))
        return ImputationPipeline(config).impute(request.method, data=data, write=False)
    except MetaImputeError as e:
        raise _http_error(e)


@app.post("/benchmark", response_model=BenchmarkResult)
def benchmark(request: BenchmarkRequest):
    _check_size(request.csv)
    try:
        data = parse_csv_text(request.csv, request.target, source="request")
        config = build_run_config(_config_values(
            request,
            target_name=request.target,
            folds=request.folds,
            missing_rate=request.rate,
            seed=request.seed,
            imputers=request.imputers,
            ridge_epsilon=request.ridge_epsilon,
            fj_mode=request.fj_mode,
            evaluate_downstream=request.evaluate_downstream,
            downstream=request.downstream or None,
        ))
        return ImputationPipeline(config).benchmark(data=data, write=False)
    except MetaImputeError as e:
        raise _http_error(e)


if __name__ == "__main__":
    uvicorn.run("app.api.main:app", host="0.0.0.0", port=8000, reload=True)
