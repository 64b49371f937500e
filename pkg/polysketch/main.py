"""
FastAPI server for polysketch - variance formulas, feature counts and allocations over HTTP
"""
import logging
from typing import List, Optional

import numpy as np
import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from polysketch import service
from polysketch.config import get_config
from polysketch.errors import ConfigurationError, NumericalError
from polysketch.maclaurin import exact_kernel_matrix
from polysketch.models import AllocateCommand, Allocation, KernelSpec, VarianceCommand
from polysketch.variance import bernstein_feature_count, sigma_sq_bound

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(title="polysketch API", version="1.0.0")


@app.on_event("startup")
async def startup_event():
    """Load configuration on startup"""
    try:
        config = get_config()
        print("[OK] Configuration loaded")
        print(f"  - Source: {config.config_path if config.loaded else '(built-in defaults)'}")
        print(f"  - Degree range: {config.p_min}..{config.p_max}")
    except Exception as e:
        print(f"[WARN] Warning: Could not load config.ini: {e}")
        print("  Using default configuration")


# Pydantic models for request/response
class BernsteinRequest(BaseModel):
    x: List[float] = Field(min_length=1)
    y: List[float] = Field(min_length=1)
    degree: int = Field(ge=1)
    q: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, lt=2.0)


class BernsteinResponse(BaseModel):
    sigma_sq: float
    num_features: int


class KernelRequest(BaseModel):
    kernel: KernelSpec
    X: List[List[float]] = Field(min_length=1)
    Y: Optional[List[List[float]]] = None


def _http_error(e: Exception) -> HTTPException:
    if isinstance(e, NumericalError):
        logger.error(f"Numerical failure: {e}")
        return HTTPException(status_code=500, detail=str(e))
    return HTTPException(status_code=422, detail=str(e))


@app.get("/api/health")
async def health_check():
    """Liveness probe"""
    return {"status": "healthy"}


@app.get("/api/config")
async def get_settings():
    """Effective numerical defaults"""
    return get_config().as_dict()


@app.post("/api/variance")
def variance(cmd: VarianceCommand):
    """Closed-form sketch variances for one input pair"""
    try:
        return service.variance_report(cmd)
    except (ConfigurationError, NumericalError) as e:
        raise _http_error(e)


@app.post("/api/bernstein", response_model=BernsteinResponse)
def bernstein(req: BernsteinRequest):
    """Feature count for a relative error epsilon with probability 1 - delta"""
    try:
        if len(req.x) != len(req.y):
            raise ConfigurationError(f"x and y differ in length: {len(req.x)} vs {len(req.y)}")
        sigma_sq = float(sigma_sq_bound(np.asarray(req.x), np.asarray(req.y), req.degree, req.q))
        count = bernstein_feature_count(sigma_sq, req.epsilon, req.delta)
    except (ConfigurationError, NumericalError) as e:
        raise _http_error(e)
    return BernsteinResponse(sigma_sq=sigma_sq, num_features=count)


@app.post("/api/allocate", response_model=Allocation)
def allocate(cmd: AllocateCommand):
    """Optimized Maclaurin truncation degree and per-degree feature counts"""
    try:
        return service.allocate(cmd)
    except (ConfigurationError, NumericalError) as e:
        raise _http_error(e)


@app.post("/api/kernel")
def kernel_matrix(req: KernelRequest):
    """Exact kernel matrix between the rows of X and Y (Y defaults to X)"""
    try:
        K = exact_kernel_matrix(req.kernel, np.asarray(req.X),
                                None if req.Y is None else np.asarray(req.Y))
    except (ConfigurationError, NumericalError) as e:
        raise _http_error(e)
    return {"K": K.tolist()}


if __name__ == "__main__":
    config = get_config()
    uvicorn.run(app, host=config.server_host, port=config.server_port)
