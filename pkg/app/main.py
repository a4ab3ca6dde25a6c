from __future__ import annotations

from fastapi import FastAPI

from .config import SETTINGS
from .engine.core.constants import DEFAULT_EPS, DEFAULT_K, DEFAULT_R, SCENARIOS, default_threshold
from .engine.core.utils import configure_logging
from .routes.experiments import router as experiments_router
from .routes.keys import router as keys_router
from .routes.oracle import router as oracle_router

configure_logging(SETTINGS.log_level)

app = FastAPI(title="hhb-lab", version="0.1.0")

@app.get("/health")
def health():
    return {"status": "ok"}

@app.get("/meta")
def meta():
    return {
        "engine": "hhb",
        "scenarios": list(SCENARIOS),
        "defaults": {"k": DEFAULT_K, "r": DEFAULT_R, "eps": DEFAULT_EPS, "u": default_threshold(DEFAULT_R, DEFAULT_EPS)},
        "workers": SETTINGS.workers,
    }

app.include_router(experiments_router)
app.include_router(keys_router)
app.include_router(oracle_router)
