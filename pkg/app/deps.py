from __future__ import annotations

from fastapi import Header, HTTPException
from .config import SETTINGS
from .engine.core.errors import ConfigError, HHBError
from .engine.hhb_engine import HHBEngine

_engine = HHBEngine(min_key_length=SETTINGS.min_key_length, io_timeout=SETTINGS.io_timeout)


def get_engine() -> HHBEngine:
    return _engine


def verify_internal_api_key(x_api_key: str | None = Header(default=None, alias="X-API-Key")) -> str:
    if not SETTINGS.internal_api_key:
        raise HTTPException(status_code=500, detail="INTERNAL_API_KEY is not configured")

    if not x_api_key or x_api_key != SETTINGS.internal_api_key:
        raise HTTPException(status_code=401, detail="Invalid API key")

    return x_api_key


def engine_error(exc: HHBError) -> HTTPException:
    """ConfigError -> 422 with field-level details, anything else -> 500"""
    if isinstance(exc, ConfigError):
        return HTTPException(status_code=422, detail={"message": str(exc), "fields": exc.fields})
    return HTTPException(status_code=500, detail=f"{type(exc).__name__}: {exc}")
