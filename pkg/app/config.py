from __future__ import annotations

from pydantic import BaseModel
import os

from app.engine.core.constants import DEFAULT_IO_TIMEOUT, MIN_KEY_LENGTH


class Settings(BaseModel):
    internal_api_key: str = os.getenv("INTERNAL_API_KEY", "")
    log_level: str = os.getenv("HHB_LOG_LEVEL", "INFO")
    workers: int = int(os.getenv("HHB_WORKERS", "1"))
    io_timeout: float = float(os.getenv("HHB_IO_TIMEOUT", str(DEFAULT_IO_TIMEOUT)))
    min_key_length: int = int(os.getenv("HHB_MIN_KEY_LENGTH", str(MIN_KEY_LENGTH)))


SETTINGS = Settings()
