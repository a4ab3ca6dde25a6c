import logging
import re
import sys
import time
from functools import wraps

from app.engine.core.errors import ConfigError

# host:port, IPv6 hosts in brackets
_ENDPOINT_RE = re.compile(r"^(\[[^\]]+\]|[^:\s]+):(\d{1,5})$")

_LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """Один stderr-хендлер на весь процесс (stdout остаётся под записи)."""
    root = logging.getLogger()
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())


def parse_endpoint(text: str) -> tuple[str, int]:
    """Разбирает строку host:port"""
    m = _ENDPOINT_RE.match((text or "").strip())
    if not m:
        raise ConfigError(f"bad endpoint {text!r}", {"endpoint": "expected host:port"})
    host, port = m.group(1).strip("[]"), int(m.group(2))
    if not 0 <= port <= 65535:
        raise ConfigError(f"bad port in {text!r}", {"endpoint": "port out of range"})
    return host, port


def measure_time(func):
    """Декоратор: время выполнения уходит в DEBUG-лог модуля функции."""
    log = logging.getLogger(func.__module__)

    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        result = func(*args, **kwargs)
        log.debug("[%s] took %.4f seconds", func.__name__, time.perf_counter() - start)
        return result
    return wrapper
