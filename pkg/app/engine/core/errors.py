from __future__ import annotations

from typing import Dict, List


class HHBError(Exception):
    """Base class for every error raised by the engine."""


class ContractViolation(HHBError, ValueError):
    pass


class ProtocolStateError(HHBError, RuntimeError):
    """A state machine was driven out of order. Always a harness bug."""


class ProtocolViolation(HHBError):
    """A message is illegal at its flow point or was reshaped in flight."""


class ConfigError(HHBError, ValueError):
    def __init__(self, message: str, fields: Dict[str, str] | None = None):
        super().__init__(message)
        self.fields: Dict[str, str] = dict(fields or {})

    def details(self) -> List[str]:
        return [f"{name}: {msg}" for name, msg in self.fields.items()] or [str(self)]


class FrameDecodeError(HHBError, ValueError):
    pass


class BadMagic(FrameDecodeError):
    pass


class UnknownFrameType(FrameDecodeError):
    pass


class TruncatedFrame(FrameDecodeError):
    pass


class LengthOverflow(FrameDecodeError):
    pass


class MalformedPayload(FrameDecodeError):
    pass


class TransportError(HHBError, OSError):
    pass
