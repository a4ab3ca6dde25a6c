from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from app.engine.core.constants import (
    DEFAULT_EPS, DEFAULT_K, DEFAULT_M_S, DEFAULT_M_Y, DEFAULT_R, DEFAULT_SESSIONS, SWEEP_AXES,
)
from app.engine.core.errors import ConfigError
from app.engine.core.models import KeyPair, Params

Scenario = Literal["honest", "coin-flip-adversary", "attack-y", "attack-s", "attack-full", "impersonate"]

_U64_MAX = (1 << 64) - 1


class KeyFile(BaseModel):
    k: int = Field(..., ge=1, description="Key length in bits")
    s_hex: str = Field(..., description="Transport key s, LSB-first packed, hex")
    y_hex: str = Field(..., description="Blinding key y, LSB-first packed, hex")

    def to_keys(self) -> KeyPair:
        return KeyPair.from_json(self.model_dump())

    @classmethod
    def of(cls, keys: KeyPair) -> "KeyFile":
        return cls(**keys.to_json())


class ExperimentSpec(BaseModel):
    scenario: Scenario = "honest"
    k: int = Field(DEFAULT_K, ge=1, le=65535, description="Secret length")
    r: int = Field(DEFAULT_R, ge=1, le=65535, description="HB rounds per session")
    eps: float = Field(DEFAULT_EPS, ge=0.0, lt=0.5, description="Tag noise rate, snapped to parts-per-2^16")
    u: Optional[int] = Field(None, ge=0, le=65535, description="Acceptance threshold; default from the 3-sigma rule")
    sessions: int = Field(DEFAULT_SESSIONS, ge=1, description="Sessions for honest / coin / impersonate runs")
    m_y: int = Field(DEFAULT_M_Y, ge=1, description="Sessions per bit of y")
    m_s: int = Field(DEFAULT_M_S, ge=1, description="Sessions per bit of s")
    seed: Optional[int] = Field(None, ge=0, le=_U64_MAX, description="Master seed; drawn and echoed when absent")
    workers: int = Field(1, ge=1, description="Session worker processes (in-process transport)")
    transport: Literal["inproc", "tcp"] = "inproc"
    format: Literal["json", "csv"] = "json"
    force_a: bool = Field(False, description="Force the attacked bit of every challenge to 1 during s-recovery")
    compare_force_a: bool = Field(False, description="Run s-recovery both with and without force_a")
    pairs: List[int] = Field(default_factory=lambda: [0, 1, 2], description="Wire pairs flipped by the s-attack")
    keys: Optional[KeyFile] = Field(None, description="Reader/tag keys; generated from the seed when absent")
    candidate: Optional[KeyFile] = Field(None, description="Tag keys for the impersonate scenario")

    @field_validator("pairs")
    @classmethod
    def _pairs_subset(cls, v: List[int]) -> List[int]:
        if not v or len(set(v)) != len(v) or any(p not in (0, 1, 2) for p in v):
            raise ValueError("pairs must be a non-empty subset of {0, 1, 2}")
        return sorted(v)

    def params(self, min_key_length: int) -> Params:
        params = Params.build(self.k, self.r, self.eps, self.u).validate(min_key_length)
        for name, keyfile in (("keys", self.keys), ("candidate", self.candidate)):
            if keyfile is not None and keyfile.k != self.k:
                raise ConfigError("key length does not match k", {name: f"k = {keyfile.k}, expected {self.k}"})
        if self.scenario == "impersonate" and self.candidate is None:
            raise ConfigError("impersonate needs candidate keys", {"candidate": "required for impersonate"})
        return params


class SweepRequest(BaseModel):
    spec: ExperimentSpec
    axis: str = Field(..., description="One of k, r, eps, u, m")
    values: List[float] = Field(..., min_length=1)

    @field_validator("axis")
    @classmethod
    def _known_axis(cls, v: str) -> str:
        if v not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {', '.join(SWEEP_AXES)}")
        return v


class KeygenRequest(BaseModel):
    k: int = Field(DEFAULT_K, ge=1, le=65535)
    seed: Optional[int] = Field(None, ge=0, le=_U64_MAX)


def config_error_from(exc: ValidationError) -> ConfigError:
    """pydantic errors -> ConfigError with `loc: msg` fields"""
    fields: Dict[str, str] = {}
    for err in exc.errors():
        loc = ".".join(str(part) for part in err.get("loc", ())) or "spec"
        fields[loc] = err.get("msg", "invalid value")
    return ConfigError("invalid experiment configuration", fields)


def parse_spec(data: Dict[str, Any]) -> ExperimentSpec:
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as e:
        raise config_error_from(e) from None
