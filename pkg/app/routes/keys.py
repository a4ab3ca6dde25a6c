from fastapi import APIRouter, Depends

from app.config import SETTINGS
from app.deps import engine_error, verify_internal_api_key
from app.engine.core.errors import ConfigError
from app.engine.hhb_engine import draw_seed, generate_keys
from app.schemas import KeyFile, KeygenRequest

router = APIRouter(prefix="/keys", tags=["keys"])


@router.post("/generate")
def generate(req: KeygenRequest, api_key: str = Depends(verify_internal_api_key)):
    if req.k < SETTINGS.min_key_length:
        raise engine_error(ConfigError("key too short", {"k": f"must be >= {SETTINGS.min_key_length}"}))
    seed = req.seed if req.seed is not None else draw_seed()
    keyfile = KeyFile.of(generate_keys(req.k, seed))
    return {"seed": seed, **keyfile.model_dump()}
