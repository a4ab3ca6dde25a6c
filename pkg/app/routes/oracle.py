from fastapi import APIRouter, Depends

from app.deps import verify_internal_api_key
from app.engine.attacks.theta_oracle import resync_table, theta_flip_oracle

router = APIRouter(prefix="/oracle", tags=["oracle"])


@router.get("/theta-flip")
def theta_flip(api_key: str = Depends(verify_internal_api_key)):
    """Таблица θ-флипа (8 строк + контрольные) и таблица ресинхронизации"""
    return {
        "theta_flip": theta_flip_oracle().as_dict(),
        "resync": resync_table().as_dict(),
    }
