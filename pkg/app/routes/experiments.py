from fastapi import APIRouter, Depends, HTTPException

from app.deps import engine_error, get_engine, verify_internal_api_key
from app.engine.core.errors import HHBError
from app.engine.hhb_engine import HHBEngine
from app.schemas import ExperimentSpec, SweepRequest

router = APIRouter(
    prefix="/experiments",
    tags=["experiments"]
)


@router.post("/run")
def run_experiment(spec: ExperimentSpec, api_key: str = Depends(verify_internal_api_key),
                   engine: HHBEngine = Depends(get_engine)):
    """Один эксперимент: запись {spec, outcomes, rates, recovery, elapsed_ms}"""
    try:
        return engine.run_experiment(spec).as_dict()
    except HHBError as e:
        raise engine_error(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/sweep")
def sweep(req: SweepRequest, api_key: str = Depends(verify_internal_api_key),
          engine: HHBEngine = Depends(get_engine)):
    try:
        records = engine.sweep(req.spec, req.axis, req.values)
    except HHBError as e:
        raise engine_error(e)
    return {"axis": req.axis, "values": req.values, "records": [r.as_dict() for r in records]}
