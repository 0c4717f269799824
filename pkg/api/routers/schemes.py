from fastapi import APIRouter, HTTPException

from api.models.read_models import TripleDescription
from grrm import schemes
from grrm.errors import GrrmError
from grrm.harness.config import SchemeSpec
from grrm.harness.scheme_loader import build_scheme

router = APIRouter(tags=["schemes"])


@router.post("/inspect", response_model=list[TripleDescription])
def inspect_scheme(spec: SchemeSpec):
    try:
        return schemes.describe(build_scheme(spec))
    except GrrmError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
