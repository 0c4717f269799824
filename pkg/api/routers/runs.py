from typing import List

from fastapi import APIRouter, Depends, HTTPException, Query
from sqlmodel import Session, select

from api.database import get_session
from api.models.data_models import ExperimentRun, ExperimentRunUpsert
from api.models.read_models import ExperimentRunRead

router = APIRouter(tags=["runs"])


@router.get("/", response_model=List[ExperimentRunRead])
def list_runs(kind: str | None = Query(default=None), session: Session = Depends(get_session)):
    query = select(ExperimentRun).order_by(ExperimentRun.id)
    if kind is not None:
        query = query.where(ExperimentRun.kind == kind)
    return session.exec(query).all()


@router.get("/{run_id}", response_model=ExperimentRunRead)
def get_run(run_id: int, session: Session = Depends(get_session)):
    db_run = session.get(ExperimentRun, run_id)
    if not db_run:
        raise HTTPException(status_code=404, detail="Run not found")
    return db_run


@router.post("/", response_model=ExperimentRunRead)
def create_run(run_create: ExperimentRunUpsert, session: Session = Depends(get_session)):
    run = ExperimentRun(**run_create.model_dump())
    session.add(run)
    session.commit()
    session.refresh(run)
    return run


@router.delete("/", response_model=dict)
def delete_runs(ids: list[int], session: Session = Depends(get_session)):
    for id in ids:
        db_run = session.get(ExperimentRun, id)
        if not db_run:
            raise HTTPException(status_code=404, detail="Run not found")  # Cancel delete if anything is missing
        session.delete(db_run)
    session.commit()
    return {"deleted": True}
