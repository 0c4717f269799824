from fastapi import APIRouter, Depends, HTTPException
from sqlmodel import Session

from api.database import get_session
from api.models.data_models import ExperimentRun
from api.models.read_models import SolveRequest, SolveResponse, TripleDiagnosis
from grrm.classify import posterior_rule
from grrm.errors import GrrmError
from grrm.finite import element_key
from grrm.harness.config import SolveConfig, config_fingerprint
from grrm.harness.output import json_safe
from grrm.harness.scheme_loader import build_problem, build_scheme
from grrm.solver import erm_backprojection, solve

router = APIRouter(tags=["solve"])


@router.post("/", response_model=SolveResponse)
def solve_problem(request: SolveRequest, session: Session = Depends(get_session)):
    config = SolveConfig.model_validate(request.model_dump(exclude={"record"}))
    try:
        problem = build_problem(config)
        solution = solve(problem)
    except GrrmError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    summary = json_safe(solution.summary())
    fingerprint = config_fingerprint(config)
    response = SolveResponse(**summary, fingerprint=fingerprint)
    if solution.q_star is not None:
        response.q_star = {
            element_key(z): float(m) for z, m in zip(solution.q_star.space.elements, solution.q_star.mass)
        }
        rule = posterior_rule(solution.q_star, problem.scheme.loss)
        response.rule = {element_key(x): rule(x) for x in rule.feature_space.elements}
    if request.record:
        run = ExperimentRun(kind="solve", fingerprint=fingerprint, summary=summary)
        session.add(run)
        session.commit()
        session.refresh(run)
        response.run_id = run.id
    return response


@router.post("/diagnose-erm", response_model=list[TripleDiagnosis])
def diagnose_erm(config: SolveConfig):
    try:
        scheme = build_scheme(config.scheme)
    except GrrmError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    diagnoses = []
    for i, triple in enumerate(scheme.triples):
        try:
            report = erm_backprojection(triple)
        except GrrmError as exc:
            diagnoses.append(TripleDiagnosis(index=i, kind=triple.kind, applicable=False, message=str(exc)))
            continue
        diagnoses.append(
            TripleDiagnosis(
                index=i,
                kind=triple.kind,
                applicable=True,
                minimum=report.minimum,
                negative_entries={element_key(z): m for z, m in report.negative_entries.items()},
            )
        )
    return diagnoses
