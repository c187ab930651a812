from typing import List, Optional

import uvicorn
from fastapi import Depends, FastAPI, File, Form, HTTPException, UploadFile
from loguru import logger
from sqlalchemy.orm import Session

import spec_dsl
from config import load_settings
from db import RunSummary, get_db, list_runs
from errors import SpecError, WorkbenchError
from search_engine import Learning, SearchConfig, format_trace, solve_bfs, solve_iddfs
from spec_dsl import SpecDocument

app = FastAPI(title="Problem-space workbench")


async def read_spec(spec: UploadFile) -> SpecDocument:
    """Decode and parse an uploaded .pspace file."""
    raw = await spec.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise HTTPException(status_code=400, detail=f"Specification is not UTF-8: {e}")
    try:
        return spec_dsl.parse(text)
    except SpecError as e:
        raise HTTPException(status_code=422, detail=str(e.diagnostic))


@app.post("/validate/")
async def validate(spec: UploadFile = File(...)):
    doc = await read_spec(spec)
    findings = spec_dsl.validate(doc)
    return {
        "space": doc.space.name,
        "instances": [inst.name for inst in doc.instances],
        "usable": not spec_dsl.blocking(findings),
        "findings": [
            {"code": f.code, "message": f.message, "blocking": f.blocking, "line": f.line, "column": f.column}
            for f in findings
        ],
    }


@app.post("/solve/")
async def solve(
        spec: UploadFile = File(...),
        instance: Optional[str] = Form(None),
        failure_detection: bool = Form(True),
        learning: Learning = Form(Learning.NONE),
        seed: Optional[int] = Form(None),
        max_depth: int = Form(64),
):
    doc = await read_spec(spec)
    try:
        # 1) Pick the instance and build the search configuration
        problem = doc.instance(instance)
        config = SearchConfig(failure_detection=failure_detection, learning=learning, seed=seed,
                              max_depth=max_depth, max_expansions=load_settings().expansion_cap)
        # 2) Search
        solution, stats = solve_iddfs(problem, config)
    except SpecError as e:
        raise HTTPException(status_code=422, detail=str(e.diagnostic))
    except WorkbenchError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except ValueError as e:
        raise HTTPException(status_code=400, detail=f"Invalid search configuration: {e}")

    logger.info(f"/solve/ {problem.title}: {stats.status.value}")
    return {
        "instance": problem.title,
        "stats": stats.model_dump(mode="json"),
        "operators": [step.operator for step in solution.steps] if solution else None,
        "trace": format_trace(problem, solution) if solution else None,
    }


@app.post("/oracle/")
async def oracle(spec: UploadFile = File(...), instance: Optional[str] = Form(None)):
    doc = await read_spec(spec)
    try:
        problem = doc.instance(instance)
        solution, reachable = solve_bfs(problem, max_states=spec_dsl.ENUMERATION_LIMIT)
    except SpecError as e:
        raise HTTPException(status_code=422, detail=str(e.diagnostic))
    except WorkbenchError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {
        "instance": problem.title,
        "length": solution.length if solution else None,
        "reachable": reachable,
        "operators": [step.operator for step in solution.steps] if solution else None,
    }


@app.get("/runs/", response_model=List[RunSummary])
def runs(db: Session = Depends(get_db)):
    return [
        RunSummary(run_id=r.run_id, kind=r.kind, problem_label=r.problem_label, model_id=r.model_id,
                   status=r.status, node_count=r.node_count or 0, transcript_path=r.transcript_path)
        for r in list_runs(db)
    ]


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=2500)
