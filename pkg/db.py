import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

from loguru import logger
from sqlalchemy import Column, DateTime, Integer, String, create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from config import load_settings

# ========== Database Setup ==========

Base = declarative_base()
_session_factories: Dict[str, sessionmaker] = {}


def get_session_factory(database_url: str) -> sessionmaker:
    """One engine per URL; tables are created on first use."""
    if database_url not in _session_factories:
        if database_url.startswith("sqlite:///"):
            db_path = database_url[len("sqlite:///"):]
            if db_path and db_path != ":memory:":
                Path(db_path).parent.mkdir(parents=True, exist_ok=True)
        engine = create_engine(database_url, connect_args={"check_same_thread": False}
                               if database_url.startswith("sqlite") else {})
        Base.metadata.create_all(bind=engine)
        _session_factories[database_url] = sessionmaker(bind=engine, autoflush=False, autocommit=False)
    return _session_factories[database_url]


# ========== Model Definition ==========

class RunModel(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String, nullable=False, unique=True, index=True)
    kind = Column(String, nullable=False)               # pipeline | oneshot_formulate | oneshot_solve
    problem_label = Column(String, nullable=False)
    model_id = Column(String, nullable=False)
    status = Column(String, nullable=False)             # complete | incomplete
    node_count = Column(Integer, default=0)
    transcript_path = Column(String, nullable=False)
    created_at = Column(DateTime, nullable=False, default=lambda: datetime.now(timezone.utc))


# ========== FastAPI Setup ==========
# Dependency: Get DB session per request
def get_db() -> Iterator[Session]:
    db = get_session_factory(load_settings().database_url)()
    try:
        yield db
    finally:
        db.close()


def record_run(db: Session, transcript: "Transcript", path: Path) -> RunModel:
    row = db.query(RunModel).filter(RunModel.run_id == transcript.run_id).one_or_none()
    if row is None:
        row = RunModel(run_id=transcript.run_id, kind=transcript.kind, problem_label=transcript.problem_label,
                       model_id=transcript.model_id, status=transcript.status, transcript_path=str(path))
        db.add(row)
    row.status = transcript.status
    row.node_count = len(transcript.nodes)
    db.commit()
    return row


def list_runs(db: Session) -> List[RunModel]:
    return db.query(RunModel).order_by(RunModel.created_at, RunModel.id).all()


# pydantic stuff
from pydantic import BaseModel, Field


class NodeRecord(BaseModel):
    node_id: str
    prompt: str = Field("", description="Full rendered prompt; empty in hand-assembled fixtures")
    response: str
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None
    usage: Optional[Dict[str, int]] = None


class Transcript(BaseModel):
    run_id: str
    kind: str = "pipeline"
    problem_label: str
    problem: str = ""
    model_id: str
    temperature: float = 0.0
    status: str = "incomplete"
    error: Optional[str] = None
    nodes: List[NodeRecord] = Field(default_factory=list)

    def responses(self, node_id: str) -> List[str]:
        return [n.response for n in self.nodes if n.node_id == node_id]


class RunSummary(BaseModel):
    run_id: str
    kind: str
    problem_label: str
    model_id: str
    status: str
    node_count: int
    transcript_path: str


class TranscriptStore:
    """Writes `<run_id>.transcript.json` files and registers runs when a database is configured."""

    def __init__(self, directory: Union[str, Path], database_url: Optional[str] = None):
        self.directory = Path(directory)
        self.database_url = database_url

    def path_for(self, run_id: str) -> Path:
        return self.directory / f"{run_id}.transcript.json"

    def save(self, transcript: Transcript) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(transcript.run_id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(transcript.model_dump_json(indent=2), encoding="utf-8")
        tmp.replace(path)
        if self.database_url:
            db = get_session_factory(self.database_url)()
            try:
                record_run(db, transcript, path)
            finally:
                db.close()
        logger.debug(f"saved {path} ({len(transcript.nodes)} nodes, {transcript.status})")
        return path


def load_transcript(path: Union[str, Path]) -> Transcript:
    path = Path(path)
    try:
        return Transcript.model_validate_json(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not a transcript: {e}") from e
