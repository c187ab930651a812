"""
Turn an analyst transcript into an executable `.pspace` specification, or
import a hand-written one.
"""
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

from loguru import logger

import spec_dsl
from cta_pipeline import DEFAULT_MODEL_ID, NodeId
from db import NodeRecord, Transcript
from errors import ExtractionError, SearchBudgetExceeded, SpecError
from llm_transport import ChatMessage, ChatRequest, LlmTransport
from prompts import build_extraction_prompt, build_repair_prompt
from search_engine import solve_bfs
from spec_dsl import Finding, SpecDocument

MAX_ATTEMPTS = 3
REACHABLE_CAP = 200_000

ANALYSIS_NODES = (
    NodeId.CHARACTERIZE,
    NodeId.REFINE_CHARACTERIZATION,
    NodeId.OPERATORS,
    NodeId.REFINE_OPERATORS,
)

_FENCE = re.compile(r"```[A-Za-z0-9_-]*\n(.*?)```", re.DOTALL)


class Provenance(str, Enum):
    LLM_EMITTED = "llm-emitted"
    MANUAL_IMPORT = "manual-import"


@dataclass
class ExtractionResult:
    spec: SpecDocument
    attempts: int
    findings: List[Finding]
    provenance: Provenance
    usable: bool  # parsed, no blocking finding, oracle terminates within REACHABLE_CAP
    problems: List[str] = field(default_factory=list)
    path: Optional[Path] = None
    exchanges: List[NodeRecord] = field(default_factory=list)


def strip_fences(text: str) -> str:
    match = _FENCE.search(text)
    return match.group(1) if match else text


def check_spec(text: str) -> Tuple[Optional[SpecDocument], List[Finding], List[str]]:
    """
    Parse and gate a candidate specification.
    Returns (document, findings, problems); problems is empty when the document is usable.
    """
    try:
        doc = spec_dsl.parse(text)
    except SpecError as e:
        return None, [], [str(e.diagnostic)]
    findings, problems = _gate(doc)
    return doc, findings, problems


def _gate(doc: SpecDocument) -> Tuple[List[Finding], List[str]]:
    findings = spec_dsl.validate(doc)
    problems = [str(f) for f in spec_dsl.blocking(findings)]
    if not problems:
        try:
            solve_bfs(doc.instance(), max_states=REACHABLE_CAP)
        except SearchBudgetExceeded as e:
            problems.append(f"error: too-large: {e}")
    return findings, problems


def extract_spec(transcript: Transcript, transport: LlmTransport, *, model_id: str = DEFAULT_MODEL_ID,
                 temperature: float = 0.0, out_dir: Optional[Union[str, Path]] = None) -> ExtractionResult:
    analyses = []
    for node_id in ANALYSIS_NODES:
        responses = transcript.responses(node_id.value)
        if not responses:
            raise ExtractionError(f"transcript {transcript.run_id} has no {node_id.value} response")
        analyses.append((node_id.value, responses[-1]))

    prompt = build_extraction_prompt(transcript.problem, analyses)
    messages = [ChatMessage(role="user", content=prompt)]
    exchanges: List[NodeRecord] = []
    problems: List[str] = []
    for attempt in range(1, MAX_ATTEMPTS + 1):
        reply = transport.complete(ChatRequest(node_id=NodeId.EXTRACT.value, messages=messages,
                                               model_id=model_id, temperature=temperature))
        exchanges.append(NodeRecord(node_id=NodeId.EXTRACT.value, prompt=messages[-1].content,
                                    response=reply.content, usage=reply.usage))
        doc, findings, problems = check_spec(strip_fences(reply.content))
        if not problems:
            result = ExtractionResult(doc, attempt, findings, Provenance.LLM_EMITTED, usable=True,
                                      exchanges=exchanges)
            if out_dir is not None:
                result.path = Path(out_dir) / f"{transcript.run_id}.extracted.pspace"
                result.path.parent.mkdir(parents=True, exist_ok=True)
                result.path.write_text(spec_dsl.render(doc), encoding="utf-8")
            logger.info(f"{transcript.run_id}: extracted space {doc.space.name} in {attempt} attempt(s)")
            return result

        logger.warning(f"{transcript.run_id}: extraction attempt {attempt} rejected: {problems[0]}")
        messages = messages + [
            ChatMessage(role="assistant", content=reply.content),
            ChatMessage(role="user", content=build_repair_prompt(problems)),
        ]

    raise ExtractionError(f"no usable specification after {MAX_ATTEMPTS} attempts", problems, MAX_ATTEMPTS)


def import_manual_spec(path: Union[str, Path]) -> ExtractionResult:
    """Load a hand-written file. Parse errors raise; gate failures come back as usable=False."""
    doc = spec_dsl.load(path)
    findings, problems = _gate(doc)
    for problem in problems:
        logger.warning(f"{path}: {problem}")
    return ExtractionResult(doc, 1, findings, Provenance.MANUAL_IMPORT, usable=not problems, problems=problems,
                            path=Path(path))
