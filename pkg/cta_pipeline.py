"""
Cognitive-task-analysis pipeline: six analyst nodes run in order, each seeing
the prompts and responses of the nodes before it, plus the two one-shot
baselines. Every run is persisted as a transcript after each node.
"""
import re
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from loguru import logger

from db import NodeRecord, Transcript, TranscriptStore
from errors import FixtureMissingError, PipelineError, PromptInputError, TransportError
from llm_transport import ChatMessage, ChatRequest, LlmTransport
from prompts import (CHARACTERIZE_INSTRUCTIONS, ONESHOT_FORMULATION_INSTRUCTIONS, OPERATORS_INSTRUCTIONS,
                     REFINE_CHARACTERIZATION_INSTRUCTIONS, REFINE_OPERATORS_INSTRUCTIONS,
                     SEARCH_CONTROL_INSTRUCTIONS, TEST_CASES_INSTRUCTIONS, PromptTemplate, build_solver_prompt)

DEFAULT_MODEL_ID = "gpt-4-0125-preview"


class NodeId(str, Enum):
    CHARACTERIZE = "Characterize"
    REFINE_CHARACTERIZATION = "RefineCharacterization"
    OPERATORS = "Operators"
    REFINE_OPERATORS = "RefineOperators"
    SEARCH_CONTROL = "SearchControl"
    TEST_CASES = "TestCases"
    # reserved: no prompts exist for this branch of the analysis
    PROBLEM_SOLVING_CHARACTERISTICS = "ProblemSolvingCharacteristics"
    ONESHOT_FORMULATE = "OneShotFormulate"
    ONESHOT_SOLVE = "OneShotSolve"
    EXTRACT = "Extract"


@dataclass(frozen=True)
class NodeSpec:
    id: NodeId
    template: PromptTemplate


PIPELINE: Tuple[NodeSpec, ...] = (
    NodeSpec(NodeId.CHARACTERIZE, PromptTemplate(CHARACTERIZE_INSTRUCTIONS)),
    NodeSpec(NodeId.REFINE_CHARACTERIZATION, PromptTemplate(REFINE_CHARACTERIZATION_INSTRUCTIONS)),
    NodeSpec(NodeId.OPERATORS, PromptTemplate(OPERATORS_INSTRUCTIONS)),
    NodeSpec(NodeId.REFINE_OPERATORS, PromptTemplate(REFINE_OPERATORS_INSTRUCTIONS)),
    NodeSpec(NodeId.SEARCH_CONTROL, PromptTemplate(SEARCH_CONTROL_INSTRUCTIONS)),
    NodeSpec(NodeId.TEST_CASES, PromptTemplate(TEST_CASES_INSTRUCTIONS)),
)

ONESHOT_FORMULATE_NODE = NodeSpec(NodeId.ONESHOT_FORMULATE, PromptTemplate(ONESHOT_FORMULATION_INSTRUCTIONS))


def pipeline_node(node_id) -> NodeSpec:
    node_id = NodeId(node_id)
    if node_id is NodeId.PROBLEM_SOLVING_CHARACTERISTICS:
        raise PromptInputError(f"{node_id.value} is reserved and has no prompt")
    for node in PIPELINE:
        if node.id is node_id:
            return node
    raise PromptInputError(f"{node_id.value} is not a pipeline node")


def build_messages(node: NodeSpec, problem_description: str,
                   prior_responses: Sequence[str] = ()) -> List[ChatMessage]:
    """
    Earlier nodes' prompts as user turns, their responses as assistant turns,
    ending with this node's prompt.
    """
    if node.id is NodeId.PROBLEM_SOLVING_CHARACTERISTICS:
        raise PromptInputError(f"{node.id.value} is reserved and has no prompt")
    position = [n.id for n in PIPELINE].index(node.id) if node in PIPELINE else 0
    if len(prior_responses) > position:
        raise PromptInputError(f"{node.id.value} has {position} predecessors, got {len(prior_responses)} responses")
    messages: List[ChatMessage] = []
    for earlier, response in zip(PIPELINE, prior_responses):
        messages.append(ChatMessage(role="user", content=earlier.template.render(problem_description)))
        messages.append(ChatMessage(role="assistant", content=response))
    messages.append(ChatMessage(role="user", content=node.template.render(problem_description)))
    return messages


def render_prompt(node: NodeSpec, problem_description: str, prior_responses: Sequence[str] = ()) -> str:
    return "\n\n".join(m.content for m in build_messages(node, problem_description, prior_responses))


def new_run_id(label: str) -> str:
    stem = re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_") or "run"
    return f"{stem}-{uuid.uuid4().hex[:8]}"


def _now() -> datetime:
    return datetime.now(timezone.utc)


class _Run:
    def __init__(self, kind: str, problem: str, transport: LlmTransport, label: str, model_id: str,
                 temperature: float, store: Optional[TranscriptStore], run_id: Optional[str]):
        if not problem or not problem.strip():
            raise PromptInputError("problem description is empty")
        self.transport = transport
        self.store = store
        self.transcript = Transcript(run_id=run_id or new_run_id(label), kind=kind, problem_label=label,
                                     problem=problem, model_id=model_id, temperature=temperature)

    def persist(self) -> None:
        if self.store is not None:
            self.store.save(self.transcript)

    def ask(self, node_id: NodeId, messages: List[ChatMessage], prompt: str) -> str:
        started = _now()
        request = ChatRequest(node_id=node_id.value, messages=messages,
                              model_id=self.transcript.model_id, temperature=self.transcript.temperature)
        try:
            reply = self.transport.complete(request)
        except TransportError as e:
            self.transcript.error = str(e)
            self.persist()
            logger.error(f"{self.transcript.run_id}: node {node_id.value} failed: {e}")
            if isinstance(e, FixtureMissingError):
                e.transcript = self.transcript
                raise
            raise PipelineError(f"node {node_id.value} failed: {e}", self.transcript) from e
        self.transcript.nodes.append(NodeRecord(node_id=node_id.value, prompt=prompt, response=reply.content,
                                                started_at=started, finished_at=_now(), usage=reply.usage))
        self.persist()
        logger.info(f"{self.transcript.run_id}: {node_id.value} done ({len(reply.content)} chars)")
        return reply.content

    def finish(self) -> Transcript:
        self.transcript.status = "complete"
        self.persist()
        return self.transcript


def run_pipeline(problem_description: str, transport: LlmTransport, *, label: str = "problem",
                 model_id: str = DEFAULT_MODEL_ID, temperature: float = 0.0,
                 store: Optional[TranscriptStore] = None, run_id: Optional[str] = None) -> Transcript:
    run = _Run("pipeline", problem_description, transport, label, model_id, temperature, store, run_id)
    run.persist()
    responses: List[str] = []
    for node in PIPELINE:
        messages = build_messages(node, problem_description, responses)
        prompt = "\n\n".join(m.content for m in messages)
        responses.append(run.ask(node.id, messages, prompt))
    return run.finish()


def run_oneshot_formulate(problem_description: str, transport: LlmTransport, *, label: str = "problem",
                          model_id: str = DEFAULT_MODEL_ID, temperature: float = 0.0,
                          store: Optional[TranscriptStore] = None, run_id: Optional[str] = None) -> Transcript:
    run = _Run("oneshot_formulate", problem_description, transport, label, model_id, temperature, store, run_id)
    prompt = ONESHOT_FORMULATE_NODE.template.render(problem_description)
    run.ask(NodeId.ONESHOT_FORMULATE, [ChatMessage(role="user", content=prompt)], prompt)
    return run.finish()


def run_oneshot_solve(problem_description: str, transport: LlmTransport, *, label: str = "problem",
                      model_id: str = DEFAULT_MODEL_ID, temperature: float = 0.0,
                      store: Optional[TranscriptStore] = None, run_id: Optional[str] = None) -> Transcript:
    run = _Run("oneshot_solve", problem_description, transport, label, model_id, temperature, store, run_id)
    system, user = build_solver_prompt(problem_description)
    messages = [ChatMessage(role="system", content=system), ChatMessage(role="user", content=user)]
    run.ask(NodeId.ONESHOT_SOLVE, messages, f"{system} {user}")
    return run.finish()


def expected_prompt(transcript: Transcript, index: int) -> Optional[str]:
    """The prompt node `index` of the transcript should have been sent, or None when it is not re-derivable."""
    node_id = transcript.nodes[index].node_id
    problem = transcript.problem
    if node_id == NodeId.ONESHOT_FORMULATE.value:
        return ONESHOT_FORMULATE_NODE.template.render(problem)
    if node_id == NodeId.ONESHOT_SOLVE.value:
        system, user = build_solver_prompt(problem)
        return f"{system} {user}"
    pipeline_ids = [n.id.value for n in PIPELINE]
    if node_id not in pipeline_ids:
        return None
    priors = [n.response for n in transcript.nodes[:index] if n.node_id in pipeline_ids]
    return render_prompt(pipeline_node(node_id), problem, priors)


def verify_transcript(transcript: Transcript) -> List[str]:
    """Re-render every recorded prompt and list the nodes whose text differs."""
    mismatches = []
    for index, node in enumerate(transcript.nodes):
        if not node.prompt:
            continue
        expected = expected_prompt(transcript, index)
        if expected is not None and expected != node.prompt:
            mismatches.append(f"node {index} ({node.node_id}): recorded prompt differs from re-rendered prompt")
    return mismatches
