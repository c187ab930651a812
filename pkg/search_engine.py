"""
Weak-method search over a ProblemInstance.

solve_iddfs runs depth-limited DFS with limits 1, 2, 3, ... so the first
solution found has minimum length. Path constraints, failure detection and an
evaluation cache (failures keyed by (state, remaining depth)) prune the tree.
solve_bfs is the exhaustive breadth-first oracle.
"""
import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple, Union

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from errors import CacheFileError, SearchBudgetExceeded, StructuralError
from expressions import to_source
from space_model import (GroundOperator, Outcome, PathConstraint, ProblemInstance, StateVector,
                         classify)


class Learning(str, Enum):
    NONE = "none"
    DURING = "during"
    PERSIST = "persist"


class SearchStatus(str, Enum):
    SOLVED = "solved"
    NO_SOLUTION = "no-solution"  # depth budget exhausted
    UNSOLVABLE = "unsolvable"  # a round finished without any depth cutoff
    BUDGET_EXCEEDED = "budget-exceeded"


class SearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    failure_detection: bool = True
    learning: Learning = Learning.NONE
    max_depth: int = Field(64, ge=1, le=512)
    seed: Optional[int] = Field(None, ge=-(2 ** 63), lt=2 ** 64, description="None means lexicographic order")
    path_constraints_enabled: bool = True
    max_expansions: Optional[int] = Field(None, ge=1)

    @property
    def ordering(self) -> str:
        return "lexicographic" if self.seed is None else f"seeded({self.seed})"


class SearchStats(BaseModel):
    expansions: int = 0
    generated: int = 0
    cache_hits: int = 0
    iterations: int = 0
    new_states: int = 0  # states not seen before by this solve (or by the persisted cache)
    solution_length: Optional[int] = None
    status: SearchStatus = SearchStatus.NO_SOLUTION


@dataclass(frozen=True)
class SolutionStep:
    operator: str  # GroundOperator.display
    state: StateVector


@dataclass(frozen=True)
class Solution:
    initial: StateVector
    steps: Tuple[SolutionStep, ...]

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> List[StateVector]:
        return [self.initial] + [step.state for step in self.steps]


@dataclass
class EvaluationCache:
    """
    Failure entries (state, remaining_depth) -> depth_bounded: no goal is
    reachable from state within remaining_depth steps under the constraints
    the cache was bound to. depth_bounded is False when the subtree below was
    exhausted without hitting the depth limit.
    """
    fingerprint: Optional[str] = None
    failures: Dict[Tuple[StateVector, int], bool] = field(default_factory=dict)
    seen: Set[StateVector] = field(default_factory=set)

    def bind(self, fingerprint: str) -> None:
        if self.fingerprint == fingerprint:
            return
        if self.fingerprint is not None:
            logger.warning("problem, goal or constraints changed; dropping learned evaluations")
        self.failures.clear()
        self.seen.clear()
        self.fingerprint = fingerprint

    def lookup(self, state: StateVector, remaining: int) -> Optional[bool]:
        """None when nothing is known, else whether the recorded failure was depth-bounded."""
        return self.failures.get((state, remaining))

    def save(self, path: Union[str, Path]) -> None:
        payload = {
            "fingerprint": self.fingerprint,
            "failures": sorted([list(s), d, bounded] for (s, d), bounded in self.failures.items()),
            "seen": sorted(list(s) for s in self.seen),
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvaluationCache":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(
                fingerprint=payload["fingerprint"],
                failures={(tuple(s), int(d)): bool(bounded) for s, d, bounded in payload["failures"]},
                seen={tuple(s) for s in payload["seen"]},
            )
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise CacheFileError(f"{path} is not an evaluation cache: {e}") from e


def fingerprint(instance: ProblemInstance, config: SearchConfig) -> str:
    space = instance.space
    parts = [f"var {v.name} {v.capacity}" for v in space.variables]
    for schema in space.schemas:
        effects = ";".join(f"{e.slot}:={to_source(e.expr)}" for e in schema.effects)
        parts.append(f"op {schema.name}({','.join(schema.params)}) {to_source(schema.precondition)} {effects}")
    if config.path_constraints_enabled:
        parts += sorted(f"constraint {c.value}" for c in space.path_constraints)
    if config.failure_detection and space.failure_predicate is not None:
        parts.append(f"failure {to_source(space.failure_predicate)}")
    parts.append(f"goal {to_source(instance.goal)}")
    return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()


def evaluate(instance: ProblemInstance, s: StateVector, remaining_depth: int, config: SearchConfig,
             cache: Optional[EvaluationCache] = None, is_root: bool = False) -> Outcome:
    outcome, _ = _evaluate(instance, s, remaining_depth, config, cache, is_root)
    return outcome


def _evaluate(instance, s, remaining_depth, config, cache, is_root=False) -> Tuple[Outcome, Optional[bool]]:
    """Outcome plus, for a cache hit, whether the cached failure was depth-bounded."""
    outcome = classify(instance, s, config.failure_detection and not is_root)
    if outcome is not Outcome.ONGOING:
        return outcome, None
    if remaining_depth <= 0:
        return Outcome.DEPTH_CUTOFF, None
    if config.learning is not Learning.NONE and cache is not None:
        bounded = cache.lookup(s, remaining_depth)
        if bounded is not None:
            return Outcome.FAILURE, bounded
    return Outcome.ONGOING, None


class _BudgetHit(Exception):
    pass


class _DepthFirst:
    def __init__(self, instance: ProblemInstance, config: SearchConfig, cache: Optional[EvaluationCache]):
        self.instance = instance
        self.config = config
        self.operators: List[GroundOperator] = list(instance.space.operators)
        self.rng = random.Random(config.seed) if config.seed is not None else None

        constraints = instance.space.path_constraints if config.path_constraints_enabled else frozenset()
        self.no_loop = PathConstraint.NO_LOOP in constraints
        self.no_undo = PathConstraint.NO_UNDO in constraints

        if config.learning is Learning.NONE:
            self.cache = None
            self.seen: Set[StateVector] = set()
        else:
            if config.learning is Learning.DURING or cache is None:
                cache = EvaluationCache()
            cache.bind(fingerprint(instance, config))
            self.cache = cache
            self.seen = cache.seen

        self.stats = SearchStats()
        self.path: List[StateVector] = []
        self.on_path: Set[StateVector] = set()
        self.cutoff = False

    def note_seen(self, state: StateVector) -> None:
        if state not in self.seen:
            self.seen.add(state)
            self.stats.new_states += 1

    def ordered(self) -> List[GroundOperator]:
        if self.rng is None:
            return self.operators
        ops = list(self.operators)
        self.rng.shuffle(ops)
        return ops

    def run(self) -> Tuple[Optional[Solution], SearchStats]:
        root = self.instance.initial
        stats = self.stats
        self.note_seen(root)
        if classify(self.instance, root, False) is Outcome.GOAL:
            stats.solution_length = 0
            stats.status = SearchStatus.SOLVED
            return Solution(root, ()), stats

        try:
            for limit in range(1, self.config.max_depth + 1):
                stats.iterations += 1
                bounded = self.cache.lookup(root, limit) if self.cache is not None else None
                if bounded is not None:
                    stats.cache_hits += 1
                    if not bounded:
                        stats.status = SearchStatus.UNSOLVABLE
                        return None, stats
                    continue
                self.cutoff = False
                self.path = [root]
                self.on_path = {root}
                steps = self.descend(root, limit)
                logger.debug(f"depth {limit}: {stats.expansions} expansions so far")
                if steps is not None:
                    stats.solution_length = len(steps)
                    stats.status = SearchStatus.SOLVED
                    return Solution(root, tuple(steps)), stats
                if not self.cutoff:
                    stats.status = SearchStatus.UNSOLVABLE
                    return None, stats
        except _BudgetHit:
            stats.status = SearchStatus.BUDGET_EXCEEDED
            return None, stats
        stats.status = SearchStatus.NO_SOLUTION
        return None, stats

    def descend(self, state: StateVector, remaining: int) -> Optional[List[SolutionStep]]:
        # self.cutoff tracks this subtree only; merged back into the caller's flag on failure
        outer, self.cutoff = self.cutoff, False
        stats = self.stats
        stats.expansions += 1
        if self.config.max_expansions is not None and stats.expansions > self.config.max_expansions:
            raise _BudgetHit()
        for op in self.ordered():
            if not op.applicable(state):
                continue
            child = op.apply(state)
            stats.generated += 1
            self.note_seen(child)
            if self.no_loop and child in self.on_path:
                continue
            if self.no_undo and len(self.path) >= 2 and child == self.path[-2]:
                continue
            outcome, cached_bound = _evaluate(self.instance, child, remaining - 1, self.config, self.cache)
            if outcome is Outcome.GOAL:
                return [SolutionStep(op.display, child)]
            if outcome is Outcome.DEPTH_CUTOFF:
                self.cutoff = True
                continue
            if cached_bound is not None:
                stats.cache_hits += 1
                self.cutoff = self.cutoff or cached_bound
                continue
            if outcome is Outcome.FAILURE:
                continue

            self.path.append(child)
            if self.no_loop:
                self.on_path.add(child)
            found = self.descend(child, remaining - 1)
            self.path.pop()
            if self.no_loop:
                self.on_path.discard(child)
            if found is not None:
                return [SolutionStep(op.display, child)] + found

        if self.cache is not None:
            self.cache.failures[(state, remaining)] = self.cutoff
        self.cutoff = outer or self.cutoff
        return None


def solve_iddfs(instance: ProblemInstance, config: Optional[SearchConfig] = None,
                cache: Optional[EvaluationCache] = None) -> Tuple[Optional[Solution], SearchStats]:
    config = config or SearchConfig()
    logger.debug(f"iddfs {instance.title}: fd={config.failure_detection} learning={config.learning.value} "
                 f"ordering={config.ordering} max_depth={config.max_depth}")
    solution, stats = _DepthFirst(instance, config, cache).run()
    logger.info(f"{instance.title}: {stats.status.value}, length={stats.solution_length}, "
                f"expansions={stats.expansions}, generated={stats.generated}, cache_hits={stats.cache_hits}")
    return solution, stats


def solve_bfs(instance: ProblemInstance, max_states: Optional[int] = None) -> Tuple[Optional[Solution], int]:
    """
    Shortest solution by exhaustive breadth-first enumeration, and the number
    of distinct states reachable from the initial state. No path constraints
    or failure pruning apply.
    """
    root = instance.initial
    parents: Dict[StateVector, Optional[Tuple[StateVector, str]]] = {root: None}
    goal_state = root if instance.goal_test(root) else None
    frontier = deque([root])
    operators = instance.space.operators
    while frontier:
        state = frontier.popleft()
        for op in operators:
            if not op.applicable(state):
                continue
            child = op.apply(state)
            if child in parents:
                continue
            parents[child] = (state, op.display)
            if max_states is not None and len(parents) > max_states:
                raise SearchBudgetExceeded(f"more than {max_states} states reachable in {instance.title}")
            if goal_state is None and instance.goal_test(child):
                goal_state = child
            frontier.append(child)

    if goal_state is None:
        return None, len(parents)
    steps: List[SolutionStep] = []
    state = goal_state
    while parents[state] is not None:
        parent, display = parents[state]
        steps.append(SolutionStep(display, state))
        state = parent
    steps.reverse()
    return Solution(root, tuple(steps)), len(parents)


# ========== Traces ==========

def format_trace(instance: ProblemInstance, solution: Solution) -> str:
    """One block per step: `<n>: <OP>(<args>)` followed by `<var>: <value>` lines."""
    names = [v.name for v in instance.space.variables]
    lines = ["0: INIT"]
    lines += [f"{name}: {value}" for name, value in zip(names, solution.initial)]
    for n, step in enumerate(solution.steps, start=1):
        op_name, _, args = step.operator.partition("(")
        lines.append(f"{n}: {op_name.upper()}({args}")
        lines += [f"{name}: {value}" for name, value in zip(names, step.state)]
    lines.append("Solution Found!")
    return "\n".join(lines) + "\n"


def parse_trace(text: str, instance: ProblemInstance) -> Tuple[StateVector, List[Tuple[GroundOperator, StateVector]]]:
    """Read a trace back as the initial state plus (operator, state) pairs."""
    space = instance.space
    by_display = {op.display.lower(): op for op in space.operators}
    blocks: List[Tuple[str, Dict[str, int]]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line == "Solution Found!":
            continue
        head, _, value = line.partition(": ")
        if head.isdigit():
            blocks.append((value, {}))
        elif blocks and head in space.index_of:
            blocks[-1][1][head] = int(value)
        else:
            raise StructuralError(f"unreadable trace line: {raw!r}")

    def to_state(values: Dict[str, int]) -> StateVector:
        return space.check_state([values[v.name] for v in space.variables])

    if not blocks or blocks[0][0] != "INIT":
        raise StructuralError("trace must start with an INIT block")
    initial = to_state(blocks[0][1])
    steps = []
    for label, values in blocks[1:]:
        op = by_display.get(label.lower())
        if op is None:
            raise StructuralError(f"trace names unknown operator {label}")
        steps.append((op, to_state(values)))
    return initial, steps
