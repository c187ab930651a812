"""
Executable problem spaces: bounded integer state variables, operator schemas
grounded over those variables, path constraints and goal/failure
classification.
"""
import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

from errors import ContractViolation, ExprTypeError, StateBoundsError, StructuralError
from expressions import BOOL, INT, Expr, compile_expr, references, type_of

# values in VarSpec order
StateVector = Tuple[int, ...]


class PathConstraint(str, Enum):
    NO_UNDO = "no_undo"
    NO_LOOP = "no_loop"


class Outcome(str, Enum):
    GOAL = "goal"
    FAILURE = "failure"
    ONGOING = "ongoing"
    DEPTH_CUTOFF = "depth_cutoff"


@dataclass(frozen=True)
class VarSpec:
    name: str
    capacity: int
    unit_label: Optional[str] = None


@dataclass(frozen=True)
class Assignment:
    slot: str
    expr: Expr


@dataclass(frozen=True)
class OperatorSchema:
    name: str
    params: Tuple[str, ...]
    precondition: Expr
    effects: Tuple[Assignment, ...]

    def check(self) -> None:
        """Structural checks that do not depend on the enclosing space."""
        if len(set(self.params)) != len(self.params):
            raise StructuralError(f"operator {self.name} declares a slot twice")
        declared = set(self.params)
        used = references(self.precondition)
        for effect in self.effects:
            used |= references(effect.expr)
            used.add(effect.slot)
        missing = sorted(used - declared)
        if missing:
            raise StructuralError(f"operator {self.name} references undeclared slot {missing[0]}")
        assigned = [e.slot for e in self.effects]
        if len(set(assigned)) != len(assigned):
            raise StructuralError(f"operator {self.name} assigns a slot more than once")
        try:
            if type_of(self.precondition) != BOOL:
                raise StructuralError(f"precondition of {self.name} is not boolean")
            for effect in self.effects:
                if type_of(effect.expr) != INT:
                    raise StructuralError(f"effect on {effect.slot} in {self.name} is not an integer")
        except ExprTypeError as e:
            raise StructuralError(f"operator {self.name}: {e}") from e


@dataclass(frozen=True)
class ProblemSpace:
    name: str
    variables: Tuple[VarSpec, ...]
    schemas: Tuple[OperatorSchema, ...]
    path_constraints: FrozenSet[PathConstraint] = frozenset()
    failure_predicate: Optional[Expr] = None

    def __post_init__(self):
        if not self.variables:
            raise StructuralError(f"space {self.name} declares no variables")
        if not self.schemas:
            raise StructuralError(f"space {self.name} declares no operators")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise StructuralError(f"space {self.name} declares a variable twice")
        if len({s.name for s in self.schemas}) != len(self.schemas):
            raise StructuralError(f"space {self.name} declares an operator twice")
        for v in self.variables:
            if v.capacity < 0:
                raise StructuralError(f"variable {v.name} has negative capacity")

    @cached_property
    def index_of(self) -> Dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    @cached_property
    def capacities(self) -> Tuple[int, ...]:
        return tuple(v.capacity for v in self.variables)

    @cached_property
    def operators(self) -> Tuple["GroundOperator", ...]:
        return tuple(ground_operators(self))

    def check_state(self, values: Sequence[int]) -> StateVector:
        state = tuple(values)
        if len(state) != len(self.variables):
            raise StateBoundsError(f"expected {len(self.variables)} values, got {len(state)}")
        for v, value in zip(self.variables, state):
            if not isinstance(value, int) or isinstance(value, bool):
                raise StateBoundsError(f"{v.name} must be an integer, got {value!r}")
            if not 0 <= value <= v.capacity:
                raise StateBoundsError(f"{v.name}={value} outside 0..{v.capacity}")
        return state

    def compile_predicate(self, expr: Expr) -> Callable[[StateVector], bool]:
        try:
            return compile_expr(expr, self.index_of.__getitem__, self.capacities)
        except KeyError as e:
            raise StructuralError(f"unknown variable {e.args[0]} in space {self.name}") from e

    @cached_property
    def failure_test(self) -> Optional[Callable[[StateVector], bool]]:
        if self.failure_predicate is None:
            return None
        return self.compile_predicate(self.failure_predicate)


@dataclass(frozen=True)
class GroundOperator:
    schema: OperatorSchema
    binding: Tuple[Tuple[str, int], ...]  # slot -> variable index, in param order
    display: str
    _test: Callable[[StateVector], bool] = field(compare=False, repr=False)
    _writes: Tuple[Tuple[int, Callable[[StateVector], int]], ...] = field(compare=False, repr=False)
    _capacities: Tuple[int, ...] = field(compare=False, repr=False)

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def arguments(self) -> Tuple[int, ...]:
        return tuple(index for _, index in self.binding)

    @property
    def written(self) -> Tuple[int, ...]:
        return tuple(index for index, _ in self._writes)

    def applicable(self, s: StateVector) -> bool:
        return bool(self._test(s))

    def apply(self, s: StateVector) -> StateVector:
        if not self._test(s):
            raise ContractViolation(f"{self.display} is not applicable in {s}")
        # effects read the pre-state
        updates = [(index, fn(s)) for index, fn in self._writes]
        result = list(s)
        for index, value in updates:
            if not 0 <= value <= self._capacities[index]:
                raise ContractViolation(
                    f"{self.display} sets variable #{index} to {value}, outside 0..{self._capacities[index]}")
            result[index] = value
        return tuple(result)


def ground_operators(space: ProblemSpace) -> List[GroundOperator]:
    """Instantiate every schema over ordered tuples of distinct variables, sorted by display name."""
    names = [v.name for v in space.variables]
    grounded: List[GroundOperator] = []
    for schema in space.schemas:
        schema.check()
        for combo in itertools.permutations(range(len(names)), len(schema.params)):
            binding = tuple(zip(schema.params, combo))
            slot_index = dict(binding)
            resolve = slot_index.__getitem__
            test = compile_expr(schema.precondition, resolve, space.capacities)
            writes = tuple(
                (slot_index[e.slot], compile_expr(e.expr, resolve, space.capacities))
                for e in schema.effects
            )
            display = f"{schema.name}({','.join(names[i] for i in combo)})"
            grounded.append(GroundOperator(schema, binding, display, test, writes, space.capacities))
    grounded.sort(key=lambda op: op.display)
    return grounded


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    space: ProblemSpace
    initial: StateVector
    goal: Expr
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "initial", self.space.check_state(self.initial))
        try:
            if type_of(self.goal) != BOOL:
                raise StructuralError(f"goal of {self.name} is not boolean")
        except ExprTypeError as e:
            raise StructuralError(f"goal of {self.name}: {e}") from e

    @property
    def title(self) -> str:
        return self.label or self.name

    @cached_property
    def goal_test(self) -> Callable[[StateVector], bool]:
        return self.space.compile_predicate(self.goal)


# ========== Operations ==========

def applicable(op: GroundOperator, s: StateVector) -> bool:
    return op.applicable(s)


def apply(op: GroundOperator, s: StateVector) -> StateVector:
    return op.apply(s)


def classify(instance: ProblemInstance, s: StateVector, failure_detection: bool) -> Outcome:
    if instance.goal_test(s):
        return Outcome.GOAL
    failure = instance.space.failure_test
    if failure_detection and failure is not None and failure(s):
        return Outcome.FAILURE
    return Outcome.ONGOING


def find_operator(space: ProblemSpace, display: str) -> GroundOperator:
    for op in space.operators:
        if op.display == display:
            return op
    raise StructuralError(f"space {space.name} has no operator {display}")


def all_states(space: ProblemSpace):
    """Every in-bounds state, in odometer order."""
    return itertools.product(*(range(c + 1) for c in space.capacities))
