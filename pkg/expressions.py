"""
Integer/boolean expression trees shared by operator schemas, goals and
failure predicates.

Expressions are immutable dataclasses. They are never interpreted node by
node during search: `compile_expr` turns a tree into a closure over a state
tuple once, when an operator is grounded or an instance is prepared.
"""
import operator
from dataclasses import dataclass
from typing import Callable, Sequence, Set, Tuple, Union

from errors import ExprTypeError

MAX_DEPTH = 64

INT = "int"
BOOL = "bool"


@dataclass(frozen=True)
class IntConst:
    value: int


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class CapOf:
    name: str


@dataclass(frozen=True)
class Sum:
    """Total over every state variable."""


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Min:
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class Max:
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class Cmp:
    op: str  # one of COMPARISONS
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[IntConst, VarRef, CapOf, Sum, Add, Sub, Min, Max, Cmp, And, Or, Not]

COMPARISONS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


# ========== Static checks ==========

def type_of(expr: Expr) -> str:
    """Return INT or BOOL, raising ExprTypeError on a mistyped tree."""
    if isinstance(expr, (IntConst, VarRef, CapOf, Sum)):
        return INT
    if isinstance(expr, (Add, Sub)):
        _expect(expr.left, INT, "arithmetic operand")
        _expect(expr.right, INT, "arithmetic operand")
        return INT
    if isinstance(expr, (Min, Max)):
        if not expr.args:
            raise ExprTypeError(f"{type(expr).__name__.lower()}() needs arguments")
        for arg in expr.args:
            _expect(arg, INT, f"{type(expr).__name__.lower()}() argument")
        return INT
    if isinstance(expr, Cmp):
        if expr.op not in COMPARISONS:
            raise ExprTypeError(f"unknown comparison '{expr.op}'")
        _expect(expr.left, INT, "comparison operand")
        _expect(expr.right, INT, "comparison operand")
        return BOOL
    if isinstance(expr, (And, Or)):
        _expect(expr.left, BOOL, "logical operand")
        _expect(expr.right, BOOL, "logical operand")
        return BOOL
    if isinstance(expr, Not):
        _expect(expr.operand, BOOL, "operand of not")
        return BOOL
    raise ExprTypeError(f"not an expression: {expr!r}")


def _expect(expr: Expr, wanted: str, where: str) -> None:
    got = type_of(expr)
    if got != wanted:
        raise ExprTypeError(f"{where} must be {wanted}, found {got}")


def children(expr: Expr) -> Tuple[Expr, ...]:
    if isinstance(expr, (Add, Sub, Cmp, And, Or)):
        return expr.left, expr.right
    if isinstance(expr, (Min, Max)):
        return tuple(expr.args)
    if isinstance(expr, Not):
        return (expr.operand,)
    return ()


def depth(expr: Expr) -> int:
    return 1 + max((depth(c) for c in children(expr)), default=0)


def references(expr: Expr) -> Set[str]:
    """Names used through VarRef or CapOf anywhere in the tree."""
    found: Set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, (VarRef, CapOf)):
            found.add(node.name)
        stack.extend(children(node))
    return found


def uses_sum(expr: Expr) -> bool:
    return isinstance(expr, Sum) or any(uses_sum(c) for c in children(expr))


# ========== Compilation ==========

StateFn = Callable[[Tuple[int, ...]], Union[int, bool]]


def compile_expr(expr: Expr, resolve: Callable[[str], int], capacities: Sequence[int]) -> StateFn:
    """
    resolve: maps a referenced name to a state index (raises KeyError when unknown)
    capacities: capacity per state index
    """
    if isinstance(expr, IntConst):
        value = expr.value
        return lambda s: value
    if isinstance(expr, VarRef):
        index = resolve(expr.name)
        return lambda s: s[index]
    if isinstance(expr, CapOf):
        cap = capacities[resolve(expr.name)]
        return lambda s: cap
    if isinstance(expr, Sum):
        return sum
    if isinstance(expr, (Add, Sub, Cmp, And, Or)):
        left = compile_expr(expr.left, resolve, capacities)
        right = compile_expr(expr.right, resolve, capacities)
        if isinstance(expr, Add):
            return lambda s: left(s) + right(s)
        if isinstance(expr, Sub):
            return lambda s: left(s) - right(s)
        if isinstance(expr, And):
            return lambda s: left(s) and right(s)
        if isinstance(expr, Or):
            return lambda s: left(s) or right(s)
        compare = COMPARISONS[expr.op]
        return lambda s: compare(left(s), right(s))
    if isinstance(expr, (Min, Max)):
        parts = [compile_expr(a, resolve, capacities) for a in expr.args]
        pick = min if isinstance(expr, Min) else max
        return lambda s: pick(p(s) for p in parts)
    if isinstance(expr, Not):
        inner = compile_expr(expr.operand, resolve, capacities)
        return lambda s: not inner(s)
    raise ExprTypeError(f"not an expression: {expr!r}")


# ========== Rendering ==========

def _precedence(expr: Expr) -> int:
    if isinstance(expr, Or):
        return 1
    if isinstance(expr, And):
        return 2
    if isinstance(expr, Not):
        return 3
    if isinstance(expr, Cmp):
        return 4
    if isinstance(expr, (Add, Sub)):
        return 5
    return 6


def to_source(expr: Expr) -> str:
    """Canonical text with the fewest parentheses that reparse to the same tree."""
    if isinstance(expr, IntConst):
        return str(expr.value)
    if isinstance(expr, VarRef):
        return expr.name
    if isinstance(expr, CapOf):
        return f"cap({expr.name})"
    if isinstance(expr, Sum):
        return "sum()"
    if isinstance(expr, (Min, Max)):
        name = "min" if isinstance(expr, Min) else "max"
        return f"{name}({', '.join(to_source(a) for a in expr.args)})"
    if isinstance(expr, Not):
        return f"not {_wrap(expr.operand, _precedence(expr.operand) < 3)}"

    prec = _precedence(expr)
    if isinstance(expr, Cmp):
        symbol = expr.op
        # comparisons do not chain
        left = _wrap(expr.left, _precedence(expr.left) <= prec)
    else:
        symbol = {Add: "+", Sub: "-", And: "and", Or: "or"}[type(expr)]
        left = _wrap(expr.left, _precedence(expr.left) < prec)
    right = _wrap(expr.right, _precedence(expr.right) <= prec)
    return f"{left} {symbol} {right}"


def _wrap(expr: Expr, parens: bool) -> str:
    text = to_source(expr)
    return f"({text})" if parens else text
