"""
The `.pspace` specification language.

    # comments run to end of line
    space water_jugs_4_9 {
      var j4 : 0..4 unit "quart";
      op pour(a, b) {
        pre: a > 0 and b < cap(b);
        eff: a := max(0, a - (cap(b) - b)); b := min(cap(b), b + a);
      }
      constraint no_loop;
      failure: j4 = 0 and j9 = 0;
    }

    instance f_4_9 of water_jugs_4_9 {
      label "F(4,9)->6";
      init: j4=0, j9=0;
      goal: j4 = 6 or j9 = 6;
    }

Effects within one `eff:` are simultaneous: every right-hand side reads the
state before the operator fires. Inside an operator only its slots may be
named; goals and failure predicates name variables.
"""
import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from loguru import logger

from errors import (Diagnostic, ExprTypeError, SearchBudgetExceeded, SpecError, SpecFileError,
                    StructuralError)
from expressions import (BOOL, COMPARISONS, INT, MAX_DEPTH, Add, And, CapOf, Cmp, Expr, IntConst, Max,
                         Min, Not, Or, Sub, Sum, VarRef, to_source, type_of, uses_sum)
from space_model import (Assignment, OperatorSchema, PathConstraint, ProblemInstance, ProblemSpace,
                         VarSpec, all_states)

KEYWORDS = {
    "space", "var", "unit", "op", "pre", "eff", "constraint", "failure",
    "instance", "of", "init", "goal", "label",
    "and", "or", "not", "min", "max", "cap", "sum",
}

# states enumerated by the validator before it gives up on a check
ENUMERATION_LIMIT = 200_000

Span = Tuple[int, int]


@dataclass(frozen=True)
class SpecDocument:
    space: ProblemSpace
    instances: Tuple[ProblemInstance, ...] = ()
    spans: Dict[str, Span] = field(default_factory=dict, compare=False, repr=False)

    def instance(self, key: Optional[str] = None) -> ProblemInstance:
        """Pick an instance by name or label; the first one when key is None."""
        if not self.instances:
            raise SpecError(Diagnostic("structure", f"space {self.space.name} has no instances"))
        if key is None:
            return self.instances[0]
        for inst in self.instances:
            if key in (inst.name, inst.label):
                return inst
        raise SpecError(Diagnostic("unknown-identifier", f"no instance named {key}"))


# ========== Lexer ==========

@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | string | punct | eof
    text: str
    line: int
    column: int


_PUNCT = [":=", "..", "!=", "<=", ">=", "≠", "≤", "≥", "{", "}", "(", ")", ";", ":", ",", "=", "<", ">", "+", "-"]
_UNICODE_OPS = {"≠": "!=", "≤": "<=", "≥": ">="}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9]+")


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isascii() and ch.isdigit():
            m = _INT.match(text, i)
            end = m.end()
            if end + 1 < n and text[end] == "." and text[end + 1].isdigit():
                raise SpecError(Diagnostic("type", "fractional values are not supported; use integers", line, col))
            if end - i > 18:
                raise SpecError(Diagnostic("bounds", "integer literal too large", line, col))
            tokens.append(Token("int", m.group(), line, col))
            col += end - i
            i = end
            continue
        m = _IDENT.match(text, i)
        if m:
            tokens.append(Token("ident", m.group(), line, col))
            col += m.end() - i
            i = m.end()
            continue
        if ch == '"':
            end = i + 1
            while end < n and text[end] not in '"\n':
                end += 1
            if end >= n or text[end] != '"':
                raise SpecError(Diagnostic("syntax", "unterminated string", line, col))
            tokens.append(Token("string", text[i + 1:end], line, col))
            col += end + 1 - i
            i = end + 1
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("punct", _UNICODE_OPS.get(p, p), line, col))
                i, col = i + len(p), col + len(p)
                break
        else:
            raise SpecError(Diagnostic("syntax", f"unexpected character {ch!r}", line, col))
    tokens.append(Token("eof", "", line, col))
    return tokens


# ========== Parser ==========

class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.scope: FrozenSet[str] = frozenset()
        self.nesting = 0
        self.spans: Dict[str, Span] = {}

    # --- token helpers ---

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, kind: str, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise SpecError(Diagnostic(kind, message, tok.line, tok.column))

    def at(self, text: str) -> bool:
        return self.tok.kind in ("punct", "ident") and self.tok.text == text

    def take(self) -> Token:
        tok = self.tok
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail("syntax", f"expected '{text}', found {self.describe(self.tok)}")
        return self.take()

    def expect_ident(self, what: str) -> Token:
        tok = self.tok
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.fail("syntax", f"expected {what}, found {self.describe(tok)}")
        return self.take()

    def expect_int(self) -> Token:
        if self.tok.kind != "int":
            self.fail("syntax", f"expected an integer, found {self.describe(self.tok)}")
        return self.take()

    def expect_string(self) -> Token:
        if self.tok.kind != "string":
            self.fail("syntax", f"expected a quoted string, found {self.describe(self.tok)}")
        return self.take()

    @staticmethod
    def describe(tok: Token) -> str:
        if tok.kind == "eof":
            return "end of input"
        if tok.kind == "string":
            return f'"{tok.text}"'
        return f"'{tok.text}'"

    # --- document ---

    def document(self) -> SpecDocument:
        space = self.space()
        instances: List[ProblemInstance] = []
        while self.tok.kind != "eof":
            instances.append(self.instance(space))
        names = [i.name for i in instances]
        if len(set(names)) != len(names):
            self.fail("structure", "instance names must be unique", self.tokens[-1])
        return SpecDocument(space, tuple(instances), self.spans)

    def space(self) -> ProblemSpace:
        start = self.expect("space")
        name = self.expect_ident("space name").text
        self.spans["space"] = (start.line, start.column)
        self.expect("{")
        variables: List[VarSpec] = []
        schemas: List[OperatorSchema] = []
        constraints = set()
        failure: Optional[Expr] = None
        # variables must precede anything that names them
        while not self.at("}"):
            tok = self.tok
            if self.at("var"):
                var = self.var_decl()
                if any(v.name == var.name for v in variables):
                    self.fail("structure", f"variable {var.name} declared twice", tok)
                variables.append(var)
                self.spans[f"var:{var.name}"] = (tok.line, tok.column)
            elif self.at("op"):
                schema = self.op_decl()
                if any(s.name == schema.name for s in schemas):
                    self.fail("structure", f"operator {schema.name} declared twice", tok)
                schemas.append(schema)
                self.spans[f"op:{schema.name}"] = (tok.line, tok.column)
            elif self.at("constraint"):
                self.take()
                ident = self.expect_ident("constraint name")
                try:
                    constraint = PathConstraint(ident.text)
                except ValueError:
                    self.fail("unknown-identifier",
                              f"unknown path constraint {ident.text} (expected no_undo or no_loop)", ident)
                if constraint in constraints:
                    self.fail("structure", f"constraint {ident.text} repeated", ident)
                constraints.add(constraint)
                self.expect(";")
            elif self.at("failure"):
                if failure is not None:
                    self.fail("structure", "failure predicate declared twice")
                self.take()
                self.expect(":")
                self.spans["failure"] = (tok.line, tok.column)
                failure = self.typed_expr({v.name for v in variables}, BOOL, "failure predicate")
                self.expect(";")
            elif self.tok.kind == "eof":
                self.fail("syntax", f"space {name} is missing its closing '}}'")
            else:
                self.fail("syntax", f"expected var, op, constraint or failure, found {self.describe(tok)}")
        self.expect("}")
        try:
            return ProblemSpace(name, tuple(variables), tuple(schemas), frozenset(constraints), failure)
        except StructuralError as e:
            self.fail("structure", str(e), start)

    def var_decl(self) -> VarSpec:
        self.expect("var")
        name = self.expect_ident("variable name").text
        self.expect(":")
        low = self.expect_int()
        if int(low.text) != 0:
            self.fail("bounds", "variables range from 0; write 0..<capacity>", low)
        self.expect("..")
        capacity = int(self.expect_int().text)
        unit = None
        if self.at("unit"):
            self.take()
            unit = self.expect_string().text
        self.expect(";")
        return VarSpec(name, capacity, unit)

    def op_decl(self) -> OperatorSchema:
        self.expect("op")
        name = self.expect_ident("operator name").text
        self.expect("(")
        params: List[str] = []
        if not self.at(")"):
            while True:
                slot = self.expect_ident("slot name")
                if slot.text in params:
                    self.fail("structure", f"slot {slot.text} declared twice", slot)
                params.append(slot.text)
                if not self.at(","):
                    break
                self.take()
        self.expect(")")
        self.expect("{")
        self.expect("pre")
        self.expect(":")
        slots = set(params)
        pre = self.typed_expr(slots, BOOL, f"precondition of {name}")
        self.expect(";")
        self.expect("eff")
        self.expect(":")
        effects: List[Assignment] = []
        while True:
            slot = self.expect_ident("slot name")
            if slot.text not in slots:
                self.fail("unknown-identifier", f"{slot.text} is not a slot of {name}", slot)
            if any(e.slot == slot.text for e in effects):
                self.fail("structure", f"{name} assigns {slot.text} twice", slot)
            self.expect(":=")
            effects.append(Assignment(slot.text, self.typed_expr(slots, INT, f"effect on {slot.text}")))
            self.expect(";")
            if self.at("}"):
                break
        self.expect("}")
        if self.at(";"):
            self.take()
        return OperatorSchema(name, tuple(params), pre, tuple(effects))

    def instance(self, space: ProblemSpace) -> ProblemInstance:
        start = self.expect("instance")
        name = self.expect_ident("instance name").text
        self.spans[f"instance:{name}"] = (start.line, start.column)
        self.expect("of")
        ref = self.expect_ident("space name")
        if ref.text != space.name:
            self.fail("unknown-identifier", f"unknown space {ref.text}", ref)
        self.expect("{")
        label = ""
        init: Optional[Dict[str, int]] = None
        goal: Optional[Expr] = None
        while not self.at("}"):
            tok = self.tok
            if self.at("label"):
                self.take()
                label = self.expect_string().text
                self.expect(";")
            elif self.at("init"):
                if init is not None:
                    self.fail("structure", "init declared twice")
                self.take()
                self.expect(":")
                init = self.init_values(space)
                self.expect(";")
            elif self.at("goal"):
                if goal is not None:
                    self.fail("structure", "goal declared twice")
                self.take()
                self.expect(":")
                self.spans[f"goal:{name}"] = (tok.line, tok.column)
                goal = self.typed_expr(set(space.index_of), BOOL, f"goal of {name}")
                self.expect(";")
            elif tok.kind == "eof":
                self.fail("syntax", f"instance {name} is missing its closing '}}'")
            else:
                self.fail("syntax", f"expected label, init or goal, found {self.describe(tok)}")
        self.expect("}")
        if init is None:
            self.fail("structure", f"instance {name} has no init", start)
        if goal is None:
            self.fail("structure", f"instance {name} has no goal", start)
        missing = [v.name for v in space.variables if v.name not in init]
        if missing:
            self.fail("structure", f"init of {name} does not set {missing[0]}", start)
        initial = tuple(init[v.name] for v in space.variables)
        return ProblemInstance(name, space, initial, goal, label)

    def init_values(self, space: ProblemSpace) -> Dict[str, int]:
        values: Dict[str, int] = {}
        while True:
            ident = self.expect_ident("variable name")
            if ident.text not in space.index_of:
                self.fail("unknown-identifier", f"unknown variable {ident.text}", ident)
            if ident.text in values:
                self.fail("structure", f"{ident.text} initialised twice", ident)
            self.expect("=")
            number = self.expect_int()
            value = int(number.text)
            capacity = space.capacities[space.index_of[ident.text]]
            if value > capacity:
                self.fail("bounds", f"initial {ident.text}={value} exceeds capacity {capacity}", number)
            values[ident.text] = value
            if not self.at(","):
                return values
            self.take()

    # --- expressions ---

    def typed_expr(self, scope, wanted: str, what: str) -> Expr:
        start = self.tok
        self.scope = frozenset(scope)
        expr, _ = self.disjunction()
        try:
            got = type_of(expr)
        except ExprTypeError as e:
            self.fail("type", f"{what}: {e}", start)
        if got != wanted:
            self.fail("type", f"{what} must be {wanted}, found {got}", start)
        return expr

    def node(self, expr: Expr, depth: int, tok: Token) -> Tuple[Expr, int]:
        if depth > MAX_DEPTH:
            self.fail("structure", f"expression nests deeper than {MAX_DEPTH}", tok)
        return expr, depth

    def enter(self, tok: Token) -> None:
        self.nesting += 1
        if self.nesting > MAX_DEPTH:
            self.fail("structure", f"expression nests deeper than {MAX_DEPTH}", tok)

    def disjunction(self) -> Tuple[Expr, int]:
        left, d = self.conjunction()
        while self.at("or"):
            tok = self.take()
            right, rd = self.conjunction()
            left, d = self.node(Or(left, right), 1 + max(d, rd), tok)
        return left, d

    def conjunction(self) -> Tuple[Expr, int]:
        left, d = self.negation()
        while self.at("and"):
            tok = self.take()
            right, rd = self.negation()
            left, d = self.node(And(left, right), 1 + max(d, rd), tok)
        return left, d

    def negation(self) -> Tuple[Expr, int]:
        if self.at("not"):
            tok = self.take()
            self.enter(tok)
            inner, d = self.negation()
            self.nesting -= 1
            return self.node(Not(inner), d + 1, tok)
        return self.comparison()

    def comparison(self) -> Tuple[Expr, int]:
        left, d = self.arithmetic()
        if self.tok.kind == "punct" and self.tok.text in COMPARISONS:
            tok = self.take()
            right, rd = self.arithmetic()
            if self.tok.kind == "punct" and self.tok.text in COMPARISONS:
                self.fail("syntax", "comparisons do not chain; combine them with and")
            return self.node(Cmp(tok.text, left, right), 1 + max(d, rd), tok)
        return left, d

    def arithmetic(self) -> Tuple[Expr, int]:
        left, d = self.primary()
        while self.at("+") or self.at("-"):
            tok = self.take()
            right, rd = self.primary()
            cls = Add if tok.text == "+" else Sub
            left, d = self.node(cls(left, right), 1 + max(d, rd), tok)
        return left, d

    def primary(self) -> Tuple[Expr, int]:
        tok = self.tok
        if tok.kind == "int":
            self.take()
            return IntConst(int(tok.text)), 1
        if self.at("("):
            self.take()
            self.enter(tok)
            inner = self.disjunction()
            self.nesting -= 1
            self.expect(")")
            return inner
        if self.at("cap"):
            self.take()
            self.expect("(")
            ident = self.expect_ident("variable or slot name")
            self.resolve(ident)
            self.expect(")")
            return CapOf(ident.text), 1
        if self.at("sum"):
            self.take()
            self.expect("(")
            self.expect(")")
            return Sum(), 1
        if self.at("min") or self.at("max"):
            self.take()
            self.expect("(")
            self.enter(tok)
            args, d = [], 0
            while True:
                arg, ad = self.disjunction()
                args.append(arg)
                d = max(d, ad)
                if not self.at(","):
                    break
                self.take()
            self.nesting -= 1
            self.expect(")")
            if len(args) < 2:
                self.fail("syntax", f"{tok.text}() takes at least two arguments", tok)
            cls = Min if tok.text == "min" else Max
            return self.node(cls(tuple(args)), d + 1, tok)
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.take()
            self.resolve(tok)
            return VarRef(tok.text), 1
        self.fail("syntax", f"expected an expression, found {self.describe(tok)}")

    def resolve(self, tok: Token) -> None:
        if tok.text not in self.scope:
            self.fail("unknown-identifier", f"unknown identifier {tok.text}", tok)


def parse(text: str) -> SpecDocument:
    """Parse `.pspace` source; raises SpecError carrying a located Diagnostic."""
    return _Parser(text).document()


def load(path: Union[str, Path]) -> SpecDocument:
    path = Path(path)
    if not path.is_file():
        raise SpecFileError(f"specification file not found: {path}")
    doc = parse(path.read_text(encoding="utf-8"))
    logger.debug(f"loaded {path}: space {doc.space.name}, {len(doc.instances)} instance(s)")
    return doc


# ========== Printer ==========

def render(doc: SpecDocument) -> str:
    space = doc.space
    lines = [f"space {space.name} {{"]
    for v in space.variables:
        unit = f' unit "{v.unit_label}"' if v.unit_label is not None else ""
        lines.append(f"  var {v.name} : 0..{v.capacity}{unit};")
    for schema in space.schemas:
        lines.append(f"  op {schema.name}({', '.join(schema.params)}) {{")
        lines.append(f"    pre: {to_source(schema.precondition)};")
        effects = " ".join(f"{e.slot} := {to_source(e.expr)};" for e in schema.effects)
        lines.append(f"    eff: {effects}")
        lines.append("  }")
    for constraint in sorted(space.path_constraints, key=lambda c: c.value):
        lines.append(f"  constraint {constraint.value};")
    if space.failure_predicate is not None:
        lines.append(f"  failure: {to_source(space.failure_predicate)};")
    lines.append("}")
    for inst in doc.instances:
        lines.append("")
        lines.append(f"instance {inst.name} of {space.name} {{")
        if inst.label:
            lines.append(f'  label "{inst.label}";')
        init = ", ".join(f"{v.name}={value}" for v, value in zip(space.variables, inst.initial))
        lines.append(f"  init: {init};")
        lines.append(f"  goal: {to_source(inst.goal)};")
        lines.append("}")
    return "\n".join(lines) + "\n"


# ========== Validator ==========

@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    blocking: bool = False
    line: int = 0  # 0 when the document was not parsed from text
    column: int = 0

    def __str__(self) -> str:
        level = "error" if self.blocking else "warning"
        where = f"{self.line}:{self.column}: " if self.line else ""
        return f"{where}{level}: {self.code}: {self.message}"


def _state_count(capacities: Sequence[int]) -> int:
    total = 1
    for c in capacities:
        total *= c + 1
    return total


def _satisfiable(space: ProblemSpace, schema_name: str) -> Optional[bool]:
    """Whether some grounding of the schema is applicable in some in-bounds state; None if too large to decide."""
    ops = [op for op in space.operators if op.name == schema_name]
    if not ops:
        # arity exceeds the number of variables
        return False
    full = uses_sum(ops[0].schema.precondition)
    for op in ops:
        indices = range(len(space.variables)) if full else op.arguments
        if _state_count([space.capacities[i] for i in indices]) > ENUMERATION_LIMIT:
            return None
        state = [0] * len(space.variables)
        for values in itertools.product(*(range(space.capacities[i] + 1) for i in indices)):
            for i, value in zip(indices, values):
                state[i] = value
            if op.applicable(tuple(state)):
                return True
    return False


def validate(doc: SpecDocument) -> List[Finding]:
    from search_engine import solve_bfs

    space = doc.space
    findings: List[Finding] = []

    def at(key: str) -> Dict[str, int]:
        line, column = doc.spans.get(key, (0, 0))
        return {"line": line, "column": column}

    if not doc.instances:
        findings.append(Finding("no-goal", f"space {space.name} has no instance, so no goal expression", True,
                                **at("space")))

    try:
        operators = space.operators
    except StructuralError as e:
        return findings + [Finding("structure", str(e), True, **at("space"))]

    for schema in space.schemas:
        verdict = _satisfiable(space, schema.name)
        if verdict is False:
            findings.append(Finding(
                "unsatisfiable-precondition",
                f"operator {schema.name} can never apply: its precondition fails in every state within bounds",
                True, **at(f"op:{schema.name}")))
        elif verdict is None:
            findings.append(Finding("check-skipped", f"precondition of {schema.name} not checked: too many states",
                                    **at(f"op:{schema.name}")))

    written = {index for op in operators for index in op.written}
    for i, v in enumerate(space.variables):
        if i not in written:
            findings.append(Finding("unwritten-variable", f"no operator ever changes {v.name}",
                                    **at(f"var:{v.name}")))

    enumerable = _state_count(space.capacities) <= ENUMERATION_LIMIT
    for inst in doc.instances:
        if space.failure_test is not None and enumerable:
            goal_states = [s for s in all_states(space) if inst.goal_test(s)]
            if goal_states and all(space.failure_test(s) for s in goal_states):
                findings.append(Finding(
                    "failure-subsumes-goal",
                    f"every goal state of {inst.name} also satisfies the failure predicate",
                    **at(f"goal:{inst.name}")))
        try:
            solution, reachable = solve_bfs(inst, max_states=ENUMERATION_LIMIT)
        except SearchBudgetExceeded:
            findings.append(Finding("check-skipped", f"reachability of the goal of {inst.name} not checked",
                                    **at(f"goal:{inst.name}")))
            continue
        if solution is None:
            findings.append(Finding(
                "unreachable-goal",
                f"no state reachable from the initial state of {inst.name} satisfies its goal "
                f"({reachable} states reachable)", **at(f"goal:{inst.name}")))

    for finding in findings:
        logger.debug(f"{space.name}: {finding}")
    return findings


def blocking(findings: Sequence[Finding]) -> List[Finding]:
    return [f for f in findings if f.blocking]
