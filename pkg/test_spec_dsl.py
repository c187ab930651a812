import random

import pytest

import spec_dsl
from conftest import CASE_IDS, SPEC_DIR, load_case
from errors import SpecError, SpecFileError
from expressions import (Add, And, CapOf, Cmp, IntConst, Max, Min, Not, Or, Sub, Sum, VarRef, to_source)

COUNTER = """\
space counter {{
  var x : 0..4;
  var y : 0..4;
  op fill(a) {{
    pre: a < cap(a);
    eff: a := cap(a);
  }}
  op drain(a, b) {{
    pre: a > 0 and b < cap(b);
    eff: a := max(0, a - (cap(b) - b)); b := min(cap(b), b + a);
  }}
  failure: {failure};
}}

instance c of counter {{
  label "counter";
  init: x=0, y=0;
  goal: {goal};
}}
"""


def counter(goal="x = 2", failure="x = 4 and y = 4"):
    return COUNTER.format(goal=goal, failure=failure)


def diagnostic(text):
    with pytest.raises(SpecError) as info:
        spec_dsl.parse(text)
    return info.value.diagnostic


@pytest.mark.parametrize("stem", CASE_IDS)
def test_bundled_specs_are_in_canonical_form(stem):
    text = (SPEC_DIR / f"{stem}.pspace").read_text(encoding="utf-8")
    body = "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))
    assert spec_dsl.render(spec_dsl.parse(text)) == body


@pytest.mark.parametrize("stem", CASE_IDS)
def test_render_parse_round_trip(stem):
    doc = load_case(stem)
    again = spec_dsl.parse(spec_dsl.render(doc))
    assert again == doc
    assert spec_dsl.render(again) == spec_dsl.render(doc)


def _int_expr(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        return rng.choice([IntConst(rng.randint(0, 20)), VarRef("x"), VarRef("y"), CapOf("x"), Sum()])
    kind = rng.choice(["add", "sub", "min", "max"])
    if kind in ("add", "sub"):
        cls = Add if kind == "add" else Sub
        return cls(_int_expr(rng, depth - 1), _int_expr(rng, depth - 1))
    cls = Min if kind == "min" else Max
    return cls(tuple(_int_expr(rng, depth - 1) for _ in range(rng.randint(2, 3))))


def _bool_expr(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        return Cmp(op, _int_expr(rng, 2), _int_expr(rng, 2))
    kind = rng.choice(["and", "or", "not"])
    if kind == "not":
        return Not(_bool_expr(rng, depth - 1))
    cls = And if kind == "and" else Or
    return cls(_bool_expr(rng, depth - 1), _bool_expr(rng, depth - 1))


def test_generated_expressions_survive_printing():
    rng = random.Random(2024)
    for _ in range(300):
        expr = _bool_expr(rng, 4)
        doc = spec_dsl.parse(counter(goal=to_source(expr)))
        assert doc.instance().goal == expr
        assert spec_dsl.parse(spec_dsl.render(doc)) == doc


def test_unicode_comparisons():
    doc = spec_dsl.parse(counter(goal="x ≤ 2 and y ≠ 1 or x ≥ 3"))
    assert to_source(doc.instance().goal) == "x <= 2 and y != 1 or x >= 3"


def test_instance_lookup_by_name_and_label():
    doc = spec_dsl.parse(counter())
    assert doc.instance("c") is doc.instance("counter")
    with pytest.raises(SpecError):
        doc.instance("missing")


@pytest.mark.parametrize("text, kind, line", [
    (counter(goal="z = 2"), "unknown-identifier", 18),
    (counter(goal="x = 2.5"), "type", 18),
    (counter(goal="x = 2 @"), "syntax", 18),
    (counter(goal="x + 1"), "type", 18),
    (counter(goal="x < y < 3"), "syntax", 18),
    (counter(goal="min(x) = 1"), "syntax", 18),
    (counter(goal="x = 99999999999999999999"), "bounds", 18),
    (counter().replace("0..4;\n  var y", "1..4;\n  var y"), "bounds", 2),
    (counter().replace("init: x=0", "init: x=7"), "bounds", 17),
    (counter().replace("init: x=0, y=0;", "init: x=0;"), "structure", 15),
    (counter().replace("  goal: x = 2;\n", ""), "structure", 15),
    (counter().replace("var y : 0..4;", "var x : 0..4;"), "structure", 3),
    (counter().replace("eff: a := cap(a);", "eff: q := cap(a);"), "unknown-identifier", 6),
    (counter().replace("of counter", "of elsewhere"), "unknown-identifier", 15),
    (counter().replace("failure:", "constraint no_backtrack;\n  failure:"), "unknown-identifier", 12),
])
def test_located_diagnostics(text, kind, line):
    found = diagnostic(text)
    assert found.kind == kind
    assert found.line == line
    assert str(found).startswith(f"{line}:")


def test_deep_nesting_is_rejected():
    goal = "(" * 70 + "x = 1" + ")" * 70
    assert diagnostic(counter(goal=goal)).kind == "structure"


def test_mutated_sources_fail_with_diagnostics():
    text = (SPEC_DIR / "V_2_3_5.pspace").read_text(encoding="utf-8")
    rng = random.Random(11)
    variants = [text[:cut] for cut in range(0, len(text), 7)]
    for _ in range(300):
        i = rng.randrange(len(text))
        variants.append(text[:i] + text[i + 1:])
        variants.append(text[:i] + rng.choice("{};:=()<>+-,.@'\"x9 ") + text[i:])
    for variant in variants:
        try:
            spec_dsl.parse(variant)
        except SpecError as e:
            assert e.diagnostic.line >= 1
            assert e.diagnostic.kind in {"syntax", "unknown-identifier", "type", "bounds", "structure"}


def test_load_missing_file(tmp_path):
    with pytest.raises(SpecFileError):
        spec_dsl.load(tmp_path / "nope.pspace")
    with pytest.raises(FileNotFoundError):
        spec_dsl.load(tmp_path / "nope.pspace")


@pytest.mark.parametrize("stem", CASE_IDS)
def test_bundled_specs_have_no_blocking_findings(stem):
    findings = spec_dsl.validate(load_case(stem))
    assert spec_dsl.blocking(findings) == []


def test_validate_space_without_instances():
    text = counter().split("\ninstance")[0]
    codes = {f.code: f for f in spec_dsl.validate(spec_dsl.parse(text))}
    assert codes["no-goal"].blocking


def test_validate_unsatisfiable_precondition():
    text = counter().replace("pre: a < cap(a);", "pre: a > cap(a);")
    findings = spec_dsl.validate(spec_dsl.parse(text))
    blocked = spec_dsl.blocking(findings)
    assert [f.code for f in blocked] == ["unsatisfiable-precondition"]
    assert "fill" in blocked[0].message


def test_validate_unreachable_goal_is_advisory():
    text = counter(goal="x + y = 9")
    findings = spec_dsl.validate(spec_dsl.parse(text))
    assert "unreachable-goal" in [f.code for f in findings]
    assert spec_dsl.blocking(findings) == []


def test_findings_carry_source_locations():
    text = counter().replace("pre: a < cap(a);", "pre: a > cap(a);")
    [finding] = spec_dsl.blocking(spec_dsl.validate(spec_dsl.parse(text)))
    assert (finding.line, finding.column) == (4, 3)
    assert str(finding).startswith("4:3: error: unsatisfiable-precondition: ")

    findings = spec_dsl.validate(spec_dsl.parse(counter(goal="x + y = 9")))
    [unreachable] = [f for f in findings if f.code == "unreachable-goal"]
    assert unreachable.line == 18
    assert str(unreachable).startswith("18:3: warning: ")


def test_findings_without_source_have_no_location():
    doc = spec_dsl.parse(counter(goal="x + y = 9"))
    unparsed = spec_dsl.SpecDocument(doc.space, doc.instances)
    [unreachable] = [f for f in spec_dsl.validate(unparsed) if f.code == "unreachable-goal"]
    assert (unreachable.line, unreachable.column) == (0, 0)
    assert str(unreachable).startswith("warning: unreachable-goal: ")


def test_validate_failure_covering_goal():
    text = counter(goal="x = 4 and y = 4")
    codes = [f.code for f in spec_dsl.validate(spec_dsl.parse(text))]
    assert "failure-subsumes-goal" in codes
