import pytest

from conftest import CASE_IDS, GOLDEN_DIR, problem_text
from cta_pipeline import (ONESHOT_FORMULATE_NODE, PIPELINE, NodeId, build_messages, pipeline_node,
                          render_prompt)
from errors import PromptInputError
from prompts import (CLOSING_LINE, GENERAL_SYSTEM_PROMPT, ONESHOT_FORMULATION_INSTRUCTIONS, SOLVER_PERSONA,
                     PromptTemplate, build_extraction_prompt, build_repair_prompt, build_solver_prompt)

PIPELINE_IDS = [node.id.value for node in PIPELINE]


def golden(stem: str, node: str) -> str:
    return (GOLDEN_DIR / stem / f"{node}.txt").read_bytes().decode("utf-8")


@pytest.mark.parametrize("node_id", PIPELINE_IDS)
@pytest.mark.parametrize("stem", CASE_IDS)
def test_pipeline_prompts_match_golden(stem, node_id):
    assert render_prompt(pipeline_node(node_id), problem_text(stem)) == golden(stem, node_id)


@pytest.mark.parametrize("stem", CASE_IDS)
def test_oneshot_prompts_match_golden(stem):
    problem = problem_text(stem)
    assert ONESHOT_FORMULATE_NODE.template.render(problem) == golden(stem, "OneShotFormulate")
    system, user = build_solver_prompt(problem)
    assert f"{system} {user}" == golden(stem, "OneShotSolve")


def test_template_layout():
    text = PromptTemplate("Do the thing.").render("Two pails.")
    assert text.startswith(GENERAL_SYSTEM_PROMPT)
    assert "\nSPECIFIC PROBLEM:\nTwo pails.\nDo the thing.\n" in text
    assert text.endswith(CLOSING_LINE)


@pytest.mark.parametrize("blank", ["", "   \n"])
def test_empty_problem_rejected(blank):
    with pytest.raises(PromptInputError):
        PromptTemplate("x").render(blank)
    with pytest.raises(PromptInputError):
        build_solver_prompt(blank)


def test_oneshot_formulation_follows_general_prompt():
    text = ONESHOT_FORMULATE_NODE.template.render(problem_text("V_2_3_5"))
    assert text.index(GENERAL_SYSTEM_PROMPT) < text.index(ONESHOT_FORMULATION_INSTRUCTIONS)


def test_solver_prompt():
    system, user = build_solver_prompt(problem_text("F_3_5"))
    assert system == SOLVER_PERSONA
    assert system.startswith("You are an expert problem solver")
    assert "Think step-by-step" in user


def test_later_nodes_carry_every_earlier_response():
    problem = problem_text("F_4_9")
    responses = [f"response number {i} for the analysis" for i in range(5)]
    for k, node in enumerate(PIPELINE):
        prompt = render_prompt(node, problem, responses[:k])
        positions = [prompt.index(r) for r in responses[:k]]
        assert positions == sorted(positions)
        assert prompt.endswith(node.template.render(problem))


def test_messages_alternate_roles():
    messages = build_messages(PIPELINE[3], "Two pails.", ["a", "b", "c"])
    assert [m.role for m in messages] == ["user", "assistant"] * 3 + ["user"]
    assert [m.content for m in messages[1::2]] == ["a", "b", "c"]


def test_too_many_prior_responses():
    with pytest.raises(PromptInputError):
        build_messages(PIPELINE[1], "Two pails.", ["a", "b"])


def test_reserved_node_has_no_prompt():
    with pytest.raises(PromptInputError):
        pipeline_node(NodeId.PROBLEM_SOLVING_CHARACTERISTICS)
    with pytest.raises(ValueError):
        pipeline_node("NoSuchNode")


def test_extraction_and_repair_prompts():
    prompt = build_extraction_prompt("Two pails.", [("Operators", "fill, empty, pour")])
    assert "OPERATORS:\nfill, empty, pour" in prompt
    assert "SPECIFICATION LANGUAGE:" in prompt
    assert prompt.endswith(CLOSING_LINE)
    repair = build_repair_prompt(["3:5: syntax: expected ';'"])
    assert "- 3:5: syntax: expected ';'" in repair
