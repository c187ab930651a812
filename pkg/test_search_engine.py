import pytest

import spec_dsl
from conftest import CASES, SPEC_DIR, load_case
from errors import CacheFileError, SearchBudgetExceeded
from search_engine import (EvaluationCache, Learning, SearchConfig, SearchStatus, evaluate, fingerprint,
                           format_trace, parse_trace, solve_bfs, solve_iddfs)
from space_model import Outcome, find_operator

SMALL_CASES = [case for case in CASES if case[0] != "F_9_17"]


@pytest.mark.parametrize("stem, label, length", CASES, ids=[c[0] for c in CASES])
def test_shortest_solution_lengths(stem, label, length):
    instance = load_case(stem).instance()
    assert instance.label == label
    oracle, _ = solve_bfs(instance)
    solution, stats = solve_iddfs(instance, SearchConfig(failure_detection=True, learning=Learning.DURING))
    assert oracle.length == length
    assert solution.length == length
    assert stats.status is SearchStatus.SOLVED
    assert stats.solution_length == length


def _grid():
    for stem, _, length in CASES:
        for learning in Learning:
            for constrained in (True, False):
                # unconstrained, unlearned search on the 20-step case is exponential
                if stem == "F_9_17" and learning is Learning.NONE and not constrained:
                    continue
                yield pytest.param(stem, length, learning, constrained,
                                   id=f"{stem}-{learning.value}-{'pc' if constrained else 'nopc'}")


@pytest.mark.parametrize("seed", [None, 1, 7])
@pytest.mark.parametrize("fd", [True, False])
@pytest.mark.parametrize("stem, length, learning, constrained", list(_grid()))
def test_every_configuration_is_optimal(stem, length, learning, constrained, fd, seed):
    instance = load_case(stem).instance()
    config = SearchConfig(failure_detection=fd, learning=learning, path_constraints_enabled=constrained, seed=seed)
    solution, stats = solve_iddfs(instance, config, EvaluationCache() if learning is Learning.PERSIST else None)
    assert stats.status is SearchStatus.SOLVED
    assert solution.length == length
    assert stats.iterations == length


def test_reachable_state_counts():
    assert solve_bfs(load_case("F_4_9").instance())[1] == 26
    assert solve_bfs(load_case("F_3_5").instance())[1] == 16


def test_oracle_budget():
    with pytest.raises(SearchBudgetExceeded):
        solve_bfs(load_case("F_9_17").instance(), max_states=10)


def test_reported_trace_replays(f49):
    sequence = ["fill(j9)", "pour(j9,j4)", "empty(j4)", "pour(j9,j4)", "empty(j4)", "pour(j9,j4)",
                "fill(j9)", "pour(j9,j4)"]
    expected = [(0, 9), (4, 5), (0, 5), (4, 1), (0, 1), (1, 0), (1, 9), (4, 6)]
    state = f49.initial
    visited = []
    for display in sequence:
        state = find_operator(f49.space, display).apply(state)
        visited.append(state)
    assert visited == expected
    assert f49.goal_test(state)


def test_solver_trace_visits_expected_states(f49):
    solution, _ = solve_iddfs(f49)
    assert solution.states == [(0, 0), (0, 9), (4, 5), (0, 5), (4, 1), (0, 1), (1, 0), (1, 9), (4, 6)]


def test_trace_format_and_replay(f49):
    solution, _ = solve_iddfs(f49)
    text = format_trace(f49, solution)
    lines = text.splitlines()
    assert lines[:3] == ["0: INIT", "j4: 0", "j9: 0"]
    assert text.endswith("Solution Found!\n")
    assert lines[3].startswith("1: ") and lines[3][3:].split("(")[0].isupper()

    initial, steps = parse_trace(text, f49)
    assert initial == f49.initial
    state = initial
    for op, recorded in steps:
        state = op.apply(state)
        assert state == recorded
    assert f49.goal_test(state)
    assert [s for _, s in steps] == [step.state for step in solution.steps]


@pytest.mark.parametrize("stem, label, length", CASES, ids=[c[0] for c in CASES])
def test_warm_cache_generates_nothing_new(stem, label, length):
    instance = load_case(stem).instance()
    config = SearchConfig(learning=Learning.PERSIST)
    cache = EvaluationCache()
    first, cold = solve_iddfs(instance, config, cache)
    second, warm = solve_iddfs(instance, config, cache)
    assert cold.new_states > 0
    assert warm.new_states == 0
    assert second.length == first.length == length
    assert warm.expansions <= cold.expansions


@pytest.mark.parametrize("stem, label, length", CASES, ids=[c[0] for c in CASES])
def test_failure_detection_never_adds_work(stem, label, length):
    instance = load_case(stem).instance()
    _, with_fd = solve_iddfs(instance, SearchConfig(failure_detection=True))
    _, without_fd = solve_iddfs(instance, SearchConfig(failure_detection=False))
    assert with_fd.expansions <= without_fd.expansions


def test_failure_detection_strictly_helps_familiar_case(f49):
    _, with_fd = solve_iddfs(f49, SearchConfig(failure_detection=True))
    _, without_fd = solve_iddfs(f49, SearchConfig(failure_detection=False))
    assert with_fd.expansions < without_fd.expansions


@pytest.mark.parametrize("stem, label, length", SMALL_CASES, ids=[c[0] for c in SMALL_CASES])
def test_learning_reduces_expansions(stem, label, length):
    instance = load_case(stem).instance()
    _, none = solve_iddfs(instance, SearchConfig(learning=Learning.NONE))
    _, during = solve_iddfs(instance, SearchConfig(learning=Learning.DURING))
    assert during.expansions <= none.expansions


def test_path_constraints_cut_search_by_an_order_of_magnitude():
    instance = load_case("F_9_17").instance()
    base = dict(failure_detection=False, learning=Learning.NONE, max_depth=10)
    _, constrained = solve_iddfs(instance, SearchConfig(path_constraints_enabled=True, **base))
    _, unconstrained = solve_iddfs(instance, SearchConfig(path_constraints_enabled=False, **base))
    assert constrained.status is SearchStatus.NO_SOLUTION
    assert unconstrained.status is SearchStatus.NO_SOLUTION
    assert unconstrained.expansions >= 10 * constrained.expansions


def test_seeded_ordering_is_reproducible(f49):
    config = SearchConfig(seed=42, learning=Learning.DURING)
    first, stats_a = solve_iddfs(f49, config)
    second, stats_b = solve_iddfs(f49, config)
    assert stats_a.model_dump() == stats_b.model_dump()
    assert first == second
    assert first.length == 8
    assert config.ordering == "seeded(42)"


def test_evaluate_outcomes(f49):
    config = SearchConfig()
    assert evaluate(f49, (4, 6), 3, config) is Outcome.GOAL
    assert evaluate(f49, (0, 0), 3, config) is Outcome.FAILURE
    assert evaluate(f49, (0, 0), 3, config, is_root=True) is Outcome.ONGOING
    assert evaluate(f49, (2, 3), 0, config) is Outcome.DEPTH_CUTOFF
    assert evaluate(f49, (2, 3), 2, config) is Outcome.ONGOING


def test_evaluate_consults_cache(f49):
    config = SearchConfig(learning=Learning.DURING)
    cache = EvaluationCache(failures={((2, 3), 2): True})
    assert evaluate(f49, (2, 3), 2, config, cache) is Outcome.FAILURE
    assert evaluate(f49, (2, 3), 3, config, cache) is Outcome.ONGOING
    assert evaluate(f49, (2, 3), 2, SearchConfig(), cache) is Outcome.ONGOING


TINY = """\
space tiny {
  var x : 0..2;
  op fill(a) {
    pre: a < cap(a);
    eff: a := cap(a);
  }
  op empty(a) {
    pre: a > 0;
    eff: a := 0;
  }
  constraint no_loop;
}

instance odd of tiny {
  init: x=0;
  goal: x = 1;
}

instance full of tiny {
  init: x=2;
  goal: x = 2;
}
"""


def test_exhausted_space_is_unsolvable():
    instance = spec_dsl.parse(TINY).instance("odd")
    solution, stats = solve_iddfs(instance, SearchConfig(failure_detection=False))
    assert solution is None
    assert stats.status is SearchStatus.UNSOLVABLE
    assert solve_bfs(instance) == (None, 2)


@pytest.mark.parametrize("learning", list(Learning))
def test_unreachable_goal_is_unsolvable_under_every_learning_mode(learning):
    text = (SPEC_DIR / "F_4_9.pspace").read_text(encoding="utf-8")
    instance = spec_dsl.parse(text.replace("goal: j4 = 6 or j9 = 6;", "goal: j4 = 3 and j9 = 3;")).instance()
    cache = EvaluationCache() if learning is Learning.PERSIST else None
    solution, stats = solve_iddfs(instance, SearchConfig(failure_detection=False, learning=learning), cache)
    assert solution is None
    assert stats.status is SearchStatus.UNSOLVABLE
    assert stats.iterations < 64
    if cache is not None:
        assert False in cache.failures.values()



def test_goal_at_root():
    instance = spec_dsl.parse(TINY).instance("full")
    solution, stats = solve_iddfs(instance)
    assert solution.length == 0
    assert stats.expansions == 0
    assert stats.status is SearchStatus.SOLVED


def test_expansion_budget(f49):
    solution, stats = solve_iddfs(f49, SearchConfig(failure_detection=False, max_expansions=5))
    assert solution is None
    assert stats.status is SearchStatus.BUDGET_EXCEEDED


def test_cache_file_round_trip(f49, tmp_path):
    config = SearchConfig(learning=Learning.PERSIST)
    cache = EvaluationCache()
    solve_iddfs(f49, config, cache)
    path = tmp_path / "f49.cache.json"
    cache.save(path)
    loaded = EvaluationCache.load(path)
    assert loaded.fingerprint == cache.fingerprint == fingerprint(f49, config)
    assert loaded.failures == cache.failures
    assert loaded.seen == cache.seen
    _, warm = solve_iddfs(f49, config, loaded)
    assert warm.new_states == 0


def test_cache_dropped_when_problem_changes(f49):
    cache = EvaluationCache()
    solve_iddfs(f49, SearchConfig(learning=Learning.PERSIST), cache)
    assert cache.failures
    other = load_case("F_3_5").instance()
    _, stats = solve_iddfs(other, SearchConfig(learning=Learning.PERSIST), cache)
    assert stats.new_states > 0
    assert cache.fingerprint == fingerprint(other, SearchConfig(learning=Learning.PERSIST))


@pytest.mark.parametrize("content", [
    "not json",
    '{"fingerprint": null}',
    '{"fingerprint": null, "failures": [[1]], "seen": []}',
])
def test_corrupt_cache_file(tmp_path, content):
    path = tmp_path / "broken.cache.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(CacheFileError, match="not an evaluation cache"):
        EvaluationCache.load(path)
