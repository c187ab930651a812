import csv
import io

import pytest

from bench_harness import (BUNDLED_CASES, DEFAULT_CONFIGS, BenchCase, BenchConfig, BenchMatrix, run_matrix)
from conftest import SPEC_DIR
from errors import ConfigurationError
from search_engine import Learning, SearchStatus

SMALL = [BenchCase("F(3,5)->4", SPEC_DIR / "F_3_5.pspace"), BenchCase("V(2,3,5)->4", SPEC_DIR / "V_2_3_5.pspace")]


@pytest.fixture(scope="module")
def small_report():
    return run_matrix(BenchMatrix(cases=SMALL, repetitions=2))


def test_bundled_matrix_shape():
    assert [c.label for c in BUNDLED_CASES] == ["F(4,9)->6", "F(3,5)->4", "F(9,17)->5", "V(4qt,9gal)->6gal",
                                                "V(2,3,5)->4", "A(4,9)->6"]
    assert len(DEFAULT_CONFIGS) == 6
    assert DEFAULT_CONFIGS[0].label == "FD on none"


def test_rows_and_min_solution(small_report):
    assert [r.label for r in small_report.rows] == ["F(3,5)->4", "V(2,3,5)->4"]
    assert [r.min_solution for r in small_report.rows] == [6, 4]
    for row in small_report.rows:
        assert len(row.cells) == 6
        assert all(cell.runs == 2 for cell in row.cells)
        assert all(cell.solution_length == row.min_solution for cell in row.cells)


def test_persist_columns_generate_no_new_states(small_report):
    for row in small_report.rows:
        for cell in row.cells:
            if cell.learning is Learning.PERSIST:
                assert cell.mean_new_states == 0.0
            else:
                assert cell.mean_new_states > 0


def test_learning_columns_are_ordered(small_report):
    for row in small_report.rows:
        for fd in (True, False):
            by_mode = {c.learning: c.mean_expansions for c in row.cells if c.failure_detection is fd}
            assert by_mode[Learning.PERSIST] <= by_mode[Learning.DURING] <= by_mode[Learning.NONE]


def test_report_formats(small_report):
    rows = list(csv.reader(io.StringIO(small_report.to_csv())))
    assert rows[0][:4] == ["case", "min_solution", "failure_detection", "learning"]
    assert len(rows) == 1 + 2 * 6
    assert rows[1][:4] == ["F(3,5)->4", "6", "on", "none"]

    text = small_report.to_text()
    assert "Min. Soln" in text
    assert "not comparable" in text
    assert "3355/841" in text


def test_report_is_reproducible(small_report):
    again = run_matrix(BenchMatrix(cases=SMALL, repetitions=2))
    assert again.to_csv() == small_report.to_csv()
    assert again.to_text() == small_report.to_text()


def test_empty_case_list():
    report = run_matrix(BenchMatrix(cases=[]))
    assert report.rows == []
    assert report.to_csv().count("\n") == 1
    assert "Min. Soln" in report.to_text()


def test_labels_must_be_unique():
    with pytest.raises(ConfigurationError):
        BenchMatrix(cases=[SMALL[0], SMALL[0]])


def test_budget_exceeded_cell():
    matrix = BenchMatrix(cases=[BenchCase("F(4,9)->6", SPEC_DIR / "F_4_9.pspace")],
                         configs=[BenchConfig(False, Learning.NONE)], repetitions=3, expansion_cap=10)
    report = run_matrix(matrix)
    cell = report.rows[0].cells[0]
    assert cell.status is SearchStatus.BUDGET_EXCEEDED
    assert cell.runs == 1
    assert "budget-exceeded" in report.to_text()


def test_broken_case_does_not_stop_the_others(tmp_path):
    matrix = BenchMatrix(cases=[BenchCase("broken", tmp_path / "missing.pspace"), SMALL[1]],
                         configs=[BenchConfig(True, Learning.DURING)], repetitions=1, workers=2)
    report = run_matrix(matrix)
    assert report.rows[0].error is not None
    assert report.rows[1].error is None
    assert report.rows[1].min_solution == 4
    assert "error:" in report.to_csv()
